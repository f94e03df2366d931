//! Periodic pseudospectral toolkit.
//!
//! A [`SpectralGrid`] holds `n` equispaced points on `[0, L)` and the discrete
//! wavenumbers `k_j = 2πj/L` for `j = -n/2+1, ..., n/2`, stored in FFT order
//! (`j = 0, 1, ..., n/2, -n/2+1, ..., -1`). Fourier coefficients are
//! mean-normalized,
//!
//! ```text
//! f̂_j = (1/n) Σ_m f(x_m) e^{-i k_j x_m},     f(x_m) = Σ_j f̂_j e^{i k_j x_m},
//! ```
//!
//! so a constant field `c` has `f̂_0 = c`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

struct GridInner {
    n: usize,
    length: f64,
    k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Periodic grid with cached FFT plans. Cloning is cheap.
#[derive(Clone)]
pub struct SpectralGrid(Arc<GridInner>);

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("n_points", &self.0.n)
            .field("length", &self.0.length)
            .finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.n == other.0.n && self.0.length == other.0.length)
    }
}

/// Build a periodic grid with `n_points` nodes on a domain of the given length.
pub fn make_grid(n_points: usize, length: f64) -> Result<SpectralGrid> {
    if n_points < 16 || !n_points.is_multiple_of(2) {
        return Err(Error::Grid(format!(
            "n_points must be even and >= 16, got {n_points}"
        )));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::Grid(format!("length must be positive, got {length}")));
    }
    let dk = 2.0 * std::f64::consts::PI / length;
    let k = (0..n_points)
        .map(|idx| mode_number(idx, n_points) as f64 * dk)
        .collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n_points);
    let inv = planner.plan_fft_inverse(n_points);
    Ok(SpectralGrid(Arc::new(GridInner {
        n: n_points,
        length,
        k,
        fwd,
        inv,
    })))
}

fn mode_number(idx: usize, n: usize) -> i64 {
    if idx <= n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

impl SpectralGrid {
    pub fn n_points(&self) -> usize {
        self.0.n
    }

    pub fn length(&self) -> f64 {
        self.0.length
    }

    pub fn dx(&self) -> f64 {
        self.0.length / self.0.n as f64
    }

    /// Wavenumbers in FFT storage order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.0.k
    }

    /// Wavenumbers sorted ascending, `-n/2+1 ... n/2`.
    pub fn sorted_wavenumbers(&self) -> Vec<f64> {
        let mut k = self.0.k.clone();
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        k
    }

    /// Smallest nonzero |k|.
    pub fn dk(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.0.length
    }

    /// Integer mode number `j` of storage index `idx`.
    pub fn mode(&self, idx: usize) -> i64 {
        mode_number(idx, self.0.n)
    }

    /// Storage index of mode `j`, if representable.
    pub fn index_of_mode(&self, j: i64) -> Option<usize> {
        let n = self.0.n as i64;
        if j > n / 2 || j <= -n / 2 {
            return None;
        }
        Some(if j >= 0 { j as usize } else { (j + n) as usize })
    }

    pub fn nyquist_index(&self) -> usize {
        self.0.n / 2
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.0.n).map(|i| self.x(i)).collect()
    }

    /// In-place forward transform, physical values to mean-normalized coefficients.
    pub fn forward(&self, buf: &mut [C64]) {
        self.0.fwd.process(buf);
        let s = 1.0 / self.0.n as f64;
        for z in buf.iter_mut() {
            *z *= s;
        }
    }

    /// In-place inverse transform, coefficients to physical values.
    pub fn inverse(&self, buf: &mut [C64]) {
        self.0.inv.process(buf);
    }

    /// Forward transform with caller-provided scratch (length `scratch_len()`).
    pub fn forward_with_scratch(&self, buf: &mut [C64], scratch: &mut [C64]) {
        self.0.fwd.process_with_scratch(buf, scratch);
        let s = 1.0 / self.0.n as f64;
        for z in buf.iter_mut() {
            *z *= s;
        }
    }

    pub fn inverse_with_scratch(&self, buf: &mut [C64], scratch: &mut [C64]) {
        self.0.inv.process_with_scratch(buf, scratch);
    }

    pub fn scratch_len(&self) -> usize {
        self.0
            .fwd
            .get_inplace_scratch_len()
            .max(self.0.inv.get_inplace_scratch_len())
    }

    /// 2/3-rule mask: true for modes kept in nonlinear products.
    pub fn dealias_mask(&self) -> Vec<bool> {
        let cut = self.0.n as i64 / 3;
        (0..self.0.n).map(|i| self.mode(i).abs() <= cut).collect()
    }
}

/// Storage flag of a [`Field`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Repr {
    Physical,
    Fourier,
}

/// Complex-valued discrete function on a [`SpectralGrid`].
#[derive(Clone, Debug)]
pub struct Field {
    grid: SpectralGrid,
    values: Vec<C64>,
    repr: Repr,
}

impl Field {
    pub fn new(grid: &SpectralGrid, values: Vec<C64>, repr: Repr) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.n_points(),
                values.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
            repr,
        })
    }

    pub fn zeros(grid: &SpectralGrid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![C64::new(0.0, 0.0); grid.n_points()],
            repr: Repr::Physical,
        }
    }

    pub fn from_fn(grid: &SpectralGrid, f: impl Fn(f64) -> C64) -> Self {
        let values = (0..grid.n_points()).map(|i| f(grid.x(i))).collect();
        Self {
            grid: grid.clone(),
            values,
            repr: Repr::Physical,
        }
    }

    pub fn from_real_fn(grid: &SpectralGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |x| C64::new(f(x), 0.0))
    }

    pub fn from_real(grid: &SpectralGrid, values: &[f64]) -> Result<Self> {
        Self::new(
            grid,
            values.iter().map(|&v| C64::new(v, 0.0)).collect(),
            Repr::Physical,
        )
    }

    /// Field from Fourier coefficients in storage order.
    pub fn from_coefficients(grid: &SpectralGrid, coeffs: Vec<C64>) -> Result<Self> {
        Self::new(grid, coeffs, Repr::Fourier)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn repr(&self) -> Repr {
        self.repr
    }

    /// Raw stored values in the current representation.
    pub fn raw(&self) -> &[C64] {
        &self.values
    }

    pub fn into_raw(self) -> Vec<C64> {
        self.values
    }

    pub fn to_fourier(&self) -> Field {
        match self.repr {
            Repr::Fourier => self.clone(),
            Repr::Physical => {
                let mut v = self.values.clone();
                self.grid.forward(&mut v);
                Field {
                    grid: self.grid.clone(),
                    values: v,
                    repr: Repr::Fourier,
                }
            }
        }
    }

    pub fn to_physical(&self) -> Field {
        match self.repr {
            Repr::Physical => self.clone(),
            Repr::Fourier => {
                let mut v = self.values.clone();
                self.grid.inverse(&mut v);
                Field {
                    grid: self.grid.clone(),
                    values: v,
                    repr: Repr::Physical,
                }
            }
        }
    }

    pub fn physical(&self) -> Vec<C64> {
        self.to_physical().values
    }

    pub fn coefficients(&self) -> Vec<C64> {
        self.to_fourier().values
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.physical().iter().map(|z| z.re).collect()
    }

    /// Largest |Im| in physical space.
    pub fn imag_residue(&self) -> f64 {
        self.physical().iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    /// Largest |f̂(k) - conj(f̂(-k))|, zero for real fields.
    pub fn hermitian_defect(&self) -> f64 {
        let c = self.coefficients();
        let n = self.grid.n_points();
        (0..n)
            .map(|i| {
                let j = (n - i) % n;
                (c[i] - c[j].conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Drop imaginary parts in physical space.
    pub fn make_real(&self) -> Field {
        let v = self
            .physical()
            .into_iter()
            .map(|z| C64::new(z.re, 0.0))
            .collect();
        Field {
            grid: self.grid.clone(),
            values: v,
            repr: Repr::Physical,
        }
    }

    pub fn mean(&self) -> C64 {
        match self.repr {
            Repr::Fourier => self.values[0],
            Repr::Physical => {
                self.values.iter().sum::<C64>() / self.grid.n_points() as f64
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.physical().iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// L² norm by physical-space rectangle quadrature.
    pub fn l2_quadrature(&self) -> f64 {
        let dx = self.grid.dx();
        (self.physical().iter().map(|z| z.norm_sqr()).sum::<f64>() * dx).sqrt()
    }

    fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product in physical space.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        let a = self.physical();
        let b = other.physical();
        Ok(Field {
            grid: self.grid.clone(),
            values: a.iter().zip(&b).map(|(x, y)| x * y).collect(),
            repr: Repr::Physical,
        })
    }

    fn zip_with(&self, other: &Field, op: impl Fn(C64, C64) -> C64) -> Result<Field> {
        let (a, b, repr) = if self.repr == other.repr {
            (self.values.clone(), other.values.clone(), self.repr)
        } else {
            (self.physical(), other.physical(), Repr::Physical)
        };
        Ok(Field {
            grid: self.grid.clone(),
            values: a.into_iter().zip(b).map(|(x, y)| op(x, y)).collect(),
            repr,
        })
    }

    pub fn scale(&self, s: C64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|z| z * s).collect(),
            repr: self.repr,
        }
    }

    pub fn map_physical(&self, f: impl Fn(C64) -> C64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.physical().into_iter().map(f).collect(),
            repr: Repr::Physical,
        }
    }

    pub fn conj(&self) -> Field {
        self.map_physical(|z| z.conj())
    }

    /// Multiply each Fourier coefficient by `symbol(k)`.
    pub fn apply_multiplier(&self, symbol: impl Fn(f64) -> C64) -> Field {
        let mut c = self.coefficients();
        for (z, &k) in c.iter_mut().zip(self.grid.wavenumbers()) {
            *z *= symbol(k);
        }
        Field {
            grid: self.grid.clone(),
            values: c,
            repr: Repr::Fourier,
        }
    }

    /// Largest relative mismatch against another field on the same grid.
    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.check_grid(other)?;
        let a = self.physical();
        let b = other.physical();
        Ok(a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max))
    }

    /// Write a CSV dump with a metadata header line.
    pub fn write_csv(&self, path: &Path, repr: Repr) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        let (label, values, coords) = match repr {
            Repr::Physical => ("x", self.physical(), self.grid.points()),
            Repr::Fourier => (
                "k",
                self.coefficients(),
                self.grid.wavenumbers().to_vec(),
            ),
        };
        writeln!(
            file,
            "# n_points={} length={:.17e} repr={}",
            self.grid.n_points(),
            self.grid.length(),
            if repr == Repr::Physical { "physical" } else { "fourier" }
        )?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record([label, "re", "im"])?;
        for (c, z) in coords.iter().zip(&values) {
            w.write_record(&[
                format!("{c:.17e}"),
                format!("{:.17e}", z.re),
                format!("{:.17e}", z.im),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a dump produced by [`Field::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Field> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty field file".into()))?;
        let mut n = None;
        let mut length = None;
        let mut repr = Repr::Physical;
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some((key, val)) = tok.split_once('=') {
                match key {
                    "n_points" => n = val.parse::<usize>().ok(),
                    "length" => length = val.parse::<f64>().ok(),
                    "repr" => {
                        repr = if val == "fourier" {
                            Repr::Fourier
                        } else {
                            Repr::Physical
                        }
                    }
                    _ => {}
                }
            }
        }
        let (n, length) = match (n, length) {
            (Some(n), Some(l)) => (n, l),
            _ => return Err(Error::Parse("missing grid metadata".into())),
        };
        let grid = make_grid(n, length)?;
        let body: String = lines.collect::<Vec<_>>().join("\n");
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let mut values = Vec::with_capacity(n);
        for rec in r.records() {
            let rec = rec?;
            let re: f64 = rec[1].parse().map_err(|e| Error::Parse(format!("{e}")))?;
            let im: f64 = rec[2].parse().map_err(|e| Error::Parse(format!("{e}")))?;
            values.push(C64::new(re, im));
        }
        Field::new(&grid, values, repr)
    }
}

/// Multiply Fourier coefficients by `(ik)^order`; odd orders zero the Nyquist mode.
pub fn derivative(f: &Field, order: u32) -> Field {
    let grid = f.grid().clone();
    let nyq = grid.nyquist_index();
    let mut c = f.coefficients();
    for (idx, (z, &k)) in c.iter_mut().zip(grid.wavenumbers()).enumerate() {
        if order % 2 == 1 && idx == nyq {
            *z = C64::new(0.0, 0.0);
        } else {
            *z *= C64::new(0.0, k).powu(order);
        }
    }
    Field {
        grid,
        values: c,
        repr: Repr::Fourier,
    }
}

/// Periodic antiderivative with zero mean, `f̂(k)/(ik)`.
pub fn antiderivative(f: &Field) -> Result<Field> {
    let grid = f.grid().clone();
    let mut c = f.coefficients();
    let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if c[0].norm() > 1e-10 * norm + 1e-14 {
        return Err(Error::NonzeroMean {
            mean: c[0].norm(),
            norm,
        });
    }
    let nyq = grid.nyquist_index();
    for (idx, (z, &k)) in c.iter_mut().zip(grid.wavenumbers()).enumerate() {
        if idx == 0 || idx == nyq {
            *z = C64::new(0.0, 0.0);
        } else {
            *z /= C64::new(0.0, k);
        }
    }
    Ok(Field {
        grid,
        values: c,
        repr: Repr::Fourier,
    })
}

/// Exponent cap applied by [`apply_semigroup`].
pub const SEMIGROUP_EXPONENT_CAP: f64 = 50.0;

/// Outcome of a semigroup application with overflow bookkeeping.
#[derive(Clone, Debug)]
pub struct SemigroupResult {
    pub field: Field,
    /// Number of modes whose growth exponent was capped.
    pub capped_modes: usize,
    pub max_exponent: f64,
}

/// Multiply each coefficient by `exp(symbol(k) t)`.
pub fn apply_semigroup(
    f: &Field,
    symbol: impl Fn(f64) -> C64,
    t: f64,
) -> Result<SemigroupResult> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    let grid = f.grid().clone();
    let mut c = f.coefficients();
    let mut capped = 0;
    let mut max_exp = f64::NEG_INFINITY;
    for (z, &k) in c.iter_mut().zip(grid.wavenumbers()) {
        let s = symbol(k);
        if !(s.re.is_finite() && s.im.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "symbol not finite at k = {k}"
            )));
        }
        let mut e = s * t;
        max_exp = max_exp.max(e.re);
        if e.re > SEMIGROUP_EXPONENT_CAP {
            e.re = SEMIGROUP_EXPONENT_CAP;
            capped += 1;
        }
        *z *= e.exp();
    }
    Ok(SemigroupResult {
        field: Field {
            grid,
            values: c,
            repr: Repr::Fourier,
        },
        capped_modes: capped,
        max_exponent: max_exp,
    })
}

fn smooth_g(y: f64) -> f64 {
    if y > 0.0 {
        (-1.0 / y).exp()
    } else {
        0.0
    }
}

/// Smooth step, 0 for y <= 0 and 1 for y >= 1.
pub fn smooth_step(y: f64) -> f64 {
    let a = smooth_g(y);
    let b = smooth_g(1.0 - y);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Cutoff symbol: 1 on |k| <= 0.45 δ̃, 0 on |k| >= 0.55 δ̃.
pub fn mode_filter_symbol(k: f64, delta_tilde: f64) -> f64 {
    smooth_step((0.55 * delta_tilde - k.abs()) / (0.1 * delta_tilde))
}

pub fn mode_filter(f: &Field, delta_tilde: f64) -> Result<Field> {
    if !(delta_tilde > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "delta_tilde must be positive, got {delta_tilde}"
        )));
    }
    Ok(f.apply_multiplier(|k| C64::new(mode_filter_symbol(k, delta_tilde), 0.0)))
}

/// Periodic H^s norm `(Σ (1+k²)^s |f̂|² L)^{1/2}`.
pub fn sobolev_norm(f: &Field, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(format!("s must be >= 0, got {s}")));
    }
    let c = f.coefficients();
    let sum: f64 = c
        .iter()
        .zip(f.grid().wavenumbers())
        .map(|(z, &k)| (1.0 + k * k).powf(s) * z.norm_sqr())
        .sum();
    Ok((sum * f.grid().length()).sqrt())
}

/// Uniformly local H^s surrogate: the largest H^s mass over windows of the
/// given width, `sup_y (∫_y^{y+w} Σ_{j<=s} |∂^j f|²)^{1/2}`.
pub fn local_sobolev_norm(f: &Field, s: u32, window: f64) -> f64 {
    let grid = f.grid();
    let n = grid.n_points();
    let dx = grid.dx();
    let mut density = vec![0.0; n];
    for j in 0..=s {
        let d = if j == 0 { f.physical() } else { derivative(f, j).physical() };
        for (r, z) in density.iter_mut().zip(&d) {
            *r += z.norm_sqr();
        }
    }
    let m = ((window / dx).round() as usize).clamp(1, n);
    let mut acc: f64 = density[..m].iter().sum();
    let mut best = acc;
    for i in 1..n {
        acc += density[(i + m - 1) % n] - density[i - 1];
        best = best.max(acc);
    }
    (best.max(0.0) * dx).sqrt()
}

/// Copy Fourier coefficients mode by mode onto another grid (truncation or
/// zero padding). With target length `L/δ` this realizes `x ↦ f(δx)`.
pub fn transfer_modes(f: &Field, target: &SpectralGrid) -> Field {
    let src = f.grid();
    let c = f.coefficients();
    let mut out = vec![C64::new(0.0, 0.0); target.n_points()];
    let half = (src.n_points().min(target.n_points()) / 2) as i64;
    for j in -half + 1..half {
        let si = src.index_of_mode(j).unwrap();
        let ti = target.index_of_mode(j).unwrap();
        out[ti] = c[si];
    }
    Field {
        grid: target.clone(),
        values: out,
        repr: Repr::Fourier,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_wavenumbers() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let k = g.sorted_wavenumbers();
        assert_eq!(k.len(), 16);
        assert!((k[0] + 7.0).abs() < 1e-14);
        assert!((k[15] - 8.0).abs() < 1e-14);
        let g = make_grid(64, 2.0 * PI / 0.1).unwrap();
        assert!((g.dk() - 0.1).abs() < 1e-14);
        assert!(make_grid(17, 2.0 * PI).is_err());
        assert!(make_grid(8, 2.0 * PI).is_err());
        assert!(make_grid(16, 0.0).is_err());
    }

    #[test]
    fn derivative_of_plane_wave() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let f = Field::from_fn(&g, |x| C64::new(0.0, 3.0 * x).exp());
        let d2 = derivative(&f, 2);
        let expected = f.scale(C64::new(-9.0, 0.0));
        assert!(d2.max_abs_diff(&expected).unwrap() < 1e-12);
        let s = Field::from_real_fn(&g, |x| x.sin());
        let d = derivative(&s, 2).max_abs_diff(&s.scale(C64::new(-1.0, 0.0)));
        assert!(d.unwrap() < 1e-12);
        let c = Field::from_real_fn(&g, |_| 2.5);
        assert!(derivative(&c, 1).sup_norm() < 1e-14);
    }

    #[test]
    fn antiderivative_termwise() {
        let g = make_grid(64, 2.0 * PI).unwrap();
        let f = Field::from_real_fn(&g, |x| (2.0 * x).cos() + (3.0 * x).sin());
        let a = antiderivative(&f).unwrap();
        let expected =
            Field::from_real_fn(&g, |x| (2.0 * x).sin() / 2.0 - (3.0 * x).cos() / 3.0);
        assert!(a.max_abs_diff(&expected).unwrap() < 1e-13);
        let z = antiderivative(&Field::zeros(&g)).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
        let bad = Field::from_real_fn(&g, |x| 1.0 + x.cos());
        assert!(matches!(antiderivative(&bad), Err(Error::NonzeroMean { .. })));
    }

    #[test]
    fn semigroup_examples() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let s = Field::from_real_fn(&g, |x| x.sin());
        let out = apply_semigroup(&s, |k| C64::new(-k * k, 0.0), 1.0).unwrap();
        let expected = s.scale(C64::new((-1.0f64).exp(), 0.0));
        assert!(out.field.max_abs_diff(&expected).unwrap() < 1e-14);
        let id = apply_semigroup(&s, |k| C64::new(-k * k, 0.0), 0.0).unwrap();
        assert!(id.field.max_abs_diff(&s).unwrap() < 1e-15);
        let w0 = 1.7;
        let e = Field::from_fn(&g, |x| C64::new(0.0, x).exp());
        let out = apply_semigroup(&e, |k| C64::new(-k * k, w0), 0.5).unwrap();
        let expected = e.scale((C64::new(-1.0, w0) * 0.5).exp());
        assert!(out.field.max_abs_diff(&expected).unwrap() < 1e-14);
        let grow = apply_semigroup(&s, |_| C64::new(100.0, 0.0), 1.0).unwrap();
        assert_eq!(grow.capped_modes, 32);
    }

    #[test]
    fn filter_plateaus() {
        let dt = 0.5;
        let l = 2.0 * PI / 0.01;
        let g = make_grid(512, l).unwrap();
        let dk = g.dk();
        let j_low = (0.3 * dt / dk).round();
        let j_high = (0.7 * dt / dk).round();
        let low = Field::from_fn(&g, |x| C64::new(0.0, j_low * dk * x).exp());
        let high = Field::from_fn(&g, |x| C64::new(0.0, j_high * dk * x).exp());
        let fl = mode_filter(&low, dt).unwrap();
        assert!(fl.max_abs_diff(&low).unwrap() < 1e-12);
        assert!(mode_filter(&high, dt).unwrap().sup_norm() < 1e-12);
        let both = low.add(&high).unwrap();
        let fb = mode_filter(&both, dt).unwrap();
        assert!(fb.max_abs_diff(&low).unwrap() < 1e-13);
        for i in 0..=100 {
            let k = 0.45 * dt + 0.1 * dt * i as f64 / 100.0;
            let a = mode_filter_symbol(k, dt);
            let b = mode_filter_symbol(k + 1e-4, dt);
            assert!((0.0..=1.0).contains(&a) && b <= a + 1e-15);
        }
    }

    #[test]
    fn sobolev_examples() {
        let l = 3.7;
        let g = make_grid(32, l).unwrap();
        let one = Field::from_real_fn(&g, |_| 1.0);
        for s in [0.0, 1.0, 2.5] {
            assert!((sobolev_norm(&one, s).unwrap() - l.sqrt()).abs() < 1e-13);
        }
        let g = make_grid(64, 2.0 * PI).unwrap();
        let s = Field::from_real_fn(&g, |x| x.sin());
        assert!((sobolev_norm(&s, 0.0).unwrap() - PI.sqrt()).abs() < 1e-13);
        // H¹ by quadrature of |f|² + |f'|²
        let q: f64 = (0..g.n_points())
            .map(|i| {
                let x = g.x(i);
                x.sin().powi(2) + x.cos().powi(2)
            })
            .sum::<f64>()
            * g.dx();
        assert!((sobolev_norm(&s, 1.0).unwrap() - q.sqrt()).abs() < 1e-12);
        assert!(sobolev_norm(&s, -1.0).is_err());
    }

    #[test]
    fn local_norm_of_constant() {
        let g = make_grid(128, 20.0).unwrap();
        let c = Field::from_real_fn(&g, |_| 2.0);
        let w = g.dx() * 10.0;
        assert!((local_sobolev_norm(&c, 2, w) - 2.0 * w.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn transfer_realizes_rescaling() {
        let delta = 0.25;
        let slow = make_grid(32, 2.0 * PI).unwrap();
        let fast = make_grid(128, 2.0 * PI / delta).unwrap();
        let a = Field::from_real_fn(&slow, |x| 1.0 + 0.3 * (2.0 * x).cos());
        let up = transfer_modes(&a, &fast);
        let expected = Field::from_real_fn(&fast, |x| 1.0 + 0.3 * (2.0 * delta * x).cos());
        assert!(up.max_abs_diff(&expected).unwrap() < 1e-13);
        let back = transfer_modes(&up, &slow);
        assert!(back.max_abs_diff(&a).unwrap() < 1e-13);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(16, 2.0 * PI).unwrap();
        let f = Field::from_fn(&g, |x| C64::new(x.cos(), x.sin() * 0.5));
        for repr in [Repr::Physical, Repr::Fourier] {
            let p = dir.path().join("f.csv");
            f.write_csv(&p, repr).unwrap();
            let r = Field::read_csv(&p).unwrap();
            assert!(r.max_abs_diff(&f).unwrap() < 1e-14);
        }
    }
}
