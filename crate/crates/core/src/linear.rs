//! Linearized spectrum around `(u, v) = (0, 0)`.
//!
//! At wavenumber `k` the u-block is `M(k) = ∂_u f(0,0) - D k²` and the
//! conservation law contributes `λ₀(k) = -d_v k²`. Curves are labelled
//! `1, -1` for the critical pair (`Im λ₁(0) > 0`), `3..=d` for the rest and
//! `0` for the conservation-law curve.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{mode_filter_symbol, Field, Repr, SpectralGrid};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelLinearization {
    pub diffusion: Vec<f64>,
    pub d_v: f64,
    pub jacobian: DMatrix<C64>,
    pub parameter: f64,
}

impl ModelLinearization {
    pub fn new(diffusion: Vec<f64>, d_v: f64, jacobian: DMatrix<C64>, parameter: f64) -> Result<Self> {
        let lin = Self {
            diffusion,
            d_v,
            jacobian,
            parameter,
        };
        lin.validate()?;
        Ok(lin)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if d < 2 {
            return Err(Error::InvalidArgument(format!("need d >= 2, got {d}")));
        }
        if self.jacobian.nrows() != d || self.jacobian.ncols() != d {
            return Err(Error::InvalidArgument("jacobian shape mismatch".into()));
        }
        if self.diffusion.iter().any(|&x| !(x > 0.0)) || !(self.d_v > 0.0) {
            return Err(Error::InvalidArgument(
                "diffusion coefficients must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.diffusion.len()
    }

    pub fn is_real(&self) -> bool {
        self.jacobian.iter().all(|z| z.im == 0.0)
    }

    /// `∂_u f(0,0) - D k²`.
    pub fn matrix(&self, k: f64) -> DMatrix<C64> {
        let mut m = self.jacobian.clone();
        for (i, &di) in self.diffusion.iter().enumerate() {
            m[(i, i)] -= C64::new(di * k * k, 0.0);
        }
        m
    }

    pub fn lambda0(&self, k: f64) -> f64 {
        -self.d_v * k * k
    }
}

/// Unit null vector of `m - λI` with its largest entry made real positive.
fn null_vector(m: &DMatrix<C64>, lambda: C64) -> DVector<C64> {
    let d = m.nrows();
    let shifted = m - DMatrix::<C64>::identity(d, d) * lambda;
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let v: DVector<C64> = vt.row(imin).adjoint();
    normalize_phase(v)
}

fn normalize_phase(v: DVector<C64>) -> DVector<C64> {
    let nrm = v.norm();
    let mut v = v / C64::new(nrm, 0.0);
    let maxmod = v.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let pivot = v
        .iter()
        .find(|z| z.norm() >= maxmod * (1.0 - 1e-9))
        .copied()
        .unwrap_or(C64::new(1.0, 0.0));
    let phase = pivot / pivot.norm();
    v /= phase;
    v
}

/// Eigenvalues (complex Schur) and unit eigenvectors (SVD null vectors).
pub fn eigen(m: &DMatrix<C64>, k: f64) -> Result<(Vec<C64>, Vec<DVector<C64>>)> {
    let schur = m
        .clone()
        .try_schur(1e-14, 10_000)
        .ok_or_else(|| Error::Eigen {
            k,
            reason: "Schur iteration did not converge".into(),
        })?;
    let (_, t) = schur.unpack();
    let vals: Vec<C64> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    let vecs = vals.iter().map(|&l| null_vector(m, l)).collect();
    Ok((vals, vecs))
}

fn overlap(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    a.dotc(b).norm()
}

/// Labelled eigenvalue curves sampled in `k`.
#[derive(Clone, Debug)]
pub struct DispersionData {
    pub k_samples: Vec<f64>,
    pub parameter: f64,
    pub d_v: f64,
    /// Curve labels, `labels[c]` belongs to `curves[c]`.
    pub labels: Vec<i32>,
    pub curves: Vec<Vec<C64>>,
    /// Unit eigenvectors; empty for the conservation-law curve.
    pub eigenvectors: Vec<Vec<DVector<C64>>>,
    /// Samples where the eigenvector matrix is numerically defective.
    pub defective_k: Vec<f64>,
    /// Smallest neighbour overlap seen during continuation.
    pub min_overlap: f64,
}

impl DispersionData {
    pub fn curve_index(&self, label: i32) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn curve(&self, label: i32) -> Option<&[C64]> {
        self.curve_index(label).map(|i| self.curves[i].as_slice())
    }

    pub fn sample_index(&self, k: f64) -> Option<usize> {
        let tol = 1e-12 * (1.0 + k.abs());
        self.k_samples.iter().position(|&x| (x - k).abs() <= tol)
    }

    /// Linear interpolation of a curve at `k`.
    pub fn eval(&self, label: i32, k: f64) -> Option<C64> {
        let c = self.curve(label)?;
        let ks = &self.k_samples;
        if k < ks[0] || k > *ks.last()? {
            return None;
        }
        let i = ks.partition_point(|&x| x < k);
        if i == 0 {
            return Some(c[0]);
        }
        let (k0, k1) = (ks[i - 1], ks[i]);
        let w = if k1 > k0 { (k - k0) / (k1 - k0) } else { 0.0 };
        Some(c[i - 1] * (1.0 - w) + c[i] * w)
    }

    /// CSV with columns `k, j, re_lambda, im_lambda`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "j", "re_lambda", "im_lambda"])?;
        for (c, &label) in self.labels.iter().enumerate() {
            for (k, z) in self.k_samples.iter().zip(&self.curves[c]) {
                w.write_record(&[
                    format!("{k:.17e}"),
                    label.to_string(),
                    format!("{:.17e}", z.re),
                    format!("{:.17e}", z.im),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn label_at_origin(vals: &[C64]) -> Vec<i32> {
    let d = vals.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].re.partial_cmp(&vals[a].re).unwrap());
    let one = order
        .iter()
        .copied()
        .filter(|&i| vals[i].im > 0.0)
        .max_by(|&a, &b| vals[a].re.partial_cmp(&vals[b].re).unwrap())
        .unwrap_or(order[0]);
    let target = vals[one].conj();
    let minus = (0..d)
        .filter(|&i| i != one)
        .min_by(|&a, &b| {
            (vals[a] - target)
                .norm()
                .partial_cmp(&(vals[b] - target).norm())
                .unwrap()
        })
        .unwrap();
    let mut labels = vec![0; d];
    labels[one] = 1;
    labels[minus] = -1;
    let mut next = 3;
    for &i in &order {
        if i != one && i != minus {
            labels[i] = next;
            next += 1;
        }
    }
    labels
}

/// Best assignment of new eigenpairs to previous curves by eigenvector overlap.
fn match_by_overlap(prev: &[DVector<C64>], new: &[DVector<C64>]) -> (Vec<usize>, f64) {
    let d = prev.len();
    let ov: Vec<Vec<f64>> = prev
        .iter()
        .map(|p| new.iter().map(|q| overlap(p, q)).collect())
        .collect();
    if d <= 6 {
        let mut perm: Vec<usize> = (0..d).collect();
        let mut best = (perm.clone(), f64::NEG_INFINITY, 0.0);
        permute(&mut perm, 0, &mut |p| {
            let score: f64 = (0..d).map(|i| ov[i][p[i]]).sum();
            if score > best.1 {
                let worst = (0..d).map(|i| ov[i][p[i]]).fold(f64::INFINITY, f64::min);
                best = (p.to_vec(), score, worst);
            }
        });
        (best.0, best.2)
    } else {
        let mut used = vec![false; d];
        let mut assign = vec![0; d];
        let mut worst = f64::INFINITY;
        for i in 0..d {
            let j = (0..d)
                .filter(|&j| !used[j])
                .max_by(|&a, &b| ov[i][a].partial_cmp(&ov[i][b]).unwrap())
                .unwrap();
            used[j] = true;
            assign[i] = j;
            worst = worst.min(ov[i][j]);
        }
        (assign, worst)
    }
}

fn permute(p: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == p.len() {
        visit(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, visit);
        p.swap(start, i);
    }
}

fn align_phase(reference: &DVector<C64>, v: DVector<C64>) -> DVector<C64> {
    let ip = reference.dotc(&v);
    if ip.norm() == 0.0 {
        return v;
    }
    v * (ip.conj() / ip.norm())
}

/// Eigenvalue curves continued outward from the sample closest to `k = 0`.
pub fn dispersion_curves(lin: &ModelLinearization, k_samples: &[f64]) -> Result<DispersionData> {
    lin.validate()?;
    if k_samples.is_empty() {
        return Err(Error::InvalidArgument("no k samples".into()));
    }
    if k_samples.iter().any(|k| !k.is_finite()) || k_samples.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("k samples must be finite and sorted".into()));
    }
    let d = lin.d();
    let n = k_samples.len();
    let i0 = (0..n)
        .min_by(|&a, &b| k_samples[a].abs().partial_cmp(&k_samples[b].abs()).unwrap())
        .unwrap();
    let mut vals = vec![vec![C64::default(); n]; d];
    let mut vecs = vec![vec![DVector::<C64>::zeros(d); n]; d];
    let mut defective = Vec::new();
    let mut min_overlap = f64::INFINITY;

    let solve = |k: f64, defective: &mut Vec<f64>| -> Result<(Vec<C64>, Vec<DVector<C64>>)> {
        let (l, v) = eigen(&lin.matrix(k), k)?;
        let vm = DMatrix::from_columns(&v);
        let sv = vm.singular_values();
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if smin < 1e-8 {
            defective.push(k);
        }
        Ok((l, v))
    };

    let (l0, v0) = solve(k_samples[i0], &mut defective)?;
    let labels0 = label_at_origin(&l0);
    // curve c holds the label order [1, -1, 3, ...]
    let mut order: Vec<(i32, usize)> = labels0.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    order.sort_by_key(|&(l, _)| if l == 1 { 0 } else if l == -1 { 1 } else { l });
    for (c, &(_, i)) in order.iter().enumerate() {
        vals[c][i0] = l0[i];
        vecs[c][i0] = v0[i].clone();
    }
    if lin.is_real() {
        // Û₋₁ = conj(Û₁) for real systems
        vecs[1][i0] = vecs[0][i0].map(|z| z.conj());
        vals[1][i0] = vals[0][i0].conj();
    }

    for dir in [1i64, -1] {
        let mut idx = i0 as i64;
        loop {
            let next = idx + dir;
            if next < 0 || next >= n as i64 {
                break;
            }
            let (ip, inx) = (idx as usize, next as usize);
            let k = k_samples[inx];
            let (l, v) = solve(k, &mut defective)?;
            let prev: Vec<DVector<C64>> = (0..d).map(|c| vecs[c][ip].clone()).collect();
            let (assign, worst) = match_by_overlap(&prev, &v);
            min_overlap = min_overlap.min(worst);
            if worst < 0.5 {
                return Err(Error::Continuation { k, overlap: worst });
            }
            for c in 0..d {
                vals[c][inx] = l[assign[c]];
                vecs[c][inx] = align_phase(&prev[c], v[assign[c]].clone());
            }
            if lin.is_real() {
                vecs[1][inx] = vecs[0][inx].map(|z| z.conj());
                vals[1][inx] = vals[0][inx].conj();
            }
            idx = next;
        }
    }

    let mut labels: Vec<i32> = order.iter().map(|&(l, _)| l).collect();
    labels.push(0);
    vals.push(k_samples.iter().map(|&k| C64::new(lin.lambda0(k), 0.0)).collect());
    vecs.push(Vec::new());
    if !min_overlap.is_finite() {
        min_overlap = 1.0;
    }
    Ok(DispersionData {
        k_samples: k_samples.to_vec(),
        parameter: lin.parameter,
        d_v: lin.d_v,
        labels,
        curves: vals,
        eigenvectors: vecs,
        defective_k: defective,
        min_overlap,
    })
}

/// Symmetric sampling `-k_max..k_max` refined to spacing `h` on `|k| <= 4h`.
pub fn default_k_samples(k_max: f64, n_coarse: usize, h: f64) -> Vec<f64> {
    let mut ks: Vec<f64> = (-4..=4).map(|i| i as f64 * h).collect();
    for i in 0..=n_coarse {
        let k = -k_max + 2.0 * k_max * i as f64 / n_coarse as f64;
        if k.abs() > 4.5 * h {
            ks.push(k);
        }
    }
    ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ks
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpecPasses {
    pub omega_positive: bool,
    pub conjugate_pair: bool,
    pub critical: bool,
    pub flat: bool,
    pub concave: bool,
    pub others_stable: bool,
    pub conservation_mode: bool,
    /// `None` when no parameter sweep was supplied.
    pub transversal: Option<bool>,
}

impl SpecPasses {
    pub fn all(&self) -> bool {
        self.omega_positive
            && self.conjugate_pair
            && self.critical
            && self.flat
            && self.concave
            && self.others_stable
            && self.conservation_mode
            && self.transversal.unwrap_or(true)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OnsetReport {
    pub omega0: f64,
    pub re_lambda_at_0: f64,
    /// `|λ₁'(0)|`.
    pub slope_at_0: f64,
    /// `Re λ₁''(0)`.
    pub curvature_at_0: f64,
    /// Largest `Re λ_j(0)` over `j >= 3`; `None` when `d = 2`.
    pub other_max_re: Option<f64>,
    pub parameter_derivative: Option<f64>,
    pub step: f64,
    pub passes: SpecPasses,
}

pub const CRITICAL_TOL: f64 = 1e-8;
pub const FLAT_TOL: f64 = 1e-6;
pub const CONCAVE_TOL: f64 = 1e-6;

fn stencil(data: &DispersionData) -> Result<(f64, [usize; 5])> {
    let i0 = data
        .sample_index(0.0)
        .ok_or_else(|| Error::Precondition("k = 0 must be sampled".into()))?;
    let h = data
        .k_samples
        .iter()
        .copied()
        .filter(|&k| k > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !(h <= 1e-3) {
        return Err(Error::Precondition(format!(
            "sampling near 0 too coarse: smallest positive k = {h:e}, need <= 1e-3"
        )));
    }
    let mut idx = [0usize; 5];
    for (s, m) in [-2.0, -1.0, 0.0, 1.0, 2.0].iter().enumerate() {
        idx[s] = if *m == 0.0 {
            i0
        } else {
            data.sample_index(m * h).ok_or_else(|| {
                Error::Precondition(format!("missing sample at k = {:e}", m * h))
            })?
        };
    }
    Ok((h, idx))
}

/// Finite-difference check of the long-wave Hopf assumption.
pub fn check_onset(data: &DispersionData, sweep: &[DispersionData]) -> Result<OnsetReport> {
    let (h, idx) = stencil(data)?;
    let c1 = data.curve(1).ok_or_else(|| Error::Precondition("no critical curve".into()))?;
    let cm1 = data.curve(-1).unwrap();
    let f = |s: usize| c1[idx[s]];
    let d1 = (-f(4) + f(3) * 8.0 - f(1) * 8.0 + f(0)) / (12.0 * h);
    let d2 = (-f(4) + f(3) * 16.0 - f(2) * 30.0 + f(1) * 16.0 - f(0)) / (12.0 * h * h);
    let l1 = f(2);
    let lm1 = cm1[idx[2]];
    let others: Vec<f64> = data
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l >= 3)
        .map(|(c, _)| data.curves[c][idx[2]].re)
        .collect();
    let other_max_re = others.iter().cloned().reduce(f64::max);
    let lambda0 = data.curve(0).unwrap()[idx[2]];

    let parameter_derivative = if sweep.is_empty() {
        None
    } else {
        let mut pts = vec![(data.parameter, l1.re)];
        for s in sweep {
            let i = s
                .sample_index(0.0)
                .ok_or_else(|| Error::Precondition("sweep entry lacks k = 0".into()))?;
            let c = s.curve(1).ok_or_else(|| Error::Precondition("sweep lacks curve".into()))?;
            pts.push((s.parameter, c[i].re));
        }
        let n = pts.len() as f64;
        let mp = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mr = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mp).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mp) * (p.1 - mr)).sum();
        if sxx == 0.0 {
            return Err(Error::Precondition("sweep parameters are all equal".into()));
        }
        Some(sxy / sxx)
    };

    let passes = SpecPasses {
        omega_positive: l1.im > 0.0,
        conjugate_pair: (lm1.im + l1.im).abs() < 1e-10 * (1.0 + l1.im.abs())
            && (lm1.re - l1.re).abs() < 1e-10,
        critical: l1.re.abs() < CRITICAL_TOL,
        flat: d1.norm() < FLAT_TOL,
        concave: d2.re < -CONCAVE_TOL,
        others_stable: other_max_re.is_none_or(|m| m < 0.0),
        conservation_mode: lambda0.norm() == 0.0,
        transversal: parameter_derivative.map(|x| x > 0.0),
    };
    Ok(OnsetReport {
        omega0: l1.im,
        re_lambda_at_0: l1.re,
        slope_at_0: d1.norm(),
        curvature_at_0: d2.re,
        other_max_re,
        parameter_derivative,
        step: h,
        passes,
    })
}

/// Rank-one spectral projections onto the critical pair at one wavenumber.
#[derive(Clone, Debug)]
pub struct Projections {
    pub k: f64,
    pub lambda1: C64,
    pub lambda_m1: C64,
    pub u1: DVector<C64>,
    pub u_m1: DVector<C64>,
    /// Rows with `p₁ · Û₁ = 1` and `p₁ · Û_j = 0` otherwise.
    pub p1: DVector<C64>,
    pub p_m1: DVector<C64>,
    /// Smallest distance from `λ_{±1}` to the rest of the spectrum.
    pub gap: f64,
}

impl Projections {
    pub fn matrix(&self, sign: i32) -> DMatrix<C64> {
        if sign >= 0 {
            &self.u1 * self.p1.transpose()
        } else {
            &self.u_m1 * self.p_m1.transpose()
        }
    }

    /// Full eigenbasis (columns `Û₁, Û₋₁, Û₃, ...`) used by [`Self::stable_matrix`].
    pub fn stable_matrix(&self, d: usize) -> DMatrix<C64> {
        DMatrix::identity(d, d) - self.matrix(1) - self.matrix(-1)
    }
}

/// Separation below which projections are refused.
pub const COLLISION_TOL: f64 = 1e-3;

/// Projections at `k`, with `Û₁(k)` phase-aligned to `Û₁(0)`.
pub fn spectral_projections(lin: &ModelLinearization, k: f64) -> Result<Projections> {
    lin.validate()?;
    let d = lin.d();
    let (vals0, vecs0) = eigen(&lin.matrix(0.0), 0.0)?;
    let lab0 = label_at_origin(&vals0);
    let i1_0 = lab0.iter().position(|&l| l == 1).unwrap();
    let ref1 = vecs0[i1_0].clone();

    let (vals, vecs) = eigen(&lin.matrix(k), k)?;
    let i1 = (0..d)
        .max_by(|&a, &b| {
            overlap(&ref1, &vecs[a])
                .partial_cmp(&overlap(&ref1, &vecs[b]))
                .unwrap()
        })
        .unwrap();
    let target = if lin.is_real() {
        vals[i1].conj()
    } else {
        vals0[lab0.iter().position(|&l| l == -1).unwrap()]
    };
    let im1 = (0..d)
        .filter(|&i| i != i1)
        .min_by(|&a, &b| {
            (vals[a] - target)
                .norm()
                .partial_cmp(&(vals[b] - target).norm())
                .unwrap()
        })
        .unwrap();
    let mut gap = f64::INFINITY;
    for (i, &l) in vals.iter().enumerate() {
        if i != i1 {
            gap = gap.min((l - vals[i1]).norm());
        }
        if i != im1 {
            gap = gap.min((l - vals[im1]).norm());
        }
    }
    if gap < COLLISION_TOL {
        return Err(Error::Collision { k, gap });
    }
    let u1 = align_phase(&ref1, vecs[i1].clone());
    let (lm1, um1) = if lin.is_real() {
        (vals[i1].conj(), u1.map(|z| z.conj()))
    } else {
        (vals[im1], vecs[im1].clone())
    };
    let mut cols = vec![u1.clone(), um1.clone()];
    for i in 0..d {
        if i != i1 && i != im1 {
            cols.push(vecs[i].clone());
        }
    }
    let v = DMatrix::from_columns(&cols);
    let w = v.clone().try_inverse().ok_or(Error::Collision { k, gap })?;
    let p1: DVector<C64> = w.row(0).transpose();
    let p_m1: DVector<C64> = w.row(1).transpose();
    Ok(Projections {
        k,
        lambda1: vals[i1],
        lambda_m1: lm1,
        u1,
        u_m1: um1,
        p1,
        p_m1,
        gap,
    })
}

/// `u = c₁Û₁ + c₋₁Û₋₁ + u_s` in Fourier space.
#[derive(Clone, Debug)]
pub struct ModeSplit {
    pub c1: Field,
    pub c_m1: Field,
    pub us: Vec<Field>,
}

struct ModeData {
    idx: usize,
    chi: f64,
    u1: DVector<C64>,
    u_m1: DVector<C64>,
    p1: DVector<C64>,
    p_m1: DVector<C64>,
}

/// Precomputed critical/stable splitting on one grid.
pub struct ModeSplitter {
    grid: SpectralGrid,
    d: usize,
    delta_tilde: f64,
    modes: Vec<ModeData>,
    u1_origin: DVector<C64>,
}

impl ModeSplitter {
    pub fn new(lin: &ModelLinearization, grid: &SpectralGrid, delta_tilde: f64) -> Result<Self> {
        if !(delta_tilde > 0.0) {
            return Err(Error::InvalidArgument("delta_tilde must be positive".into()));
        }
        let mut modes = Vec::new();
        for (idx, &k) in grid.wavenumbers().iter().enumerate() {
            let chi = mode_filter_symbol(k, delta_tilde);
            if chi > 0.0 {
                let p = spectral_projections(lin, k)?;
                modes.push(ModeData {
                    idx,
                    chi,
                    u1: p.u1,
                    u_m1: p.u_m1,
                    p1: p.p1,
                    p_m1: p.p_m1,
                });
            }
        }
        let u1_origin = spectral_projections(lin, 0.0)?.u1;
        Ok(Self {
            grid: grid.clone(),
            d: lin.d(),
            delta_tilde,
            modes,
            u1_origin,
        })
    }

    pub fn delta_tilde(&self) -> f64 {
        self.delta_tilde
    }

    pub fn u1_at_origin(&self) -> &DVector<C64> {
        &self.u1_origin
    }

    pub fn split(&self, u: &[Field]) -> Result<ModeSplit> {
        if u.len() != self.d {
            return Err(Error::InvalidArgument("wrong number of components".into()));
        }
        if u.iter().any(|f| f.grid() != &self.grid) {
            return Err(Error::GridMismatch);
        }
        let n = self.grid.n_points();
        let mut us: Vec<Vec<C64>> = u.iter().map(|f| f.coefficients()).collect();
        let mut c1 = vec![C64::default(); n];
        let mut cm1 = vec![C64::default(); n];
        for m in &self.modes {
            let uk = DVector::from_iterator(self.d, us.iter().map(|c| c[m.idx]));
            let a = m.p1.dot(&uk) * m.chi;
            let b = m.p_m1.dot(&uk) * m.chi;
            c1[m.idx] = a;
            cm1[m.idx] = b;
            for (i, comp) in us.iter_mut().enumerate() {
                comp[m.idx] -= a * m.u1[i] + b * m.u_m1[i];
            }
        }
        Ok(ModeSplit {
            c1: Field::new(&self.grid, c1, Repr::Fourier)?,
            c_m1: Field::new(&self.grid, cm1, Repr::Fourier)?,
            us: us
                .into_iter()
                .map(|c| Field::new(&self.grid, c, Repr::Fourier))
                .collect::<Result<_>>()?,
        })
    }

    /// Rebuild the critical part `c₁Û₁ + c₋₁Û₋₁` as d components.
    pub fn critical_part(&self, split: &ModeSplit) -> Vec<Field> {
        let n = self.grid.n_points();
        let c1 = split.c1.coefficients();
        let cm1 = split.c_m1.coefficients();
        let mut out = vec![vec![C64::default(); n]; self.d];
        for m in &self.modes {
            for (i, comp) in out.iter_mut().enumerate() {
                comp[m.idx] = c1[m.idx] * m.u1[i] + cm1[m.idx] * m.u_m1[i];
            }
        }
        out.into_iter()
            .map(|c| Field::new(&self.grid, c, Repr::Fourier).unwrap())
            .collect()
    }
}

pub fn mode_split(u: &[Field], lin: &ModelLinearization, delta_tilde: f64) -> Result<ModeSplit> {
    let grid = u
        .first()
        .ok_or_else(|| Error::InvalidArgument("no components".into()))?
        .grid()
        .clone();
    ModeSplitter::new(lin, &grid, delta_tilde)?.split(u)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonresonanceReport {
    pub margin: f64,
    pub k: f64,
    pub m: f64,
    pub triple: [i32; 3],
}

/// `inf |λ_{j₁}(k) - λ_{j₂}(k-m) - λ_{j₃}(m)|` over sampled `|k|, |m| <= radius`
/// and all sign triples.
pub fn nonresonance_margin(data: &DispersionData, radius: f64) -> Result<NonresonanceReport> {
    if data.curve(1).is_none() || data.curve(-1).is_none() {
        return Err(Error::Precondition("critical pair missing".into()));
    }
    let ks: Vec<f64> = data
        .k_samples
        .iter()
        .copied()
        .filter(|k| k.abs() <= radius)
        .collect();
    let mut best = NonresonanceReport {
        margin: f64::INFINITY,
        k: 0.0,
        m: 0.0,
        triple: [1, 1, 1],
    };
    let signs = [1, -1];
    for &k in &ks {
        for &m in &ks {
            for &j1 in &signs {
                for &j2 in &signs {
                    for &j3 in &signs {
                        let (Some(a), Some(b), Some(c)) =
                            (data.eval(j1, k), data.eval(j2, k - m), data.eval(j3, m))
                        else {
                            continue;
                        };
                        let r = (a - b - c).norm();
                        if r < best.margin {
                            best = NonresonanceReport {
                                margin: r,
                                k,
                                m,
                                triple: [j1, j2, j3],
                            };
                        }
                    }
                }
            }
        }
    }
    if !best.margin.is_finite() {
        return Err(Error::Precondition("no samples inside the radius".into()));
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchFit {
    pub t: Vec<f64>,
    pub sup: Vec<f64>,
    pub c: f64,
    /// Fitted decay rate (stable branch only).
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    pub s: f64,
    pub r: f64,
    pub eps2: f64,
    pub critical: BranchFit,
    pub stable: Option<BranchFit>,
    pub conservation: BranchFit,
    /// `-max Re λ` over the stable set.
    pub symbol_gap: Option<f64>,
}

/// Sampled semigroup bounds. The stable set is `λ_j, j >= 3`, together with
/// `λ_{±1}(k)` for `|k| >= stable_cut`.
pub fn semigroup_decay_check(
    data: &DispersionData,
    s: f64,
    r: f64,
    t_samples: &[f64],
    stable_cut: f64,
) -> Result<DecayReport> {
    if t_samples.is_empty() || t_samples.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("t samples must be positive".into()));
    }
    let weight = |k: f64| (1.0 + k * k).powf(r / 2.0);
    let time_factor = |t: f64| 1.0 + t.powf(-r / 2.0);
    let sup_over = |sel: &dyn Fn(i32, f64) -> bool, t: f64| -> f64 {
        let mut m: f64 = 0.0;
        for (c, &label) in data.labels.iter().enumerate() {
            for (i, &k) in data.k_samples.iter().enumerate() {
                if sel(label, k) {
                    m = m.max((data.curves[c][i] * t).exp().norm() * weight(k));
                }
            }
        }
        m
    };
    let i0 = data
        .sample_index(0.0)
        .ok_or_else(|| Error::Precondition("k = 0 must be sampled".into()))?;
    let eps2 = data.curve(1).unwrap()[i0].re.max(0.0);

    let crit_sel = |l: i32, _k: f64| l == 1 || l == -1;
    let crit: Vec<f64> = t_samples.iter().map(|&t| sup_over(&crit_sel, t)).collect();
    let c_crit = t_samples
        .iter()
        .zip(&crit)
        .map(|(&t, &v)| v / (time_factor(t) * (eps2 * t).exp()))
        .fold(0.0, f64::max);

    let cons_sel = |l: i32, _k: f64| l == 0;
    let cons: Vec<f64> = t_samples.iter().map(|&t| sup_over(&cons_sel, t)).collect();
    let c_cons = t_samples
        .iter()
        .zip(&cons)
        .map(|(&t, &v)| v / time_factor(t))
        .fold(0.0, f64::max);

    let stab_sel = |l: i32, k: f64| l >= 3 || ((l == 1 || l == -1) && k.abs() >= stable_cut);
    let mut gap: Option<f64> = None;
    for (c, &label) in data.labels.iter().enumerate() {
        for (i, &k) in data.k_samples.iter().enumerate() {
            if stab_sel(label, k) {
                let g = -data.curves[c][i].re;
                gap = Some(gap.map_or(g, |x: f64| x.min(g)));
            }
        }
    }
    let stable = if gap.is_some() {
        let sup: Vec<f64> = t_samples.iter().map(|&t| sup_over(&stab_sel, t)).collect();
        let y: Vec<f64> = t_samples
            .iter()
            .zip(&sup)
            .map(|(&t, &v)| (v / time_factor(t)).ln())
            .collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!(
                "decay fit failed, raw samples {sup:?}"
            )));
        }
        let (slope, intercept) = crate::fit::linear_fit(t_samples, &y)?;
        Some(BranchFit {
            t: t_samples.to_vec(),
            sup,
            c: intercept.exp(),
            sigma: Some(-slope),
        })
    } else {
        None
    };
    Ok(DecayReport {
        s,
        r,
        eps2,
        critical: BranchFit {
            t: t_samples.to_vec(),
            sup: crit,
            c: c_crit,
            sigma: None,
        },
        stable,
        conservation: BranchFit {
            t: t_samples.to_vec(),
            sup: cons,
            c: c_cons,
            sigma: None,
        },
        symbol_gap: gap,
    })
}

/// Half the smallest `|k|` in `(0, k_max]` where `λ_{±1}` come within
/// [`COLLISION_TOL`] of another eigenvalue. `None` if they never do.
pub fn estimate_rho(lin: &ModelLinearization, k_max: f64, samples: usize) -> Result<Option<f64>> {
    for i in 1..=samples {
        let k = k_max * i as f64 / samples as f64;
        match spectral_projections(lin, k) {
            Ok(_) => {}
            Err(Error::Collision { .. }) => return Ok(Some(k / 2.0)),
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// Bisection for the parameter at which `max Re λ(0)` over the non-conservation
/// curves changes sign inside `[lo, hi]`.
pub fn critical_parameter(
    lin_at: impl Fn(f64) -> Result<ModelLinearization>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    let growth = |p: f64| -> Result<f64> {
        let (vals, _) = eigen(&lin_at(p)?.matrix(0.0), 0.0)?;
        Ok(vals.iter().map(|l| l.re).fold(f64::MIN, f64::max))
    };
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (growth(a)?, growth(b)?);
    if fa * fb > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "no sign change of the growth rate on [{lo}, {hi}]: {fa}, {fb}"
        )));
    }
    let sa = fa.signum();
    while b - a > tol {
        let m = 0.5 * (a + b);
        if growth(m)?.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

pub fn write_onset_report(report: &OnsetReport, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(report)?.as_bytes())?;
    Ok(())
}
