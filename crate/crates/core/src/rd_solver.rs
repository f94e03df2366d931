//! Time integration of the full reaction-diffusion / conservation-law system.
//!
//! The linear part at each wavenumber, `∂_u f(0,0) - Dk²` for `u` and `-d_v k²`
//! for `v`, is diagonalized once; ETDRK4 then runs in those modal coordinates
//! with the polynomial nonlinearity evaluated in physical space.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::etd::{etdrk4_step, Etdrk4Coeffs, Etdrk4Work};
use crate::linear::eigen;
use crate::models::RDModel;
use crate::spectral::{make_grid, sobolev_norm, Field, Repr, SpectralGrid};

#[derive(Clone, Debug)]
pub struct RdState {
    pub u: Vec<Field>,
    pub v: Field,
    pub t: f64,
    /// `∫v dx` at construction.
    pub initial_mass: f64,
}

impl RdState {
    pub fn new(u: Vec<Field>, v: Field, t: f64) -> Result<Self> {
        if u.iter().any(|f| f.grid() != v.grid()) {
            return Err(Error::GridMismatch);
        }
        let mut s = Self {
            u,
            v,
            t,
            initial_mass: 0.0,
        };
        s.initial_mass = s.conserved_mass();
        Ok(s)
    }

    pub fn zeros(grid: &SpectralGrid, d: usize) -> Self {
        Self::new(vec![Field::zeros(grid); d], Field::zeros(grid), 0.0).unwrap()
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.v.grid()
    }

    /// `∫v dx = L·v̂₀`.
    pub fn conserved_mass(&self) -> f64 {
        self.v.grid().length() * self.v.mean().re
    }

    pub fn imag_residue(&self) -> f64 {
        self.u
            .iter()
            .map(|f| f.imag_residue())
            .fold(self.v.imag_residue(), f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.u.iter().map(|f| f.sup_norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.u
            .iter()
            .chain(std::iter::once(&self.v))
            .all(|f| f.raw().iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

pub fn conserved_mass(state: &RdState) -> f64 {
    state.conserved_mass()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Treat `∂_u f(0,0)` exactly together with diffusion. Otherwise it is
    /// part of the explicit nonlinearity.
    pub linear_jacobian: bool,
    pub dealias: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            linear_jacobian: true,
            dealias: true,
        }
    }
}

struct Nonlinearity {
    model: RDModel,
    grid: SpectralGrid,
    d: usize,
    k2: Vec<f64>,
    mask: Vec<bool>,
    // per mode, row-major d×d
    vmat: Vec<C64>,
    wmat: Vec<C64>,
    rmat: Vec<C64>,
    has_r: Vec<bool>,
    phys: Vec<Vec<C64>>,
    out: Vec<Vec<C64>>,
    uhat: Vec<Vec<C64>>,
    scratch: Vec<C64>,
    stash: Vec<C64>,
    pt: Vec<f64>,
    fv: Vec<f64>,
    imag_residue: f64,
}

impl Nonlinearity {
    fn modal_to_fourier(&mut self, w: &[C64]) {
        let (d, n) = (self.d, self.grid.n_points());
        for j in 0..n {
            let base = j * d * d;
            for r in 0..d {
                let mut z = C64::default();
                for c in 0..d {
                    z += self.vmat[base + r * d + c] * w[c * n + j];
                }
                self.uhat[r][j] = z;
            }
        }
    }

    fn eval(&mut self, w: &[C64], nw: &mut [C64]) -> Result<()> {
        let (d, n) = (self.d, self.grid.n_points());
        self.modal_to_fourier(w);
        for c in 0..d {
            self.phys[c].copy_from_slice(&self.uhat[c]);
        }
        self.phys[d].copy_from_slice(&w[d * n..]);
        let mut imag: f64 = 0.0;
        for buf in self.phys.iter_mut() {
            self.grid.inverse_with_scratch(buf, &mut self.scratch);
            for z in buf.iter() {
                imag = imag.max(z.im.abs());
            }
        }
        self.imag_residue = self.imag_residue.max(imag);
        for x in 0..n {
            for c in 0..d {
                self.pt[c] = self.phys[c][x].re;
            }
            let v = self.phys[d][x].re;
            self.model.f_nonlinear_into(&self.pt, v, &mut self.fv);
            for c in 0..d {
                self.out[c][x] = C64::new(self.fv[c], 0.0);
            }
            self.out[d][x] = C64::new(self.model.g(&self.pt), 0.0);
        }
        for buf in self.out.iter_mut() {
            self.grid.forward_with_scratch(buf, &mut self.scratch);
        }
        let zero = C64::default();
        for j in 0..n {
            let keep = self.mask[j];
            let base = j * d * d;
            for r in 0..d {
                let mut fr = if keep { self.out[r][j] } else { zero };
                if self.has_r[j] {
                    for c in 0..d {
                        fr += self.rmat[base + r * d + c] * self.uhat[c][j];
                    }
                }
                self.stash[r] = fr;
            }
            for r in 0..d {
                let mut z = zero;
                for c in 0..d {
                    z += self.wmat[base + r * d + c] * self.stash[c];
                }
                nw[r * n + j] = z;
            }
            let g = if keep { self.out[d][j] } else { zero };
            nw[d * n + j] = -self.k2[j] * g;
        }
        Ok(())
    }
}

/// Fixed-step ETDRK4 integrator for one model on one grid.
pub struct RdStepper {
    nl: Nonlinearity,
    coeffs: Etdrk4Coeffs,
    work: Etdrk4Work,
    w: Vec<C64>,
    w_prev: Vec<C64>,
    t: f64,
    initial_mass: f64,
    /// Modes where the eigenbasis was rejected as ill-conditioned.
    pub fallback_modes: usize,
}

/// Condition number above which a mode keeps `∂_u f(0,0)` explicit.
const MAX_BASIS_CONDITION: f64 = 1e8;

impl RdStepper {
    pub fn new(model: &RDModel, grid: &SpectralGrid, dt: f64, options: SolverOptions) -> Result<Self> {
        model.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let d = model.d();
        let n = grid.n_points();
        let jac = model.jacobian();
        let k2: Vec<f64> = grid.wavenumbers().iter().map(|k| k * k).collect();
        let mut vmat = vec![C64::default(); n * d * d];
        let mut wmat = vec![C64::default(); n * d * d];
        let mut rmat = vec![C64::default(); n * d * d];
        let mut has_r = vec![false; n];
        let mut lambda = vec![C64::default(); (d + 1) * n];
        let mut fallback = 0;
        // ±k share a matrix
        let mut cache: Vec<Option<(Vec<C64>, Vec<C64>, Vec<C64>, bool)>> = vec![None; n / 2 + 1];
        for j in 0..n {
            let key = grid.mode(j).unsigned_abs() as usize;
            if cache[key].is_none() {
                let k = grid.wavenumbers()[j].abs();
                let mut diag = DMatrix::<C64>::zeros(d, d);
                for i in 0..d {
                    diag[(i, i)] = C64::new(-model.diffusion[i] * k * k, 0.0);
                }
                let jc = jac.map(|x| C64::new(x, 0.0));
                let mut entry = None;
                if options.linear_jacobian {
                    let m = &diag + &jc;
                    let (vals, vecs) = eigen(&m, k)?;
                    let v = DMatrix::from_columns(&vecs);
                    let sv = v.singular_values();
                    let cond = sv.max() / sv.min();
                    if cond < MAX_BASIS_CONDITION {
                        if let Some(w) = v.clone().try_inverse() {
                            entry = Some((vals, row_major(&v), row_major(&w), false));
                        }
                    }
                }
                let entry = entry.unwrap_or_else(|| {
                    let vals = (0..d).map(|i| diag[(i, i)]).collect();
                    let id = row_major(&DMatrix::<C64>::identity(d, d));
                    (vals, id.clone(), id, true)
                });
                cache[key] = Some(entry);
            }
            let (vals, v, w, explicit_j) = cache[key].as_ref().unwrap();
            let base = j * d * d;
            vmat[base..base + d * d].copy_from_slice(v);
            wmat[base..base + d * d].copy_from_slice(w);
            if *explicit_j {
                has_r[j] = jac.iter().any(|&x| x != 0.0);
                for r in 0..d {
                    for c in 0..d {
                        rmat[base + r * d + c] = C64::new(jac[(r, c)], 0.0);
                    }
                }
                if options.linear_jacobian {
                    fallback += 1;
                }
            }
            for c in 0..d {
                lambda[c * n + j] = vals[c];
            }
            lambda[d * n + j] = C64::new(-model.d_v * k2[j], 0.0);
        }
        let mask = if options.dealias {
            grid.dealias_mask()
        } else {
            vec![true; n]
        };
        let scratch = vec![C64::default(); grid.scratch_len()];
        let nl = Nonlinearity {
            model: model.clone(),
            grid: grid.clone(),
            d,
            k2,
            mask,
            vmat,
            wmat,
            rmat,
            has_r,
            phys: vec![vec![C64::default(); n]; d + 1],
            out: vec![vec![C64::default(); n]; d + 1],
            uhat: vec![vec![C64::default(); n]; d],
            scratch,
            stash: vec![C64::default(); d],
            pt: vec![0.0; d],
            fv: vec![0.0; d],
            imag_residue: 0.0,
        };
        Ok(Self {
            nl,
            coeffs: Etdrk4Coeffs::new(&lambda, dt),
            work: Etdrk4Work::new((d + 1) * n),
            w: vec![C64::default(); (d + 1) * n],
            w_prev: vec![C64::default(); (d + 1) * n],
            t: 0.0,
            initial_mass: 0.0,
            fallback_modes: fallback,
        })
    }

    pub fn dt(&self) -> f64 {
        self.coeffs.h
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.nl.grid
    }

    /// Largest imaginary part discarded in physical space so far.
    pub fn imag_residue(&self) -> f64 {
        self.nl.imag_residue
    }

    pub fn reset_imag_residue(&mut self) {
        self.nl.imag_residue = 0.0;
    }

    pub fn load(&mut self, state: &RdState) -> Result<()> {
        let (d, n) = (self.nl.d, self.nl.grid.n_points());
        if state.u.len() != d {
            return Err(Error::InvalidArgument(format!(
                "state has {} u-components, model has {d}",
                state.u.len()
            )));
        }
        if state.grid() != &self.nl.grid || state.u.iter().any(|f| f.grid() != &self.nl.grid) {
            return Err(Error::GridMismatch);
        }
        let uh: Vec<Vec<C64>> = state.u.iter().map(|f| f.coefficients()).collect();
        for j in 0..n {
            let base = j * d * d;
            for r in 0..d {
                let mut z = C64::default();
                for c in 0..d {
                    z += self.nl.wmat[base + r * d + c] * uh[c][j];
                }
                self.w[r * n + j] = z;
            }
        }
        self.w[d * n..].copy_from_slice(&state.v.coefficients());
        self.t = state.t;
        self.initial_mass = state.initial_mass;
        Ok(())
    }

    pub fn state(&mut self) -> RdState {
        let (d, n) = (self.nl.d, self.nl.grid.n_points());
        let w = self.w.clone();
        self.nl.modal_to_fourier(&w);
        let grid = &self.nl.grid;
        let u = (0..d)
            .map(|c| Field::new(grid, self.nl.uhat[c].clone(), Repr::Fourier).unwrap())
            .collect();
        let v = Field::new(grid, self.w[d * n..].to_vec(), Repr::Fourier).unwrap();
        RdState {
            u,
            v,
            t: self.t,
            initial_mass: self.initial_mass,
        }
    }

    /// One step; on non-finite output the previous state is kept.
    pub fn advance(&mut self) -> Result<()> {
        self.w_prev.copy_from_slice(&self.w);
        let Self { nl, coeffs, work, w, .. } = self;
        etdrk4_step(coeffs, w, work, |x, y| nl.eval(x, y))?;
        if self.w.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            self.w.copy_from_slice(&self.w_prev);
            return Err(Error::BlowUp {
                t: self.t + self.coeffs.h,
                what: "non-finite Fourier coefficient".into(),
            });
        }
        self.t += self.coeffs.h;
        Ok(())
    }

    pub fn advance_n(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.advance()?;
        }
        Ok(())
    }
}

fn row_major(m: &DMatrix<C64>) -> Vec<C64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Single step convenience wrapper.
pub fn step(model: &RDModel, state: &RdState, dt: f64) -> Result<RdState> {
    let mut s = RdStepper::new(model, state.grid(), dt, SolverOptions::default())?;
    s.load(state)?;
    s.advance()?;
    Ok(s.state())
}

/// Explicit-rate step heuristic `0.4 / rate` with the rate taken from the
/// pointwise Jacobian of the nonlinear part of `f` at the current state.
pub fn suggest_dt(model: &RDModel, state: &RdState, safety: f64) -> f64 {
    let d = model.d();
    let up: Vec<Vec<f64>> = state.u.iter().map(|f| f.real_part()).collect();
    let vp = state.v.real_part();
    let h = 1e-6;
    let mut rate: f64 = 0.0;
    let mut base = vec![0.0; d];
    let mut pert = vec![0.0; d];
    for x in 0..vp.len() {
        let pt: Vec<f64> = (0..d).map(|c| up[c][x]).collect();
        model.f_nonlinear_into(&pt, vp[x], &mut base);
        let mut rows = vec![0.0; d];
        for c in 0..d {
            let mut p2 = pt.clone();
            p2[c] += h;
            model.f_nonlinear_into(&p2, vp[x], &mut pert);
            for r in 0..d {
                rows[r] += ((pert[r] - base[r]) / h).abs();
            }
        }
        rate = rate.max(rows.iter().cloned().fold(0.0, f64::max));
    }
    if rate < 1e-12 {
        1.0
    } else {
        (safety / rate).min(1.0)
    }
}

/// Seeded state with modes `|j| <= modes` of size `amp` and a random mean;
/// real in every component.
pub fn random_band_state(grid: &SpectralGrid, d: usize, amp: f64, modes: i64, seed: u64) -> RdState {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_points();
    let modes = modes.min(n as i64 / 2 - 1);
    let mut field = || {
        let mut c = vec![C64::default(); n];
        for j in 1..=modes {
            let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * amp;
            c[grid.index_of_mode(j).unwrap()] = z;
            c[grid.index_of_mode(-j).unwrap()] = z.conj();
        }
        c[0] = C64::new(rng.random_range(-1.0..1.0) * amp, 0.0);
        Field::from_coefficients(grid, c).unwrap().to_physical()
    };
    let u = (0..d).map(|_| field()).collect();
    RdState::new(u, field(), 0.0).unwrap()
}

/// One observation: named scalar values.
pub type Observation = Vec<(String, f64)>;

pub type Observer<'a> = Box<dyn FnMut(&RdState) -> Observation + 'a>;

/// Mass, norms and imaginary residue.
pub fn standard_observer<'a>() -> Observer<'a> {
    Box::new(|s: &RdState| {
        let u_l2 = s
            .u
            .iter()
            .map(|f| sobolev_norm(f, 0.0).unwrap().powi(2))
            .sum::<f64>()
            .sqrt();
        vec![
            ("mass".into(), s.conserved_mass()),
            ("u_l2".into(), u_l2),
            ("u_sup".into(), s.sup_norm()),
            ("v_sup".into(), s.v.sup_norm()),
            ("imag_residue".into(), s.imag_residue()),
        ]
    })
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub final_state: RdState,
    pub steps: usize,
    pub dt: f64,
    pub max_imag_residue: f64,
    /// Final sampling stride after downsampling.
    pub stride: usize,
}

impl Trajectory {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.rows) {
            let mut rec = vec![format!("{t:.17e}")];
            rec.extend(row.iter().map(|x| format!("{x:.17e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct IntegrateOptions {
    pub stride: usize,
    /// Records kept before the series is thinned by a factor two.
    pub max_records: usize,
    pub solver: SolverOptions,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            max_records: 100_000,
            solver: SolverOptions::default(),
        }
    }
}

/// Step to `t_end` (the step is shrunk so that `t_end` is hit exactly),
/// observing every `stride` steps, at the start and at the end.
pub fn integrate(
    model: &RDModel,
    state: &RdState,
    t_end: f64,
    dt: f64,
    observers: &mut [Observer<'_>],
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if !(t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be >= 0, got {t_end}")));
    }
    if opts.stride == 0 || opts.max_records < 2 {
        return Err(Error::InvalidArgument("stride and max_records must be positive".into()));
    }
    let steps = if t_end == 0.0 {
        0
    } else {
        (t_end / dt - 1e-9).ceil().max(1.0) as usize
    };
    let h = if steps == 0 { dt } else { t_end / steps as f64 };
    let mut stepper = RdStepper::new(model, state.grid(), h, opts.solver)?;
    stepper.load(state)?;
    let mut columns: Vec<String> = Vec::new();
    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut stride = opts.stride;
    let mut observe = |s: &RdState, columns: &mut Vec<String>, times: &mut Vec<f64>, rows: &mut Vec<Vec<f64>>| {
        let mut row = Vec::new();
        let mut names = Vec::new();
        for ob in observers.iter_mut() {
            for (name, val) in ob(s) {
                names.push(name);
                row.push(val);
            }
        }
        if columns.is_empty() {
            *columns = names;
        }
        times.push(s.t);
        rows.push(row);
    };
    observe(state, &mut columns, &mut times, &mut rows);
    let mut last_recorded = 0;
    for i in 1..=steps {
        stepper.advance()?;
        if i % stride == 0 {
            let s = stepper.state();
            observe(&s, &mut columns, &mut times, &mut rows);
            last_recorded = i;
            if rows.len() > opts.max_records {
                let keep: Vec<usize> = (0..rows.len()).step_by(2).collect();
                times = keep.iter().map(|&k| times[k]).collect();
                rows = keep.iter().map(|&k| rows[k].clone()).collect();
                stride *= 2;
            }
        }
    }
    let final_state = stepper.state();
    if steps > 0 && last_recorded != steps {
        observe(&final_state, &mut columns, &mut times, &mut rows);
    }
    Ok(Trajectory {
        columns,
        times,
        rows,
        final_state,
        steps,
        dt: h,
        max_imag_residue: stepper.imag_residue(),
        stride,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalFormDirection {
    Forward,
    Inverse,
}

/// Constant quadratic kernels `(b_{1,1}, b_{1,-1}, b_{-1,-1})` of the toy
/// model at `k = 0`: `n/(λ₁ - λ_i - λ_j)` with unit quadratic coefficients.
pub fn toy_normal_form_kernels(omega0: f64) -> [C64; 3] {
    let iw = C64::new(0.0, omega0);
    let kernel = |li: C64, lj: C64| C64::new(1.0, 0.0) / (iw - li - lj);
    [kernel(iw, iw), kernel(iw, -iw), kernel(-iw, -iw)]
}

/// Near-identity quadratic change of variables for the toy model,
/// `ǔ₁ = u₁ + b₁₁u₁² + b₁₋₁u₁u₋₁ + b₋₁₋₁u₋₁²`, applied pointwise; `v` is unchanged.
pub fn normal_form_toy(state: &RdState, omega0: f64, direction: NormalFormDirection) -> Result<RdState> {
    if state.u.len() != 2 {
        return Err(Error::Precondition("normal form needs the toy model".into()));
    }
    let p = state.u[0].real_part();
    let q = state.u[1].real_part();
    let z: Vec<C64> = p.iter().zip(&q).map(|(&a, &b)| C64::new(a, b)).collect();
    let amp = z.iter().fold(0.0f64, |m, x| m.max(x.norm()));
    if amp >= 0.3 {
        return Err(Error::Precondition(format!(
            "amplitude {amp:.3} too large for the near-identity transform (need < 0.3)"
        )));
    }
    let [b11, b1m, bmm] = toy_normal_form_kernels(omega0);
    let quad = |u: C64| b11 * u * u + b1m * u * u.conj() + bmm * u.conj() * u.conj();
    let out: Vec<C64> = match direction {
        NormalFormDirection::Forward => z.iter().map(|&u| u + quad(u)).collect(),
        NormalFormDirection::Inverse => {
            let mut u = z.clone();
            let mut converged = false;
            let mut resid = f64::INFINITY;
            for _ in 0..200 {
                resid = 0.0;
                for (ui, &zi) in u.iter_mut().zip(&z) {
                    let next = zi - quad(*ui);
                    resid = resid.max((next - *ui).norm());
                    *ui = next;
                }
                if resid < 1e-15 * (1.0 + amp) {
                    converged = true;
                    break;
                }
            }
            if !converged && resid > 1e-12 {
                return Err(Error::NoConvergence {
                    iterations: 200,
                    residual: resid,
                });
            }
            u
        }
    };
    let grid = state.grid();
    let re: Vec<f64> = out.iter().map(|z| z.re).collect();
    let im: Vec<f64> = out.iter().map(|z| z.im).collect();
    Ok(RdState {
        u: vec![Field::from_real(grid, &re)?, Field::from_real(grid, &im)?],
        v: state.v.clone(),
        t: state.t,
        initial_mass: state.initial_mass,
    })
}

const SNAPSHOT_MAGIC: &[u8] = b"RDSNAP1\n";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SnapshotHeader {
    n_points: usize,
    length: f64,
    d: usize,
    t: f64,
    initial_mass: f64,
    layout: String,
}

/// Binary snapshot: magic line, one JSON header line, then the real physical
/// values of `u₀..u_{d-1}, v` as little-endian f64.
pub fn write_snapshot(state: &RdState, path: &Path) -> Result<()> {
    let grid = state.grid();
    let header = SnapshotHeader {
        n_points: grid.n_points(),
        length: grid.length(),
        d: state.u.len(),
        t: state.t,
        initial_mass: state.initial_mass,
        layout: "physical-real-f64le".into(),
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(SNAPSHOT_MAGIC)?;
    f.write_all(serde_json::to_string(&header)?.as_bytes())?;
    f.write_all(b"\n")?;
    for field in state.u.iter().chain(std::iter::once(&state.v)) {
        for x in field.real_part() {
            f.write_all(&x.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<RdState> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(Error::Parse("not a snapshot file".into()));
    }
    let mut line = String::new();
    r.read_line(&mut line)?;
    let h: SnapshotHeader = serde_json::from_str(line.trim_end())?;
    let grid = make_grid(h.n_points, h.length)?;
    let mut fields = Vec::with_capacity(h.d + 1);
    let mut buf = [0u8; 8];
    for _ in 0..=h.d {
        let mut vals = Vec::with_capacity(h.n_points);
        for _ in 0..h.n_points {
            r.read_exact(&mut buf)?;
            vals.push(f64::from_le_bytes(buf));
        }
        fields.push(Field::from_real(&grid, &vals)?);
    }
    let v = fields.pop().unwrap();
    Ok(RdState {
        u: fields,
        v,
        t: h.t,
        initial_mass: h.initial_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{brusselator_cl, toy_model, Monomial, ModelKind};
    use crate::spectral::apply_semigroup;
    
    use std::f64::consts::PI;

    fn random_state(grid: &SpectralGrid, d: usize, amp: f64, seed: u64) -> RdState {
        random_band_state(grid, d, amp, 5, seed)
    }

    fn linear_model(d: usize) -> RDModel {
        RDModel {
            name: "heat".into(),
            kind: ModelKind::Polynomial,
            diffusion: vec![1.0, 2.0][..d].to_vec(),
            d_v: 0.5,
            f_terms: vec![Vec::new(); d],
            g_terms: Vec::new(),
            parameter: 0.0,
            critical_parameter: 0.0,
        }
    }

    #[test]
    fn heat_decay_exact() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let m = linear_model(2);
        let s = Field::from_real_fn(&g, |x| x.sin());
        let st = RdState::new(vec![Field::zeros(&g), s.clone()], s.clone(), 0.0).unwrap();
        let out = step(&m, &st, 0.3).unwrap();
        let e = s.scale(C64::new((-2.0 * 0.3f64).exp(), 0.0));
        assert!(out.u[1].max_abs_diff(&e).unwrap() < 1e-14);
        assert!(out.u[0].sup_norm() < 1e-15);
        let z = step(&toy_model(1.0, 0.1).unwrap(), &RdState::zeros(&g, 2), 0.1).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
        assert_eq!(z.v.sup_norm(), 0.0);
    }

    #[test]
    fn toy_mass_conserved() {
        let g = make_grid(64, 2.0 * PI / 0.05).unwrap();
        let m = toy_model(1.0, 0.05).unwrap();
        let st = random_state(&g, 2, 0.05, 7);
        let mut s = RdStepper::new(&m, &g, 0.01, SolverOptions::default()).unwrap();
        s.load(&st).unwrap();
        s.advance_n(1000).unwrap();
        let fin = s.state();
        let rel = (fin.conserved_mass() - st.conserved_mass()).abs() / st.conserved_mass().abs();
        assert!(rel < 1e-10, "{rel}");
        assert!(s.imag_residue() < 1e-10);
    }

    #[test]
    fn linear_toy_matches_semigroup() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let mut m = toy_model(1.3, 0.2).unwrap();
        for terms in m.f_terms.iter_mut() {
            terms.retain(|t| t.degree() == 1);
        }
        m.g_terms.clear();
        let st = random_state(&g, 2, 0.3, 1);
        let tr = integrate(&m, &st, 1.0, 0.05, &mut [], &IntegrateOptions::default()).unwrap();
        // u₁ = p + iq evolves by e^{(iω + ε² - k²)t}
        let u1 = st.u[0].add(&st.u[1].scale(C64::i())).unwrap();
        let ex = apply_semigroup(&u1, |k| C64::new(0.04 - k * k, 1.3), 1.0).unwrap().field;
        let got = tr.final_state.u[0]
            .add(&tr.final_state.u[1].scale(C64::i()))
            .unwrap();
        assert!(got.max_abs_diff(&ex).unwrap() < 1e-9);
        let ev = apply_semigroup(&st.v, |k| C64::new(-k * k, 0.0), 1.0).unwrap().field;
        assert!(tr.final_state.v.max_abs_diff(&ev).unwrap() < 1e-12);
    }

    #[test]
    fn observer_stride_counts() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let m = toy_model(1.0, 0.0).unwrap();
        let st = random_state(&g, 2, 0.01, 2);
        let opts = IntegrateOptions {
            stride: 10,
            ..Default::default()
        };
        let mut obs = [standard_observer()];
        let tr = integrate(&m, &st, 1.0, 0.01, &mut obs, &opts).unwrap();
        assert_eq!(tr.times.len(), 11);
        let tr = integrate(&m, &st, 0.0, 0.01, &mut obs, &opts).unwrap();
        assert_eq!(tr.times.len(), 1);
        assert_eq!(tr.steps, 0);
        let opts = IntegrateOptions {
            stride: 1,
            max_records: 10,
            ..Default::default()
        };
        let tr = integrate(&m, &st, 1.0, 0.01, &mut obs, &opts).unwrap();
        assert!(tr.times.len() <= 11);
    }

    #[test]
    fn fourth_order_self_convergence() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let m = brusselator_cl(1.0, 2.1, 1.0, 1.0, 1.0, None).unwrap();
        let st = random_state(&g, 2, 0.3, 5);
        let run = |dt| {
            integrate(&m, &st, 1.0, dt, &mut [], &IntegrateOptions::default())
                .unwrap()
                .final_state
        };
        let (a, b, c) = (run(0.1), run(0.05), run(0.025));
        let e1 = a.u[0].max_abs_diff(&b.u[0]).unwrap();
        let e2 = b.u[0].max_abs_diff(&c.u[0]).unwrap();
        let order = (e1 / e2).log2();
        assert!(order >= 3.5, "observed order {order}");
    }

    #[test]
    fn explicit_jacobian_agrees() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let m = brusselator_cl(1.0, 2.0, 1.0, 3.0, 1.0, None).unwrap();
        let st = random_state(&g, 2, 0.1, 9);
        let a = integrate(&m, &st, 0.5, 0.005, &mut [], &IntegrateOptions::default()).unwrap();
        let opts = IntegrateOptions {
            solver: SolverOptions {
                linear_jacobian: false,
                dealias: true,
            },
            ..Default::default()
        };
        let b = integrate(&m, &st, 0.5, 0.005, &mut [], &opts).unwrap();
        assert!(a.final_state.u[0].max_abs_diff(&b.final_state.u[0]).unwrap() < 1e-8);
    }

    #[test]
    fn normal_form_round_trip() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let st = random_state(&g, 2, 0.02, 3);
        let amp = st.u[0].sup_norm().max(st.u[1].sup_norm());
        let st = RdState::new(
            vec![st.u[0].scale(C64::new(0.07 / amp, 0.0)), st.u[1].scale(C64::new(0.07 / amp, 0.0))],
            st.v.clone(),
            0.0,
        )
        .unwrap();
        let f = normal_form_toy(&st, 1.0, NormalFormDirection::Forward).unwrap();
        let b = normal_form_toy(&f, 1.0, NormalFormDirection::Inverse).unwrap();
        for i in 0..2 {
            assert!(b.u[i].max_abs_diff(&st.u[i]).unwrap() < 1e-10);
        }
        let z = normal_form_toy(&RdState::zeros(&g, 2), 1.0, NormalFormDirection::Forward).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
        let [b11, b1m, bmm] = toy_normal_form_kernels(1.0);
        assert!((b11 - C64::new(0.0, 1.0)).norm() < 1e-15); // -1/i
        assert!((b1m - C64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((bmm - C64::new(0.0, -1.0 / 3.0)).norm() < 1e-15);
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(16, 3.0).unwrap();
        let st = random_state(&g, 2, 0.5, 4);
        let p = dir.path().join("s.bin");
        write_snapshot(&st, &p).unwrap();
        let r = read_snapshot(&p).unwrap();
        assert!(r.u[1].max_abs_diff(&st.u[1]).unwrap() < 1e-15);
        assert!(r.v.max_abs_diff(&st.v).unwrap() < 1e-15);
        assert_eq!(r.t, st.t);
    }

    #[test]
    fn dt_heuristic_scales() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let m = toy_model(1.0, 0.0).unwrap();
        let a = suggest_dt(&m, &random_state(&g, 2, 0.01, 1), 0.4);
        let b = suggest_dt(&m, &random_state(&g, 2, 0.1, 1), 0.4);
        assert!(a > b);
        let _ = Monomial::new(1.0, &[1], 0);
    }
}
