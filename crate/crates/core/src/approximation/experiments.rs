use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    default_fast_points, extract_amplitudes, fast_grid_for, match_initial_amplitude, psi_residual,
    sup_residuals, toy_ansatz_vector, AnsatzSpec, PsiBuilder, ResidualNorms, ResidualSplitter,
    RESIDUAL_STEP,
};
use crate::amplitude::{
    coeff_condition, derive_coefficients_toy, normalize, split_mean, AmplitudeCoefficients,
    AmplitudeParams, AmplitudeSolver, AmplitudeState,
};
use crate::energy::{absorbing_bound, lyapunov_level0};
use crate::error::{Error, Result};
use crate::fit::{loglog_fit, ScalingFit};
use crate::linear::ModeSplitter;
use crate::models::{toy_model, RDModel};
use crate::rd_solver::{RdState, RdStepper, SolverOptions};
use crate::spectral::{derivative, make_grid, mode_filter, sobolev_norm, transfer_modes, Field, SpectralGrid};

pub const SLOW_POINTS: usize = 64;
pub const SLOW_LENGTH: f64 = 2.0 * PI;

/// `‖f‖_{H^s}/√L`: the periodic norm per unit length, a surrogate for the
/// uniformly local norm that does not grow with the domain.
pub fn rms_sobolev(f: &Field, s: f64) -> f64 {
    sobolev_norm(f, s).unwrap_or(f64::NAN) / f.grid().length().sqrt()
}

/// `‖u‖_{H^{n+1}} + ‖δ⁻¹v‖_{H^n}` in the per-length surrogate.
pub fn pair_norm(u: &[Field], v: &Field, delta: f64, n: u32) -> f64 {
    let nu = u
        .iter()
        .map(|f| rms_sobolev(f, (n + 1) as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    nu + rms_sobolev(v, n as f64) / delta
}

fn pair_diff_norm(u: &[Field], v: &Field, pu: &[Field], pv: &Field, delta: f64, n: u32) -> Result<f64> {
    let du: Vec<Field> = u.iter().zip(pu).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
    Ok(pair_norm(&du, &v.sub(pv)?, delta, n))
}

/// Slow envelope given as a few Fourier modes on the `X` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// `(j, [re, im])` for `A`.
    pub a_modes: Vec<(i64, [f64; 2])>,
    /// `(j, amplitude)` for `B = Σ b_j cos(jX)`.
    pub b_modes: Vec<(i64, f64)>,
}

impl Default for Envelope {
    fn default() -> Self {
        Self {
            a_modes: vec![(0, [0.6, 0.0]), (1, [0.3, 0.1]), (-2, [0.0, 0.15])],
            b_modes: vec![(1, 0.4), (2, -0.1)],
        }
    }
}

impl Envelope {
    pub fn zero() -> Self {
        Self {
            a_modes: vec![],
            b_modes: vec![],
        }
    }

    pub fn state(&self, slow: &SpectralGrid) -> AmplitudeState {
        let a = Field::from_fn(slow, |x| {
            self.a_modes
                .iter()
                .map(|&(j, [re, im])| C64::new(re, im) * C64::new(0.0, j as f64 * x).exp())
                .sum()
        });
        let b = Field::from_real_fn(slow, |x| {
            self.b_modes.iter().map(|&(j, c)| c * (j as f64 * x).cos()).sum()
        });
        AmplitudeState { a, b, t: 0.0 }
    }
}

fn slow_grid() -> SpectralGrid {
    make_grid(SLOW_POINTS, SLOW_LENGTH).expect("valid slow grid")
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("empty δ list".into()));
    }
    if deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        return Err(Error::InvalidArgument(format!("δ values must lie in (0, 1): {deltas:?}")));
    }
    Ok(())
}

fn fit_or_none(deltas: &[f64], values: &[f64]) -> Option<ScalingFit> {
    loglog_fit(deltas, values).ok()
}

fn ratio_at(eps: Option<f64>, ratio: f64, delta: f64) -> f64 {
    eps.map_or(ratio, |e| e / delta)
}

fn toy_setup(omega0: f64, delta: f64, eps_ratio: f64) -> Result<(RDModel, AmplitudeParams)> {
    let model = toy_model(omega0, eps_ratio * delta)?;
    let params = AmplitudeParams::from_raw(&derive_coefficients_toy(omega0)?, eps_ratio);
    Ok((model, params))
}

// residuals ---------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualConfig {
    pub theta: u32,
    pub deltas: Vec<f64>,
    pub omega0: f64,
    /// `ε/δ`.
    pub eps_ratio: f64,
    /// Fixed `ε` across δ; overrides `eps_ratio`.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Slow-time window `[0, t_end]` sampled at `checkpoints` points.
    pub t_end: f64,
    pub checkpoints: usize,
    pub h: f64,
    pub delta_tilde: Option<f64>,
    pub envelope: Envelope,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            theta: 1,
            deltas: vec![0.2, 0.1, 0.05],
            omega0: 1.0,
            eps_ratio: 1.0,
            eps: None,
            t_end: 0.5,
            checkpoints: 5,
            h: RESIDUAL_STEP,
            delta_tilde: None,
            envelope: Envelope::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualCell {
    pub delta: f64,
    pub n_fast: usize,
    pub sup: ResidualNorms,
    pub series: Vec<ResidualNorms>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub config: ResidualConfig,
    pub cells: Vec<ResidualCell>,
    pub fit_res1: Option<ScalingFit>,
    pub fit_res_s: Option<ScalingFit>,
    pub fit_res_v: Option<ScalingFit>,
}

pub fn residual_experiment(cfg: &ResidualConfig) -> Result<ResidualReport> {
    check_deltas(&cfg.deltas)?;
    let spec = AnsatzSpec::new(cfg.theta)?;
    let slow = slow_grid();
    let cells: Vec<ResidualCell> = cfg
        .deltas
        .par_iter()
        .map(|&delta| -> Result<ResidualCell> {
            let (model, params) = toy_setup(cfg.omega0, delta, ratio_at(cfg.eps, cfg.eps_ratio, delta))?;
            let n_fast = default_fast_points(delta, SLOW_POINTS).max(4 * SLOW_POINTS);
            let fast = fast_grid_for(&slow, delta, n_fast)?;
            let builder = PsiBuilder::new(spec.clone(), params, cfg.omega0, delta, &slow, &fast)?;
            let splitter = ResidualSplitter::new(&model, &fast, &toy_ansatz_vector(), cfg.delta_tilde)?;
            let mut solver = AmplitudeSolver::new(params, &slow, 1e-3)?;
            solver.load(&cfg.envelope.state(&slow))?;
            let mut series = Vec::new();
            let m = cfg.checkpoints.max(1);
            for i in 0..m {
                let tc = if m == 1 { 0.0 } else { cfg.t_end * i as f64 / (m - 1) as f64 };
                solver.advance_to(tc)?;
                series.push(psi_residual(&model, &builder, &splitter, &solver.state(), cfg.h)?);
            }
            Ok(ResidualCell {
                delta,
                n_fast,
                sup: sup_residuals(&series),
                series,
            })
        })
        .collect::<Result<_>>()?;
    let d: Vec<f64> = cells.iter().map(|c| c.delta).collect();
    let pick = |f: fn(&ResidualNorms) -> f64| cells.iter().map(|c| f(&c.sup)).collect::<Vec<_>>();
    Ok(ResidualReport {
        fit_res1: fit_or_none(&d, &pick(|r| r.res1)),
        fit_res_s: fit_or_none(&d, &pick(|r| r.res_s)),
        fit_res_v: fit_or_none(&d, &pick(|r| r.res_v)),
        config: cfg.clone(),
        cells,
    })
}

// approximation -----------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproximationConfig {
    pub theta: u32,
    pub deltas: Vec<f64>,
    pub t0: f64,
    pub omega0: f64,
    pub eps_ratio: f64,
    /// Fixed `ε` across δ; overrides `eps_ratio`.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Fast step of the original system.
    pub dt: f64,
    /// Slow step of the amplitude system.
    pub dt_slow: f64,
    /// Slow time between error evaluations.
    pub check_every: f64,
    /// Sobolev index `n` of the `H^{n+1}×H^n` error norm.
    pub sobolev_n: u32,
    /// Initial mismatch `c·δ^θ·cos(δx)` added to the first `u` component.
    pub ic_perturbation: f64,
    pub envelope: Envelope,
}

impl Default for ApproximationConfig {
    fn default() -> Self {
        Self {
            theta: 2,
            deltas: vec![0.2, 0.1, 0.05],
            t0: 1.0,
            omega0: 1.0,
            eps_ratio: 1.0,
            eps: None,
            dt: 0.02,
            dt_slow: 0.005,
            check_every: 0.05,
            sobolev_n: 1,
            ic_perturbation: 0.0,
            envelope: Envelope::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproximationCell {
    pub delta: f64,
    pub n_fast: usize,
    pub dt: f64,
    pub steps: usize,
    pub error_sup: f64,
    /// `(T, error)` at each checkpoint.
    pub series: Vec<(f64, f64)>,
    pub amplitude_sup: f64,
    /// `(sup|u|/δ, sup|v|/δ²)` of the initial manifold point.
    pub scaling_constants: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproximationReport {
    pub config: ApproximationConfig,
    pub cells: Vec<ApproximationCell>,
    pub fit: Option<ScalingFit>,
    pub threshold: f64,
    pub passed: bool,
}

fn co_integrate_cell(cfg: &ApproximationConfig, delta: f64) -> Result<ApproximationCell> {
    let slow = slow_grid();
    let (model, params) = toy_setup(cfg.omega0, delta, ratio_at(cfg.eps, cfg.eps_ratio, delta))?;
    let n_fast = default_fast_points(delta, SLOW_POINTS);
    let fast = fast_grid_for(&slow, delta, n_fast)?;
    let builder = PsiBuilder::new(AnsatzSpec::new(cfg.theta)?, params, cfg.omega0, delta, &slow, &fast)?;
    let amp0 = cfg.envelope.state(&slow);
    let point = super::GLManifoldPoint::new(&builder, amp0.clone(), ratio_at(cfg.eps, cfg.eps_ratio, delta) * delta)?;
    let mut u0 = point.u.clone();
    if cfg.ic_perturbation != 0.0 {
        let c = cfg.ic_perturbation * delta.powi(cfg.theta as i32);
        u0[0] = u0[0].add(&Field::from_real_fn(&fast, |x| c * (delta * x).cos()))?;
    }
    let fast_per_check = cfg.check_every / (delta * delta);
    let steps_per_check = (fast_per_check / cfg.dt).ceil().max(1.0) as usize;
    let dt = fast_per_check / steps_per_check as f64;
    let mut rd = RdStepper::new(&model, &fast, dt, SolverOptions::default())?;
    rd.load(&RdState::new(u0, point.v.clone(), 0.0)?)?;
    let slow_steps = (cfg.check_every / cfg.dt_slow).ceil().max(1.0) as usize;
    let mut amp = AmplitudeSolver::new(params, &slow, cfg.check_every / slow_steps as f64)?;
    amp.load(&amp0)?;
    let checks = (cfg.t0 / cfg.check_every).round().max(1.0) as usize;
    let mut series = Vec::with_capacity(checks + 1);
    let mut amplitude_sup: f64 = 0.0;
    let mut steps = 0;
    for i in 0..=checks {
        if i > 0 {
            rd.advance_n(steps_per_check)?;
            amp.advance_n(slow_steps)?;
            steps += steps_per_check;
        }
        let s = amp.state();
        let a_sup = s.a.sup_norm().max(s.b.sup_norm());
        if !a_sup.is_finite() || a_sup > 1e3 {
            return Err(Error::BlowUp {
                t: s.t,
                what: format!("amplitude system at δ = {delta}"),
            });
        }
        amplitude_sup = amplitude_sup.max(a_sup);
        let (pu, pv) = builder.build_at(&s, rd.time())?;
        let st = rd.state();
        let err = pair_diff_norm(&st.u, &st.v, &pu, &pv, delta, cfg.sobolev_n)?;
        series.push((i as f64 * cfg.check_every, err));
    }
    Ok(ApproximationCell {
        delta,
        n_fast,
        dt,
        steps,
        error_sup: series.iter().map(|p| p.1).fold(0.0, f64::max),
        series,
        amplitude_sup,
        scaling_constants: point.scaling_constants(),
    })
}

pub fn approximation_experiment(cfg: &ApproximationConfig) -> Result<ApproximationReport> {
    check_deltas(&cfg.deltas)?;
    AnsatzSpec::new(cfg.theta)?;
    let cells: Vec<ApproximationCell> = cfg
        .deltas
        .par_iter()
        .map(|&d| co_integrate_cell(cfg, d))
        .collect::<Result<_>>()?;
    let d: Vec<f64> = cells.iter().map(|c| c.delta).collect();
    let e: Vec<f64> = cells.iter().map(|c| c.error_sup).collect();
    let threshold = cfg.theta as f64 - 0.4;
    let fit = fit_or_none(&d, &e);
    let passed = if e.iter().all(|&x| x == 0.0) {
        true
    } else {
        fit.as_ref().is_some_and(|f| f.slope >= threshold)
    };
    Ok(ApproximationReport {
        config: cfg.clone(),
        cells,
        fit,
        threshold,
        passed,
    })
}

// generic initial data ----------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Slow modes `|K| <= slow_modes` of the envelope part.
    pub slow_modes: usize,
    /// Fast band `[k_lo, k_hi]` of the broadband part.
    pub fast_band: (f64, f64),
    /// Share of the norm budget carried by the envelope part.
    pub slow_share: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            slow_modes: 3,
            fast_band: (0.3, 2.0),
            slow_share: 0.5,
        }
    }
}

fn random_real_band<R: Rng>(grid: &SpectralGrid, lo: f64, hi: f64, rng: &mut R) -> Field {
    let n = grid.n_points();
    let mut c = vec![C64::default(); n];
    let k = grid.wavenumbers();
    for idx in 1..n / 2 {
        let kk = k[idx];
        let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if kk >= lo && kk <= hi {
            c[idx] = z;
            c[n - idx] = z.conj();
        }
    }
    Field::from_coefficients(grid, c).unwrap()
}

fn normalized(f: Field, s: f64) -> Field {
    let m = rms_sobolev(&f, s);
    if m > 0.0 {
        f.scale(C64::new(1.0 / m, 0.0))
    } else {
        f
    }
}

/// Seeded band-limited noise with `‖u₀‖_{H²} <= R₀δ/2` and `‖v₀‖_{H¹} <= R₀δ²/2`
/// (per-length norms), so the pair norm is at most `R₀δ`: an envelope part drawn on the slow scale, identical
/// across `δ` for a given seed, plus broadband fast noise. `v₀` has zero mean.
pub fn generic_initial_data(
    fast: &SpectralGrid,
    slow: &SpectralGrid,
    delta: f64,
    r0: f64,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<RdState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = slow.n_points();
    let kmax = noise.slow_modes.min(ns / 3) as i64;
    let mut ca = vec![C64::default(); ns];
    let mut cb = vec![C64::default(); ns];
    for j in -kmax..=kmax {
        let w = 1.0 / (1.0 + (j * j) as f64);
        let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
        ca[slow.index_of_mode(j).unwrap()] = z;
        if j > 0 {
            let zb = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
            cb[slow.index_of_mode(j).unwrap()] = zb;
            cb[slow.index_of_mode(-j).unwrap()] = zb.conj();
        }
    }
    let a = transfer_modes(&Field::from_coefficients(slow, ca)?, fast).to_physical();
    let b = transfer_modes(&Field::from_coefficients(slow, cb)?, fast);
    let u1 = toy_ansatz_vector();
    let env_u: Vec<Field> = u1
        .iter()
        .map(|&uc| a.map_physical(|z| C64::new(2.0 * (z * uc).re, 0.0)))
        .collect();
    let (lo, hi) = noise.fast_band;
    let fast_u: Vec<Field> = (0..u1.len()).map(|_| random_real_band(fast, lo, hi, &mut rng)).collect();
    let fast_v = random_real_band(fast, lo, hi, &mut rng);
    let vec_norm = |u: &[Field]| u.iter().map(|f| rms_sobolev(f, 2.0).powi(2)).sum::<f64>().sqrt();
    let scale_vec = |u: Vec<Field>, target: f64| -> Vec<Field> {
        let m = vec_norm(&u);
        let s = if m > 0.0 { target / m } else { 0.0 };
        u.into_iter().map(|f| f.scale(C64::new(s, 0.0))).collect()
    };
    let share = noise.slow_share.clamp(0.0, 1.0);
    let r0 = 0.5 * r0;
    let ue = scale_vec(env_u, share * r0 * delta);
    let uf = scale_vec(fast_u, (1.0 - share) * r0 * delta);
    let u: Vec<Field> = ue.iter().zip(&uf).map(|(x, y)| x.add(y)).collect::<Result<_>>()?;
    let vb = normalized(b, 1.0).scale(C64::new(share * r0 * delta * delta, 0.0));
    let vf = normalized(fast_v, 1.0).scale(C64::new((1.0 - share) * r0 * delta * delta, 0.0));
    let v = vb.add(&vf)?.make_real();
    RdState::new(u.into_iter().map(|f| f.make_real()).collect(), v, 0.0)
}

// attractivity ------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractivityConfig {
    pub deltas: Vec<f64>,
    pub t1: f64,
    pub r0: f64,
    pub omega0: f64,
    pub eps_ratio: f64,
    /// Fixed `ε` across δ; overrides `eps_ratio`.
    #[serde(default)]
    pub eps: Option<f64>,
    pub dt: f64,
    pub delta_tilde: f64,
    pub theta: u32,
    pub seed: u64,
    pub noise: NoiseSpec,
    /// Switch off the nonlinearity (linear semigroup only).
    pub linear_only: bool,
}

impl Default for AttractivityConfig {
    fn default() -> Self {
        Self {
            deltas: vec![0.2, 0.1, 0.05],
            t1: 0.5,
            r0: 2.0,
            omega0: 1.0,
            eps_ratio: 1.0,
            eps: None,
            dt: 0.01,
            delta_tilde: 0.5,
            theta: 2,
            seed: 7,
            noise: NoiseSpec::default(),
            linear_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractivityCell {
    pub delta: f64,
    pub n_fast: usize,
    pub t: f64,
    /// `‖u_s‖/δ²`, `‖E_s v‖/δ²`, `‖∂_x E₁u‖/δ²` (sup norms).
    pub ratios: [f64; 3],
    /// `‖(u, δ⁻¹v) - Ψ_θ(A₁, B₀)‖` after extraction.
    pub manifold_distance: f64,
    pub extracted_sup: (f64, f64),
    pub initial_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractivityReport {
    pub config: AttractivityConfig,
    pub cells: Vec<AttractivityCell>,
    /// Per ratio: `max/min` over δ.
    pub spread: [f64; 3],
    /// Per ratio: `max` over δ divided by the value at the largest δ.
    pub growth: [f64; 3],
}

impl AttractivityReport {
    /// All three ratios within a factor `f` of each other across δ.
    pub fn within_factor(&self, f: f64) -> bool {
        self.spread.iter().all(|&s| s <= f)
    }
}

fn linearized(model: &RDModel) -> RDModel {
    let mut m = model.clone();
    for terms in m.f_terms.iter_mut() {
        terms.retain(|t| t.degree() <= 1);
    }
    m.g_terms.clear();
    m
}

fn attractivity_cell(cfg: &AttractivityConfig, delta: f64) -> Result<AttractivityCell> {
    let slow = slow_grid();
    let (mut model, params) = toy_setup(cfg.omega0, delta, ratio_at(cfg.eps, cfg.eps_ratio, delta))?;
    if cfg.linear_only {
        model = linearized(&model);
    }
    let n_fast = default_fast_points(delta, SLOW_POINTS);
    let fast = fast_grid_for(&slow, delta, n_fast)?;
    let init = generic_initial_data(&fast, &slow, delta, cfg.r0, &cfg.noise, cfg.seed)?;
    let initial_norm = pair_norm(&init.u, &init.v, delta, 1);
    let t_end = cfg.t1 / (delta * delta);
    let steps = (t_end / cfg.dt).ceil().max(1.0) as usize;
    let mut rd = RdStepper::new(&model, &fast, t_end / steps as f64, SolverOptions::default())?;
    rd.load(&init)?;
    rd.advance_n(steps)?;
    let st = rd.state();
    let lin = model.linearization();
    let splitter = ModeSplitter::new(&lin, &fast, cfg.delta_tilde)?;
    let split = splitter.split(&st.u)?;
    let us = split.us.iter().map(|f| f.sup_norm()).fold(0.0, f64::max);
    let es_v = st.v.sub(&mode_filter(&st.v, cfg.delta_tilde)?)?.sup_norm();
    let mut only_c1 = split.clone();
    only_c1.c_m1 = Field::zeros(&fast);
    let e1u = splitter.critical_part(&only_c1);
    let dx_e1u = e1u.iter().map(|f| derivative(f, 1).sup_norm()).fold(0.0, f64::max);
    let d2 = delta * delta;
    let (a_lead, b0) = extract_amplitudes(&st, &splitter, delta, cfg.omega0, &toy_ansatz_vector(), &slow)?;
    let a1 = match_initial_amplitude(&a_lead, cfg.omega0, delta, st.t);
    let amp = AmplitudeState::new(a1, b0, cfg.t1)?;
    let builder = PsiBuilder::new(AnsatzSpec::new(cfg.theta)?, params, cfg.omega0, delta, &slow, &fast)?;
    let (pu, pv) = builder.build_at(&amp, st.t)?;
    let manifold_distance = pair_diff_norm(&st.u, &st.v, &pu, &pv, delta, 1)?;
    Ok(AttractivityCell {
        delta,
        n_fast,
        t: st.t,
        ratios: [us / d2, es_v / d2, dx_e1u / d2],
        manifold_distance,
        extracted_sup: (amp.a.sup_norm(), amp.b.sup_norm()),
        initial_norm,
    })
}

pub fn attractivity_experiment(cfg: &AttractivityConfig) -> Result<AttractivityReport> {
    check_deltas(&cfg.deltas)?;
    let mut cells: Vec<AttractivityCell> = cfg
        .deltas
        .par_iter()
        .map(|&d| attractivity_cell(cfg, d))
        .collect::<Result<_>>()?;
    cells.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let mut spread = [0.0; 3];
    let mut growth = [0.0; 3];
    for i in 0..3 {
        let r: Vec<f64> = cells.iter().map(|c| c.ratios[i]).collect();
        let max = r.iter().cloned().fold(f64::MIN, f64::max);
        let min = r.iter().cloned().fold(f64::MAX, f64::min);
        spread[i] = if min > 0.0 { max / min } else { f64::INFINITY };
        growth[i] = if r[0] > 0.0 { max / r[0] } else { f64::INFINITY };
    }
    Ok(AttractivityReport {
        config: cfg.clone(),
        cells,
        spread,
        growth,
    })
}

// global existence --------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalExistenceConfig {
    pub delta: f64,
    pub cycles: usize,
    pub t1: f64,
    pub t0: f64,
    pub r0: f64,
    pub omega0: f64,
    pub dt: f64,
    pub delta_tilde: f64,
    pub theta: u32,
    pub seed: u64,
    pub noise: NoiseSpec,
    /// Fast steps between norm samples.
    pub sample_every: usize,
    /// Amplitude coefficients used for the precondition gate and the
    /// absorbing-ball bookkeeping; defaults to the toy values.
    pub coefficients: Option<AmplitudeCoefficients>,
}

impl Default for GlobalExistenceConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            cycles: 5,
            t1: 0.5,
            t0: 1.0,
            r0: 4.0,
            omega0: 1.0,
            dt: 0.01,
            delta_tilde: 0.5,
            theta: 2,
            seed: 11,
            noise: NoiseSpec::default(),
            sample_every: 20,
            coefficients: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub envelope_max: f64,
    pub end_norm: f64,
    /// `end_norm / (R₀δ)`.
    pub reentry_factor: f64,
    pub approximation_error: f64,
    /// `E₀` of the amplitude at the end of the cycle and the inflated ball radius.
    pub amplitude_energy: f64,
    pub inside_ball: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalExistenceReport {
    pub config: GlobalExistenceConfig,
    pub initial_norm: f64,
    pub attractivity_envelope: f64,
    pub attractivity_end_norm: f64,
    pub ball_radius: f64,
    pub cycles: Vec<CycleReport>,
    /// `(t, ‖(u, δ⁻¹v)‖)` samples.
    pub envelope: Vec<(f64, f64)>,
    pub bounded: bool,
    pub reentry_ok: bool,
}

impl GlobalExistenceReport {
    pub fn passed(&self) -> bool {
        self.bounded && self.reentry_ok
    }
}

pub fn global_existence_experiment(cfg: &GlobalExistenceConfig) -> Result<GlobalExistenceReport> {
    let delta = cfg.delta;
    check_deltas(&[delta])?;
    let coeffs = match &cfg.coefficients {
        Some(c) => c.clone(),
        None => derive_coefficients_toy(cfg.omega0)?,
    };
    let norm = normalize(&coeffs)?;
    let (ok, margin) = coeff_condition(&norm);
    if !ok {
        return Err(Error::Precondition(format!(
            "1 + β/α = {margin} is not positive; the absorbing ball argument does not apply"
        )));
    }
    let bound = absorbing_bound(SLOW_LENGTH, norm.alpha, norm.beta)?;
    let slow = slow_grid();
    let (model, params) = toy_setup(cfg.omega0, delta, 1.0)?;
    let fast = fast_grid_for(&slow, delta, default_fast_points(delta, SLOW_POINTS))?;
    let init = generic_initial_data(&fast, &slow, delta, cfg.r0, &cfg.noise, cfg.seed)?;
    let limit = cfg.r0 * delta;
    let initial_norm = pair_norm(&init.u, &init.v, delta, 1);
    let mut envelope = vec![(0.0, initial_norm)];
    let d2 = delta * delta;
    let run_fast = |rd: &mut RdStepper, t_len: f64, env: &mut Vec<(f64, f64)>| -> Result<f64> {
        let steps = (t_len / rd.dt()).round().max(1.0) as usize;
        let mut max: f64 = 0.0;
        let mut done = 0;
        while done < steps {
            let k = cfg.sample_every.max(1).min(steps - done);
            rd.advance_n(k)?;
            done += k;
            let st = rd.state();
            let nrm = pair_norm(&st.u, &st.v, delta, 1);
            env.push((st.t, nrm));
            max = max.max(nrm);
        }
        Ok(max)
    };
    let cycle_fast = cfg.t0 / d2;
    let steps_per_cycle = (cycle_fast / cfg.dt).ceil().max(1.0) as usize;
    let mut rd = RdStepper::new(&model, &fast, cycle_fast / steps_per_cycle as f64, SolverOptions::default())?;
    rd.load(&init)?;
    let attractivity_envelope = run_fast(&mut rd, cfg.t1 / d2, &mut envelope)?.max(initial_norm);
    let st = rd.state();
    let attractivity_end_norm = pair_norm(&st.u, &st.v, delta, 1);
    let splitter = ModeSplitter::new(&model.linearization(), &fast, cfg.delta_tilde)?;
    let builder = PsiBuilder::new(AnsatzSpec::new(cfg.theta)?, params, cfg.omega0, delta, &slow, &fast)?;
    let mut cycles = Vec::with_capacity(cfg.cycles);
    for index in 1..=cfg.cycles {
        let st = rd.state();
        let t_start = st.t;
        let (a_lead, b0) = extract_amplitudes(&st, &splitter, delta, cfg.omega0, &toy_ansatz_vector(), &slow)?;
        let a1 = match_initial_amplitude(&a_lead, cfg.omega0, delta, st.t);
        let mut amp = AmplitudeSolver::new(params, &slow, 0.005)?;
        amp.load(&AmplitudeState::new(a1, b0, t_start * d2)?)?;
        let mut env_max: f64 = 0.0;
        let mut approx: f64 = 0.0;
        let checks = 10;
        for _ in 0..checks {
            let seg = run_fast(&mut rd, cycle_fast / checks as f64, &mut envelope)?;
            env_max = env_max.max(seg);
            amp.advance_to(rd.time() * d2)?;
            let (pu, pv) = builder.build_at(&amp.state(), rd.time())?;
            let s = rd.state();
            approx = approx.max(pair_diff_norm(&s.u, &s.v, &pu, &pv, delta, 1)?);
        }
        let s = rd.state();
        let end_norm = pair_norm(&s.u, &s.v, delta, 1);
        let a_end = amp.state();
        let (_, b_tilde, _) = split_mean(&a_end.b, norm.beta);
        let e0 = lyapunov_level0(&a_end.a, &b_tilde, bound.q)?;
        cycles.push(CycleReport {
            index,
            t_start,
            t_end: s.t,
            envelope_max: env_max,
            end_norm,
            reentry_factor: end_norm / limit,
            approximation_error: approx,
            amplitude_energy: e0,
            inside_ball: e0 <= crate::energy::BALL_INFLATION * bound.c_inf0,
        });
    }
    let bounded = envelope.iter().all(|&(_, n)| n <= limit);
    let reentry_ok = cycles.iter().all(|c| c.reentry_factor <= 0.75);
    Ok(GlobalExistenceReport {
        config: cfg.clone(),
        initial_norm,
        attractivity_envelope,
        attractivity_end_norm,
        ball_radius: bound.c_inf0,
        cycles,
        envelope,
        bounded,
        reentry_ok,
    })
}

// output ------------------------------------------------------------------

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn write_series_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| format!("{x:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}
