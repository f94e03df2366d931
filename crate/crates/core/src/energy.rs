//! Lyapunov functionals and the absorbing ball of the normalized amplitude system.
//!
//! `E₀ = ∫|A|² + q|∂_X⁻¹B|²`, `E₁ = ∫|∂_X A|² + β|B|²`. For `β > 0`, `q = β` makes
//! the `B|A|²` cross terms cancel; for `β <= 0`, `q = 2α + β` and a margin `r`
//! is certified by a direction sweep of the pointwise inequality
//! `(q - β)B|A|² <= (1-r)αqB² + (1-r)|A|⁴`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplitude::{amplitude_rhs, AmplitudeParams, AmplitudeState, NormalizedCoefficients};
use crate::error::{Error, Result};
use crate::spectral::{antiderivative, Field, SpectralGrid};

/// Ball inflation used for the numerical limsup.
pub const BALL_INFLATION: f64 = 1.05;
/// Tolerance for the derivative majorant.
pub const MAJORANT_TOL: f64 = 1e-6;
/// Descending search grid for `r`.
pub const R_GRID_DEPTH: u32 = 10;

fn parseval(f: &Field) -> f64 {
    f.grid().length() * f.coefficients().iter().map(|z| z.norm_sqr()).sum::<f64>()
}

fn parseval_dot(f: &Field, g: &Field) -> f64 {
    let (a, b) = (f.coefficients(), g.coefficients());
    f.grid().length() * a.iter().zip(&b).map(|(x, y)| (x.conj() * y).re).sum::<f64>()
}

/// `∫|A|² + q∫|∂_X⁻¹B|²`; `B` must have zero mean unless `q = 0`.
pub fn lyapunov_level0(a: &Field, b: &Field, q: f64) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let mut e = parseval(a);
    if q != 0.0 {
        e += q * parseval(&antiderivative(b)?);
    }
    Ok(e)
}

/// `∫|∂_X A|² + β∫B²`.
pub fn lyapunov_level1(a: &Field, b: &Field, beta: f64) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let k = a.grid().wavenumbers();
    let ax: f64 = a.coefficients().iter().zip(k).map(|(z, k)| k * k * z.norm_sqr()).sum();
    Ok(a.grid().length() * ax + beta * parseval(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionPoint {
    /// Angle in `[-π/2, π/2]`; `|A|² = cos θ`, `B = sin θ`.
    pub angle: f64,
    pub a2: f64,
    pub b: f64,
    /// `(1-r)αqB² + (1-r)|A|⁴ - (q-β)B|A|²` at the point.
    pub slack: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub holds: bool,
    pub worst: DirectionPoint,
}

/// Direction sweep of the pointwise inequality. The inequality is homogeneous
/// of degree two in `(|A|², B)`, so the half circle `|A|² >= 0` suffices.
pub fn condition_d_check(q: f64, r: f64, alpha: f64, beta: f64, samples: usize) -> ConditionCheck {
    let slack = |th: f64| {
        let (x, b) = (th.cos(), th.sin());
        (1.0 - r) * alpha * q * b * b + (1.0 - r) * x * x - (q - beta) * b * x
    };
    let n = samples.max(8);
    let point = |th: f64| DirectionPoint {
        angle: th,
        a2: th.cos(),
        b: th.sin(),
        slack: slack(th),
    };
    let mut worst = point(-0.5 * PI);
    for i in 0..=n {
        let th = -0.5 * PI + PI * i as f64 / n as f64;
        let p = point(th);
        if p.slack < worst.slack {
            worst = p;
        }
    }
    // golden-section refinement around the best sample
    let h = PI / n as f64;
    let (mut lo, mut hi) = ((worst.angle - h).max(-0.5 * PI), (worst.angle + h).min(0.5 * PI));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if slack(m1) < slack(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let refined = point(0.5 * (lo + hi));
    if refined.slack < worst.slack {
        worst = refined;
    }
    let scale = (alpha * q).abs() + (q - beta).abs() + 1.0;
    ConditionCheck {
        holds: worst.slack >= -1e-13 * scale,
        worst,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingBound {
    pub c_inf0: f64,
    pub q: f64,
    pub r: f64,
    pub length: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Direction sweep certificate for the `β <= 0` branch.
    pub certificate: Option<ConditionCheck>,
}

/// `C_{∞,0}` and the functional weights.
///
/// For `β <= 0` the bound is `(L/r)·max(1, L²/((2π)²αr))`, from
/// `dE₀/dT <= 2∫|A|² - 2r∫|A|⁴ - 2rαq∫B²` with Jensen and Poincaré.
pub fn absorbing_bound(length: f64, alpha: f64, beta: f64) -> Result<AbsorbingBound> {
    if !(length > 0.0 && alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("need L > 0 and α > 0, got L={length}, α={alpha}")));
    }
    if !(1.0 + beta / alpha > 0.0) {
        return Err(Error::Precondition(format!(
            "1 + β/α = {} is not positive",
            1.0 + beta / alpha
        )));
    }
    let poincare = length * length / ((2.0 * PI).powi(2) * alpha);
    if beta > 0.0 {
        return Ok(AbsorbingBound {
            c_inf0: length * poincare.max(1.0),
            q: beta,
            r: 1.0,
            length,
            alpha,
            beta,
            certificate: None,
        });
    }
    let q = 2.0 * alpha + beta;
    for j in 1..=R_GRID_DEPTH {
        let r = 0.5f64.powi(j as i32);
        let check = condition_d_check(q, r, alpha, beta, 4096);
        if check.holds {
            return Ok(AbsorbingBound {
                c_inf0: length / r * (poincare / r).max(1.0),
                q,
                r,
                length,
                alpha,
                beta,
                certificate: Some(check),
            });
        }
    }
    Err(Error::Precondition(format!(
        "no r in {{1/2, ..., 2^-{R_GRID_DEPTH}}} certifies the cross-term bound for α={alpha}, β={beta}"
    )))
}

/// Derivatives and majorant of `E₀` at one state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub t: f64,
    pub e0: f64,
    pub e1: f64,
    /// `dE₀/dT` along the semi-discrete flow.
    pub de0: f64,
    /// `2∫|A|² - 2r∫|A|⁴ - 2rαq∫B²`.
    pub majorant: f64,
    pub de1: f64,
}

pub fn energy_point(
    s: &AmplitudeState,
    n: &NormalizedCoefficients,
    bound: &AbsorbingBound,
) -> Result<EnergyPoint> {
    let p = AmplitudeParams::from_normalized(n, 1.0);
    let (da, db) = amplitude_rhs(&p, s)?;
    let a = &s.a;
    let b = s.b.make_real();
    let q = bound.q;
    let e0 = lyapunov_level0(a, &b, q)?;
    let e1 = lyapunov_level1(a, &b, n.beta)?;
    let c = antiderivative(&b)?;
    let dc = antiderivative(&db)?;
    let de0 = 2.0 * parseval_dot(a, &da) + 2.0 * q * parseval_dot(&c, &dc);
    let a2: Vec<f64> = a.physical().iter().map(|z| z.norm_sqr()).collect();
    let dx = a.grid().dx();
    let int_a2: f64 = a2.iter().sum::<f64>() * dx;
    let int_a4: f64 = a2.iter().map(|x| x * x).sum::<f64>() * dx;
    let int_b2 = parseval(&b);
    let r = bound.r;
    let majorant = 2.0 * int_a2 - 2.0 * r * int_a4 - 2.0 * r * n.alpha * q * int_b2;
    let k = a.grid().wavenumbers();
    let (ac, dac) = (a.coefficients(), da.coefficients());
    let de1_a: f64 = ac
        .iter()
        .zip(&dac)
        .zip(k)
        .map(|((x, y), k)| k * k * (x.conj() * y).re)
        .sum::<f64>()
        * a.grid().length();
    let de1 = 2.0 * de1_a + 2.0 * n.beta * parseval_dot(&b, &db);
    Ok(EnergyPoint {
        t: s.t,
        e0,
        e1,
        de0,
        majorant,
        de1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub bound: AbsorbingBound,
    pub inflated_bound: f64,
    pub series: Vec<EnergyPoint>,
    /// First checkpoint from which `E₀` stays inside the inflated ball.
    pub entry_time: Option<f64>,
    /// Largest `E₀` after the first entry.
    pub max_after_entry: Option<f64>,
    /// Checkpoints after entry at which the ball was left.
    pub exits: Vec<f64>,
    /// `max(dE₀/dT - majorant)`.
    pub majorant_excess: f64,
    pub majorant_ok: bool,
    pub ball_ok: bool,
    /// `E₀` finite-difference derivative check between consecutive checkpoints, for reference.
    pub fd_excess: f64,
    pub gamma: Option<f64>,
}

impl EnergyReport {
    pub fn margins(&self) -> Vec<(f64, f64)> {
        self.series.iter().map(|p| (p.t, self.inflated_bound - p.e0)).collect()
    }

    pub fn passed(&self) -> bool {
        self.majorant_ok && self.ball_ok
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["T", "E0", "E1", "dE0", "majorant", "dE1", "margin"])?;
        for p in &self.series {
            w.write_record(&[
                format!("{:.17e}", p.t),
                format!("{:.17e}", p.e0),
                format!("{:.17e}", p.e1),
                format!("{:.17e}", p.de0),
                format!("{:.17e}", p.majorant),
                format!("{:.17e}", p.de1),
                format!("{:.17e}", self.inflated_bound - p.e0),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Smallest `γ = 2^j` with `d/dT(E₁ + γE₀) <= 0` wherever `E₀` is outside the
/// inflated ball; `Some(1)` when the trajectory never leaves it.
pub fn level1_gamma(series: &[EnergyPoint], inflated: f64) -> Option<f64> {
    (0..=30).map(|j| 2f64.powi(j)).find(|g| {
        series
            .iter()
            .filter(|p| p.e0 > inflated)
            .all(|p| p.de1 + g * p.de0 <= 0.0)
    })
}

/// Evaluate the functionals along checkpoints of a normalized trajectory.
pub fn dissipation_check(
    trajectory: &[AmplitudeState],
    n: &NormalizedCoefficients,
    bound: &AbsorbingBound,
) -> Result<EnergyReport> {
    if trajectory.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let series: Vec<EnergyPoint> = trajectory
        .par_iter()
        .map(|s| energy_point(s, n, bound))
        .collect::<Result<_>>()?;
    let inflated = BALL_INFLATION * bound.c_inf0;
    let entry = series.iter().position(|p| p.e0 <= inflated);
    let (entry_time, max_after_entry, exits) = match entry {
        Some(i) => {
            let after = &series[i..];
            (
                Some(series[i].t),
                Some(after.iter().map(|p| p.e0).fold(f64::MIN, f64::max)),
                after.iter().filter(|p| p.e0 > inflated).map(|p| p.t).collect(),
            )
        }
        None => (None, None, Vec::new()),
    };
    let scale = |p: &EnergyPoint| 1.0f64.max(p.majorant.abs());
    let majorant_excess = series
        .iter()
        .map(|p| (p.de0 - p.majorant) / scale(p))
        .fold(f64::MIN, f64::max);
    let fd_excess = series
        .windows(2)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            let fd = (w[1].e0 - w[0].e0) / dt;
            fd - 0.5 * (w[0].majorant + w[1].majorant)
        })
        .fold(f64::MIN, f64::max);
    let exits_empty = exits.is_empty();
    Ok(EnergyReport {
        bound: bound.clone(),
        inflated_bound: inflated,
        gamma: level1_gamma(&series, inflated),
        entry_time,
        max_after_entry,
        exits,
        majorant_ok: majorant_excess <= MAJORANT_TOL,
        ball_ok: entry_time.is_some() && exits_empty,
        majorant_excess,
        fd_excess,
        series,
    })
}

/// Random band-limited state (`|j| <= modes`) with zero-mean real `B`,
/// rescaled so that `E₀ = target` with weight `q`.
pub fn random_state_with_energy<R: Rng>(
    grid: &SpectralGrid,
    modes: usize,
    target: f64,
    q: f64,
    rng: &mut R,
) -> Result<AmplitudeState> {
    if !(target > 0.0) {
        return Err(Error::InvalidArgument(format!("target energy must be positive, got {target}")));
    }
    let n = grid.n_points();
    let modes = modes.min(n / 3) as i64;
    let mut ca = vec![C64::default(); n];
    let mut cb = vec![C64::default(); n];
    for j in -modes..=modes {
        let idx = grid.index_of_mode(j).unwrap();
        let w = 1.0 / (1.0 + (j * j) as f64);
        ca[idx] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
        if j > 0 {
            let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
            cb[idx] = z;
            cb[grid.index_of_mode(-j).unwrap()] = z.conj();
        }
    }
    let a = Field::from_coefficients(grid, ca)?;
    let b = Field::from_coefficients(grid, cb)?;
    let e = lyapunov_level0(&a, &b, q)?;
    let s = (target / e).sqrt();
    Ok(AmplitudeState {
        a: a.scale(C64::new(s, 0.0)),
        b: b.scale(C64::new(s, 0.0)).make_real(),
        t: 0.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma0: f64,
    pub gamma3: f64,
    pub length: f64,
    pub n_points: usize,
    pub modes: usize,
    pub trajectories: usize,
    /// Initial `E₀` drawn uniformly from this range.
    pub e0_range: (f64, f64),
    pub t_end: f64,
    pub dt: f64,
    pub checkpoint: f64,
    pub seed: u64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma0: 0.0,
            gamma3: 2.0 / 3.0,
            length: 2.0 * PI,
            n_points: 64,
            modes: 4,
            trajectories: 10,
            e0_range: (4.0, 25.0),
            t_end: 100.0,
            dt: 0.01,
            checkpoint: 0.1,
            seed: 2024,
        }
    }
}

/// Runs `trajectories` seeded random initial states of the normalized system
/// and evaluates the functionals at every checkpoint.
pub fn energy_experiment(cfg: &EnergyConfig) -> Result<Vec<EnergyReport>> {
    use rand::SeedableRng;
    if !(cfg.e0_range.0 > 0.0 && cfg.e0_range.1 >= cfg.e0_range.0) {
        return Err(Error::InvalidArgument(format!("bad energy range {:?}", cfg.e0_range)));
    }
    let n = NormalizedCoefficients::new(cfg.alpha, cfg.beta, cfg.gamma0, cfg.gamma3);
    let bound = absorbing_bound(cfg.length, cfg.alpha, cfg.beta)?;
    let grid = crate::spectral::make_grid(cfg.n_points, cfg.length)?;
    let params = AmplitudeParams::from_normalized(&n, 1.0);
    let per_check = (cfg.checkpoint / cfg.dt).round().max(1.0) as usize;
    let checks = (cfg.t_end / cfg.checkpoint).round() as usize;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<AmplitudeState> = (0..cfg.trajectories)
        .map(|_| {
            let target = rng.random_range(cfg.e0_range.0..=cfg.e0_range.1);
            random_state_with_energy(&grid, cfg.modes, target, bound.q, &mut rng)
        })
        .collect::<Result<_>>()?;
    starts
        .par_iter()
        .map(|s0| {
            let mut solver = crate::amplitude::AmplitudeSolver::new(params, &grid, cfg.checkpoint / per_check as f64)?;
            solver.load(s0)?;
            let mut traj = Vec::with_capacity(checks + 1);
            traj.push(solver.state());
            for _ in 0..checks {
                solver.advance_n(per_check)?;
                traj.push(solver.state());
            }
            dissipation_check(&traj, &n, &bound)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplitude::{derive_coefficients_toy, normalize, AmplitudeSolver};
    use crate::spectral::make_grid;
    use rand::SeedableRng;

    fn grid() -> SpectralGrid {
        make_grid(64, 2.0 * PI).unwrap()
    }

    #[test]
    fn level0_examples() {
        let g = grid();
        let one = Field::from_fn(&g, |_| C64::new(1.0, 0.0));
        let e = lyapunov_level0(&one, &Field::zeros(&g), 1.0).unwrap();
        assert!((e - 2.0 * PI).abs() < 1e-12);
        let cos = Field::from_real_fn(&g, |x| x.cos());
        let e = lyapunov_level0(&Field::zeros(&g), &cos, 1.0).unwrap();
        assert!((e - PI).abs() < 1e-12);
        let e = lyapunov_level0(&one, &cos, 0.0).unwrap();
        assert!((e - 2.0 * PI).abs() < 1e-12);
        let shifted = Field::from_real_fn(&g, |x| 1.0 + x.cos());
        assert!(matches!(lyapunov_level0(&one, &shifted, 1.0), Err(Error::NonzeroMean { .. })));
    }

    #[test]
    fn bound_examples() {
        let b = absorbing_bound(2.0 * PI, 1.0, 1.0).unwrap();
        assert!((b.c_inf0 - 2.0 * PI).abs() < 1e-14 && b.q == 1.0 && b.r == 1.0);
        let b = absorbing_bound(2.0 * PI, 4.0, 1.0).unwrap();
        assert!((b.c_inf0 - 2.0 * PI).abs() < 1e-14);
        let b = absorbing_bound(4.0 * PI, 1.0, 1.0).unwrap();
        assert!((b.c_inf0 - 4.0 * PI * 4.0).abs() < 1e-12);
        let b = absorbing_bound(2.0 * PI, 1.0, -0.5).unwrap();
        assert_eq!(b.q, 1.5);
        assert!(b.r > 0.0 && b.certificate.unwrap().holds);
        // exact threshold (q-β)² <= 4(1-r)²αq gives r <= 1 - sqrt(2/3)
        assert_eq!(b.r, 0.125);
        assert!(absorbing_bound(2.0 * PI, 1.0, -1.0).is_err());
        assert!(absorbing_bound(2.0 * PI, 1.0, -1.0 + 1e-6).is_err());
    }

    #[test]
    fn condition_examples() {
        assert!(condition_d_check(1.0, 1.0, 1.0, 1.0, 256).holds);
        // α = 1, β = 0, q = 2: holds iff 1 - r >= 1/sqrt(2)
        assert!(!condition_d_check(2.0, 0.5, 1.0, 0.0, 256).holds);
        assert!(condition_d_check(2.0, 0.25, 1.0, 0.0, 256).holds);
        let c = condition_d_check(2.0, 0.5, 1.0, 0.0, 256);
        // worst direction of 0.5·2B² + 0.5x² - 2Bx is along the minimal eigenvector
        let exact = 0.5 * (2.0 + 1.0) / 2.0 - (0.25 * (1.0f64 - 0.5).powi(2) * 4.0 / 4.0 + 1.0).sqrt();
        assert!(c.worst.slack < 0.0 && (c.worst.slack - exact).abs() < 1e-9, "{:?} {exact}", c.worst);
    }

    #[test]
    fn homogeneity_of_condition() {
        let (q, r, a, b) = (1.5, 0.125, 1.0, -0.5);
        let f = |x: f64, bb: f64| (1.0 - r) * a * q * bb * bb + (1.0 - r) * x * x - (q - b) * bb * x;
        for s in [0.1, 3.0, 17.0] {
            assert!((f(s * 0.7, s * 0.3) - s * s * f(0.7, 0.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn gauge_invariance_of_e0() {
        let g = grid();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s = random_state_with_energy(&g, 4, 10.0, 1.0, &mut rng).unwrap();
        let e = lyapunov_level0(&s.a, &s.b, 1.0).unwrap();
        assert!((e - 10.0).abs() < 1e-10);
        let rot = s.a.scale(C64::new(0.0, 1.3).exp());
        assert!((lyapunov_level0(&rot, &s.b, 1.0).unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_identity() {
        let g = grid();
        let n = normalize(&derive_coefficients_toy(1.0).unwrap()).unwrap();
        let bound = absorbing_bound(2.0 * PI, n.alpha, n.beta).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let s = random_state_with_energy(&g, 3, 8.0, bound.q, &mut rng).unwrap();
        let p = energy_point(&s, &n, &bound).unwrap();
        let ax = crate::spectral::derivative(&s.a, 1);
        let gap = p.majorant - 2.0 * ax.coefficients().iter().map(|z| z.norm_sqr()).sum::<f64>() * 2.0 * PI;
        assert!((p.de0 - gap).abs() < 1e-9 * p.de0.abs().max(1.0));
        // finite difference along the solver
        let pr = AmplitudeParams::from_normalized(&n, 1.0);
        let h = 1e-4;
        let mut sol = AmplitudeSolver::new(pr, &g, h).unwrap();
        sol.load(&s).unwrap();
        sol.advance().unwrap();
        let fwd = lyapunov_level0(&sol.state().a, &sol.state().b, bound.q).unwrap();
        let fd = (fwd - p.e0) / h;
        assert!((fd - p.de0).abs() < 1e-2 * p.de0.abs().max(1.0), "{fd} vs {}", p.de0);
    }

    #[test]
    fn inside_ball_stays() {
        let g = grid();
        let n = normalize(&derive_coefficients_toy(1.0).unwrap()).unwrap();
        let bound = absorbing_bound(2.0 * PI, n.alpha, n.beta).unwrap();
        let s = AmplitudeState {
            a: Field::from_fn(&g, |_| C64::new(1.0, 0.0)),
            b: Field::zeros(&g),
            t: 0.0,
        };
        let mut sol = AmplitudeSolver::new(AmplitudeParams::from_normalized(&n, 1.0), &g, 0.01).unwrap();
        sol.load(&s).unwrap();
        let mut traj = vec![s];
        for _ in 0..20 {
            sol.advance_n(50).unwrap();
            traj.push(sol.state());
        }
        let rep = dissipation_check(&traj, &n, &bound).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.entry_time, Some(0.0));
        for p in &rep.series {
            assert!((p.e0 - 2.0 * PI).abs() < 1e-7);
        }
        assert_eq!(rep.gamma, Some(1.0));
    }
}
