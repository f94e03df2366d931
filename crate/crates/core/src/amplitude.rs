//! Ginzburg-Landau equation coupled to a conservation law,
//!
//! ```text
//! ∂_T A = a₀∂_X²A + a₁A + a₂AB - a₃A|A|²
//! ∂_T B = b₀∂_X²B + b₁∂_X²(|A|²)
//! ```
//!
//! and its normalized form with `a₀ = 1 + iγ₀`, `a₁ = 1`, `a₂ = β`,
//! `a₃ = 1 + iγ₃`, `b₀ = α`, `b₁ ∈ {0, 1}`.

use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::etd::{etdrk4_step, Etdrk4Coeffs, Etdrk4Work};
use crate::spectral::{derivative, make_grid, Field, Repr, SpectralGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeCoefficients {
    pub a0: C64,
    pub a1: f64,
    pub a2: f64,
    pub a3: C64,
    pub b0: f64,
    pub b1: f64,
}

impl AmplitudeCoefficients {
    pub fn validate(&self) -> Result<()> {
        if !(self.a0.re > 0.0 && self.b0 > 0.0 && self.a1 > 0.0 && self.a3.re > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need Re a0 > 0, b0 > 0, a1 > 0, Re a3 > 0; got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

/// Coefficients of the toy model: `a₃ = 1 + 2i/(3ω₀)`, all others one.
pub fn derive_coefficients_toy(omega0: f64) -> Result<AmplitudeCoefficients> {
    if !(omega0 > 0.0) {
        return Err(Error::InvalidArgument(format!("omega0 must be positive, got {omega0}")));
    }
    Ok(AmplitudeCoefficients {
        a0: C64::new(1.0, 0.0),
        a1: 1.0,
        a2: 1.0,
        a3: C64::new(1.0, 2.0 / (3.0 * omega0)),
        b0: 1.0,
        b1: 1.0,
    })
}

/// Scales `A = c_A Ã`, `B = c_B B̃`, `T = c_T T̃`, `X = c_X X̃`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub c_a: f64,
    pub c_b: f64,
    pub c_t: f64,
    pub c_x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma0: f64,
    pub gamma3: f64,
    pub scales: Scales,
    /// The `B`-equation has no `|A|²` forcing.
    pub b1_zero: bool,
}

impl NormalizedCoefficients {
    pub fn new(alpha: f64, beta: f64, gamma0: f64, gamma3: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma0,
            gamma3,
            scales: Scales {
                c_a: 1.0,
                c_b: 1.0,
                c_t: 1.0,
                c_x: 1.0,
            },
            b1_zero: false,
        }
    }
}

pub fn normalize(c: &AmplitudeCoefficients) -> Result<NormalizedCoefficients> {
    c.validate()?;
    let c_t = 1.0 / c.a1;
    let c_a = (1.0 / (c_t * c.a3.re)).sqrt();
    let c_x = (c_t * c.a0.re).sqrt();
    let b1_zero = c.b1 == 0.0;
    let c_b = if b1_zero {
        1.0
    } else {
        c_t * c.b1 * c_a * c_a / (c_x * c_x)
    };
    Ok(NormalizedCoefficients {
        alpha: c_t * c.b0 / (c_x * c_x),
        beta: c_t * c.a2 * c_b,
        gamma0: (c.a0 * (c_t / (c_x * c_x))).im,
        gamma3: (c.a3 * (c_t * c_a * c_a)).im,
        scales: Scales { c_a, c_b, c_t, c_x },
        b1_zero,
    })
}

/// `1 + β/α` and whether it is positive.
pub fn coeff_condition(n: &NormalizedCoefficients) -> (bool, f64) {
    let m = 1.0 + n.beta / n.alpha;
    (m > 0.0, m)
}

/// Right-hand side parameters of the generic system solved by [`AmplitudeSolver`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeParams {
    pub a0: C64,
    /// Linear gain, `(ε/δ)²a₁`.
    pub gain: f64,
    pub a2: f64,
    pub a3: C64,
    pub b0: f64,
    pub b1: f64,
}

impl AmplitudeParams {
    pub fn from_normalized(n: &NormalizedCoefficients, eps_over_delta: f64) -> Self {
        Self {
            a0: C64::new(1.0, n.gamma0),
            gain: eps_over_delta * eps_over_delta,
            a2: n.beta,
            a3: C64::new(1.0, n.gamma3),
            b0: n.alpha,
            b1: if n.b1_zero { 0.0 } else { 1.0 },
        }
    }

    pub fn from_raw(c: &AmplitudeCoefficients, eps_over_delta: f64) -> Self {
        Self {
            a0: c.a0,
            gain: c.a1 * eps_over_delta * eps_over_delta,
            a2: c.a2,
            a3: c.a3,
            b0: c.b0,
            b1: c.b1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AmplitudeState {
    pub a: Field,
    pub b: Field,
    pub t: f64,
}

impl AmplitudeState {
    pub fn new(a: Field, b: Field, t: f64) -> Result<Self> {
        if a.grid() != b.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { a, b, t })
    }

    pub fn zeros(grid: &SpectralGrid) -> Self {
        Self {
            a: Field::zeros(grid),
            b: Field::zeros(grid),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.a.grid()
    }

    pub fn mean_b(&self) -> f64 {
        self.b.mean().re
    }
}

/// Exact right-hand side (no dealiasing), `(∂_T A, ∂_T B)`.
pub fn amplitude_rhs(p: &AmplitudeParams, s: &AmplitudeState) -> Result<(Field, Field)> {
    let a = s.a.to_physical();
    let b = s.b.make_real();
    let axx = derivative(&a, 2);
    let nl = a.map_physical(|z| z); // physical copy
    let ap = nl.physical();
    let bp = b.real_part();
    let reaction: Vec<C64> = ap
        .iter()
        .zip(&bp)
        .map(|(&z, &bb)| p.gain * z + p.a2 * z * bb - p.a3 * z * z.norm_sqr())
        .collect();
    let reaction = Field::new(a.grid(), reaction, Repr::Physical)?;
    let da = axx.scale(p.a0).add(&reaction)?;
    let a2 = Field::from_real(a.grid(), &ap.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>())?;
    let db = derivative(&b, 2)
        .scale(C64::new(p.b0, 0.0))
        .add(&derivative(&a2, 2).scale(C64::new(p.b1, 0.0)))?;
    Ok((da, db))
}

/// Sup norm of `(candidate ∂_T) - RHS` over both components.
pub fn amplitude_rhs_residual(
    p: &AmplitudeParams,
    s: &AmplitudeState,
    da_dt: &Field,
    db_dt: &Field,
) -> Result<f64> {
    let (da, db) = amplitude_rhs(p, s)?;
    Ok(da.max_abs_diff(da_dt)?.max(db.max_abs_diff(db_dt)?))
}

/// Fixed-step ETDRK4 on the slow grid.
pub struct AmplitudeSolver {
    params: AmplitudeParams,
    grid: SpectralGrid,
    coeffs: Etdrk4Coeffs,
    work: Etdrk4Work,
    w: Vec<C64>,
    w_prev: Vec<C64>,
    t: f64,
    buf_a: Vec<C64>,
    buf_b: Vec<C64>,
    buf_n: Vec<C64>,
    scratch: Vec<C64>,
    mask: Vec<bool>,
    k2: Vec<f64>,
}

impl AmplitudeSolver {
    pub fn new(params: AmplitudeParams, grid: &SpectralGrid, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dT must be positive, got {dt}")));
        }
        let n = grid.n_points();
        let k2: Vec<f64> = grid.wavenumbers().iter().map(|k| k * k).collect();
        let mut lam = Vec::with_capacity(2 * n);
        lam.extend(k2.iter().map(|&q| -params.a0 * q + params.gain));
        lam.extend(k2.iter().map(|&q| C64::new(-params.b0 * q, 0.0)));
        Ok(Self {
            params,
            grid: grid.clone(),
            coeffs: Etdrk4Coeffs::new(&lam, dt),
            work: Etdrk4Work::new(2 * n),
            w: vec![C64::default(); 2 * n],
            w_prev: vec![C64::default(); 2 * n],
            t: 0.0,
            buf_a: vec![C64::default(); n],
            buf_b: vec![C64::default(); n],
            buf_n: vec![C64::default(); n],
            scratch: vec![C64::default(); grid.scratch_len()],
            mask: grid.dealias_mask(),
            k2,
        })
    }

    pub fn dt(&self) -> f64 {
        self.coeffs.h
    }

    pub fn params(&self) -> &AmplitudeParams {
        &self.params
    }

    pub fn load(&mut self, s: &AmplitudeState) -> Result<()> {
        if s.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let n = self.grid.n_points();
        self.w[..n].copy_from_slice(&s.a.coefficients());
        self.w[n..].copy_from_slice(&s.b.coefficients());
        self.t = s.t;
        Ok(())
    }

    pub fn state(&self) -> AmplitudeState {
        let n = self.grid.n_points();
        AmplitudeState {
            a: Field::new(&self.grid, self.w[..n].to_vec(), Repr::Fourier).unwrap(),
            b: Field::new(&self.grid, self.w[n..].to_vec(), Repr::Fourier).unwrap(),
            t: self.t,
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn advance(&mut self) -> Result<()> {
        self.w_prev.copy_from_slice(&self.w);
        let n = self.grid.n_points();
        let Self {
            params,
            grid,
            coeffs,
            work,
            w,
            buf_a,
            buf_b,
            buf_n,
            scratch,
            mask,
            k2,
            ..
        } = self;
        let p = *params;
        etdrk4_step(coeffs, w, work, |x, y| {
            buf_a.copy_from_slice(&x[..n]);
            buf_b.copy_from_slice(&x[n..]);
            grid.inverse_with_scratch(buf_a, scratch);
            grid.inverse_with_scratch(buf_b, scratch);
            for i in 0..n {
                let a = buf_a[i];
                let b = buf_b[i].re;
                let m2 = a.norm_sqr();
                buf_n[i] = p.a2 * a * b - p.a3 * a * m2;
                buf_b[i] = C64::new(m2, 0.0);
            }
            grid.forward_with_scratch(buf_n, scratch);
            grid.forward_with_scratch(buf_b, scratch);
            for j in 0..n {
                if mask[j] {
                    y[j] = buf_n[j];
                    y[n + j] = -k2[j] * p.b1 * buf_b[j];
                } else {
                    y[j] = C64::default();
                    y[n + j] = C64::default();
                }
            }
            Ok(())
        })?;
        if self.w.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            self.w.copy_from_slice(&self.w_prev);
            return Err(Error::BlowUp {
                t: self.t + self.coeffs.h,
                what: "amplitude system".into(),
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

    /// Advance to `t_end` with steps of at most the configured size; the last
    /// step may be shortened (a temporary coefficient set is built for it).
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        let h = self.coeffs.h;
        let steps = ((t_end - self.t) / h + 1e-9).floor().max(0.0) as usize;
        self.advance_n(steps)?;
        let rest = t_end - self.t;
        if rest > 1e-12 * h.max(1.0) {
            let mut short = AmplitudeSolver::new(self.params, &self.grid, rest)?;
            short.w.copy_from_slice(&self.w);
            short.t = self.t;
            short.advance()?;
            self.w.copy_from_slice(&short.w);
        }
        self.t = t_end;
        Ok(())
    }
}

/// One step convenience wrapper.
pub fn step_amplitude(p: &AmplitudeParams, s: &AmplitudeState, dt: f64) -> Result<AmplitudeState> {
    let mut solver = AmplitudeSolver::new(*p, s.grid(), dt)?;
    solver.load(s)?;
    solver.advance()?;
    Ok(solver.state())
}

/// X-independent solutions for constant `B = b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpecialSolution {
    /// `A = Â e^{iωT}` with `|Â|² = 1 + βb`, `ω = -|Â|²γ₃`.
    Periodic { amplitude: f64, omega: f64, b: f64 },
    /// `A = 0, B = b` when `1 + βb <= 0`.
    Stationary { b: f64 },
}

pub fn special_periodic_solution(b: f64, n: &NormalizedCoefficients) -> SpecialSolution {
    let m2 = 1.0 + n.beta * b;
    if m2 > 0.0 {
        SpecialSolution::Periodic {
            amplitude: m2.sqrt(),
            omega: -m2 * n.gamma3,
            b,
        }
    } else {
        SpecialSolution::Stationary { b }
    }
}

/// `B = b + B̃` with `b` the mean; returns `(b, B̃, 1 + βb)`.
pub fn split_mean(b_field: &Field, beta: f64) -> (f64, Field, f64) {
    let mut c = b_field.coefficients();
    let b = c[0].re;
    c[0] = C64::default();
    let tilde = Field::from_coefficients(b_field.grid(), c).unwrap();
    (b, tilde, 1.0 + beta * b)
}

/// Undo the normalization: `A = c_A Ã`, `B = c_B B̃`, `X = c_X X̃`, `T = c_T T̃`.
pub fn denormalize(s: &AmplitudeState, n: &NormalizedCoefficients) -> Result<AmplitudeState> {
    let sc = n.scales;
    let g = s.grid();
    let grid = make_grid(g.n_points(), g.length() * sc.c_x)?;
    Ok(AmplitudeState {
        a: Field::new(&grid, s.a.coefficients(), Repr::Fourier)?.scale(C64::new(sc.c_a, 0.0)),
        b: Field::new(&grid, s.b.coefficients(), Repr::Fourier)?.scale(C64::new(sc.c_b, 0.0)),
        t: s.t * sc.c_t,
    })
}

/// Trajectory CSV: `T, mean_b, a_l2, a_sup, b_sup`.
pub fn write_amplitude_series(path: &Path, states: &[AmplitudeState]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["T", "mean_b", "a_l2", "a_sup", "b_sup"])?;
    for s in states {
        w.write_record(&[
            format!("{:.17e}", s.t),
            format!("{:.17e}", s.mean_b()),
            format!("{:.17e}", s.a.l2_quadrature()),
            format!("{:.17e}", s.a.sup_norm()),
            format!("{:.17e}", s.b.sup_norm()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
