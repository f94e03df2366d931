use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::PsiBuilder;
use crate::amplitude::{AmplitudeSolver, AmplitudeState};
use crate::error::{Error, Result};
use crate::linear::{spectral_projections, ModeSplitter, Projections};
use crate::models::{evaluate_rhs, RDModel};
use crate::spectral::Field;

/// Fast-time step of the residual difference stencil.
pub const RESIDUAL_STEP: f64 = 1e-3;

/// Centered five-point stencil; `window[2]` is the evaluation time.
pub fn residual_fields(
    model: &RDModel,
    window: &[(Vec<Field>, Field)],
    h: f64,
) -> Result<(Vec<Field>, Field)> {
    if window.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "window of {} states is too short for the five-point stencil",
            window.len()
        )));
    }
    if window.len() != 5 {
        return Err(Error::InvalidArgument("stencil needs exactly five states".into()));
    }
    let w = [-1.0, 8.0, 0.0, -8.0, 1.0].map(|c: f64| C64::new(-c / (12.0 * h), 0.0));
    let fd = |get: &dyn Fn(usize) -> Field| -> Result<Field> {
        let mut acc = get(0).scale(w[0]);
        for (j, &c) in w.iter().enumerate().skip(1) {
            if c.re != 0.0 {
                acc = acc.add(&get(j).scale(c))?;
            }
        }
        Ok(acc)
    };
    let (u, v) = &window[2];
    let (ru, rv) = evaluate_rhs(model, u, v)?;
    let mut res_u = Vec::with_capacity(u.len());
    for (c, r) in ru.iter().enumerate() {
        let dt = fd(&|j| window[j].0[c].clone())?;
        res_u.push(r.sub(&dt)?);
    }
    let dvt = fd(&|j| window[j].1.clone())?;
    Ok((res_u, rv.sub(&dvt)?))
}

/// Critical coefficient, stable part and `v` residual.
#[derive(Clone, Debug)]
pub struct SplitResidual {
    pub res1: Field,
    pub res_s: Vec<Field>,
    pub res_v: Field,
}

/// Splits residuals along `Û₁(0)`; with a filter radius the critical part is
/// mode-filtered as in the state splitting.
pub struct ResidualSplitter {
    proj: Projections,
    splitter: Option<ModeSplitter>,
    scale: C64,
}

impl ResidualSplitter {
    /// `ansatz_vector = sÛ₁(0)`; `Res₁` is reported in units of the ansatz amplitude.
    pub fn new(
        model: &RDModel,
        fast: &crate::spectral::SpectralGrid,
        ansatz_vector: &DVector<C64>,
        delta_tilde: Option<f64>,
    ) -> Result<Self> {
        let lin = model.linearization();
        let proj = spectral_projections(&lin, 0.0)?;
        let scale = proj.u1.dotc(ansatz_vector);
        let splitter = match delta_tilde {
            Some(d) => Some(ModeSplitter::new(&lin, fast, d)?),
            None => None,
        };
        Ok(Self { proj, splitter, scale })
    }

    pub fn split(&self, res_u: &[Field], res_v: &Field) -> Result<SplitResidual> {
        if let Some(sp) = &self.splitter {
            let s = sp.split(res_u)?;
            return Ok(SplitResidual {
                res1: s.c1.scale(1.0 / self.scale),
                res_s: s.us,
                res_v: res_v.clone(),
            });
        }
        let d = res_u.len();
        let phys: Vec<Vec<C64>> = res_u.iter().map(|f| f.physical()).collect();
        let n = phys[0].len();
        let grid = res_u[0].grid();
        let mut c1 = vec![C64::default(); n];
        let mut rest = phys.clone();
        for x in 0..n {
            let r = DVector::from_iterator(d, phys.iter().map(|c| c[x]));
            let a = self.proj.p1.dot(&r);
            let b = self.proj.p_m1.dot(&r);
            c1[x] = a / self.scale;
            for (i, comp) in rest.iter_mut().enumerate() {
                comp[x] -= a * self.proj.u1[i] + b * self.proj.u_m1[i];
            }
        }
        Ok(SplitResidual {
            res1: Field::new(grid, c1, crate::spectral::Repr::Physical)?,
            res_s: rest
                .into_iter()
                .map(|c| Field::new(grid, c, crate::spectral::Repr::Physical))
                .collect::<Result<_>>()?,
            res_v: res_v.clone(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    /// Slow time of the stencil centre.
    pub t_slow: f64,
    pub res1: f64,
    pub res_s: f64,
    pub res_v: f64,
}

/// Sup norms of the residual of `Ψ_θ` at slow time `s.t`. The amplitude state
/// is advanced by four steps of `δ²h` to supply the stencil.
pub fn psi_residual(
    model: &RDModel,
    builder: &PsiBuilder,
    splitter: &ResidualSplitter,
    s: &AmplitudeState,
    h: f64,
) -> Result<ResidualNorms> {
    let eta = builder.delta * builder.delta * h;
    let mut solver = AmplitudeSolver::new(builder.params, &builder.slow, eta)?;
    solver.load(s)?;
    let mut window = Vec::with_capacity(5);
    for j in 0..5 {
        if j > 0 {
            solver.advance()?;
        }
        let st = solver.state();
        let t_fast = s.t / (builder.delta * builder.delta) + j as f64 * h;
        window.push(builder.build_at(&st, t_fast)?);
    }
    let (ru, rv) = residual_fields(model, &window, h)?;
    let sp = splitter.split(&ru, &rv)?;
    Ok(ResidualNorms {
        t_slow: s.t + 2.0 * eta,
        res1: sp.res1.sup_norm(),
        res_s: sp.res_s.iter().map(|f| f.sup_norm()).fold(0.0, f64::max),
        res_v: sp.res_v.sup_norm(),
    })
}

/// Sup over a set of checkpoints; `t_slow` is where `Res₁` peaks.
pub fn sup_residuals(series: &[ResidualNorms]) -> ResidualNorms {
    let t_slow = series
        .iter()
        .max_by(|a, b| a.res1.total_cmp(&b.res1))
        .map_or(0.0, |r| r.t_slow);
    series.iter().fold(
        ResidualNorms {
            t_slow,
            res1: 0.0,
            res_s: 0.0,
            res_v: 0.0,
        },
        |acc, r| ResidualNorms {
            t_slow: acc.t_slow,
            res1: acc.res1.max(r.res1),
            res_s: acc.res_s.max(r.res_s),
            res_v: acc.res_v.max(r.res_v),
        },
    )
}
