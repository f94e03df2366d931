//! Ginzburg-Landau approximation: ansatz, harmonic hierarchy `Ψ_θ`, residuals,
//! amplitude extraction and the δ-scaling experiments.
//!
//! The hierarchy is written for the toy model in the complex coordinate
//! `u₁ = p + iq`:
//!
//! ```text
//! ∂_t u₁ = ∂_x²u₁ + (iω₀ + ε²)u₁ + u₁² + u₁ū₁ + ū₁² + v(u₁ + ū₁) - u₁²ū₁
//! ∂_t v  = ∂_x²v + ∂_x²(u₁ū₁)
//! ```
//!
//! With `u₁ = Σ δ^p Ψ_{p,m}(X,T)e^{imω₀t}`, each order/harmonic balances as
//! `i(m-1)ω₀Ψ_{p,m} = [∂_X²Ψ + (ε/δ)²Ψ - ∂_TΨ]_{p-2,m} + N_{p,m}`; the `m = 1`
//! balance is the solvability condition (the amplitude equation at `p = 3`).

mod experiments;
mod residual;

pub use experiments::*;
pub use residual::*;

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::amplitude::{amplitude_rhs, AmplitudeParams, AmplitudeState};
use crate::error::{Error, Result};
use crate::linear::ModeSplitter;
use crate::rd_solver::RdState;
use crate::spectral::{derivative, make_grid, mode_filter, transfer_modes, Field, Repr, SpectralGrid};

/// Deepest implemented `θ`.
pub const MAX_THETA: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variable {
    CPlus,
    CMinus,
    Stable,
    V,
}

/// Exponent `β_j(m)` of the leading power of harmonic `m` in variable `j`.
pub fn exponent(var: Variable, m: i32) -> u32 {
    let a = m.unsigned_abs();
    match var {
        Variable::CPlus | Variable::CMinus => {
            let lead = if var == Variable::CPlus { 1 } else { -1 };
            match m {
                _ if m == lead => 1,
                _ if m == -lead => 3,
                0 | 2 | -2 => 2,
                _ => a,
            }
        }
        Variable::Stable => match a {
            0 | 2 => 2,
            1 | 3 => 3,
            _ => a,
        },
        Variable::V => match a {
            0 => 2,
            2 => 4,
            1 | 3 => 5,
            _ => a + 2,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub theta: u32,
    /// Harmonics present in `ψ₁` at depth `θ`.
    pub harmonics: Vec<i32>,
    pub exponent_table: BTreeMap<Variable, BTreeMap<i32, u32>>,
}

impl AnsatzSpec {
    pub fn new(theta: u32) -> Result<Self> {
        if theta == 0 || theta > MAX_THETA {
            return Err(Error::InvalidArgument(format!(
                "theta must be in 1..={MAX_THETA}, got {theta}"
            )));
        }
        let mut table = BTreeMap::new();
        for var in [Variable::CPlus, Variable::CMinus, Variable::Stable, Variable::V] {
            table.insert(var, (-4..=4).map(|m| (m, exponent(var, m))).collect());
        }
        let harmonics = (-4..=4)
            .filter(|&m| exponent(Variable::CPlus, m) <= theta + 1)
            .collect();
        Ok(Self {
            theta,
            harmonics,
            exponent_table: table,
        })
    }

    /// Highest `δ` power kept in `ψ₁`.
    pub fn u_order(&self) -> u32 {
        self.theta + 1
    }

    /// Highest `δ` power kept in `ψ_v`.
    pub fn v_order(&self) -> u32 {
        self.theta + 2
    }

    /// `(m, n)` of the coefficient `A_{+,m,n}` carried by `δ^p e^{imω₀t}`.
    pub fn coefficient_index(&self, p: u32, m: i32) -> Option<(i32, u32)> {
        let b = exponent(Variable::CPlus, m);
        (p >= b).then(|| (m, p - b))
    }
}

/// Ansatz vector of the toy model in real coordinates: `u = U·u₁ + Ū·ū₁`
/// recovers `(p, q)` from `u₁ = p + iq`.
pub fn toy_ansatz_vector() -> DVector<C64> {
    DVector::from_vec(vec![C64::new(0.5, 0.0), C64::new(0.0, -0.5)])
}

/// Fast grid commensurate with the slow one: same `n` multiple, length `L_s/δ`.
pub fn fast_grid_for(slow: &SpectralGrid, delta: f64, n_fast: usize) -> Result<SpectralGrid> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    if !n_fast.is_multiple_of(slow.n_points()) {
        return Err(Error::Grid(format!(
            "fast n = {n_fast} is not a multiple of slow n = {}",
            slow.n_points()
        )));
    }
    make_grid(n_fast, slow.length() / delta)
}

/// `n = max(128, ⌈24/δ⌉)` rounded up to a multiple of `n_slow`.
pub fn default_fast_points(delta: f64, n_slow: usize) -> usize {
    let n = 128usize.max((24.0 / delta).ceil() as usize);
    n.div_ceil(n_slow) * n_slow
}

fn check_commensurate(slow: &SpectralGrid, fast: &SpectralGrid, delta: f64) -> Result<()> {
    let (ns, nf) = (slow.n_points(), fast.n_points());
    if nf % ns != 0 {
        return Err(Error::Grid(format!("fast n = {nf} is not a multiple of slow n = {ns}")));
    }
    let want = slow.length() / delta;
    if ((fast.length() - want) / want).abs() > 1e-12 {
        return Err(Error::Grid(format!(
            "fast length {} differs from L_slow/δ = {want}",
            fast.length()
        )));
    }
    Ok(())
}

/// Reinterpret a field on the `X` grid as `x ↦ f(δx)` on the fast grid.
fn to_fast(f: &Field, fast: &SpectralGrid) -> Field {
    transfer_modes(f, fast)
}

/// `u = δA(δx)e^{iω₀t}U + c.c.`, `v = δ²B(δx)`.
pub fn first_order_ansatz(
    a: &Field,
    b: &Field,
    delta: f64,
    t: f64,
    omega0: f64,
    u1: &DVector<C64>,
    fast: &SpectralGrid,
) -> Result<(Vec<Field>, Field)> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    check_commensurate(a.grid(), fast, delta)?;
    let af = to_fast(a, fast).to_physical();
    let phase = C64::new(0.0, omega0 * t).exp() * delta;
    let u = u1
        .iter()
        .map(|&uc| af.map_physical(|z| C64::new(2.0 * (phase * z * uc).re, 0.0)))
        .collect();
    let v = to_fast(b, fast).scale(C64::new(delta * delta, 0.0)).make_real();
    Ok((u, v))
}

/// Second-order harmonics of the toy model: `(A_{1,0}, A_{1,2}, A_{1,-2})`.
pub fn eliminate_harmonics_toy(a: &Field, omega0: f64) -> (Field, Field, Field) {
    let iw = C64::new(0.0, omega0);
    (
        a.map_physical(|z| -z * z.conj() / iw),
        a.map_physical(|z| z * z / iw),
        a.map_physical(|z| -z.conj() * z.conj() / (3.0 * iw)),
    )
}

/// Pointwise values and their slow-time derivative.
#[derive(Clone, Debug)]
struct Dual {
    val: Vec<C64>,
    dot: Option<Vec<C64>>,
}

impl Dual {
    fn zeros(n: usize) -> Self {
        Self {
            val: vec![C64::default(); n],
            dot: Some(vec![C64::default(); n]),
        }
    }

    fn add_assign(&mut self, o: &Dual) {
        for (x, y) in self.val.iter_mut().zip(&o.val) {
            *x += y;
        }
        self.dot = match (self.dot.take(), &o.dot) {
            (Some(mut d), Some(e)) => {
                for (x, y) in d.iter_mut().zip(e) {
                    *x += y;
                }
                Some(d)
            }
            _ => None,
        };
    }

    fn mul(&self, o: &Dual) -> Dual {
        let val = self.val.iter().zip(&o.val).map(|(a, b)| a * b).collect();
        let dot = match (&self.dot, &o.dot) {
            (Some(da), Some(db)) => Some(
                self.val
                    .iter()
                    .zip(&o.val)
                    .zip(da.iter().zip(db))
                    .map(|((a, b), (x, y))| x * b + a * y)
                    .collect(),
            ),
            _ => None,
        };
        Dual { val, dot }
    }

    fn conj(&self) -> Dual {
        Dual {
            val: self.val.iter().map(|z| z.conj()).collect(),
            dot: self.dot.as_ref().map(|d| d.iter().map(|z| z.conj()).collect()),
        }
    }

    fn scale(&self, s: C64) -> Dual {
        Dual {
            val: self.val.iter().map(|z| z * s).collect(),
            dot: self.dot.as_ref().map(|d| d.iter().map(|z| z * s).collect()),
        }
    }
}

type Series = BTreeMap<(u32, i32), Dual>;

fn series_conj(s: &Series) -> Series {
    s.iter().map(|(&(p, m), d)| ((p, -m), d.conj())).collect()
}

fn series_add(a: &mut Series, b: &Series, n: usize) {
    for (k, d) in b {
        a.entry(*k).or_insert_with(|| Dual::zeros(n)).add_assign(d);
    }
}

fn series_mul(a: &Series, b: &Series, pmax: u32, n: usize) -> Series {
    let mut out = Series::new();
    for (&(p1, m1), x) in a {
        for (&(p2, m2), y) in b {
            if p1 + p2 <= pmax {
                out.entry((p1 + p2, m1 + m2))
                    .or_insert_with(|| Dual::zeros(n))
                    .add_assign(&x.mul(y));
            }
        }
    }
    out
}

/// `∂_X²` on the evaluation grid.
fn dxx(grid: &SpectralGrid, v: &[C64]) -> Vec<C64> {
    let f = Field::new(grid, v.to_vec(), Repr::Physical).unwrap();
    derivative(&f, 2).physical()
}

/// Coefficient fields of `ψ₁` and `ψ_v` keyed by `(δ power, harmonic)`.
#[derive(Clone, Debug)]
pub struct ToyHierarchy {
    pub grid: SpectralGrid,
    pub omega0: f64,
    pub gain: f64,
    pub u: BTreeMap<(u32, i32), Field>,
    pub v: BTreeMap<(u32, i32), Field>,
    /// Sup norm of each solvability defect `F_{p,1}` (and `m = 0` for `v`).
    pub solvability: Vec<(char, u32, f64)>,
}

/// Build the hierarchy up to `ψ₁` order `pu` and `ψ_v` order `pv`, given the
/// amplitude fields and their slow-time derivatives on an `X` grid.
pub fn toy_hierarchy(
    a: &Field,
    b: &Field,
    a_dot: &Field,
    b_dot: &Field,
    omega0: f64,
    gain: f64,
    pu: u32,
    pv: u32,
) -> Result<ToyHierarchy> {
    let grid = a.grid().clone();
    for f in [b, a_dot, b_dot] {
        if f.grid() != &grid {
            return Err(Error::GridMismatch);
        }
    }
    if pu > MAX_THETA + 1 || pv > MAX_THETA + 2 {
        return Err(Error::InvalidArgument(format!(
            "hierarchy depth ({pu}, {pv}) beyond the implemented depth"
        )));
    }
    let n = grid.n_points();
    let iw = C64::new(0.0, omega0);
    let mut u = Series::new();
    let mut v = Series::new();
    u.insert(
        (1, 1),
        Dual {
            val: a.physical(),
            dot: Some(a_dot.physical()),
        },
    );
    v.insert(
        (2, 0),
        Dual {
            val: b.make_real().physical(),
            dot: Some(b_dot.make_real().physical()),
        },
    );
    let mut solv = Vec::new();
    let top = pu.max(pv);
    for p in 2..=top {
        // ψ₁ at order p from orders < p
        if p <= pu {
            let ub = series_conj(&u);
            let mut nl = series_mul(&u, &u, p, n);
            series_add(&mut nl, &series_mul(&u, &ub, p, n), n);
            series_add(&mut nl, &series_mul(&ub, &ub, p, n), n);
            let mut upu = u.clone();
            series_add(&mut upu, &ub, n);
            series_add(&mut nl, &series_mul(&v, &upu, p, n), n);
            let cubic = series_mul(&series_mul(&u, &u, p, n), &ub, p, n);
            series_add(&mut nl, &cubic.iter().map(|(k, d)| (*k, d.scale(C64::new(-1.0, 0.0)))).collect(), n);
            let mut harmonics: Vec<i32> = nl.keys().filter(|k| k.0 == p).map(|k| k.1).collect();
            harmonics.extend(u.keys().filter(|k| k.0 + 2 == p).map(|k| k.1));
            harmonics.sort_unstable();
            harmonics.dedup();
            for m in harmonics {
                let mut f = nl.get(&(p, m)).cloned().unwrap_or_else(|| Dual::zeros(n));
                if let Some(low) = u.get(&(p - 2, m)) {
                    let ddot = low.dot.as_ref().ok_or_else(|| {
                        Error::Precondition(format!("missing ∂_T of ψ₁ order {}", p - 2))
                    })?;
                    let lin: Vec<C64> = dxx(&grid, &low.val)
                        .iter()
                        .zip(&low.val)
                        .zip(ddot)
                        .map(|((xx, x), d)| xx + gain * x - d)
                        .collect();
                    f.add_assign(&Dual { val: lin, dot: None });
                }
                if m == 1 {
                    let sup = f.val.iter().map(|z| z.norm()).fold(0.0, f64::max);
                    solv.push(('u', p, sup));
                    continue;
                }
                u.insert((p, m), f.scale(1.0 / (iw * (m - 1) as f64)));
            }
        }
        // ψ_v at order p from ψ₁ up to p - 2 and ψ_v up to p - 2
        if p >= 3 && p <= pv {
            let g = series_mul(&u, &series_conj(&u), p - 2, n);
            let mut harmonics: Vec<i32> = g.keys().filter(|k| k.0 == p - 2).map(|k| k.1).collect();
            harmonics.extend(v.keys().filter(|k| k.0 + 2 == p).map(|k| k.1));
            harmonics.sort_unstable();
            harmonics.dedup();
            for m in harmonics {
                let mut f = vec![C64::default(); n];
                if let Some(gm) = g.get(&(p - 2, m)) {
                    for (x, y) in f.iter_mut().zip(dxx(&grid, &gm.val)) {
                        *x += y;
                    }
                }
                if let Some(low) = v.get(&(p - 2, m)) {
                    let ddot = low.dot.as_ref().ok_or_else(|| {
                        Error::Precondition(format!("missing ∂_T of ψ_v order {}", p - 2))
                    })?;
                    for ((x, xx), d) in f.iter_mut().zip(dxx(&grid, &low.val)).zip(ddot) {
                        *x += xx - d;
                    }
                }
                if m == 0 {
                    let sup = f.iter().map(|z| z.norm()).fold(0.0, f64::max);
                    solv.push(('v', p, sup));
                    continue;
                }
                let s = 1.0 / (iw * m as f64);
                v.insert(
                    (p, m),
                    Dual {
                        val: f.iter().map(|z| z * s).collect(),
                        dot: None,
                    },
                );
            }
        }
    }
    let to_fields = |s: Series| -> BTreeMap<(u32, i32), Field> {
        s.into_iter()
            .map(|(k, d)| (k, Field::new(&grid, d.val, Repr::Physical).unwrap()))
            .collect()
    };
    Ok(ToyHierarchy {
        grid: grid.clone(),
        omega0,
        gain,
        u: to_fields(u),
        v: to_fields(v),
        solvability: solv,
    })
}

impl ToyHierarchy {
    /// `(u, v)` on the fast grid at fast time `t`; `u` in real coordinates.
    pub fn reconstruct(&self, delta: f64, t: f64, fast: &SpectralGrid) -> Result<(Vec<Field>, Field)> {
        if fast.n_points() != self.grid.n_points() {
            return Err(Error::Grid("evaluation grid and fast grid differ in size".into()));
        }
        let n = fast.n_points();
        let mut psi = vec![C64::default(); n];
        for (&(p, m), f) in &self.u {
            let c = C64::new(0.0, m as f64 * self.omega0 * t).exp() * delta.powi(p as i32);
            for (x, y) in psi.iter_mut().zip(f.physical()) {
                *x += c * y;
            }
        }
        let mut pv = vec![C64::default(); n];
        for (&(p, m), f) in &self.v {
            let c = C64::new(0.0, m as f64 * self.omega0 * t).exp() * delta.powi(p as i32);
            for (x, y) in pv.iter_mut().zip(f.physical()) {
                *x += c * y;
            }
        }
        let re = |z: &C64| C64::new(z.re, 0.0);
        let im = |z: &C64| C64::new(z.im, 0.0);
        // fields live on an X grid of the same size; reinterpret as f(δx)
        let mk = |vals: Vec<C64>| -> Result<Field> {
            let on_x = Field::new(&self.grid, vals, Repr::Physical)?;
            Field::new(fast, on_x.coefficients(), Repr::Fourier).map(|f| f.to_physical())
        };
        Ok((
            vec![
                mk(psi.iter().map(re).collect())?,
                mk(psi.iter().map(im).collect())?,
            ],
            mk(pv.iter().map(re).collect())?,
        ))
    }
}

/// `X` grid matching a fast grid point for point.
pub fn evaluation_grid(slow: &SpectralGrid, fast: &SpectralGrid) -> Result<SpectralGrid> {
    make_grid(fast.n_points(), slow.length())
}

/// `Ψ_θ` for the toy model at one amplitude state.
#[derive(Clone, Debug)]
pub struct PsiBuilder {
    pub spec: AnsatzSpec,
    pub params: AmplitudeParams,
    pub omega0: f64,
    pub delta: f64,
    pub slow: SpectralGrid,
    pub fast: SpectralGrid,
    pub eval: SpectralGrid,
}

impl PsiBuilder {
    pub fn new(
        spec: AnsatzSpec,
        params: AmplitudeParams,
        omega0: f64,
        delta: f64,
        slow: &SpectralGrid,
        fast: &SpectralGrid,
    ) -> Result<Self> {
        check_commensurate(slow, fast, delta)?;
        Ok(Self {
            spec,
            params,
            omega0,
            delta,
            slow: slow.clone(),
            fast: fast.clone(),
            eval: evaluation_grid(slow, fast)?,
        })
    }

    pub fn hierarchy(&self, s: &AmplitudeState) -> Result<ToyHierarchy> {
        let (da, db) = amplitude_rhs(&self.params, s)?;
        let up = |f: &Field| transfer_modes(f, &self.eval);
        toy_hierarchy(
            &up(&s.a),
            &up(&s.b),
            &up(&da),
            &up(&db),
            self.omega0,
            self.params.gain,
            self.spec.u_order(),
            self.spec.v_order(),
        )
    }

    /// Reconstruction at slow time `s.t`, i.e. fast time `s.t/δ²`.
    pub fn build(&self, s: &AmplitudeState) -> Result<(Vec<Field>, Field)> {
        self.build_at(s, s.t / (self.delta * self.delta))
    }

    /// Reconstruction with an explicit fast time (phase).
    pub fn build_at(&self, s: &AmplitudeState, t: f64) -> Result<(Vec<Field>, Field)> {
        if s.grid() != &self.slow {
            return Err(Error::GridMismatch);
        }
        self.hierarchy(s)?.reconstruct(self.delta, t, &self.fast)
    }
}

/// Time-indexed `Ψ_θ` along an amplitude trajectory.
pub fn build_psi_theta(
    spec: &AnsatzSpec,
    trajectory: &[AmplitudeState],
    params: AmplitudeParams,
    omega0: f64,
    delta: f64,
    fast: &SpectralGrid,
) -> Result<Vec<(f64, Vec<Field>, Field)>> {
    let Some(first) = trajectory.first() else {
        return Ok(Vec::new());
    };
    let b = PsiBuilder::new(spec.clone(), params, omega0, delta, first.grid(), fast)?;
    trajectory
        .iter()
        .map(|s| {
            let (u, v) = b.build(s)?;
            Ok((s.t / (delta * delta), u, v))
        })
        .collect()
}

/// A point on the Ginzburg-Landau manifold.
#[derive(Clone, Debug)]
pub struct GLManifoldPoint {
    pub amplitude: AmplitudeState,
    pub delta: f64,
    pub eps: f64,
    pub theta: u32,
    pub u: Vec<Field>,
    pub v: Field,
}

impl GLManifoldPoint {
    pub fn new(builder: &PsiBuilder, amplitude: AmplitudeState, eps: f64) -> Result<Self> {
        let (u, v) = builder.build(&amplitude)?;
        Ok(Self {
            amplitude,
            delta: builder.delta,
            eps,
            theta: builder.spec.theta,
            u,
            v,
        })
    }

    /// `(sup|u|/δ, sup|v|/δ²)`, the leading scaling constants.
    pub fn scaling_constants(&self) -> (f64, f64) {
        let su = self.u.iter().map(|f| f.sup_norm()).fold(0.0, f64::max);
        (su / self.delta, self.v.sup_norm() / (self.delta * self.delta))
    }
}

/// `A₁ = δ⁻¹e^{-iω₀t}c₁/s` and `B₀ = δ⁻²E₀v`, both moved to the slow grid.
/// `s` relates the ansatz vector to the unit eigenvector, `U = sÛ₁(0)`.
pub fn extract_amplitudes(
    state: &RdState,
    splitter: &ModeSplitter,
    delta: f64,
    omega0: f64,
    ansatz_vector: &DVector<C64>,
    slow: &SpectralGrid,
) -> Result<(Field, Field)> {
    check_commensurate(slow, state.grid(), delta)?;
    let split = splitter.split(&state.u)?;
    let e1 = splitter.u1_at_origin();
    let s = e1.dotc(ansatz_vector);
    if s.norm() < 1e-12 {
        return Err(Error::InvalidArgument("ansatz vector is orthogonal to Û₁(0)".into()));
    }
    let demod = C64::new(0.0, -omega0 * state.t).exp() / (s * delta);
    let a = transfer_modes(&split.c1.scale(demod), slow);
    let ev = mode_filter(&state.v, splitter.delta_tilde())?;
    let b = transfer_modes(&ev.scale(C64::new(1.0 / (delta * delta), 0.0)), slow).make_real();
    Ok((a, b))
}

/// Leading amplitude plus the order-δ correction that cancels the `m ∈ {0, ±2}`
/// harmonics contained in the extracted `c₁` at fast time `t`.
pub fn match_initial_amplitude(a_lead: &Field, omega0: f64, delta: f64, t: f64) -> Field {
    let (h0, h2, hm2) = eliminate_harmonics_toy(a_lead, omega0);
    let ph = |m: f64| C64::new(0.0, (m - 1.0) * omega0 * t).exp() * delta;
    let corr = h0
        .scale(ph(0.0))
        .add(&h2.scale(ph(2.0)))
        .and_then(|f| f.add(&hm2.scale(ph(-2.0))))
        .unwrap();
    a_lead.sub(&corr).unwrap()
}
