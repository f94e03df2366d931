//! Reaction-diffusion models coupled to a diffusive conservation law,
//!
//! ```text
//! ∂_t u = D ∂_x² u + f(u, v),        ∂_t v = d_v ∂_x² v + ∂_x² g(u),
//! ```
//!
//! with `f` and `g` polynomial of degree at most three.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{derivative, Field, Repr};

/// `coeff · Π u_i^{u_pows[i]} · v^{v_pow}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    #[serde(rename = "u")]
    pub u_pows: Vec<u32>,
    #[serde(default, rename = "v")]
    pub v_pow: u32,
}

impl Monomial {
    pub fn new(coeff: f64, u_pows: &[u32], v_pow: u32) -> Self {
        Self {
            coeff,
            u_pows: u_pows.to_vec(),
            v_pow,
        }
    }

    pub fn u_degree(&self) -> u32 {
        self.u_pows.iter().sum()
    }

    pub fn degree(&self) -> u32 {
        self.u_degree() + self.v_pow
    }

    #[inline]
    pub fn eval(&self, u: &[f64], v: f64) -> f64 {
        let mut r = self.coeff;
        for (x, &p) in u.iter().zip(&self.u_pows) {
            for _ in 0..p {
                r *= x;
            }
        }
        for _ in 0..self.v_pow {
            r *= v;
        }
        r
    }

    fn is_linear_u(&self) -> bool {
        self.u_degree() == 1 && self.v_pow == 0
    }
}

/// Which closed-form family a model belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// Complex toy system stored as `(Re u₁, Im u₁, v)`; `eps2` is the linear gain.
    Toy { omega0: f64, eps2: f64 },
    Brusselator { a: f64, b_tilde: f64 },
    Polynomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RDModel {
    pub name: String,
    pub kind: ModelKind,
    pub diffusion: Vec<f64>,
    pub d_v: f64,
    /// `f_terms[i]` lists the monomials of the i-th component of `f`.
    pub f_terms: Vec<Vec<Monomial>>,
    pub g_terms: Vec<Monomial>,
    pub parameter: f64,
    pub critical_parameter: f64,
}

impl RDModel {
    pub fn d(&self) -> usize {
        self.diffusion.len()
    }

    /// Check shapes and the structural constraints of the model class.
    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if d < 2 {
            return Err(Error::InvalidArgument(format!("need d >= 2, got {d}")));
        }
        if self.diffusion.iter().any(|&x| !(x > 0.0)) || !(self.d_v > 0.0) {
            return Err(Error::InvalidArgument(
                "diffusion coefficients must be positive".into(),
            ));
        }
        if self.f_terms.len() != d {
            return Err(Error::InvalidArgument(format!(
                "f has {} components, expected {d}",
                self.f_terms.len()
            )));
        }
        for (i, terms) in self.f_terms.iter().enumerate() {
            for m in terms {
                if m.u_pows.len() != d {
                    return Err(Error::InvalidArgument(format!(
                        "f[{i}] monomial has {} exponents, expected {d}",
                        m.u_pows.len()
                    )));
                }
                if m.degree() > 3 {
                    return Err(Error::InvalidArgument(format!(
                        "f[{i}] monomial of degree {} exceeds 3",
                        m.degree()
                    )));
                }
                if m.u_degree() == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "f[{i}] has a u-free monomial, so f(0, v) != 0"
                    )));
                }
            }
        }
        for m in &self.g_terms {
            if m.u_pows.len() != d {
                return Err(Error::InvalidArgument("g monomial has wrong arity".into()));
            }
            if m.v_pow != 0 {
                return Err(Error::InvalidArgument(
                    "g may depend on u only".into(),
                ));
            }
            if m.u_degree() < 2 || m.u_degree() > 3 {
                return Err(Error::InvalidArgument(format!(
                    "g monomial of degree {} outside [2, 3]",
                    m.u_degree()
                )));
            }
        }
        Ok(())
    }

    /// Pointwise `f(u, v)`.
    pub fn f(&self, u: &[f64], v: f64) -> Vec<f64> {
        self.f_terms
            .iter()
            .map(|terms| terms.iter().map(|m| m.eval(u, v)).sum())
            .collect()
    }

    /// Pointwise `f(u, v) - ∂_u f(0,0) u`.
    pub fn f_nonlinear_into(&self, u: &[f64], v: f64, out: &mut [f64]) {
        for (o, terms) in out.iter_mut().zip(&self.f_terms) {
            *o = terms
                .iter()
                .filter(|m| !m.is_linear_u())
                .map(|m| m.eval(u, v))
                .sum();
        }
    }

    pub fn g(&self, u: &[f64]) -> f64 {
        self.g_terms.iter().map(|m| m.eval(u, 0.0)).sum()
    }

    /// `∂_u f(0, 0)`.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let d = self.d();
        let mut j = DMatrix::zeros(d, d);
        for (i, terms) in self.f_terms.iter().enumerate() {
            for m in terms.iter().filter(|m| m.is_linear_u()) {
                let c = m.u_pows.iter().position(|&p| p == 1).unwrap();
                j[(i, c)] += m.coeff;
            }
        }
        j
    }

    pub fn linearization(&self) -> crate::linear::ModelLinearization {
        crate::linear::ModelLinearization {
            diffusion: self.diffusion.clone(),
            d_v: self.d_v,
            jacobian: self.jacobian().map(|x| C64::new(x, 0.0)),
            parameter: self.parameter,
        }
    }

    /// Same model family at another bifurcation parameter.
    pub fn with_parameter(&self, p: f64) -> Result<RDModel> {
        match &self.kind {
            ModelKind::Toy { omega0, .. } => Ok(toy_model_eps2(*omega0, p)),
            ModelKind::Brusselator { a, .. } => {
                let mut m = brusselator_cl(*a, p, self.diffusion[0], self.diffusion[1], self.d_v, None)?;
                m.g_terms = self.g_terms.clone();
                Ok(m)
            }
            ModelKind::Polynomial => Err(Error::InvalidArgument(
                "polynomial models carry no parameter family".into(),
            )),
        }
    }

    /// Deviation from criticality in the `ε²` convention.
    pub fn eps2(&self) -> f64 {
        match &self.kind {
            ModelKind::Toy { eps2, .. } => *eps2,
            ModelKind::Brusselator { a, b_tilde } => {
                let bh = b_hopf(*a);
                (b_tilde - bh) / bh
            }
            ModelKind::Polynomial => self.parameter - self.critical_parameter,
        }
    }

    pub fn omega0(&self) -> Option<f64> {
        match &self.kind {
            ModelKind::Toy { omega0, .. } => Some(*omega0),
            ModelKind::Brusselator { a, .. } => Some(*a),
            ModelKind::Polynomial => None,
        }
    }

    pub fn is_toy(&self) -> bool {
        matches!(self.kind, ModelKind::Toy { .. })
    }

    /// Parse a model from TOML text.
    pub fn from_toml(text: &str) -> Result<RDModel> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.build()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Declarative model selection used by configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Toy {
        #[serde(default = "one")]
        omega0: f64,
        #[serde(default)]
        eps: f64,
    },
    Brusselator {
        a: f64,
        b_tilde: Option<f64>,
        #[serde(default)]
        eps: f64,
        #[serde(default = "one")]
        d1: f64,
        #[serde(default = "one")]
        d2: f64,
        #[serde(default = "one")]
        d_v: f64,
        g: Option<Vec<Monomial>>,
    },
    Polynomial {
        #[serde(default = "custom_name")]
        name: String,
        diffusion: Vec<f64>,
        d_v: f64,
        f: Vec<Vec<Monomial>>,
        #[serde(default)]
        g: Vec<Monomial>,
        #[serde(default)]
        parameter: f64,
        #[serde(default)]
        critical_parameter: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn custom_name() -> String {
    "polynomial".into()
}

impl ModelSpec {
    pub fn build(&self) -> Result<RDModel> {
        let m = match self {
            ModelSpec::Toy { omega0, eps } => toy_model(*omega0, *eps)?,
            ModelSpec::Brusselator {
                a,
                b_tilde,
                eps,
                d1,
                d2,
                d_v,
                g,
            } => {
                let bt = b_tilde.unwrap_or(b_hopf(*a) * (1.0 + eps * eps));
                brusselator_cl(*a, bt, *d1, *d2, *d_v, g.clone())?
            }
            ModelSpec::Polynomial {
                name,
                diffusion,
                d_v,
                f,
                g,
                parameter,
                critical_parameter,
            } => RDModel {
                name: name.clone(),
                kind: ModelKind::Polynomial,
                diffusion: diffusion.clone(),
                d_v: *d_v,
                f_terms: f.clone(),
                g_terms: g.clone(),
                parameter: *parameter,
                critical_parameter: *critical_parameter,
            },
        };
        m.validate()?;
        Ok(m)
    }
}

/// Toy system with `u₁ = p + iq`:
///
/// ```text
/// ṗ = p'' + ε²p - ω₀q + 3p² - q² + 2vp - (p²+q²)p
/// q̇ = q'' + ω₀p + ε²q - (p²+q²)q
/// v̇ = v'' + (p²+q²)''
/// ```
pub fn toy_model(omega0: f64, eps: f64) -> Result<RDModel> {
    if !(omega0 > 0.0) || !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need omega0 > 0 and eps >= 0, got ({omega0}, {eps})"
        )));
    }
    Ok(toy_model_eps2(omega0, eps * eps))
}

pub(crate) fn toy_model_eps2(omega0: f64, eps2: f64) -> RDModel {
    let m = Monomial::new;
    let f_p = vec![
        m(eps2, &[1, 0], 0),
        m(-omega0, &[0, 1], 0),
        m(3.0, &[2, 0], 0),
        m(-1.0, &[0, 2], 0),
        m(2.0, &[1, 0], 1),
        m(-1.0, &[3, 0], 0),
        m(-1.0, &[1, 2], 0),
    ];
    let f_q = vec![
        m(omega0, &[1, 0], 0),
        m(eps2, &[0, 1], 0),
        m(-1.0, &[2, 1], 0),
        m(-1.0, &[0, 3], 0),
    ];
    RDModel {
        name: "toy".into(),
        kind: ModelKind::Toy { omega0, eps2 },
        diffusion: vec![1.0, 1.0],
        d_v: 1.0,
        f_terms: vec![f_p, f_q],
        g_terms: vec![m(1.0, &[2, 0], 0), m(1.0, &[0, 2], 0)],
        parameter: eps2,
        critical_parameter: 0.0,
    }
}

pub fn b_hopf(a: f64) -> f64 {
    1.0 + a * a
}

/// Brusselator around its homogeneous equilibrium with `b = v + b̃`.
/// `g` defaults to `u₁²`.
pub fn brusselator_cl(
    a: f64,
    b_tilde: f64,
    d1: f64,
    d2: f64,
    d_v: f64,
    g: Option<Vec<Monomial>>,
) -> Result<RDModel> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("need a > 0, got {a}")));
    }
    let m = Monomial::new;
    // terms shared by both components up to sign: v u₁ + f(u₁, u₂) with b → v + b̃
    let shared = |s: f64| {
        vec![
            m(s, &[1, 0], 1),
            m(s * b_tilde / a, &[2, 0], 0),
            m(s / a, &[2, 0], 1),
            m(s * 2.0 * a, &[1, 1], 0),
            m(s, &[2, 1], 0),
        ]
    };
    let mut f1 = vec![m(b_tilde - 1.0, &[1, 0], 0), m(a * a, &[0, 1], 0)];
    f1.extend(shared(1.0));
    let mut f2 = vec![m(-b_tilde, &[1, 0], 0), m(-a * a, &[0, 1], 0)];
    f2.extend(shared(-1.0));
    let model = RDModel {
        name: "brusselator".into(),
        kind: ModelKind::Brusselator { a, b_tilde },
        diffusion: vec![d1, d2],
        d_v,
        f_terms: vec![f1, f2],
        g_terms: g.unwrap_or_else(|| vec![m(1.0, &[2, 0], 0)]),
        parameter: b_tilde,
        critical_parameter: b_hopf(a),
    };
    model.validate()?;
    Ok(model)
}

/// Sampled check of the model-class invariants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantReport {
    pub max_f_on_stationary_family: f64,
    pub g_at_zero: f64,
    /// Largest `|g(u)| / |u|²` over samples with `|u| <= 0.1`.
    pub g_quadratic_constant: f64,
    pub passes: bool,
}

pub fn check_invariants(model: &RDModel, samples: usize, seed: u64) -> InvariantReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = model.d();
    let zero = vec![0.0; d];
    let mut fmax: f64 = 0.0;
    for i in 0..=20 {
        let v = -1.0 + 0.1 * i as f64;
        fmax = fmax.max(model.f(&zero, v).iter().fold(0.0, |a, x| a.max(x.abs())));
    }
    let mut cmax: f64 = 0.0;
    for _ in 0..samples {
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = rng.random_range(1e-4..0.1);
        let nrm = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        let u: Vec<f64> = u.iter().map(|x| x * r / nrm).collect();
        cmax = cmax.max(model.g(&u).abs() / (r * r));
    }
    let g0 = model.g(&zero).abs();
    let passes = fmax == 0.0 && g0 == 0.0 && cmax.is_finite();
    InvariantReport {
        max_f_on_stationary_family: fmax,
        g_at_zero: g0,
        g_quadratic_constant: cmax,
        passes,
    }
}

/// `(D∂²u + f(u,v), d_v∂²v + ∂²g(u))`, nonlinear products dealiased by the 2/3 rule.
pub fn evaluate_rhs(model: &RDModel, u: &[Field], v: &Field) -> Result<(Vec<Field>, Field)> {
    let d = model.d();
    if u.len() != d {
        return Err(Error::InvalidArgument(format!(
            "expected {d} u-components, got {}",
            u.len()
        )));
    }
    let grid = v.grid().clone();
    if u.iter().any(|f| f.grid() != &grid) {
        return Err(Error::GridMismatch);
    }
    let n = grid.n_points();
    let up: Vec<Vec<f64>> = u.iter().map(|f| f.real_part()).collect();
    let vp = v.real_part();
    let mut nl = vec![vec![C64::default(); n]; d];
    let mut gv = vec![C64::default(); n];
    let mut pt = vec![0.0; d];
    let mut out = vec![0.0; d];
    for x in 0..n {
        for c in 0..d {
            pt[c] = up[c][x];
        }
        model.f_nonlinear_into(&pt, vp[x], &mut out);
        for c in 0..d {
            nl[c][x] = C64::new(out[c], 0.0);
        }
        gv[x] = C64::new(model.g(&pt), 0.0);
    }
    let mask = grid.dealias_mask();
    let jac = model.jacobian();
    let uh: Vec<Vec<C64>> = u.iter().map(|f| f.coefficients()).collect();
    let k = grid.wavenumbers();
    let mut du = Vec::with_capacity(d);
    for c in 0..d {
        grid.forward(&mut nl[c]);
        let mut out = vec![C64::default(); n];
        for j in 0..n {
            let mut z = if mask[j] { nl[c][j] } else { C64::default() };
            z -= model.diffusion[c] * k[j] * k[j] * uh[c][j];
            for (e, uhe) in uh.iter().enumerate() {
                z += jac[(c, e)] * uhe[j];
            }
            out[j] = z;
        }
        du.push(Field::new(&grid, out, Repr::Fourier)?);
    }
    grid.forward(&mut gv);
    let vh = v.coefficients();
    let mut dv = vec![C64::default(); n];
    for j in 0..n {
        let g = if mask[j] { gv[j] } else { C64::default() };
        dv[j] = -k[j] * k[j] * (model.d_v * vh[j] + g);
    }
    Ok((du, Field::new(&grid, dv, Repr::Fourier)?))
}

/// Convenience: `∂²` of a field.
pub fn laplacian(f: &Field) -> Field {
    derivative(f, 2)
}
