//! Fixtures shared by the criterion benches.

use std::f64::consts::PI;

use hopf_cl::amplitude::{derive_coefficients_toy, normalize, AmplitudeParams, AmplitudeState};
use hopf_cl::models::{toy_model, RDModel};
use hopf_cl::rd_solver::{random_band_state, RdState};
use hopf_cl::spectral::{make_grid, Field, SpectralGrid};
use hopf_cl::Complex64;

pub fn smooth_field(n: usize) -> Field {
    let g = make_grid(n, 2.0 * PI).unwrap();
    Field::from_real_fn(&g, |x| (3.0 * x).sin() + 0.5 * (7.0 * x).cos())
}

/// Toy system at `δ = 0.1` on a fast grid with `n` points.
pub fn toy_fixture(n: usize) -> (RDModel, SpectralGrid, RdState) {
    let g = make_grid(n, 2.0 * PI / 0.1).unwrap();
    let model = toy_model(1.0, 0.1).unwrap();
    let st = random_band_state(&g, 2, 0.05, 8, 1);
    (model, g, st)
}

pub fn amplitude_fixture(n: usize) -> (AmplitudeParams, AmplitudeState) {
    let g = make_grid(n, 2.0 * PI).unwrap();
    let c = normalize(&derive_coefficients_toy(1.0).unwrap()).unwrap();
    let s = AmplitudeState::new(
        Field::from_fn(&g, |x| Complex64::new(0.8 + 0.2 * x.cos(), 0.3 * x.sin())),
        Field::from_real_fn(&g, |x| 0.4 * (2.0 * x).cos()),
        0.0,
    )
    .unwrap();
    (AmplitudeParams::from_normalized(&c, 1.0), s)
}
