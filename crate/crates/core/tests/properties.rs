use std::f64::consts::PI;

use hopf_cl::amplitude::*;
use hopf_cl::linear::ModeSplitter;
use hopf_cl::models::brusselator_cl;
use hopf_cl::spectral::*;
use hopf_cl::Complex64 as C64;
use proptest::prelude::*;

fn trig_field(g: &SpectralGrid, c: &[(f64, f64)]) -> Field {
    let dk = g.dk();
    Field::from_real_fn(g, |x| c.iter().enumerate().map(|(j, &(a, b))| a * (j as f64 * dk * x).cos() + b * (j as f64 * dk * x).sin()).sum())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn parseval_matches_trapezoid(c in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..10), len in 1.0f64..50.0) {
        let g = make_grid(64, len).unwrap();
        let f = trig_field(&g, &c);
        let quad: f64 = f.physical().iter().map(|z| z.norm_sqr()).sum::<f64>() * g.dx();
        let modal: f64 = f.coefficients().iter().map(|z| z.norm_sqr()).sum::<f64>() * len;
        prop_assert!((quad - modal).abs() <= 1e-12 * quad.max(1.0));
    }

    #[test]
    fn derivative_kills_constants_and_inverts_antiderivative(c in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..8)) {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let mut cc = c.clone();
        cc[0] = (0.0, 0.0);
        let f = trig_field(&g, &cc);
        let back = derivative(&antiderivative(&f).unwrap(), 1);
        prop_assert!(back.max_abs_diff(&f).unwrap() < 1e-12);
    }

    #[test]
    fn split_reconstructs_any_real_input(c1 in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..20),
                                         c2 in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..20),
                                         dt in 0.1f64..1.0) {
        let lin = brusselator_cl(1.0, 2.0, 1.0, 2.0, 1.0, None).unwrap().linearization();
        let g = make_grid(64, 2.0 * PI / 0.1).unwrap();
        let u = vec![trig_field(&g, &c1), trig_field(&g, &c2)];
        let sp = ModeSplitter::new(&lin, &g, dt).unwrap();
        let s = sp.split(&u).unwrap();
        let crit = sp.critical_part(&s);
        for i in 0..2 {
            prop_assert!(crit[i].add(&s.us[i]).unwrap().max_abs_diff(&u[i]).unwrap() < 1e-12);
        }
    }

    #[test]
    fn amplitude_flow_is_gauge_invariant(phi in 0.0f64..(2.0 * PI), a0 in 0.1f64..1.5, b0 in -0.5f64..0.5) {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let n = normalize(&derive_coefficients_toy(1.0).unwrap()).unwrap();
        let p = AmplitudeParams::from_normalized(&n, 1.0);
        let s = AmplitudeState::new(
            Field::from_fn(&g, |x| C64::new(a0 + 0.2 * x.cos(), 0.3 * x.sin())),
            Field::from_real_fn(&g, |x| b0 * x.cos()),
            0.0,
        ).unwrap();
        let rot = C64::new(0.0, phi).exp();
        let r = AmplitudeState::new(s.a.scale(rot), s.b.clone(), 0.0).unwrap();
        let (x, y) = (step_amplitude(&p, &s, 0.02).unwrap(), step_amplitude(&p, &r, 0.02).unwrap());
        prop_assert!(x.a.scale(rot).max_abs_diff(&y.a).unwrap() < 1e-12);
        prop_assert!(x.b.max_abs_diff(&y.b).unwrap() < 1e-12);
    }

    #[test]
    fn mode_filter_is_a_projection_on_its_plateaus(dt in 0.2f64..1.0) {
        let g = make_grid(128, 2.0 * PI / 0.05).unwrap();
        for (j, &k) in g.wavenumbers().iter().enumerate().step_by(3) {
            let s = mode_filter_symbol(k, dt);
            if k.abs() <= 0.45 * dt { prop_assert_eq!(s, 1.0, "j={}", j); }
            if k.abs() >= 0.55 * dt { prop_assert_eq!(s, 0.0, "j={}", j); }
        }
    }
}
