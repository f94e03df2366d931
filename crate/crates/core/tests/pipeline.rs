use hopf_cl::amplitude::*;
use hopf_cl::approximation::*;
use hopf_cl::models::toy_model;
use hopf_cl::rd_solver::*;
use hopf_cl::spectral::*;

#[test]
fn residual_drops_with_theta() {
    let mut last = f64::INFINITY;
    for theta in 1..=3 {
        let r = residual_experiment(&ResidualConfig {
            theta,
            deltas: vec![0.1],
            checkpoints: 2,
            ..Default::default()
        })
        .unwrap();
        let res1 = r.cells[0].sup.res1;
        assert!(res1 < last, "theta {theta}: {res1} vs {last}");
        last = res1;
    }
}

#[test]
fn residual_of_zero_envelope_vanishes() {
    let r = residual_experiment(&ResidualConfig {
        deltas: vec![0.2],
        envelope: Envelope::zero(),
        checkpoints: 1,
        ..Default::default()
    })
    .unwrap();
    let s = r.cells[0].sup;
    assert_eq!((s.res1, s.res_s, s.res_v), (0.0, 0.0, 0.0));
}

#[test]
fn initial_mismatch_of_order_delta_theta_keeps_the_rate() {
    let cfg = ApproximationConfig {
        deltas: vec![0.2, 0.1],
        t0: 0.3,
        ic_perturbation: 1.0,
        ..Default::default()
    };
    let r = approximation_experiment(&cfg).unwrap();
    assert!(r.fit.unwrap().slope >= cfg.theta as f64 - 0.4);
}

#[test]
fn manifold_point_scales_like_delta() {
    let slow = make_grid(SLOW_POINTS, SLOW_LENGTH).unwrap();
    let omega0 = 1.0;
    let params = AmplitudeParams::from_raw(&derive_coefficients_toy(omega0).unwrap(), 1.0);
    let s = Envelope::default().state(&slow);
    let mut consts = Vec::new();
    for delta in [0.2, 0.1] {
        let fast = fast_grid_for(&slow, delta, default_fast_points(delta, SLOW_POINTS)).unwrap();
        let b = PsiBuilder::new(AnsatzSpec::new(2).unwrap(), params, omega0, delta, &slow, &fast).unwrap();
        let p = GLManifoldPoint::new(&b, s.clone(), delta).unwrap();
        consts.push(p.scaling_constants());
    }
    let (u0, v0) = consts[0];
    let (u1, v1) = consts[1];
    assert!((u0 / u1 - 1.0).abs() < 0.3 && (v0 / v1 - 1.0).abs() < 0.3, "{consts:?}");
}

#[test]
fn extraction_recovers_the_envelope_of_a_built_state() {
    let slow = make_grid(SLOW_POINTS, SLOW_LENGTH).unwrap();
    let delta = 0.05;
    let omega0 = 1.0;
    let fast = fast_grid_for(&slow, delta, default_fast_points(delta, SLOW_POINTS)).unwrap();
    let params = AmplitudeParams::from_raw(&derive_coefficients_toy(omega0).unwrap(), 1.0);
    let b = PsiBuilder::new(AnsatzSpec::new(1).unwrap(), params, omega0, delta, &slow, &fast).unwrap();
    let env = Envelope::default().state(&slow);
    let (u, v) = b.build_at(&env, 3.0).unwrap();
    let st = RdState::new(u, v, 3.0).unwrap();
    let model = toy_model(omega0, delta).unwrap();
    let sp = hopf_cl::linear::ModeSplitter::new(&model.linearization(), &fast, 0.5).unwrap();
    let (a, bb) = extract_amplitudes(&st, &sp, delta, omega0, &toy_ansatz_vector(), &slow).unwrap();
    let a1 = match_initial_amplitude(&a, omega0, delta, st.t);
    assert!(a1.max_abs_diff(&env.a).unwrap() < 5.0 * delta * delta, "{}", a1.max_abs_diff(&env.a).unwrap());
    assert!(bb.max_abs_diff(&env.b).unwrap() < 5.0 * delta);
}

#[test]
fn reports_serialize() {
    let dir = tempfile::tempdir().unwrap();
    let r = residual_experiment(&ResidualConfig {
        deltas: vec![0.2],
        checkpoints: 1,
        ..Default::default()
    })
    .unwrap();
    let p = dir.path().join("r.json");
    write_json(&r, &p).unwrap();
    let back: ResidualReport = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    assert_eq!(back.cells[0].n_fast, r.cells[0].n_fast);
}
