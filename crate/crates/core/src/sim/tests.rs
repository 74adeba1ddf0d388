use super::*;
use crate::geometry::Environment;
use crate::synthesis::{synthesize_all, SynthesisConfig};

fn fixture() -> Environment {
    Environment::from_file(std::path::Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../env/paperlike.json"
    )))
    .unwrap()
}

fn fixture_gains(env: &Environment) -> BTreeMap<usize, Gains> {
    synthesize_all(env, &SynthesisConfig::new(env.num_landmarks()))
        .unwrap()
        .into_iter()
        .map(|(i, r)| (i, r.gains))
        .collect()
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

#[test]
fn measurement_examples() {
    let l = DMatrix::from_column_slice(2, 2, &[4.0, 0.0, 0.0, 3.0]);
    assert_eq!(
        measure(&v(&[1.0, 1.0]), &l, &[1.0, 1.0]).as_slice(),
        &[3.0, -1.0, -1.0, 2.0]
    );
    assert_eq!(
        measure(&v(&[1.0, 1.0]), &l, &[1.0, 2.0]).as_slice(),
        &[3.0, -1.0, -2.0, 4.0]
    );
    let y = measure(&v(&[4.0, 0.0]), &l, &[0.7, 1.3]);
    assert_eq!(&y.as_slice()[..2], &[0.0, 0.0]);
}

#[test]
fn control_examples() {
    let g = Gains {
        feedback: DMatrix::zeros(2, 4),
        offset: v(&[1.0, 0.0]),
    };
    let (raw, applied) = control_input(&g, &v(&[5.0, 6.0, 7.0, 8.0]), Normalization::Off);
    assert_eq!(raw, v(&[1.0, 0.0]));
    assert_eq!(applied, raw);
    let g = Gains {
        feedback: DMatrix::zeros(2, 2),
        offset: v(&[3.0, 4.0]),
    };
    let (_, applied) = control_input(&g, &v(&[0.0, 0.0]), Normalization::Speed { v_ref: 1.0 });
    assert!((applied - v(&[0.6, 0.8])).norm() <= 1e-15);
    let zero = Gains {
        feedback: DMatrix::zeros(2, 2),
        offset: v(&[0.0, 0.0]),
    };
    let (_, applied) = control_input(&zero, &v(&[1.0, 1.0]), Normalization::Speed { v_ref: 1.0 });
    assert_eq!(applied, v(&[0.0, 0.0]));
}

#[test]
fn rk4_examples() {
    let d = Dynamics::single_integrator(2);
    assert!((step(&v(&[1.0, 2.0]), &v(&[1.0, 0.0]), &d, 0.1) - v(&[1.1, 2.0])).norm() <= 1e-15);
    assert_eq!(step(&v(&[1.0, 2.0]), &v(&[0.0, 0.0]), &d, 0.1), v(&[1.0, 2.0]));
    let decay = Dynamics::new(DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
    let one = step(&v(&[1.0]), &v(&[0.0]), &decay, 0.1);
    assert!((one[0] - (-0.1f64).exp()).abs() <= 0.1f64.powi(5) / 120.0);
    let mut x = v(&[1.0]);
    for _ in 0..10 {
        x = step(&x, &v(&[0.0]), &decay, 0.01);
    }
    assert!((x[0] - (-0.1f64).exp()).abs() <= 1e-8);
}

#[test]
fn error_model_validation() {
    assert!(ErrorModel::new(ErrorMode::Constant { s: vec![2.0; 4] }, 4, 0.5, 1.5)
        .validate(4)
        .is_err());
    assert!(
        ErrorModel::new(ErrorMode::PerStepSubset { count: 5, seed: 0 }, 4, 0.5, 1.5)
            .validate(4)
            .is_err()
    );
    assert!(ErrorModel::new(ErrorMode::PerStepAll { seed: 0 }, 3, 0.5, 1.5)
        .validate(4)
        .is_err());
    let m = ErrorModel::new(ErrorMode::PerStepSubset { count: 2, seed: 7 }, 4, 0.5, 1.5);
    let mut a = m.sampler();
    let mut b = m.sampler();
    for _ in 0..100 {
        let s = a.draw();
        assert_eq!(s, b.draw());
        assert!(s.iter().filter(|v| **v != 1.0).count() <= 2);
        assert!(s.iter().all(|v| (0.5..=1.5).contains(v)));
    }
}

#[test]
fn exact_patrol_completes_two_laps_safely() {
    let env = fixture();
    let gains = fixture_gains(&env);
    let trace = run_patrol(
        &env,
        &gains,
        &ErrorModel::exact(4),
        &v(&[3.0, 5.0]),
        &PatrolConfig::default(),
    )
    .unwrap();
    assert_eq!(trace.termination, Some(Termination::LapsCompleted));
    assert!(trace.laps_completed >= 2);
    assert!(trace.min_barrier() >= -1e-6, "{}", trace.min_barrier());
    assert!(trace.cells_exited.iter().all(|c| *c >= 1));
}

#[test]
fn lyapunov_decreases_without_normalization() {
    let env = fixture();
    let gains = fixture_gains(&env);
    let cfg = PatrolConfig {
        normalize: Normalization::Off,
        max_time: 200.0,
        laps: 1,
        ..PatrolConfig::default()
    };
    let trace = run_patrol(&env, &gains, &ErrorModel::exact(4), &v(&[3.0, 5.0]), &cfg).unwrap();
    for w in trace.rows.windows(2) {
        if w[0].cell == w[1].cell {
            assert!(w[1].v <= w[0].v + 1e-6);
        }
    }
}

#[test]
fn trace_csv_round_trip_and_metrics() {
    let env = fixture();
    let gains = fixture_gains(&env);
    let cfg = PatrolConfig {
        max_time: 5.0,
        ..PatrolConfig::default()
    };
    let trace = run_patrol(&env, &gains, &ErrorModel::exact(4), &v(&[3.0, 5.0]), &cfg).unwrap();
    let csv = trace.to_csv();
    assert!(csv.starts_with("t,x1,x2,u_raw1,u_raw2,u1,u2,cell,s1,s2,s3,s4,h_min,V\n"));
    let back = Trace::from_csv(&csv).unwrap();
    assert_eq!(back.rows, trace.rows);

    let same = trace_metrics(&trace, Some(&trace)).unwrap();
    assert_eq!(same.mean_deviation, Some(0.0));
    let mut shifted = trace.clone();
    for r in &mut shifted.rows {
        r.x[0] += 0.1;
    }
    let m = trace_metrics(&shifted, Some(&trace)).unwrap();
    assert!((m.mean_deviation.unwrap() - 0.1).abs() <= 1e-9);
    let mut empty = trace.clone();
    empty.rows.clear();
    assert!(trace_metrics(&empty, None).is_err());
}

#[test]
fn start_outside_cells_rejected() {
    let env = fixture();
    let gains = fixture_gains(&env);
    let r = run_patrol(
        &env,
        &gains,
        &ErrorModel::exact(4),
        &v(&[15.0, 15.0]),
        &PatrolConfig::default(),
    );
    assert!(matches!(r, Err(SimError::Invalid(_))));
}
