//! Two patrol laps with exact measurements and with every scale at 1.5.
//!
//! cargo run --example simulate_patrol -- [trace.csv]

use cbf_lp::geometry::Environment;
use cbf_lp::sim::{run_patrol, trace_metrics, ErrorMode, ErrorModel, PatrolConfig};
use cbf_lp::synthesis::{synthesize_all, SynthesisConfig};
use nalgebra::DVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = Environment::from_file(concat!(env!("CARGO_MANIFEST_DIR"), "/../../env/paperlike.json").as_ref())?;
    let n = env.num_landmarks();
    let gains = synthesize_all(&env, &SynthesisConfig::new(n))?
        .into_iter()
        .map(|(i, r)| (i, r.gains))
        .collect();
    let x0 = DVector::from_vec(vec![3.0, 5.0]);
    let cfg = PatrolConfig::default();

    let exact = run_patrol(&env, &gains, &ErrorModel::exact(n), &x0, &cfg)?;
    let scaled = run_patrol(
        &env,
        &gains,
        &ErrorModel::new(ErrorMode::Constant { s: vec![1.5; n] }, n, 1.0 / 1.5, 1.5),
        &x0,
        &cfg,
    )?;
    for (name, t) in [("exact", &exact), ("s = 1.5", &scaled)] {
        let m = trace_metrics(t, Some(&exact))?;
        println!(
            "{name:<8} {} laps in {:.2} s, min h {:+.4}, mean deviation {:.4}",
            m.laps_completed,
            m.duration,
            m.min_barrier,
            m.mean_deviation.unwrap_or(f64::NAN)
        );
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, exact.to_csv())?;
        println!("wrote {path}");
    }
    Ok(())
}
