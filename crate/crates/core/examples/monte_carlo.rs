//! Seeded random-scale patrols: all landmarks redrawn per step against two
//! of them.
//!
//! cargo run --release --example monte_carlo -- [seeds]

use cbf_lp::geometry::Environment;
use cbf_lp::sim::{monte_carlo, run_patrol, ErrorMode, ErrorModel, PatrolConfig};
use cbf_lp::synthesis::{synthesize_all, SynthesisConfig};
use nalgebra::DVector;

type ModeFor = fn(u64) -> ErrorMode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let env = Environment::from_file(concat!(env!("CARGO_MANIFEST_DIR"), "/../../env/paperlike.json").as_ref())?;
    let n = env.num_landmarks();
    let (lo, hi) = (1.0 / 1.5, 1.5);
    let gains = synthesize_all(&env, &SynthesisConfig::new(n))?
        .into_iter()
        .map(|(i, r)| (i, r.gains))
        .collect();
    let x0 = DVector::from_vec(vec![3.0, 5.0]);
    let cfg = PatrolConfig::default();
    let reference = run_patrol(&env, &gains, &ErrorModel::exact(n), &x0, &cfg)?;

    let families: [(&str, ModeFor); 2] = [
        ("per-step subset(2)", |seed| ErrorMode::PerStepSubset { count: 2, seed }),
        ("per-step all", |seed| ErrorMode::PerStepAll { seed }),
    ];
    for (name, mode) in families {
        let models: Vec<ErrorModel> = (0..seeds).map(|s| ErrorModel::new(mode(s), n, lo, hi)).collect();
        let (summary, _) = monte_carlo(&env, &gains, &models, &x0, &cfg, &reference);
        println!(
            "{name:<20} runs {} aborted {} min h {:+.4} mean deviation {:.4} max deviation {:.4}",
            summary.runs, summary.aborted, summary.min_barrier, summary.mean_deviation, summary.max_deviation
        );
    }
    Ok(())
}
