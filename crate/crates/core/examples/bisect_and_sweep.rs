//! Widest scale box per cell, then alpha* against the Lyapunov decay rate.

use cbf_lp::geometry::Environment;
use cbf_lp::synthesis::{bisect_smax, sweep_csv, sweep_cv, SynthesisConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = Environment::from_file(concat!(env!("CARGO_MANIFEST_DIR"), "/../../env/paperlike.json").as_ref())?;
    let cfg = SynthesisConfig::new(env.num_landmarks());
    for (i, cell) in env.cells().iter().enumerate() {
        let o = bisect_smax(cell, &env, &cfg, 1e-3)?;
        println!(
            "cell {i}: alpha* = {:.4}{} after {} solves",
            o.alpha_star,
            if o.capped { " (capped)" } else { "" },
            o.solves
        );
    }
    let rows = sweep_cv(env.cell(0), &env, &cfg, &[0.1, 0.2, 0.5, 1.0, 2.0, 5.0], 1e-3);
    print!("{}", sweep_csv(&rows));
    Ok(())
}
