//! Write the environment figure with an exact patrol and the sweep figure.
//!
//! cargo run --example plot_figures -- [out_dir]

use std::path::PathBuf;

use cbf_lp::cli::{plot_environment_svg, plot_sweep_svg};
use cbf_lp::geometry::Environment;
use cbf_lp::sim::{run_patrol, ErrorModel, PatrolConfig};
use cbf_lp::synthesis::{sweep_cv, synthesize_all, SynthesisConfig};
use nalgebra::DVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&out)?;
    let env = Environment::from_file(concat!(env!("CARGO_MANIFEST_DIR"), "/../../env/paperlike.json").as_ref())?;
    let n = env.num_landmarks();
    let cfg = SynthesisConfig::new(n);
    let gains = synthesize_all(&env, &cfg)?
        .into_iter()
        .map(|(i, r)| (i, r.gains))
        .collect();
    let trace = run_patrol(
        &env,
        &gains,
        &ErrorModel::exact(n),
        &DVector::from_vec(vec![3.0, 5.0]),
        &PatrolConfig::default(),
    )?;
    std::fs::write(out.join("environment.svg"), plot_environment_svg(&env, &[trace]))?;
    let rows = sweep_cv(env.cell(0), &env, &cfg, &[0.1, 0.2, 0.5, 1.0, 2.0, 5.0], 1e-3);
    std::fs::write(out.join("sweep.svg"), plot_sweep_svg(&rows))?;
    println!(
        "wrote {}/environment.svg and {}/sweep.svg",
        out.display(),
        out.display()
    );
    Ok(())
}
