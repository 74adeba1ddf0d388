//! Certify synthesized gains with the independent oracle, then break one
//! cell and watch it fail.

use cbf_lp::geometry::Environment;
use cbf_lp::synthesis::{synthesize_all, SynthesisConfig};
use cbf_lp::verify::check_gains;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = Environment::from_file(concat!(env!("CARGO_MANIFEST_DIR"), "/../../env/paperlike.json").as_ref())?;
    let cfg = SynthesisConfig::new(env.num_landmarks());
    let mut gains: std::collections::BTreeMap<_, _> = synthesize_all(&env, &cfg)?
        .into_iter()
        .map(|(i, r)| (i, r.gains))
        .collect();

    let report = check_gains(&env, &gains, &cfg)?;
    for c in &report.cells {
        println!(
            "cell {:?}: min residual {:+.3e} pass {}",
            c.cell, c.min_residual, c.pass
        );
    }

    gains.get_mut(&0).unwrap().feedback[(0, 0)] += 10.0;
    let report = check_gains(&env, &gains, &cfg)?;
    println!("after perturbing cell 0: failing {:?}", report.failing);
    for f in &report.cells[0].families {
        if f.worst_residual < 0.0 {
            println!(
                "  {} {:+.3} at x = {:?}, s = {:?}",
                f.family, f.worst_residual, f.worst_x, f.worst_s
            );
        }
    }
    Ok(())
}
