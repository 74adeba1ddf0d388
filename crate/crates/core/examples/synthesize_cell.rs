//! Robust synthesis on one cell, with the layout of the assembled program
//! and the recovered gains.
//!
//! cargo run --example synthesize_cell -- [cell]

use cbf_lp::geometry::Environment;
use cbf_lp::synthesis::{assemble_robust_lp, synthesize_cell, SynthesisConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let idx: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let env = Environment::from_file(concat!(env!("CARGO_MANIFEST_DIR"), "/../../env/paperlike.json").as_ref())?;
    let cfg = SynthesisConfig::new(env.num_landmarks());
    let cell = env.cell(idx);

    let robust = assemble_robust_lp(cell, &env, &cfg)?;
    println!(
        "cell {idx}: {} variables, {} inequalities, {} equalities",
        robust.lp.dim(),
        robust.lp.ineq_rhs.len(),
        robust.lp.eq_rhs.len()
    );
    for (name, range) in robust.layout.named_ranges() {
        println!("  {name:<12} {range:?}");
    }

    let result = synthesize_cell(cell, &env, &cfg)?;
    println!("objective {}", result.objective);
    println!("K = {:.4}", result.gains.feedback);
    println!("k = {:.4}", result.gains.offset.transpose());
    println!(
        "barrier slack {:.4}, Lyapunov slack {:.4}",
        result.slack_h.transpose(),
        result.slack_v
    );
    Ok(())
}
