//! Load the six-cell ring and print each cell's vertices, exit face and
//! successor.
//!
//! cargo run --example load_environment -- [env.json]

use cbf_lp::geometry::Environment;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../env/paperlike.json").into());
    let env = Environment::from_file(path.as_ref())?;
    println!(
        "{} cells, {} landmarks, n = {}, m = {}",
        env.cells().len(),
        env.num_landmarks(),
        env.state_dim(),
        env.dynamics().input_dim()
    );
    for (i, c) in env.cells().iter().enumerate() {
        let verts: Vec<String> = c
            .polytope()
            .vertices()?
            .iter()
            .map(|v| format!("({}, {})", v[0], v[1]))
            .collect();
        println!(
            "cell {i}: {} rows, exit row {}, next {:?}, vertices {}",
            c.polytope().num_rows(),
            c.exit_face(),
            c.next_cell(),
            verts.join(" ")
        );
    }
    let (route, closes) = env.patrol_route(0);
    println!("route from cell 0: {route:?} (cycle: {closes})");
    Ok(())
}
