//! A small dense LP through the builder: minimize -x - 2y subject to
//! x + y <= 4, x + 3y <= 6, 0 <= x <= 3, y >= 0.

use cbf_lp::lp::{solve_lp, LpBuilder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut b = LpBuilder::new(2);
    b.set_cost(0, -1.0);
    b.set_cost(1, -2.0);
    b.set_bounds(0, Some(0.0), Some(3.0));
    b.set_bounds(1, Some(0.0), None);
    b.add_le(vec![(0, 1.0), (1, 1.0)], 4.0);
    b.add_le(vec![(0, 1.0), (1, 3.0)], 6.0);
    let lp = b.build();
    let sol = solve_lp(&lp)?;
    println!("status {:?}", sol.status);
    println!("y = [{}, {}], objective {}", sol.y[0], sol.y[1], sol.objective);
    println!("max violation {:e}", sol.max_violation);
    Ok(())
}
