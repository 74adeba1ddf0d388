use std::fmt::Write as _;
use std::io;
use std::path::Path;

use super::LinearProgram;

/// Renders `lp` in a fixed-width plain-text layout: a header line, the
/// objective row, one line per constraint row (`LE` then `EQ`), then the
/// variable bounds. Every number occupies 25 columns in `%.16e` form.
pub fn dump_lp(lp: &LinearProgram) -> String {
    let mut out = String::new();
    let d = lp.dim();
    let _ = writeln!(out, "LP {d} {} {}", lp.ineq_matrix.nrows(), lp.eq_matrix.nrows());
    let num = |out: &mut String, v: f64| {
        let _ = write!(out, " {v:>24.16e}");
    };
    out.push_str("OBJ");
    for v in lp.cost.iter() {
        num(&mut out, *v);
    }
    out.push('\n');
    for i in 0..lp.ineq_matrix.nrows() {
        out.push_str("LE ");
        num(&mut out, lp.ineq_rhs[i]);
        for j in 0..d {
            num(&mut out, lp.ineq_matrix[(i, j)]);
        }
        out.push('\n');
    }
    for i in 0..lp.eq_matrix.nrows() {
        out.push_str("EQ ");
        num(&mut out, lp.eq_rhs[i]);
        for j in 0..d {
            num(&mut out, lp.eq_matrix[(i, j)]);
        }
        out.push('\n');
    }
    for j in 0..d {
        let fmt = |b: Option<f64>| match b {
            Some(v) => format!("{v:>24.16e}"),
            None => format!("{:>24}", "free"),
        };
        let _ = writeln!(out, "BND {j:>6} {} {}", fmt(lp.lower[j]), fmt(lp.upper[j]));
    }
    out
}

pub fn write_lp_dump(lp: &LinearProgram, path: &Path) -> io::Result<()> {
    std::fs::write(path, dump_lp(lp))
}
