//! Deterministic SVG rendering of environments, traces and sweep curves.

use std::fmt::Write;

use crate::geometry::Environment;
use crate::sim::Trace;
use crate::synthesis::SweepRow;

const WIDTH: f64 = 640.0;
const MARGIN: f64 = 24.0;
const LAP_COLORS: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

struct Frame {
    min: (f64, f64),
    scale: f64,
    height: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for (x, y) in points {
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        if !lo.0.is_finite() {
            lo = (0.0, 0.0);
            hi = (1.0, 1.0);
        }
        let span = (hi.0 - lo.0).max(hi.1 - lo.1).max(1e-9);
        let scale = (WIDTH - 2.0 * MARGIN) / span;
        Self {
            min: lo,
            scale,
            height: (hi.1 - lo.1) * scale + 2.0 * MARGIN,
        }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (
            MARGIN + (x - self.min.0) * self.scale,
            self.height - MARGIN - (y - self.min.1) * self.scale,
        )
    }
}

fn num(v: f64) -> String {
    format!("{:.2}", v)
}

/// Cells, landmarks, dashed exit faces, and one polyline per lap of each trace.
pub fn plot_environment_svg(env: &Environment, traces: &[Trace]) -> String {
    let verts: Vec<Vec<nalgebra::DVector<f64>>> = env
        .cells()
        .iter()
        .map(|c| c.polytope().vertices().unwrap_or_default())
        .collect();
    let lm = env.landmarks();
    let frame = Frame::fit(
        verts
            .iter()
            .flatten()
            .map(|v| (v[0], v[1]))
            .chain((0..lm.ncols()).map(|j| (lm[(0, j)], lm[(1, j)])))
            .chain(traces.iter().flat_map(|t| t.rows.iter().map(|r| (r.x[0], r.x[1])))),
    );
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = num(WIDTH),
        h = num(frame.height)
    );
    let _ = writeln!(
        s,
        r##"<g id="cells" fill="#f2f2f2" stroke="#555555" stroke-width="1">"##
    );
    for (i, vs) in verts.iter().enumerate() {
        let pts: Vec<String> = vs
            .iter()
            .map(|v| {
                let (x, y) = frame.map(v[0], v[1]);
                format!("{},{}", num(x), num(y))
            })
            .collect();
        let _ = writeln!(s, r#"<polygon data-cell="{i}" points="{}"/>"#, pts.join(" "));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r##"<g id="exit-faces" stroke="#d62728" stroke-width="2" stroke-dasharray="6,4">"##
    );
    for (i, c) in env.cells().iter().enumerate() {
        let face: Vec<&nalgebra::DVector<f64>> = verts[i]
            .iter()
            .filter(|v| c.polytope().active_rows(v, 1e-9).contains(&c.exit_face()))
            .collect();
        if let [a, b] = face.as_slice() {
            let (x1, y1) = frame.map(a[0], a[1]);
            let (x2, y2) = frame.map(b[0], b[1]);
            let _ = writeln!(
                s,
                r#"<line data-cell="{i}" x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
                num(x1),
                num(y1),
                num(x2),
                num(y2)
            );
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g id="landmarks" fill="#1f77b4">"##);
    for j in 0..lm.ncols() {
        let (x, y) = frame.map(lm[(0, j)], lm[(1, j)]);
        let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="4"/>"#, num(x), num(y));
    }
    let _ = writeln!(s, "</g>");
    for (ti, t) in traces.iter().enumerate() {
        let Some(first) = t.rows.first() else { continue };
        let _ = writeln!(s, r#"<g id="trace-{ti}" fill="none" stroke-width="1.5">"#);
        for (li, lap) in t.laps(first.cell).iter().enumerate() {
            let pts: Vec<String> = lap
                .iter()
                .map(|r| {
                    let (x, y) = frame.map(r.x[0], r.x[1]);
                    format!("{},{}", num(x), num(y))
                })
                .collect();
            let color = LAP_COLORS[(ti + li) % LAP_COLORS.len()];
            let _ = writeln!(
                s,
                r#"<polyline data-lap="{li}" stroke="{color}" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

/// Step curve of `alpha_star` against `c_v`; failed rows marked on the axis.
pub fn plot_sweep_svg(rows: &[SweepRow]) -> String {
    let height = 400.0;
    let pad = 48.0;
    let ok: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.alpha_star.map(|a| (r.c_v, a))).collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.c_v).collect();
    let (x0, x1) = bounds(&xs);
    let (_, y1) = bounds(&ok.iter().map(|p| p.1).collect::<Vec<_>>());
    let (y0, y1) = (0.0, y1.max(1.0));
    let mx = |x: f64| pad + (x - x0) / (x1 - x0).max(1e-12) * (WIDTH - 2.0 * pad);
    let my = |y: f64| height - pad - (y - y0) / (y1 - y0).max(1e-12) * (height - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = num(WIDTH),
        h = num(height)
    );
    let _ = writeln!(
        s,
        r##"<g id="axes" stroke="#333333"><line x1="{p}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{p}" y1="{b}" x2="{p}" y2="{t}"/></g>"##,
        p = num(pad),
        b = num(height - pad),
        r = num(WIDTH - pad),
        t = num(pad)
    );
    let _ = writeln!(
        s,
        r#"<g id="labels" font-family="sans-serif" font-size="12"><text x="{}" y="{}">c_v</text><text x="4" y="{}">alpha*</text></g>"#,
        num(WIDTH / 2.0),
        num(height - 12.0),
        num(pad - 12.0)
    );
    let mut path = String::new();
    for (i, (x, y)) in ok.iter().enumerate() {
        if i == 0 {
            let _ = write!(path, "M{},{}", num(mx(*x)), num(my(*y)));
        } else {
            let _ = write!(path, " H{} V{}", num(mx(*x)), num(my(*y)));
        }
    }
    let _ = writeln!(
        s,
        r##"<path id="curve" fill="none" stroke="#1f77b4" stroke-width="2" d="{path}"/>"##
    );
    let _ = writeln!(s, r##"<g id="points" fill="#1f77b4">"##);
    for (x, y) in &ok {
        let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="3"/>"#, num(mx(*x)), num(my(*y)));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g id="failed" stroke="#d62728">"##);
    for r in rows.iter().filter(|r| r.alpha_star.is_none()) {
        let (x, y) = (mx(r.c_v), height - pad);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/><line x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
            num(x - 4.0),
            num(y - 4.0),
            num(x + 4.0),
            num(y + 4.0),
            num(x - 4.0),
            num(y + 4.0),
            num(x + 4.0),
            num(y - 4.0)
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}
