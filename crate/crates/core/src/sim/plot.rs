use std::fmt::Write;

use crate::hybrid::HybridAutomaton;
use crate::models::locate;

/// Phase portrait: direction-field arrows on an `n x n` grid over `bounds`
/// (`[xmin, xmax, ymin, ymax]`) and the trajectory as a polyline. Two-dimensional only.
pub fn phase_portrait_svg(h: &HybridAutomaton, trajectory: &[Vec<f64>], bounds: [f64; 4], n: usize) -> String {
    let size = 600.0;
    let [x0, x1, y0, y1] = bounds;
    let sx = |x: f64| (x - x0) / (x1 - x0) * size;
    let sy = |y: f64| size - (y - y0) / (y1 - y0) * size;
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    // axes
    if x0 < 0.0 && x1 > 0.0 {
        let _ = writeln!(out, r##"<line x1="{0}" y1="0" x2="{0}" y2="{size}" stroke="#bbb"/>"##, sx(0.0));
    }
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(out, r##"<line x1="0" y1="{0}" x2="{size}" y2="{0}" stroke="#bbb"/>"##, sy(0.0));
    }
    let cell = size / n.max(1) as f64;
    for i in 0..n {
        for j in 0..n {
            let x = x0 + (i as f64 + 0.5) / n as f64 * (x1 - x0);
            let y = y0 + (j as f64 + 0.5) / n as f64 * (y1 - y0);
            let Some(loc) = locate(h, &[x, y]) else { continue };
            let f = h.compiled_flow(loc).field(&[x, y]);
            let norm = (f[0] * f[0] + f[1] * f[1]).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                continue;
            }
            let len = 0.4 * cell;
            let (dx, dy) = (f[0] / norm * len, -f[1] / norm * len);
            let (cx, cy) = (sx(x), sy(y));
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-width="1"/><circle cx="{:.2}" cy="{:.2}" r="1.2" fill="#888"/>"##,
                cx - dx / 2.0,
                cy - dy / 2.0,
                cx + dx / 2.0,
                cy + dy / 2.0,
                cx + dx / 2.0,
                cy + dy / 2.0
            );
        }
    }
    if !trajectory.is_empty() {
        let stride = (trajectory.len() / 5000).max(1);
        let pts: Vec<String> =
            trajectory.iter().step_by(stride).map(|p| format!("{:.2},{:.2}", sx(p[0]), sy(p[1]))).collect();
        let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="#c00" stroke-width="1.5"/>"##, pts.join(" "));
    }
    out.push_str("</svg>\n");
    out
}
