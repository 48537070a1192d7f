use std::fmt::Write;

use super::SweepPoint;
use crate::bpe::Scheme;

const PANEL_W: f64 = 260.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 45.0;

/// Three side-by-side panels of `mu`, `D` and `log10(F_P)` against
/// `log10(K)`. BPE points are joined by a line; baselines are drawn as
/// squares.
pub fn render_svg(points: &[SweepPoint]) -> String {
    let width = 3.0 * (PANEL_W + MARGIN) + MARGIN;
    let height = PANEL_H + 2.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let xs: Vec<f64> = points.iter().map(|p| (p.stats.k.max(1) as f64).log10()).collect();
    let panels: [(&str, Vec<f64>); 3] = [
        ("mu", points.iter().map(|p| p.stats.mu).collect()),
        ("D", points.iter().map(|p| p.stats.d).collect()),
        ("log10 F_P", points.iter().map(|p| (p.stats.f_p.max(1) as f64).log10()).collect()),
    ];
    for (i, (title, ys)) in panels.iter().enumerate() {
        let left = MARGIN + i as f64 * (PANEL_W + MARGIN);
        panel(&mut svg, left, title, points, &xs, ys);
    }
    svg.push_str("</svg>\n");
    svg
}

fn range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn panel(svg: &mut String, left: f64, title: &str, points: &[SweepPoint], xs: &[f64], ys: &[f64]) {
    let top = MARGIN;
    let (x0, x1) = range(xs);
    let (y0, y1) = range(ys);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * PANEL_W;
    let py = |y: f64| top + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;

    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
    );
    let _ =
        writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{title}</text>"#, left + PANEL_W / 2.0, top - 10.0);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">log10 K</text>"#,
        left + PANEL_W / 2.0,
        top + PANEL_H + 30.0
    );
    for (value, anchor_y) in [(y0, top + PANEL_H), (y1, top + 10.0)] {
        let _ = writeln!(svg, r#"<text x="{}" y="{anchor_y}" text-anchor="end">{value:.2}</text>"#, left - 4.0);
    }
    for (value, anchor_x) in [(x0, left), (x1, left + PANEL_W)] {
        let _ = writeln!(
            svg,
            r#"<text x="{anchor_x}" y="{}" text-anchor="middle">{value:.2}</text>"#,
            top + PANEL_H + 14.0
        );
    }

    let mut bpe: Vec<usize> = (0..points.len()).filter(|&i| points[i].scheme == Scheme::Bpe).collect();
    bpe.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    if bpe.len() > 1 {
        let path: Vec<String> = bpe.iter().map(|&i| format!("{:.2},{:.2}", px(xs[i]), py(ys[i]))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
            path.join(" ")
        );
    }
    for (i, p) in points.iter().enumerate() {
        let (x, y) = (px(xs[i]), py(ys[i]));
        match p.scheme {
            Scheme::Bpe => {
                let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="steelblue"/>"#);
            }
            baseline => {
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.2}" y="{:.2}" width="7" height="7" fill="darkorange"><title>{baseline}</title></rect>"#,
                    x - 3.5,
                    y - 3.5
                );
            }
        }
    }
}
