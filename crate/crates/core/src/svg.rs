//! Small hand-written SVG output: line plots and labelled cell maps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// "Nice" tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(out: &mut String, title: &str, xlabel: &str, ylabel: &str, xr: (f64, f64), yr: (f64, f64)) {
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for t in ticks(xr.0, xr.1, 6) {
        let px = LEFT + (t - xr.0) / (xr.1 - xr.0) * pw;
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            fmt_tick(t)
        );
    }
    for t in ticks(yr.0, yr.1, 6) {
        let py = TOP + ph - (t - yr.0) / (yr.1 - yr.0) * ph;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(ylabel)
    );
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let xr = range(pts().map(|p| p.0));
    let (ylo, yhi) = range(pts().map(|p| p.1));
    let yr = (ylo.min(0.0), yhi + 0.05 * (yhi - ylo.min(0.0)));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let mut out = String::new();
    frame(&mut out, title, xlabel, ylabel, xr, yr);
    for (n, s) in series.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        let mut d = String::new();
        for (x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let px = LEFT + (x - xr.0) / (xr.1 - xr.0) * pw;
            let py = TOP + ph - (y - yr.0) / (yr.1 - yr.0) * ph;
            let _ = write!(d, "{}{px:.2},{py:.2}", if d.is_empty() { "M" } else { " L" });
        }
        let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.6"/>"#);
        let ly = TOP + 14.0 + 18.0 * n as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Colored cell map over a regular grid. `cell(i, j)` gives the category of
/// column `i`, row `j`, or `None` for an empty cell.
#[allow(clippy::too_many_arguments)]
pub fn cell_map<F>(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    nx: usize,
    ny: usize,
    extent: (f64, f64),
    categories: &[(&str, &str)],
    cell: F,
) -> String
where
    F: Fn(usize, usize) -> Option<usize>,
{
    let h = (extent.0 / (nx - 1).max(1) as f64, extent.1 / (ny - 1).max(1) as f64);
    let xr = (-0.5 * h.0, extent.0 + 0.5 * h.0);
    let yr = (-0.5 * h.1, extent.1 + 0.5 * h.1);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let cw = pw / nx as f64;
    let ch = ph / ny as f64;
    let mut out = String::new();
    frame(&mut out, title, xlabel, ylabel, xr, yr);
    let _ = writeln!(out, r#"<g shape-rendering="crispEdges">"#);
    for j in 0..ny {
        // merge runs of equal cells along a row to keep the file small
        let mut i = 0;
        while i < nx {
            let c = cell(i, j);
            let mut end = i + 1;
            while end < nx && cell(end, j) == c {
                end += 1;
            }
            if let Some(c) = c {
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    LEFT + i as f64 * cw,
                    TOP + ph - (j + 1) as f64 * ch,
                    (end - i) as f64 * cw,
                    ch,
                    categories[c].1
                );
            }
            i = end;
        }
    }
    out.push_str("</g>\n");
    for (n, (name, color)) in categories.iter().enumerate() {
        let ly = TOP + 8.0 + 18.0 * n as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<rect x="{lx}" y="{ly}" width="14" height="12" fill="{color}" stroke="black" stroke-width="0.5"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            ly + 10.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 10.0, 5), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let t = ticks(0.13, 0.97, 4);
        assert!(t.iter().all(|v| (v * 4.0).fract().abs() < 1e-9));
    }

    #[test]
    fn plot_has_one_path_per_series() {
        let s = vec![
            Series { name: "a".into(), points: vec![(0.0, 0.0), (1.0, 1.0)] },
            Series { name: "b<c".into(), points: vec![(0.0, 1.0), (1.0, 2.0)] },
        ];
        let svg = line_plot("t", "x", "v", &s);
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.contains("b&lt;c"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn cell_map_merges_runs() {
        let svg = cell_map("m", "x", "k", 4, 2, (3.0, 1.0), &[("A", "#000"), ("B", "#fff")], |i, _| {
            Some(usize::from(i >= 2))
        });
        // background and frame, two runs per row, two legend swatches
        assert_eq!(svg.matches("<rect").count(), 2 + 4 + 2);
    }
}
