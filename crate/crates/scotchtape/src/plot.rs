//! Minimal self-contained SVG charts.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points }
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn from_values(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Self { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
            return Self { lo: lo - pad, hi: hi + pad };
        }
        let pad = 0.05 * (hi - lo);
        Self { lo: lo - pad, hi: hi + pad }
    }

    fn ticks(&self) -> Vec<f64> {
        let span = self.hi - self.lo;
        let raw = span / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi + 1e-9 * step {
            out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
            t += step;
        }
        out
    }
}

struct Frame {
    x: Axis,
    y: Axis,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.lo) / (self.x.hi - self.x.lo) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.lo) / (self.y.hi - self.y.lo) * (H - TOP - BOTTOM)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
"#,
        W / 2.0,
        esc(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(out, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    for t in f.x.ticks() {
        let x = f.px(t);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            y1 + 5.0,
            y1 + 18.0,
            fmt_tick(t)
        );
    }
    for t in f.y.ticks() {
        let y = f.py(t);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 20.0, esc(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        esc(ylabel)
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 14.0 + 16.0 * i as f64;
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/><text x="{}" y="{}">{}</text>"#,
            LEFT + 10.0,
            y - 9.0,
            LEFT + 25.0,
            y,
            esc(name)
        );
    }
}

fn frame_for(series: &[Series], extra: &[(f64, f64)]) -> Frame {
    let pts = || series.iter().flat_map(|s| s.points.iter().copied()).chain(extra.iter().copied());
    Frame { x: Axis::from_values(pts().map(|p| p.0)), y: Axis::from_values(pts().map(|p| p.1)) }
}

pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let f = frame_for(series, &[]);
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel);
    for (i, s) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(out, r#"<polyline class="series" fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        for p in &pts {
            let (x, y) = p.split_once(',').unwrap();
            let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{c}"/>"#);
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Scatter plot; with `diagonal` the reference line `y = x` is drawn across
/// the shared range.
pub fn scatter_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], diagonal: bool) -> String {
    let mut f = frame_for(series, &[]);
    if diagonal {
        let lo = f.x.lo.min(f.y.lo);
        let hi = f.x.hi.max(f.y.hi);
        f = Frame { x: Axis { lo, hi }, y: Axis { lo, hi } };
    }
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel);
    if diagonal {
        let _ = writeln!(
            out,
            r#"<line class="diagonal" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
            f.px(f.x.lo),
            f.py(f.x.lo),
            f.px(f.x.hi),
            f.py(f.x.hi)
        );
    }
    for (i, s) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        for &(x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = writeln!(out, r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="{c}" fill-opacity="0.7"/>"#, f.px(x), f.py(y));
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Overlaid per-group histograms sharing `bin_edges`.
pub fn histogram_plot(title: &str, xlabel: &str, bin_edges: &[f64], groups: &[(String, Vec<usize>)]) -> String {
    let max_count = groups.iter().flat_map(|g| g.1.iter()).copied().max().unwrap_or(1).max(1);
    let xs = bin_edges.iter().map(|&e| (e, 0.0));
    let f = Frame {
        x: Axis::from_values(xs.map(|p| p.0)),
        y: Axis { lo: 0.0, hi: max_count as f64 * 1.05 },
    };
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, xlabel, "count");
    for (i, (_, counts)) in groups.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        for (b, &cnt) in counts.iter().enumerate() {
            if b + 1 >= bin_edges.len() {
                break;
            }
            let x0 = f.px(bin_edges[b]);
            let x1 = f.px(bin_edges[b + 1]);
            let y = f.py(cnt as f64);
            let _ = writeln!(
                out,
                r#"<rect class="bar" data-group="{i}" data-count="{cnt}" x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{c}" fill-opacity="0.45"/>"#,
                (x1 - x0).max(0.0),
                (f.py(0.0) - y).max(0.0)
            );
        }
    }
    let names: Vec<&str> = groups.iter().map(|g| g.0.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Grid heatmap: `cells[row][col]` with rows along `y_values` and columns
/// along `x_values` (both categorical, drawn in the given order).
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    pub cells: Vec<Vec<f64>>,
    /// Curves in data coordinates, placed by log-interpolation between the
    /// categorical positions.
    pub overlay: Vec<Series>,
    pub vmin: f64,
    pub vmax: f64,
}

fn color(t: f64) -> String {
    // Linear ramp dark blue -> teal -> yellow.
    let stops = [(0.0, (68.0, 1.0, 84.0)), (0.5, (33.0, 145.0, 140.0)), (1.0, (253.0, 231.0, 37.0))];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let (a, b) = if t <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let u = (t - a.0) / (b.0 - a.0);
    let mix = |p: f64, q: f64| (p + u * (q - p)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.1 .0, b.1 .0), mix(a.1 .1, b.1 .1), mix(a.1 .2, b.1 .2))
}

fn log_position(values: &[f64], v: f64) -> Option<f64> {
    if values.len() < 2 || v <= 0.0 {
        return None;
    }
    let lv: Vec<f64> = values.iter().map(|x| x.ln()).collect();
    let t = v.ln();
    for i in 0..lv.len() - 1 {
        let (a, b) = (lv[i], lv[i + 1]);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if t >= lo - 1e-12 && t <= hi + 1e-12 {
            return Some(i as f64 + (t - a) / (b - a));
        }
    }
    None
}

pub fn heatmap_plot(title: &str, xlabel: &str, ylabel: &str, hm: &Heatmap) -> String {
    let nx = hm.x_values.len().max(1);
    let ny = hm.y_values.len().max(1);
    let plot_w = W - LEFT - RIGHT - 70.0;
    let plot_h = H - TOP - BOTTOM;
    let cw = plot_w / nx as f64;
    let ch = plot_h / ny as f64;
    let span = if hm.vmax > hm.vmin { hm.vmax - hm.vmin } else { 1.0 };
    let mut out = String::new();
    open(&mut out, title);
    for (r, row) in hm.cells.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let x = LEFT + c as f64 * cw;
            // Row 0 at the bottom.
            let y = TOP + (ny - 1 - r) as f64 * ch;
            let _ = writeln!(
                out,
                r#"<rect class="cell" data-value="{v}" x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{}"/>"#,
                color((v - hm.vmin) / span)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="white" font-size="10">{}</text>"#,
                x + cw / 2.0,
                y + ch / 2.0 + 4.0,
                fmt_tick(v)
            );
        }
    }
    for (c, v) in hm.x_values.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + (c as f64 + 0.5) * cw,
            H - BOTTOM + 18.0,
            fmt_tick(*v)
        );
    }
    for (r, v) in hm.y_values.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            TOP + (ny - 1 - r) as f64 * ch + ch / 2.0 + 4.0,
            fmt_tick(*v)
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + plot_w / 2.0, H - 20.0, esc(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        esc(ylabel)
    );
    for s in &hm.overlay {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter_map(|&(x, y)| {
                let cx = log_position(&hm.x_values, x)?;
                let cy = log_position(&hm.y_values, y)?;
                Some(format!("{:.2},{:.2}", LEFT + (cx + 0.5) * cw, TOP + (ny as f64 - 1.0 - cy + 0.5) * ch))
            })
            .collect();
        if pts.len() >= 2 {
            let _ = writeln!(
                out,
                r#"<polyline class="iso" fill="none" stroke="white" stroke-dasharray="5 3" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
    }
    // Colour legend with numeric labels.
    let lx = W - RIGHT - 40.0;
    let steps = 20;
    for i in 0..steps {
        let t = i as f64 / (steps - 1) as f64;
        let y = TOP + plot_h - (i + 1) as f64 * plot_h / steps as f64;
        let _ = writeln!(
            out,
            r#"<rect class="legend" x="{lx}" y="{y:.2}" width="14" height="{:.2}" fill="{}"/>"#,
            plot_h / steps as f64 + 0.5,
            color(t)
        );
    }
    for (t, v) in [(0.0, hm.vmin), (0.5, 0.5 * (hm.vmin + hm.vmax)), (1.0, hm.vmax)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}">{}</text>"#,
            lx + 18.0,
            TOP + plot_h * (1.0 - t) + 4.0,
            fmt_tick(v)
        );
    }
    out.push_str("</svg>\n");
    out
}
