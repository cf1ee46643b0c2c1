//! Minimal native SVG scatter/line plots; no external tooling.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

pub struct PlotSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn transform(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    if hi <= lo {
        return (out_lo + out_hi) / 2.0;
    }
    out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
}

/// Write a scatter plot (log-log when requested) with an optional fitted
/// power law `ln y = intercept + slope ln x`.
pub fn write_plot(
    path: &Path,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[PlotSeries],
    loglog: bool,
    fit: Option<(f64, f64)>, // (slope, intercept) in log space
) -> Result<()> {
    let map = |v: f64| if loglog { v.ln() } else { v };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(map(x));
            ys.push(map(y));
        }
    }
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);
    let px = |x: f64| transform(map(x), x_lo, x_hi, MARGIN, W - MARGIN / 2.0);
    let py = |y: f64| transform(map(y), y_lo, y_hi, H - MARGIN, MARGIN / 2.0);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        W / 2.0,
        escape(title)
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN / 2.0
    ));
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{m}\" y2=\"{t}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = H - MARGIN,
        t = MARGIN / 2.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
        W / 2.0,
        H - 16.0,
        escape(xlabel)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    ));
    // Extreme tick labels.
    let fmt_tick = |v: f64| {
        let raw = if loglog { v.exp() } else { v };
        format!("{raw:.4}")
    };
    svg.push_str(&format!(
        "<text x=\"{m}\" y=\"{}\" font-size=\"10\">{}</text>\n",
        H - MARGIN + 14.0,
        fmt_tick(x_lo),
        m = MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
        W - MARGIN / 2.0,
        H - MARGIN + 14.0,
        fmt_tick(x_hi)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
        MARGIN - 4.0,
        H - MARGIN,
        fmt_tick(y_lo)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
        MARGIN - 4.0,
        MARGIN / 2.0 + 8.0,
        fmt_tick(y_hi)
    ));

    if let Some((slope, intercept)) = fit {
        if loglog && x_hi > x_lo {
            let y_at = |lx: f64| intercept + slope * lx;
            let (x0, x1) = (x_lo, x_hi);
            let p0 = (
                transform(x0, x_lo, x_hi, MARGIN, W - MARGIN / 2.0),
                transform(y_at(x0), y_lo, y_hi, H - MARGIN, MARGIN / 2.0),
            );
            let p1 = (
                transform(x1, x_lo, x_hi, MARGIN, W - MARGIN / 2.0),
                transform(y_at(x1), y_lo, y_hi, H - MARGIN, MARGIN / 2.0),
            );
            svg.push_str(&format!(
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#888\" stroke-dasharray=\"6 3\"/>\n",
                p0.0, p0.1, p1.0, p1.1
            ));
        }
    }

    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        for &(x, y) in &s.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            W - MARGIN * 2.5,
            MARGIN / 2.0 + 14.0 * (si as f64 + 1.0),
            escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");

    let mut file = std::fs::File::create(path)?;
    file.write_all(svg.as_bytes())?;
    Ok(())
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
