//! Minimal static SVG line plots for the recorded traces. No external
//! plotting stack; the files mirror the panels of the experiment figures
//! (states vs references, adjustable parameters, the forgetting regressor,
//! the regressor spectrum bound, and the augmented error norm).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::simulation::SimulationTrace;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 44.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series<'a> {
    pub label: String,
    pub xs: &'a [f64],
    pub ys: Vec<f64>,
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(mag * 10.0);
    let mut ticks = Vec::new();
    let mut t = (lo / step).ceil() * step;
    while t <= hi + 1e-12 * span {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// Renders one chart to an SVG string. With `log_y` the values are plotted
/// as `log10`; nonpositive samples are dropped.
pub fn render(title: &str, series: &[Series<'_>], log_y: bool) -> String {
    let mut pts: Vec<Vec<(f64, f64)>> = Vec::new();
    for s in series {
        let mut v = Vec::with_capacity(s.xs.len());
        for (&x, &y) in s.xs.iter().zip(&s.ys) {
            if log_y {
                if y > 0.0 {
                    v.push((x, y.log10()));
                }
            } else if y.is_finite() {
                v.push((x, y));
            }
        }
        pts.push(v);
    }
    let all = pts.iter().flatten();
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if !x_lo.is_finite() {
        x_lo = 0.0;
        x_hi = 1.0;
        y_lo = 0.0;
        y_hi = 1.0;
    }
    if y_hi - y_lo < 1e-12 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    );
    let _ = write!(svg, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"##);
    let _ = write!(
        svg,
        r##"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"##,
        WIDTH / 2.0,
        title
    );
    // Axes box and ticks.
    let _ = write!(
        svg,
        r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>"##
    );
    for t in nice_ticks(x_lo, x_hi) {
        let x = sx(t);
        let _ = write!(
            svg,
            r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#ccc"/>"##,
            MARGIN_T,
            MARGIN_T + plot_h
        );
        let _ = write!(
            svg,
            r##"<text x="{x}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"##,
            MARGIN_T + plot_h + 16.0,
            fmt_tick(t)
        );
    }
    for t in nice_ticks(y_lo, y_hi) {
        let y = sy(t);
        let _ = write!(
            svg,
            r##"<line x1="{MARGIN_L}" y1="{y}" x2="{}" y2="{y}" stroke="#ccc"/>"##,
            MARGIN_L + plot_w
        );
        let label = if log_y { format!("1e{}", fmt_tick(t)) } else { fmt_tick(t) };
        let _ = write!(
            svg,
            r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"##,
            MARGIN_L - 6.0,
            y + 4.0,
            label
        );
    }
    let _ = write!(
        svg,
        r##"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">t [s]</text>"##,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 10.0
    );
    // Polylines and legend.
    for (i, (s, p)) in series.iter().zip(&pts).enumerate() {
        if p.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::new();
        for (j, &(x, y)) in p.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if j == 0 { "M" } else { "L" }, sx(x), sy(y));
        }
        let _ = write!(svg, r##"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.3"/>"##);
        let lx = MARGIN_L + 10.0 + (i as f64) * 95.0;
        let _ = write!(
            svg,
            r##"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/>"##,
            MARGIN_T + 10.0,
            lx + 18.0,
            MARGIN_T + 10.0
        );
        let _ = write!(
            svg,
            r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"##,
            lx + 22.0,
            MARGIN_T + 14.0,
            s.label
        );
    }
    svg.push_str("</svg>");
    svg
}

/// Writes the standard panel set for a recorded trace.
pub fn plot_trace(trace: &SimulationTrace, dir: &Path) -> Result<()> {
    let ts = trace.times();
    let mut states: Vec<Series<'_>> = Vec::new();
    let state_names: Vec<String> = trace.header[trace.idx_state()..trace.idx_state() + trace.n_state]
        .to_vec();
    for (i, name) in state_names.iter().enumerate() {
        states.push(Series {
            label: name.clone(),
            xs: &ts,
            ys: trace.column(trace.idx_state() + i),
        });
        states.push(Series {
            label: format!("{name}_ref"),
            xs: &ts,
            ys: trace.column(trace.idx_reference() + i),
        });
    }
    std::fs::write(dir.join("states.svg"), render("plant and reference", &states, false))?;

    let mut params: Vec<Series<'_>> = Vec::new();
    for i in 0..trace.n_theta {
        params.push(Series {
            label: format!("theta_hat{}", i + 1),
            xs: &ts,
            ys: trace.column(trace.idx_theta() + i),
        });
    }
    std::fs::write(dir.join("parameters.svg"), render("adjustable parameters", &params, false))?;

    std::fs::write(
        dir.join("regressor.svg"),
        render(
            "forgetting regressor",
            &[Series { label: "Omega".into(), xs: &ts, ys: trace.column(trace.idx_omega()) }],
            false,
        ),
    )?;
    std::fs::write(
        dir.join("excitation.svg"),
        render(
            "regressor spectrum bound",
            &[Series { label: "lambda_max".into(), xs: &ts, ys: trace.column(trace.idx_lambda()) }],
            false,
        ),
    )?;
    std::fs::write(
        dir.join("error_norm.svg"),
        render(
            "augmented error norm (log)",
            &[Series { label: "xi_norm".into(), xs: &ts, ys: trace.column(trace.idx_xi()) }],
            true,
        ),
    )?;
    Ok(())
}
