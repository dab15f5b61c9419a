//! Static SVG line plots of a trace.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::planner::Plan;
use crate::sim::Trace;

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    color: RGBColor,
    /// Drawn as separate markers instead of a line.
    markers: bool,
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(127, 127, 127),
];

fn chart(path: &Path, title: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let plot_err = |e: String| Error::InvalidArgument(format!("plotting {}: {e}", path.display()));
    let finite = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-6);
    let (y0, y1) = (y0 - pad, y1 + pad);

    let root = SVGBackend::new(path, (900, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(e.to_string()))?;
    let mut c = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(64)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| plot_err(e.to_string()))?;
    c.configure_mesh()
        .x_desc("time (s)")
        .y_desc(y_label)
        .draw()
        .map_err(|e| plot_err(e.to_string()))?;
    for s in series {
        let color = s.color;
        if s.markers {
            c.draw_series(s.points.iter().map(|&p| Circle::new(p, 4, color.filled())))
                .map_err(|e| plot_err(e.to_string()))?
                .label(s.label.as_str())
                .legend(move |(x, y)| Circle::new((x + 8, y), 4, color.filled()));
            continue;
        }
        // NaN samples break the line
        let mut first = true;
        for run in s.points.split(|p| !p.1.is_finite()).filter(|r| !r.is_empty()) {
            let drawn = c
                .draw_series(LineSeries::new(run.iter().copied(), color.stroke_width(2)))
                .map_err(|e| plot_err(e.to_string()))?;
            if first {
                drawn.label(s.label.as_str()).legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
                first = false;
            }
        }
    }
    c.configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(e.to_string()))?;
    root.present().map_err(|e| plot_err(e.to_string()))?;
    Ok(())
}

fn series(trace: &Trace, label: &str, color: usize, f: impl Fn(&crate::sim::TraceSample) -> f64) -> Series {
    Series {
        label: label.to_string(),
        points: trace.samples.iter().map(|s| (s.t, f(s))).collect(),
        color: PALETTE[color % PALETTE.len()],
        markers: false,
    }
}

/// Writes `base_error.svg`, `com.svg` and `cop.svg` into `dir`.
pub fn write_plots(trace: &Trace, plan: Option<&Plan>, dir: &Path) -> Result<()> {
    chart(
        &dir.join("base_error.svg"),
        &format!("{}: base position error", trace.scenario),
        "error (m)",
        &[series(trace, "base error", 0, |s| s.base_error)],
    )?;
    chart(
        &dir.join("com.svg"),
        &format!("{}: center of mass", trace.scenario),
        "horizontal position (m)",
        &[series(trace, "CoM", 0, |s| s.com.x), series(trace, "reference", 1, |s| s.com_ref.x)],
    )?;
    let mut cop = vec![
        series(trace, "CoP", 0, |s| s.cop),
        series(trace, "ZMP reference", 1, |s| s.zmp_ref),
        series(trace, "CoM", 2, |s| s.com.x),
    ];
    for (f, name) in trace.feet.iter().enumerate() {
        cop.push(series(trace, &format!("{name} foot"), 3 + f, |s| s.feet[f].x));
    }
    if let Some(p) = plan {
        let steps = p.footsteps.iter().map(|s| (s.time, s.x)).collect::<Vec<_>>();
        if !steps.is_empty() {
            cop.push(Series { label: "planned footsteps".into(), points: steps, color: BLACK, markers: true });
        }
    }
    chart(
        &dir.join("cop.svg"),
        &format!("{}: CoP and footsteps", trace.scenario),
        "horizontal position (m)",
        &cop,
    )
}
