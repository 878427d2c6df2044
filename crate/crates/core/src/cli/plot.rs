//! Deterministic SVG phase portraits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{ChartRef, ScalarField};
use crate::flow::Trajectory;
use crate::orbits::OrbitKind;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 48.0;
const CONTOUR_GRID: usize = 160;
const MAX_POINTS: usize = 4000;

/// Stroke style per orbit class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrokeStyle {
    SingularPeriodic,
    GeneralizedSingularPeriodic,
    Escape,
    GeneralizedEscape,
    Periodic,
    Separatrix,
    Unresolved,
    Generic,
}

impl StrokeStyle {
    pub fn for_kind(k: OrbitKind) -> StrokeStyle {
        match k {
            OrbitKind::SingularPeriodic => StrokeStyle::SingularPeriodic,
            OrbitKind::GeneralizedSingularPeriodic => StrokeStyle::GeneralizedSingularPeriodic,
            OrbitKind::EscapeOrbit => StrokeStyle::Escape,
            OrbitKind::GeneralizedEscape => StrokeStyle::GeneralizedEscape,
            OrbitKind::PeriodicOffZ => StrokeStyle::Periodic,
            OrbitKind::FixedPoint | OrbitKind::Unresolved => StrokeStyle::Unresolved,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            StrokeStyle::SingularPeriodic => "singular periodic",
            StrokeStyle::GeneralizedSingularPeriodic => "generalized singular periodic",
            StrokeStyle::Escape => "escape",
            StrokeStyle::GeneralizedEscape => "generalized escape",
            StrokeStyle::Periodic => "periodic",
            StrokeStyle::Separatrix => "separatrix",
            StrokeStyle::Unresolved => "unresolved",
            StrokeStyle::Generic => "orbit",
        }
    }

    /// Drawing order: emphasized classes go on top.
    fn layer(&self) -> u8 {
        match self {
            StrokeStyle::Unresolved => 0,
            StrokeStyle::Generic => 1,
            StrokeStyle::GeneralizedSingularPeriodic => 2,
            StrokeStyle::GeneralizedEscape => 3,
            StrokeStyle::Escape => 4,
            StrokeStyle::Periodic => 5,
            StrokeStyle::Separatrix => 6,
            StrokeStyle::SingularPeriodic => 7,
        }
    }

    /// `(color, width, dash)`.
    fn attrs(&self) -> (&'static str, f64, Option<&'static str>) {
        match self {
            StrokeStyle::SingularPeriodic => ("#c0392b", 2.0, None),
            StrokeStyle::GeneralizedSingularPeriodic => ("#2e86c1", 0.8, None),
            StrokeStyle::Escape => ("#27ae60", 1.2, Some("6 3")),
            StrokeStyle::GeneralizedEscape => ("#16a085", 1.0, Some("2 2")),
            StrokeStyle::Periodic => ("#8e44ad", 1.5, None),
            StrokeStyle::Separatrix => ("#d35400", 1.5, None),
            StrokeStyle::Unresolved => ("#7f8c8d", 0.8, Some("1 3")),
            StrokeStyle::Generic => ("#34495e", 1.0, None),
        }
    }
}

/// One curve to draw.
#[derive(Clone, Debug)]
pub struct PlotSeries {
    pub label: String,
    pub style: StrokeStyle,
    pub chart: ChartRef,
    pub points: Vec<Vec<f64>>,
}

impl PlotSeries {
    pub fn new(label: &str, style: StrokeStyle, chart: &ChartRef, points: Vec<Vec<f64>>) -> PlotSeries {
        PlotSeries { label: label.into(), style, chart: chart.clone(), points }
    }

    pub fn from_trajectory(label: &str, style: StrokeStyle, tr: &Trajectory) -> PlotSeries {
        PlotSeries::new(label, style, tr.chart(), tr.states.clone())
    }

    /// A backward and a forward end joined into one curve through the seed.
    pub fn from_ends(label: &str, style: StrokeStyle, backward: &Trajectory, forward: &Trajectory) -> PlotSeries {
        let mut pts: Vec<Vec<f64>> = backward.states.iter().rev().cloned().collect();
        pts.extend(forward.states.iter().skip(1).cloned());
        PlotSeries::new(label, style, forward.chart(), pts)
    }
}

/// Coordinate pair and fixed viewport; optionally the critical set `{t = 0}`
/// drawn as a contour on the slice where the other coordinates vanish.
#[derive(Clone, Debug)]
pub struct Projection {
    pub axes: [usize; 2],
    /// `[[x_min, x_max], [y_min, y_max]]`.
    pub viewport: [[f64; 2]; 2],
    pub critical: Option<ScalarField>,
    pub title: String,
}

impl Projection {
    pub fn new(axes: [usize; 2], viewport: [[f64; 2]; 2]) -> Projection {
        Projection { axes, viewport, critical: None, title: String::new() }
    }

    pub fn with_critical(mut self, t: &ScalarField) -> Projection {
        self.critical = Some(t.clone());
        self
    }

    pub fn with_title(mut self, title: &str) -> Projection {
        self.title = title.into();
        self
    }

    /// Viewport enclosing every point of `series`, padded by 5%.
    pub fn fit(axes: [usize; 2], series: &[PlotSeries]) -> Projection {
        let mut vp = [[f64::INFINITY, f64::NEG_INFINITY]; 2];
        for s in series {
            for p in &s.points {
                for (k, &a) in axes.iter().enumerate() {
                    if let Some(&v) = p.get(a) {
                        if v.is_finite() {
                            vp[k][0] = vp[k][0].min(v);
                            vp[k][1] = vp[k][1].max(v);
                        }
                    }
                }
            }
        }
        for r in vp.iter_mut() {
            if !(r[0] < r[1]) {
                let c = if r[0].is_finite() { r[0] } else { 0.0 };
                *r = [c - 1.0, c + 1.0];
            }
            let pad = 0.05 * (r[1] - r[0]);
            *r = [r[0] - pad, r[1] + pad];
        }
        Projection::new(axes, vp)
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    vp: [[f64; 2]; 2],
}

impl Frame {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let w = SIZE - 2.0 * MARGIN;
        let [[x0, x1], [y0, y1]] = self.vp;
        (MARGIN + (x - x0) / (x1 - x0) * w, MARGIN + (y1 - y) / (y1 - y0) * w)
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let [[x0, x1], [y0, y1]] = self.vp;
        x.is_finite() && y.is_finite() && x >= x0 && x <= x1 && y >= y0 && y <= y1
    }
}

/// Polylines of the visible part of a series, decimated deterministically.
fn visible_runs(s: &PlotSeries, axes: [usize; 2], fr: &Frame) -> Vec<Vec<(f64, f64)>> {
    let stride = s.points.len().div_ceil(MAX_POINTS).max(1);
    let mut runs = Vec::new();
    let mut cur: Vec<(f64, f64)> = Vec::new();
    let n = s.points.len();
    for (i, p) in s.points.iter().enumerate() {
        if i % stride != 0 && i + 1 != n {
            continue;
        }
        let (x, y) = (p[axes[0]], p[axes[1]]);
        if fr.inside(x, y) {
            let q = fr.px(x, y);
            let q = ((q.0 * 100.0).round() / 100.0, (q.1 * 100.0).round() / 100.0);
            if cur.last() != Some(&q) {
                cur.push(q);
            }
        } else if !cur.is_empty() {
            runs.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        runs.push(cur);
    }
    runs
}

/// Marching-squares segments of `{t = 0}` on the slice.
fn contour(t: &ScalarField, axes: [usize; 2], fr: &Frame) -> Vec<[(f64, f64); 2]> {
    let n = CONTOUR_GRID;
    let dim = t.chart().dim();
    let [[x0, x1], [y0, y1]] = fr.vp;
    let at = |i: usize, j: usize| -> (f64, f64, f64) {
        let x = x0 + (x1 - x0) * i as f64 / n as f64;
        let y = y0 + (y1 - y0) * j as f64 / n as f64;
        let mut p = vec![0.0; dim];
        p[axes[0]] = x;
        p[axes[1]] = y;
        (x, y, t.eval(&p))
    };
    let grid: Vec<Vec<(f64, f64, f64)>> = (0..=n).map(|i| (0..=n).map(|j| at(i, j)).collect()).collect();
    let mut segs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let c = [grid[i][j], grid[i + 1][j], grid[i + 1][j + 1], grid[i][j + 1]];
            let mut cross = Vec::with_capacity(4);
            for k in 0..4 {
                let (a, b) = (c[k], c[(k + 1) % 4]);
                if (a.2 < 0.0) != (b.2 < 0.0) {
                    let s = a.2 / (a.2 - b.2);
                    cross.push(fr.px(a.0 + s * (b.0 - a.0), a.1 + s * (b.1 - a.1)));
                }
            }
            if cross.len() == 2 {
                segs.push([cross[0], cross[1]]);
            } else if cross.len() == 4 {
                segs.push([cross[0], cross[1]]);
                segs.push([cross[2], cross[3]]);
            }
        }
    }
    segs
}

/// Render `series` as an SVG 1.1 document.
pub fn render_svg(series: &[PlotSeries], proj: &Projection) -> Result<String> {
    let first = series.first().ok_or_else(|| Error::Config("nothing to plot".into()))?;
    let chart = &first.chart;
    for s in series {
        if !Arc::ptr_eq(&s.chart, chart) && *s.chart != **chart {
            return Err(Error::Dimension(format!("series {:?} is on chart {}, expected {}", s.label, s.chart.name(), chart.name())));
        }
        if s.points.iter().any(|p| p.len() != chart.dim()) {
            return Err(Error::Dimension(format!("series {:?} has points of the wrong dimension", s.label)));
        }
    }
    if proj.axes.iter().any(|&a| a >= chart.dim()) || proj.axes[0] == proj.axes[1] {
        return Err(Error::Dimension(format!("axes {:?} invalid for a {}-dimensional chart", proj.axes, chart.dim())));
    }
    for r in &proj.viewport {
        if !(r[0] < r[1]) || !r[0].is_finite() || !r[1].is_finite() {
            return Err(Error::Config(format!("invalid viewport range {r:?}")));
        }
    }
    if let Some(t) = &proj.critical {
        if **t.chart() != **chart {
            return Err(Error::Dimension("critical function is on a different chart".into()));
        }
    }
    let fr = Frame { vp: proj.viewport };
    let names = chart.coord_names();
    let mut s = String::new();
    let w = |s: &mut String, line: String| {
        s.push_str(&line);
        s.push('\n');
    };
    w(&mut s, r#"<?xml version="1.0" encoding="UTF-8"?>"#.into());
    w(
        &mut s,
        format!(r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#),
    );
    w(&mut s, format!(r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#));
    let inner = SIZE - 2.0 * MARGIN;
    w(
        &mut s,
        format!(r##"<rect x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner}" fill="none" stroke="#bbbbbb" stroke-width="1"/>"##),
    );
    if !proj.title.is_empty() {
        w(&mut s, format!(r#"<text x="{MARGIN}" y="28" font-family="sans-serif" font-size="14">{}</text>"#, esc(&proj.title)));
    }
    let [[x0, x1], [y0, y1]] = proj.viewport;
    w(
        &mut s,
        format!(
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{} [{:.3}, {:.3}]</text>"#,
            SIZE / 2.0,
            SIZE - 14.0,
            esc(&names[proj.axes[0]]),
            x0,
            x1
        ),
    );
    w(
        &mut s,
        format!(
            r#"<text x="14" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">{} [{:.3}, {:.3}]</text>"#,
            SIZE / 2.0,
            SIZE / 2.0,
            esc(&names[proj.axes[1]]),
            y0,
            y1
        ),
    );
    if let Some(t) = &proj.critical {
        let segs = contour(t, proj.axes, &fr);
        let mut d = String::new();
        for [a, b] in segs {
            let _ = write!(d, "M{:.2} {:.2}L{:.2} {:.2}", a.0, a.1, b.0, b.1);
        }
        w(&mut s, format!(r##"<path class="critical-set" d="{d}" fill="none" stroke="#000000" stroke-width="1.5"/>"##));
    }
    let mut order: Vec<usize> = (0..series.len()).collect();
    order.sort_by_key(|&k| (series[k].style.layer(), k));
    for k in order {
        let ser = &series[k];
        let (color, width, dash) = ser.style.attrs();
        let dash = dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
        w(&mut s, format!(r#"<g class="series" id="s{k}"><title>{}</title>"#, esc(&ser.label)));
        for run in visible_runs(ser, proj.axes, &fr) {
            if run.len() == 1 {
                w(&mut s, format!(r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#, run[0].0, run[0].1));
                continue;
            }
            let mut pts = String::new();
            for (i, (x, y)) in run.iter().enumerate() {
                if i > 0 {
                    pts.push(' ');
                }
                let _ = write!(pts, "{x:.2},{y:.2}");
            }
            w(
                &mut s,
                format!(r#"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{dash} stroke-linejoin="round"/>"#),
            );
        }
        w(&mut s, "</g>".into());
    }
    let mut seen: Vec<StrokeStyle> = Vec::new();
    for ser in series {
        if !seen.contains(&ser.style) {
            seen.push(ser.style);
        }
    }
    for (i, st) in seen.iter().enumerate() {
        let (color, width, dash) = st.attrs();
        let dash = dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
        let y = MARGIN + 16.0 + 16.0 * i as f64;
        let xl = SIZE - MARGIN - 190.0;
        w(
            &mut s,
            format!(
                r#"<line x1="{xl:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="{width}"{dash}/>"#,
                xl + 24.0
            ),
        );
        w(
            &mut s,
            format!(r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{}</text>"#, xl + 30.0, y + 4.0, st.name()),
        );
    }
    w(&mut s, "</svg>".into());
    Ok(s)
}

/// Render and write an SVG file.
pub fn emit_plot(series: &[PlotSeries], proj: &Projection, path: &Path) -> Result<()> {
    let svg = render_svg(series, proj)?;
    fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Chart;

    fn circle(n: usize) -> PlotSeries {
        let pts = (0..=n)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
        PlotSeries::new("circle", StrokeStyle::Periodic, &Chart::plane2(), pts)
    }

    #[test]
    fn circle_is_one_closed_polyline() {
        let svg = render_svg(&[circle(64)], &Projection::new([0, 1], [[-2.0, 2.0], [-2.0, 2.0]])).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let all: Vec<&str> = pts.split(' ').collect();
        assert_eq!(all.first(), all.last());
    }

    #[test]
    fn empty_input_is_a_config_error() {
        let e = render_svg(&[], &Projection::new([0, 1], [[-1.0, 1.0], [-1.0, 1.0]]));
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn mixed_charts_are_rejected() {
        let other = PlotSeries::new("x", StrokeStyle::Generic, &Chart::torus2(), vec![vec![0.0, 0.0]]);
        let e = render_svg(&[circle(8), other], &Projection::new([0, 1], [[-1.0, 1.0], [-1.0, 1.0]]));
        assert!(matches!(e, Err(Error::Dimension(_))));
    }

    #[test]
    fn output_is_byte_stable() {
        let p = Projection::new([0, 1], [[-2.0, 2.0], [-2.0, 2.0]]).with_title("t");
        assert_eq!(render_svg(&[circle(100)], &p).unwrap(), render_svg(&[circle(100)], &p).unwrap());
    }

    #[test]
    fn offscreen_points_split_the_curve() {
        let s = PlotSeries::new("s", StrokeStyle::Generic, &Chart::plane2(), vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![5.0, 0.0], vec![0.5, 0.5], vec![0.0, 0.5]]);
        let svg = render_svg(&[s], &Projection::new([0, 1], [[-1.0, 1.0], [-1.0, 1.0]])).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
