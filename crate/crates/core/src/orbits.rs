//! Orbit taxonomy near the critical set: limit-set estimation, periodic orbit
//! detection, classification of orbits off `Z`, and the Morse/separatrix
//! analysis of the exceptional Hamiltonian on `Z`.
//!
//! The asymptotic notions are decided from finite horizons with explicit,
//! configurable thresholds; anything that does not fit cleanly comes back as
//! `Unresolved` rather than a guess.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bforms::{z_tangent_basis, BForm1, BManifoldChart};
use crate::error::{Error, Result};
use crate::fields::{ChartRef, Point, ScalarField, VectorField};
use crate::flow::{
    section_crossings, Direction, Integrator, IntegratorOptions, Section, Termination, Trajectory,
};
use crate::reeb::reeb_field;
use crate::vecmath::{dot, norm, sub};

/// Cylindrical coordinates `(axial, radius, angle)` adapted to a rotation axis.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CylFrame {
    pub origin: Vec<f64>,
    pub axial: usize,
    pub plane: [usize; 2],
}

impl CylFrame {
    /// `z` axis with the `(x, y)` plane in 3D; `y₁` axis with the `(x₂, y₂)` plane in 4D.
    pub fn standard(dim: usize) -> CylFrame {
        match dim {
            4 => CylFrame { origin: vec![0.0; 4], axial: 1, plane: [2, 3] },
            _ => CylFrame { origin: vec![0.0; dim], axial: dim.saturating_sub(1), plane: [0, 1] },
        }
    }

    pub fn coords(&self, x: &[f64]) -> (f64, f64, f64) {
        let a = x[self.axial] - self.origin[self.axial];
        let u = x[self.plane[0]] - self.origin[self.plane[0]];
        let v = x[self.plane[1]] - self.origin[self.plane[1]];
        (a, u.hypot(v), v.atan2(u))
    }

    /// `dθ/dt` for velocity `vel` at `x` (NaN on the axis).
    pub fn angular_rate(&self, x: &[f64], vel: &[f64]) -> f64 {
        let u = x[self.plane[0]] - self.origin[self.plane[0]];
        let v = x[self.plane[1]] - self.origin[self.plane[1]];
        let r2 = u * u + v * v;
        if r2 == 0.0 {
            return f64::NAN;
        }
        (u * vel[self.plane[1]] - v * vel[self.plane[0]]) / r2
    }

    /// Residual of `vel` after removing its azimuthal part, relative to `|vel|`.
    fn non_azimuthal(&self, x: &[f64], vel: &[f64]) -> f64 {
        let u = x[self.plane[0]] - self.origin[self.plane[0]];
        let v = x[self.plane[1]] - self.origin[self.plane[1]];
        let r = u.hypot(v);
        let vn = norm(vel);
        if r == 0.0 || vn == 0.0 {
            return f64::INFINITY;
        }
        let (eu, ev) = (-v / r, u / r);
        let along = vel[self.plane[0]] * eu + vel[self.plane[1]] * ev;
        let mut rest = vel.to_vec();
        rest[self.plane[0]] -= along * eu;
        rest[self.plane[1]] -= along * ev;
        norm(&rest) / vn
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
#[serde(tag = "type")]
pub enum LimitSetKind {
    PointOnZ { coords: Vec<f64> },
    CircleOnZ { axial_level: f64, radius: f64, angular_rate_sign: i8 },
    OffZUnknown,
    Unresolved,
}

/// Estimated α- or ω-limit set of one end of an orbit.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct LimitSet {
    pub kind: LimitSetKind,
    pub confidence: f64,
    /// Fit residual of the accepted hypothesis (NaN when none applies).
    pub residual: f64,
}

impl LimitSet {
    fn plain(kind: LimitSetKind) -> LimitSet {
        LimitSet { kind, confidence: 1.0, residual: f64::NAN }
    }

    pub fn unresolved() -> LimitSet {
        LimitSet { kind: LimitSetKind::Unresolved, confidence: 0.0, residual: f64::NAN }
    }

    pub fn is_point(&self) -> bool {
        matches!(self.kind, LimitSetKind::PointOnZ { .. })
    }

    pub fn is_circle(&self) -> bool {
        matches!(self.kind, LimitSetKind::CircleOnZ { .. })
    }

    /// Limit set contained in `Z`.
    pub fn in_z(&self) -> bool {
        self.is_point() || self.is_circle()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OrbitKind {
    PeriodicOffZ,
    FixedPoint,
    EscapeOrbit,
    SingularPeriodic,
    GeneralizedEscape,
    GeneralizedSingularPeriodic,
    Unresolved,
}

/// Classification of an orbit off `Z` with its per-end limit sets.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct OrbitClass {
    pub kind: OrbitKind,
    pub forward: LimitSet,
    pub backward: LimitSet,
    pub period: Option<f64>,
}

impl OrbitClass {
    /// Classify from the two end limit sets.
    pub fn from_ends(forward: LimitSet, backward: LimitSet) -> OrbitClass {
        let kind = combine(&forward, &backward);
        OrbitClass { kind, forward, backward, period: None }
    }

    fn unresolved() -> OrbitClass {
        OrbitClass {
            kind: OrbitKind::Unresolved,
            forward: LimitSet::unresolved(),
            backward: LimitSet::unresolved(),
            period: None,
        }
    }

    /// Closed off `Z`, or both limit sets inside `Z`.
    pub fn is_quasi_closed(&self) -> bool {
        self.kind == OrbitKind::PeriodicOffZ || (self.forward.in_z() && self.backward.in_z())
    }

    /// At least one end converges to a point of `Z`.
    pub fn is_escape(&self) -> bool {
        self.forward.is_point() || self.backward.is_point()
    }

    /// At least one limit set lies in `Z`.
    pub fn is_generalized_escape(&self) -> bool {
        self.forward.in_z() || self.backward.in_z()
    }

    /// The taxonomy's implications between the class and the end predicates.
    pub fn implications_hold(&self) -> bool {
        match self.kind {
            OrbitKind::SingularPeriodic => {
                self.is_quasi_closed() && self.is_escape() && self.forward.is_point() && self.backward.is_point()
            }
            OrbitKind::GeneralizedSingularPeriodic => self.is_quasi_closed() && self.is_generalized_escape(),
            OrbitKind::EscapeOrbit => self.is_escape() && self.is_generalized_escape() && !self.is_quasi_closed(),
            OrbitKind::GeneralizedEscape => self.is_generalized_escape() && !self.is_quasi_closed(),
            OrbitKind::PeriodicOffZ => self.is_quasi_closed(),
            OrbitKind::FixedPoint | OrbitKind::Unresolved => true,
        }
    }
}

fn combine(f: &LimitSet, b: &LimitSet) -> OrbitKind {
    use LimitSetKind::*;
    match (&f.kind, &b.kind) {
        (PointOnZ { .. }, PointOnZ { .. }) => OrbitKind::SingularPeriodic,
        _ if f.in_z() && b.in_z() => OrbitKind::GeneralizedSingularPeriodic,
        (PointOnZ { .. }, OffZUnknown) | (OffZUnknown, PointOnZ { .. }) => OrbitKind::EscapeOrbit,
        (CircleOnZ { .. }, OffZUnknown) | (OffZUnknown, CircleOnZ { .. }) => OrbitKind::GeneralizedEscape,
        _ => OrbitKind::Unresolved,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierOptions {
    /// Integration horizon per direction.
    pub horizon: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub z_proximity_stop: f64,
    /// Number of trailing states considered by the limit-set fit.
    pub tail: usize,
    /// Field-norm and diameter bound for a point-type limit.
    pub point_capture: f64,
    /// Residual bound for a circle-type limit.
    pub circle_residual: f64,
    /// Return distance confirming a periodic orbit.
    pub periodic_tol: f64,
    /// The fit uses tail states with `|t| ≤ window_factor · z_proximity_stop`.
    pub window_factor: f64,
    pub min_angular_rate: f64,
    /// Ends that time out this close to `Z` (and still approaching) are fitted too.
    pub near_z_band: f64,
    pub frame: Option<CylFrame>,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        ClassifierOptions {
            horizon: 500.0,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            z_proximity_stop: 1e-6,
            tail: 2000,
            point_capture: 1e-4,
            circle_residual: 1e-3,
            periodic_tol: 1e-6,
            window_factor: 100.0,
            min_angular_rate: 1e-6,
            near_z_band: 1e-3,
            frame: None,
        }
    }
}

impl ClassifierOptions {
    pub fn validate(&self) -> Result<()> {
        for (v, n) in [
            (self.horizon, "horizon"),
            (self.point_capture, "point_capture"),
            (self.circle_residual, "circle_residual"),
            (self.periodic_tol, "periodic_tol"),
            (self.window_factor, "window_factor"),
            (self.near_z_band, "near_z_band"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{n} must be positive, got {v}")));
            }
        }
        if self.tail < 2 {
            return Err(Error::Config("tail must keep at least two states".into()));
        }
        self.integrator().validate()
    }

    pub fn with_horizon(mut self, h: f64) -> Self {
        self.horizon = h;
        self
    }

    pub fn integrator(&self) -> IntegratorOptions {
        IntegratorOptions {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_time: self.horizon,
            z_proximity_stop: self.z_proximity_stop,
            ..IntegratorOptions::default()
        }
    }

    fn frame_for(&self, dim: usize) -> CylFrame {
        self.frame.clone().unwrap_or_else(|| CylFrame::standard(dim))
    }
}

/// The dynamics to classify: one chart, or a 3D chart continued through
/// infinity by the inversion `u ↦ u/|u|²`.
#[derive(Clone, Debug)]
pub enum OrbitSystem {
    Single(VectorField),
    /// `near` is used while `|u| ≤ out_radius`; `far` is the same flow in the
    /// inverted chart, used until `|u| < in_radius` again.
    Inverted { near: VectorField, far: VectorField, out_radius: f64, in_radius: f64 },
}

impl From<VectorField> for OrbitSystem {
    fn from(f: VectorField) -> Self {
        OrbitSystem::Single(f)
    }
}

impl OrbitSystem {
    pub fn inverted(near: VectorField, far: VectorField) -> OrbitSystem {
        OrbitSystem::Inverted { near, far, out_radius: 50.0, in_radius: 10.0 }
    }

    /// The field on the chart containing `Z`.
    pub fn near(&self) -> &VectorField {
        match self {
            OrbitSystem::Single(f) => f,
            OrbitSystem::Inverted { near, .. } => near,
        }
    }
}

/// Inversion in the unit sphere.
pub fn invert(u: &[f64]) -> Vec<f64> {
    let r2 = dot(u, u);
    u.iter().map(|c| c / r2).collect()
}

/// One integrated end of an orbit.
#[derive(Clone, Debug)]
pub struct EndRun {
    /// The final chart piece.
    pub trajectory: Trajectory,
    /// Whether the final piece lives in the inverted chart.
    pub in_far_chart: bool,
    pub chart_switches: usize,
    pub elapsed: f64,
}

impl EndRun {
    pub fn termination(&self) -> Termination {
        self.trajectory.termination
    }
}

/// Integrate one direction, handing off between charts as needed.
pub fn run_end(sys: &OrbitSystem, x0: &[f64], time_sign: f64, opts: &IntegratorOptions) -> Result<EndRun> {
    match sys {
        OrbitSystem::Single(f) => {
            let tr = Integrator::new(f, opts).run(x0, time_sign)?;
            let elapsed = tr.final_time();
            Ok(EndRun { trajectory: tr, in_far_chart: false, chart_switches: 0, elapsed })
        }
        OrbitSystem::Inverted { near, far, out_radius, in_radius } => {
            let (out_r, in_r) = (*out_radius, *in_radius);
            let mut x = x0.to_vec();
            let mut far_side = norm(&x) > out_r;
            if far_side {
                x = invert(&x);
            }
            let mut elapsed = 0.0;
            let mut switches = 0usize;
            loop {
                let remaining = opts.max_time - elapsed;
                let o = IntegratorOptions { max_time: remaining.max(1e-12), ..opts.clone() };
                let tr = if far_side {
                    Integrator::new(far, &o).stop_when(move |y| norm(y) * in_r > 1.0).run(&x, time_sign)?
                } else {
                    Integrator::new(near, &o).stop_when(move |y| norm(y) > out_r).run(&x, time_sign)?
                };
                elapsed += tr.final_time();
                if tr.termination != Termination::Stopped || switches >= 1000 || elapsed >= opts.max_time {
                    return Ok(EndRun { trajectory: tr, in_far_chart: far_side, chart_switches: switches, elapsed });
                }
                x = invert(tr.last());
                far_side = !far_side;
                switches += 1;
            }
        }
    }
}

/// Project `x` onto `{t = 0}` (and the level set, if any) by Gauss–Newton.
pub fn project_to_z(base: &BManifoldChart, x: &[f64]) -> Option<Vec<f64>> {
    let n = base.dim();
    let mut y = x.to_vec();
    for _ in 0..60 {
        let mut cons = vec![base.t().value_grad(&y)];
        if let Some(l) = base.level() {
            cons.push(l.value_grad(&y));
        }
        let m = cons.len();
        let res: f64 = cons.iter().map(|c| c.v.abs()).fold(0.0, f64::max);
        if res <= 1e-15 {
            return Some(y);
        }
        let j = DMatrix::from_fn(m, n, |i, k| cons[i].d[k]);
        let g = DVector::from_iterator(m, cons.iter().map(|c| c.v));
        let jjt = &j * j.transpose();
        let lam = jjt.lu().solve(&g)?;
        let step = j.transpose() * lam;
        for k in 0..n {
            y[k] -= step[k];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return None;
        }
        if step.norm() <= 1e-16 * (1.0 + norm(&y)) {
            break;
        }
    }
    let still: f64 = base.t().eval(&y).abs();
    (still <= 1e-12).then_some(y)
}

/// Fit a point or a Z-parallel circle to the end of a trajectory that
/// approached `Z`.
pub fn limit_set_estimate(field: &VectorField, bchart: &BManifoldChart, traj: &Trajectory, opts: &ClassifierOptions) -> LimitSet {
    let n = bchart.dim();
    let t = bchart.t();
    let end = traj.last();
    if !(t.eval(end).abs() <= opts.near_z_band) {
        return LimitSet::unresolved();
    }
    let Some(q) = project_to_z(bchart, end) else {
        return LimitSet::unresolved();
    };
    let v = field.eval_vec(&q);
    if v.iter().any(|c| !c.is_finite()) {
        return LimitSet::unresolved();
    }
    let (_, states) = traj.tail(opts.tail);
    let band = opts.window_factor * opts.z_proximity_stop;
    let mut window: Vec<&Vec<f64>> = states.iter().filter(|s| t.eval(s).abs() <= band).collect();
    if window.len() < 2 {
        window = states.iter().rev().take(2).collect();
        window.reverse();
    }
    let diameter = window
        .iter()
        .flat_map(|a| window.iter().map(move |b| norm(&sub(a, b))))
        .fold(0.0, f64::max);

    // (i) fixed point: the field vanishes at the limit and the tail has collapsed.
    let point_res = norm(&v).max(diameter);
    let point_fits = point_res <= opts.point_capture;

    // (ii) circle parallel to Z in the adapted frame.
    let frame = opts.frame_for(n);
    let (aq, rq, _) = frame.coords(&q);
    let rate = frame.angular_rate(&q, &v);
    let mut circle_res = f64::INFINITY;
    if rq > 0.0 && rate.is_finite() && rate.abs() >= opts.min_angular_rate {
        let mut spread: f64 = frame.non_azimuthal(&q, &v);
        let mut last_angle: Option<f64> = None;
        let mut monotone = true;
        for s in &window {
            let (a, r, th) = frame.coords(s);
            spread = spread.max((a - aq).abs()).max((r - rq).abs());
            if let Some(prev) = last_angle {
                let mut d = th - prev;
                d -= (d / std::f64::consts::TAU).round() * std::f64::consts::TAU;
                if d != 0.0 && d.signum() * rate.signum() * traj.time_sign < 0.0 {
                    monotone = false;
                }
            }
            last_angle = Some(th);
        }
        if monotone {
            circle_res = spread;
        }
    }
    let circle_fits = circle_res <= opts.circle_residual;

    match (point_fits, circle_fits) {
        (true, false) => LimitSet {
            kind: LimitSetKind::PointOnZ { coords: q },
            confidence: (1.0 - point_res / opts.point_capture).clamp(0.0, 1.0),
            residual: point_res,
        },
        (false, true) => LimitSet {
            kind: LimitSetKind::CircleOnZ {
                axial_level: aq,
                radius: rq,
                angular_rate_sign: (rate * traj.time_sign).signum() as i8,
            },
            confidence: (1.0 - circle_res / opts.circle_residual).clamp(0.0, 1.0),
            residual: circle_res,
        },
        _ => LimitSet::unresolved(),
    }
}

/// Period of the orbit through the trajectory's initial state, if it recurs.
///
/// Candidates are returns to the hyperplane through `x0` normal to the flow;
/// a candidate is confirmed by re-integrating one period at tight tolerance.
pub fn detect_periodic(field: &VectorField, traj: &Trajectory, tol: f64) -> Option<f64> {
    if !traj.has_dense() || traj.len() < 2 {
        return None;
    }
    let x0 = traj.initial().to_vec();
    let v0: Vec<f64> = field.eval_vec(&x0).iter().map(|c| c * traj.time_sign).collect();
    let vn = norm(&v0);
    if !(vn > 0.0) {
        return None;
    }
    let chart = traj.chart().clone();
    let g = section_plane(&chart, &x0, &v0).ok()?;
    let crossings = section_crossings(traj, &Section::new(g, Direction::Up)).ok()?;
    let recur = 1e-3 * (1.0 + norm(&x0));
    let (period, _) = crossings.into_iter().find(|(_, p)| norm(&sub(p.coords(), &x0)) <= recur)?;
    let opts = IntegratorOptions {
        rel_tol: 1e-12,
        abs_tol: 1e-14,
        max_time: period,
        dense_output: false,
        ..IntegratorOptions::default()
    };
    let back = Integrator::new(field, &opts).run(&x0, traj.time_sign).ok()?;
    (back.termination == Termination::TimeLimit && norm(&sub(back.last(), &x0)) <= tol).then_some(period)
}

fn section_plane(chart: &ChartRef, x0: &[f64], normal: &[f64]) -> Result<ScalarField> {
    let x = crate::fields::coords(chart.dim());
    let e = crate::expr::sum(x.iter().zip(x0.iter().zip(normal)).map(|(xi, (ci, ni))| (xi.clone() - *ci) * *ni));
    ScalarField::new(chart, e)
}

/// Classify the orbit through `x0` (which must lie off `Z`).
pub fn classify_orbit(sys: &OrbitSystem, bchart: &BManifoldChart, x0: &Point, opts: &ClassifierOptions) -> OrbitClass {
    classify_detailed(sys, bchart, x0, opts).class
}

/// Per-seed classification record.
#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub seed: Vec<f64>,
    pub class: OrbitClass,
    pub quasi_closed: bool,
    pub forward_termination: Option<Termination>,
    pub backward_termination: Option<Termination>,
    pub forward_time: f64,
    pub backward_time: f64,
    pub horizon: f64,
}

pub fn classify_detailed(sys: &OrbitSystem, bchart: &BManifoldChart, x0: &Point, opts: &ClassifierOptions) -> ClassificationReport {
    let mut rep = ClassificationReport {
        seed: x0.coords().to_vec(),
        class: OrbitClass::unresolved(),
        quasi_closed: false,
        forward_termination: None,
        backward_termination: None,
        forward_time: 0.0,
        backward_time: 0.0,
        horizon: opts.horizon,
    };
    if opts.validate().is_err() || **x0.chart() != **sys.near().chart() {
        return rep;
    }
    let x = x0.coords();
    if !bchart.is_smooth() && bchart.t().eval(x).abs() <= opts.z_proximity_stop {
        return rep;
    }
    let v = sys.near().eval_vec(x);
    if v.iter().all(|c| *c == 0.0) {
        rep.class = OrbitClass {
            kind: OrbitKind::FixedPoint,
            forward: LimitSet::plain(LimitSetKind::OffZUnknown),
            backward: LimitSet::plain(LimitSetKind::OffZUnknown),
            period: None,
        };
        return rep;
    }
    let iopts = opts.integrator();
    let (Ok(fwd), Ok(bwd)) = (run_end(sys, x, 1.0, &iopts), run_end(sys, x, -1.0, &iopts)) else {
        return rep;
    };
    rep.forward_termination = Some(fwd.termination());
    rep.backward_termination = Some(bwd.termination());
    rep.forward_time = fwd.elapsed;
    rep.backward_time = bwd.elapsed;
    let field_of = |e: &EndRun| match (sys, e.in_far_chart) {
        (OrbitSystem::Inverted { far, .. }, true) => far,
        _ => sys.near(),
    };
    // Recurrence first: a closed orbit shows up in either direction.
    if fwd.chart_switches == 0 && fwd.termination() == Termination::TimeLimit {
        if let Some(p) = detect_periodic(sys.near(), &fwd.trajectory, opts.periodic_tol) {
            rep.class = OrbitClass {
                kind: OrbitKind::PeriodicOffZ,
                forward: LimitSet::plain(LimitSetKind::OffZUnknown),
                backward: LimitSet::plain(LimitSetKind::OffZUnknown),
                period: Some(p),
            };
            rep.quasi_closed = true;
            return rep;
        }
    }
    let end_set = |e: &EndRun| -> LimitSet {
        let f = field_of(e);
        match e.termination() {
            Termination::ZProximity if !e.in_far_chart => limit_set_estimate(f, bchart, &e.trajectory, opts),
            Termination::TimeLimit | Termination::Blowup => {
                let tr = &e.trajectory;
                let tl = bchart.t().eval(tr.last()).abs();
                let approaching = tr.len() >= 2 && tl < bchart.t().eval(&tr.states[tr.len() / 2]).abs();
                if !bchart.is_smooth() && !e.in_far_chart && tl <= opts.near_z_band && approaching {
                    limit_set_estimate(f, bchart, tr, opts)
                } else {
                    LimitSet::plain(LimitSetKind::OffZUnknown)
                }
            }
            _ => LimitSet::unresolved(),
        }
    };
    let class = OrbitClass::from_ends(end_set(&fwd), end_set(&bwd));
    rep.quasi_closed = class.is_quasi_closed();
    rep.class = class;
    rep
}

/// Classify many seeds (in parallel; output order follows `seeds`).
pub fn classify_batch(sys: &OrbitSystem, bchart: &BManifoldChart, seeds: &[Point], opts: &ClassifierOptions) -> Vec<ClassificationReport> {
    seeds.par_iter().map(|s| classify_detailed(sys, bchart, s, opts)).collect()
}

/// Counts per orbit kind, in enum order.
pub fn tally(reports: &[ClassificationReport]) -> std::collections::BTreeMap<OrbitKind, usize> {
    let mut m = std::collections::BTreeMap::new();
    for r in reports {
        *m.entry(r.class.kind).or_insert(0) += 1;
    }
    m
}

/// A surface carrying the exceptional Hamiltonian dynamics.
#[derive(Clone, Debug)]
pub enum ExceptionalSurface {
    /// `Z` of a b-form, with Hamiltonian `f|_Z` and the induced symplectic form.
    CriticalSet(BForm1),
    /// A 2D chart (optionally periodic) with a constant area form.
    Flat(FlatSurface),
}

#[derive(Clone, Debug)]
pub struct FlatSurface {
    pub chart: ChartRef,
    pub hamiltonian: ScalarField,
    /// `ω = area · dθ₁ ∧ dθ₂`.
    pub area: f64,
    /// Coordinate periods (torus) or `None` (plane region).
    pub periods: Option<[f64; 2]>,
    /// Region the chart is trusted on when not periodic.
    pub bounds: [[f64; 2]; 2],
}

impl FlatSurface {
    /// Hamiltonian field with `ι_X ω = −dH`.
    pub fn field(&self) -> Result<VectorField> {
        let h = self.hamiltonian.expr();
        let a = self.area;
        VectorField::from_exprs(&self.chart, "surface hamiltonian", vec![-(h.diff(1)?) / a, h.diff(0)? / a])
            .map(|f| f.with_invariants(vec![self.hamiltonian.clone()]))
    }

    fn wrap(&self, x: &[f64]) -> Vec<f64> {
        match self.periods {
            None => x.to_vec(),
            Some(p) => x
                .iter()
                .zip(p)
                .map(|(v, per)| {
                    let w = v.rem_euclid(per);
                    if per - w < 1e-9 {
                        0.0
                    } else {
                        w
                    }
                })
                .collect(),
        }
    }

    fn delta(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut d = sub(a, b);
        if let Some(p) = self.periods {
            for (di, per) in d.iter_mut().zip(p) {
                *di -= (*di / per).round() * per;
            }
        }
        d
    }
}

impl ExceptionalSurface {
    fn ambient_dim(&self) -> usize {
        match self {
            ExceptionalSurface::CriticalSet(a) => a.dim(),
            ExceptionalSurface::Flat(s) => s.chart.dim(),
        }
    }

    fn chart(&self) -> &ChartRef {
        match self {
            ExceptionalSurface::CriticalSet(a) => a.base().chart(),
            ExceptionalSurface::Flat(s) => &s.chart,
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            ExceptionalSurface::CriticalSet(_) => norm(&sub(a, b)),
            ExceptionalSurface::Flat(s) => norm(&s.delta(a, b)),
        }
    }

    fn tangent_basis(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        match self {
            ExceptionalSurface::CriticalSet(a) => z_tangent_basis(a.base(), x),
            ExceptionalSurface::Flat(_) => Ok(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
        }
    }

    /// The Hamiltonian flow on the surface (the Reeb field restricted to `Z`).
    pub fn field(&self) -> Result<VectorField> {
        match self {
            ExceptionalSurface::CriticalSet(a) => {
                if a.dim() != 3 {
                    return Err(Error::Dimension("surface flow on Z is available for 3D forms".into()));
                }
                reeb_field(a).map(|f| f.with_name("reeb on Z"))
            }
            ExceptionalSurface::Flat(s) => s.field(),
        }
    }

    fn hamiltonian(&self) -> &ScalarField {
        match self {
            ExceptionalSurface::CriticalSet(a) => a.f(),
            ExceptionalSurface::Flat(s) => &s.hamiltonian,
        }
    }
}

/// Nondegenerate-or-not critical point of the exceptional Hamiltonian.
#[derive(Clone, Debug, Serialize)]
pub struct CriticalPointOnZ {
    pub coords: Vec<f64>,
    pub morse_index: u8,
    pub value: f64,
    pub hessian_eigs: [f64; 2],
    /// `|grad_Z H|` at the refined point.
    pub gradient_residual: f64,
    pub morse: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalPointSet {
    pub points: Vec<CriticalPointOnZ>,
    /// False if any refined point is degenerate (non-Morse).
    pub all_morse: bool,
}

impl CriticalPointSet {
    pub fn saddles(&self) -> impl Iterator<Item = &CriticalPointOnZ> {
        self.points.iter().filter(|p| p.morse_index == 1 && p.morse)
    }

    pub fn indices(&self) -> Vec<u8> {
        self.points.iter().map(|p| p.morse_index).collect()
    }
}

fn hessian_of(grads: &[ScalarField], x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    grads.iter().map(|g| g.value_grad(x).d[..n].to_vec()).collect()
}

fn sym_eigs2(m: [[f64; 2]; 2]) -> [f64; 2] {
    let tr = m[0][0] + m[1][1];
    let off = 0.5 * (m[0][1] + m[1][0]);
    let diff = 0.5 * (m[0][0] - m[1][1]);
    let rad = diff.hypot(off);
    [0.5 * tr - rad, 0.5 * tr + rad]
}

/// Critical points of the exceptional Hamiltonian, refined by Newton from
/// the given seeds and deduplicated.
pub fn find_critical_points(surface: &ExceptionalSurface, seeds: &[Vec<f64>]) -> Result<CriticalPointSet> {
    let n = surface.ambient_dim();
    let h = surface.hamiltonian();
    let hgrad = h.gradient_fields()?;
    let mut found: Vec<CriticalPointOnZ> = Vec::new();
    for seed in seeds {
        if seed.len() != n {
            return Err(Error::Dimension(format!("seed of length {} for a {n}-dimensional chart", seed.len())));
        }
        let refined = match surface {
            ExceptionalSurface::CriticalSet(a) => refine_on_z(a, h, &hgrad, seed),
            ExceptionalSurface::Flat(s) => refine_flat(s, &hgrad, seed),
        };
        let Some((x, lagr_hess)) = refined else { continue };
        let basis = surface.tangent_basis(&x)?;
        let g = h.value_grad(&x);
        let tg: Vec<f64> = basis.iter().map(|e| dot(&g.d[..n], e)).collect();
        let gres = norm(&tg);
        if !(gres <= 1e-10) {
            continue;
        }
        if found.iter().any(|p| surface.distance(&p.coords, &x) < 1e-6) {
            continue;
        }
        let mut m = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let hv: Vec<f64> = (0..n).map(|i| dot(&lagr_hess[i], &basis[b])).collect();
                m[a][b] = dot(&basis[a], &hv);
            }
        }
        let eigs = sym_eigs2(m);
        let morse = eigs.iter().all(|e| e.abs() > 1e-8);
        let index = eigs.iter().filter(|e| **e < 0.0).count() as u8;
        found.push(CriticalPointOnZ { coords: x, morse_index: index, value: g.v, hessian_eigs: eigs, gradient_residual: gres, morse });
    }
    found.sort_by(|a, b| a.coords.partial_cmp(&b.coords).unwrap_or(std::cmp::Ordering::Equal));
    let all_morse = found.iter().all(|p| p.morse);
    Ok(CriticalPointSet { points: found, all_morse })
}

pub fn find_critical_points_on_z(a: &BForm1, seeds: &[Vec<f64>]) -> Result<CriticalPointSet> {
    if a.base().is_smooth() {
        return Err(Error::NotOnCriticalSet("smooth chart has no critical set".into()));
    }
    find_critical_points(&ExceptionalSurface::CriticalSet(a.clone()), seeds)
}

fn refine_flat(s: &FlatSurface, hgrad: &[ScalarField], seed: &[f64]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut x = seed.to_vec();
    for _ in 0..60 {
        let g: Vec<f64> = hgrad.iter().map(|gi| gi.eval(&x)).collect();
        let hs = hessian_of(hgrad, &x);
        if norm(&g) <= 1e-14 {
            break;
        }
        let m = DMatrix::from_fn(2, 2, |i, j| hs[i][j]);
        let step = m.lu().solve(&DVector::from_vec(g))?;
        x[0] -= step[0];
        x[1] -= step[1];
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        if step.norm() <= 1e-15 {
            break;
        }
    }
    if s.periods.is_none() && !(0..2).all(|i| x[i] >= s.bounds[i][0] && x[i] <= s.bounds[i][1]) {
        return None;
    }
    let x = s.wrap(&x);
    let hs = hessian_of(hgrad, &x);
    Some((x, hs))
}

/// Lagrange–Newton on `(∇f − Σ λ_k ∇g_k, g)` with `g = (t[, level])`.
fn refine_on_z(a: &BForm1, h: &ScalarField, hgrad: &[ScalarField], seed: &[f64]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let base = a.base();
    let n = a.dim();
    let mut cons: Vec<ScalarField> = vec![base.t().clone()];
    if let Some(l) = base.level() {
        cons.push(l.clone());
    }
    let m = cons.len();
    let cgrads: Vec<Vec<ScalarField>> = cons.iter().map(|c| c.gradient_fields()).collect::<Result<_>>().ok()?;
    let mut x = project_to_z(base, seed)?;
    let multipliers = |x: &[f64]| -> Option<Vec<f64>> {
        let j = DMatrix::from_fn(m, n, |i, k| cons[i].value_grad(x).d[k]);
        let g = DVector::from_iterator(n, h.value_grad(x).d[..n].iter().copied());
        let sol = (&j * j.transpose()).lu().solve(&(&j * g))?;
        Some(sol.iter().copied().collect())
    };
    let mut lam = multipliers(&x)?;
    let lagr = |x: &[f64], lam: &[f64]| -> Vec<Vec<f64>> {
        let mut hl = hessian_of(hgrad, x);
        for k in 0..m {
            let hk = hessian_of(&cgrads[k], x);
            for i in 0..n {
                for j in 0..n {
                    hl[i][j] -= lam[k] * hk[i][j];
                }
            }
        }
        hl
    };
    for _ in 0..60 {
        let gf = h.value_grad(&x);
        let cg: Vec<_> = cons.iter().map(|c| c.value_grad(&x)).collect();
        let mut rhs = DVector::zeros(n + m);
        for i in 0..n {
            rhs[i] = gf.d[i] - (0..m).map(|k| lam[k] * cg[k].d[i]).sum::<f64>();
        }
        for k in 0..m {
            rhs[n + k] = cg[k].v;
        }
        if rhs.norm() <= 1e-14 * (1.0 + norm(&gf.d[..n])) {
            break;
        }
        let hl = lagr(&x, &lam);
        let jac = DMatrix::from_fn(n + m, n + m, |i, j| match (i < n, j < n) {
            (true, true) => hl[i][j],
            (true, false) => -cg[j - n].d[i],
            (false, true) => cg[i - n].d[j],
            (false, false) => 0.0,
        });
        let step = jac.lu().solve(&rhs)?;
        for i in 0..n {
            x[i] -= step[i];
        }
        for k in 0..m {
            lam[k] -= step[n + k];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        if step.norm() <= 1e-16 * (1.0 + norm(&x)) {
            break;
        }
    }
    if !(base.t().eval(&x).abs() <= 1e-12) {
        return None;
    }
    let lam = multipliers(&x)?;
    let hl = lagr(&x, &lam);
    Some((x, hl))
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(tag = "type")]
pub enum SeparatrixLabel {
    Homoclinic,
    Heteroclinic { target: usize },
    Unlabeled,
}

/// One unstable separatrix branch of a saddle.
#[derive(Clone, Debug, Serialize)]
pub struct Separatrix {
    pub saddle: Vec<f64>,
    /// `+1` or `−1` along the unstable eigendirection.
    pub branch: i8,
    pub label: SeparatrixLabel,
    pub return_time: Option<f64>,
    pub energy_drift: f64,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparatrixOptions {
    pub offset: f64,
    pub capture: f64,
    pub horizon: f64,
}

impl Default for SeparatrixOptions {
    fn default() -> Self {
        SeparatrixOptions { offset: 1e-6, capture: 1e-3, horizon: 1000.0 }
    }
}

/// Singular periodic orbits carried by the separatrices (homoclinic or heteroclinic).
pub fn singular_periodic_count(seps: &[Separatrix]) -> usize {
    seps.iter().filter(|s| s.label != SeparatrixLabel::Unlabeled).count()
}

/// Trace both unstable branches of `saddle` with the surface Hamiltonian
/// flow and label them by the critical point they reach.
pub fn trace_separatrices(
    surface: &ExceptionalSurface,
    saddle: &CriticalPointOnZ,
    critical: &[CriticalPointOnZ],
    opts: &SeparatrixOptions,
) -> Result<Vec<Separatrix>> {
    if saddle.morse_index != 1 || !saddle.morse {
        return Err(Error::Config("separatrices are traced from nondegenerate saddles only".into()));
    }
    let n = surface.ambient_dim();
    let field = surface.field()?;
    let x0 = &saddle.coords;
    let basis = surface.tangent_basis(x0)?;
    let jac = tangent_jacobian(&field, x0, &basis);
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    let tr = jac[0][0] + jac[1][1];
    let disc = tr * tr / 4.0 - det;
    if !(disc > 0.0) {
        return Err(Error::Degeneracy(format!("no real unstable direction at {x0:?}")));
    }
    let lam = tr / 2.0 + disc.sqrt();
    let cand = [[jac[0][1], lam - jac[0][0]], [lam - jac[1][1], jac[1][0]]];
    let w = if cand[0][0].hypot(cand[0][1]) >= cand[1][0].hypot(cand[1][1]) { cand[0] } else { cand[1] };
    let wn = w[0].hypot(w[1]);
    let dir: Vec<f64> = (0..n).map(|i| (w[0] * basis[0][i] + w[1] * basis[1][i]) / wn).collect();
    let own = critical.iter().position(|c| surface.distance(&c.coords, x0) < 1e-8);
    let mut out = Vec::new();
    for branch in [1i8, -1] {
        let mut start: Vec<f64> = (0..n).map(|i| x0[i] + branch as f64 * opts.offset * dir[i]).collect();
        if let ExceptionalSurface::CriticalSet(a) = surface {
            start = project_to_z(a.base(), &start).ok_or_else(|| Error::Domain("offset point left Z".into()))?;
        }
        let left = Cell::new(false);
        let pts: Vec<Vec<f64>> = critical.iter().map(|c| c.coords.clone()).collect();
        let sx = x0.clone();
        let cap = opts.capture;
        let stop = |y: &[f64]| {
            if !left.get() {
                if surface.distance(y, &sx) > 10.0 * cap {
                    left.set(true);
                }
                return false;
            }
            pts.iter().any(|p| surface.distance(y, p) <= cap)
        };
        let io = IntegratorOptions { max_time: opts.horizon, ..IntegratorOptions::default() };
        let tr = Integrator::new(&field, &io).stop_when(stop).run(&start, 1.0)?;
        if tr.termination == Termination::Blowup || tr.states.iter().any(|s| s.iter().any(|c| !c.is_finite())) {
            return Err(Error::Config("separatrix left the surface chart".into()));
        }
        if let ExceptionalSurface::Flat(s) = surface {
            if s.periods.is_none()
                && tr.states.iter().any(|y| (0..2).any(|i| y[i] < s.bounds[i][0] || y[i] > s.bounds[i][1]))
            {
                return Err(Error::Config("separatrix left the surface chart".into()));
            }
        }
        let h = surface.hamiltonian();
        let h0 = h.eval(&start);
        let drift = tr.states.iter().map(|s| (h.eval(s) - h0).abs()).fold(0.0, f64::max);
        let (label, time) = if tr.termination == Termination::Stopped {
            let end = tr.last();
            let target = critical.iter().position(|c| surface.distance(end, &c.coords) <= cap);
            match (target, own) {
                (Some(t), Some(o)) if t == o => (SeparatrixLabel::Homoclinic, Some(tr.final_time())),
                (Some(t), _) => (SeparatrixLabel::Heteroclinic { target: t }, Some(tr.final_time())),
                _ => (SeparatrixLabel::Unlabeled, None),
            }
        } else {
            (SeparatrixLabel::Unlabeled, None)
        };
        out.push(Separatrix { saddle: x0.clone(), branch, label, return_time: time, energy_drift: drift, trajectory: Some(tr) });
    }
    let _ = surface.chart();
    Ok(out)
}

/// `Eᵀ DX E` for the field restricted to the tangent plane spanned by `E`.
fn tangent_jacobian(field: &VectorField, x: &[f64], basis: &[Vec<f64>]) -> [[f64; 2]; 2] {
    let n = x.len();
    let dx: Vec<Vec<f64>> = match field.jacobian(x) {
        Some(j) => j,
        None => {
            let h = 1e-6;
            let mut j = vec![vec![0.0; n]; n];
            for k in 0..n {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += h;
                xm[k] -= h;
                let (fp, fm) = (field.eval_vec(&xp), field.eval_vec(&xm));
                for i in 0..n {
                    j[i][k] = (fp[i] - fm[i]) / (2.0 * h);
                }
            }
            j
        }
    };
    let mut m = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let v: Vec<f64> = (0..n).map(|i| dot(&dx[i], &basis[b])).collect();
            m[a][b] = dot(&basis[a], &v);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::fields::{coords, Chart};

    fn rot2() -> VectorField {
        let x = coords(2);
        VectorField::from_exprs(&Chart::plane2(), "rot", vec![-x[1].clone(), x[0].clone()]).unwrap()
    }

    #[test]
    fn circle_period() {
        let f = rot2();
        let tr = Integrator::new(&f, &IntegratorOptions::default().with_max_time(20.0)).run(&[1.0, 0.0], 1.0).unwrap();
        let p = detect_periodic(&f, &tr, 1e-6).unwrap();
        assert!((p - std::f64::consts::TAU).abs() < 1e-8, "{p}");
        let back = Integrator::new(&f, &IntegratorOptions::default().with_max_time(20.0)).run(&[1.0, 0.0], -1.0).unwrap();
        assert!((detect_periodic(&f, &back, 1e-6).unwrap() - std::f64::consts::TAU).abs() < 1e-8);
    }

    #[test]
    fn spiral_is_not_periodic() {
        let x = coords(2);
        let f = VectorField::from_exprs(
            &Chart::plane2(),
            "spiral",
            vec![-x[1].clone() - 0.01 * x[0].clone(), x[0].clone() - 0.01 * x[1].clone()],
        )
        .unwrap();
        let tr = Integrator::new(&f, &IntegratorOptions::default().with_max_time(30.0)).run(&[1.0, 0.0], 1.0).unwrap();
        assert_eq!(detect_periodic(&f, &tr, 1e-6), None);
    }

    #[test]
    fn combination_table() {
        let pt = LimitSet::plain(LimitSetKind::PointOnZ { coords: vec![0.0, 0.0, 1.0] });
        let ci = LimitSet::plain(LimitSetKind::CircleOnZ { axial_level: 0.5, radius: 0.8, angular_rate_sign: 1 });
        let off = LimitSet::plain(LimitSetKind::OffZUnknown);
        let un = LimitSet::unresolved();
        assert_eq!(combine(&pt, &pt), OrbitKind::SingularPeriodic);
        assert_eq!(combine(&pt, &ci), OrbitKind::GeneralizedSingularPeriodic);
        assert_eq!(combine(&ci, &ci), OrbitKind::GeneralizedSingularPeriodic);
        assert_eq!(combine(&off, &pt), OrbitKind::EscapeOrbit);
        assert_eq!(combine(&ci, &off), OrbitKind::GeneralizedEscape);
        assert_eq!(combine(&off, &off), OrbitKind::Unresolved);
        assert_eq!(combine(&un, &pt), OrbitKind::Unresolved);
        let c = OrbitClass::from_ends(pt.clone(), ci.clone());
        assert!(c.is_quasi_closed() && c.is_escape() && c.is_generalized_escape());
        let c = OrbitClass::from_ends(ci, off);
        assert!(!c.is_quasi_closed() && !c.is_escape() && c.is_generalized_escape());
    }

    #[test]
    fn inversion_is_an_involution_fixing_the_unit_sphere() {
        let u = [0.3, -2.0, 0.7];
        let back = invert(&invert(&u));
        for i in 0..3 {
            assert!((back[i] - u[i]).abs() < 1e-15);
        }
        let s = [0.6, 0.0, 0.8];
        assert_eq!(invert(&s), s.to_vec());
    }

    #[test]
    fn projection_lands_on_z() {
        let c = Chart::cartesian3();
        let x = coords(3);
        let base = BManifoldChart::new(&c, x[0].powi(2) + x[1].powi(2) + x[2].powi(2) - 1.0).unwrap();
        let q = project_to_z(&base, &[0.3, 0.4, 1.2]).unwrap();
        assert!((norm(&q) - 1.0).abs() < 1e-14);
        assert!(project_to_z(&base, &[0.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn flat_plane_saddle_and_extrema() {
        // H = x² − y² has a single saddle at the origin.
        let x = coords(2);
        let h = ScalarField::new(&Chart::plane2(), x[0].powi(2) - x[1].powi(2)).unwrap();
        let s = ExceptionalSurface::Flat(FlatSurface {
            chart: Chart::plane2(),
            hamiltonian: h,
            area: 1.0,
            periods: None,
            bounds: [[-1.0, 1.0], [-1.0, 1.0]],
        });
        let set = find_critical_points(&s, &[vec![0.3, -0.2], vec![-0.1, 0.4]]).unwrap();
        assert_eq!(set.points.len(), 1);
        assert_eq!(set.points[0].morse_index, 1);
        // Its unstable branches run off the chart.
        let err = trace_separatrices(&s, &set.points[0], &set.points, &SeparatrixOptions::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn constant_hamiltonian_is_flagged() {
        let s = ExceptionalSurface::Flat(FlatSurface {
            chart: Chart::torus2(),
            hamiltonian: ScalarField::new(&Chart::torus2(), Expr::constant(2.0)).unwrap(),
            area: 1.0,
            periods: Some([std::f64::consts::TAU; 2]),
            bounds: [[0.0, std::f64::consts::TAU]; 2],
        });
        let set = find_critical_points(&s, &[vec![0.1, 0.2], vec![1.0, 2.0]]).unwrap();
        assert!(!set.all_morse);
        assert!(set.points.iter().all(|p| !p.morse));
    }

    #[test]
    fn frame_rates() {
        let f = CylFrame::standard(3);
        let (a, r, th) = f.coords(&[0.0, 2.0, 1.0]);
        assert_eq!((a, r), (1.0, 2.0));
        assert!((th - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!((f.angular_rate(&[1.0, 0.0, 0.0], &[0.0, 3.0, 0.0]) - 3.0).abs() < 1e-15);
        assert!(f.angular_rate(&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]).is_nan());
        assert!(f.non_azimuthal(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]) < 1e-15);
        let f4 = CylFrame::standard(4);
        assert_eq!((f4.axial, f4.plane), (1, [2, 3]));
    }
}
