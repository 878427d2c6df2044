//! Adaptive Dormand–Prince 5(4) integration with dense output, proximity
//! stops near the critical set, invariant monitoring and section crossings.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ChartRef, Point, ScalarField, VectorField};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_time: f64,
    /// Stop once `|t| ≤ z_proximity_stop` for the field's critical function.
    pub z_proximity_stop: f64,
    pub max_steps: usize,
    pub dense_output: bool,
    /// Optional upper bound on the step size.
    pub max_step: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_time: 100.0,
            z_proximity_stop: 1e-6,
            max_steps: 2_000_000,
            dense_output: true,
            max_step: None,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64, n: &str| {
            if x > 0.0 && !x.is_nan() {
                Ok(())
            } else {
                Err(Error::Config(format!("{n} must be positive, got {x}")))
            }
        };
        pos(self.rel_tol, "rel_tol")?;
        pos(self.abs_tol, "abs_tol")?;
        pos(self.max_time, "max_time")?;
        pos(self.z_proximity_stop, "z_proximity_stop")?;
        if let Some(h) = self.max_step {
            pos(h, "max_step")?;
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn with_max_time(mut self, t: f64) -> Self {
        self.max_time = t;
        self
    }

    pub fn with_tolerances(mut self, rel: f64, abs: f64) -> Self {
        self.rel_tol = rel;
        self.abs_tol = abs;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    TimeLimit,
    ZProximity,
    StepLimit,
    Blowup,
    /// A caller-supplied stop condition fired.
    Stopped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    ZProximity,
    StepFloor,
    NonFinite,
    StopCondition,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub state: Vec<f64>,
}

/// Continuous extension of one accepted step.
#[derive(Clone, Debug)]
struct Segment {
    t0: f64,
    h: f64,
    rc: [Vec<f64>; 5],
}

impl Segment {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        for i in 0..out.len() {
            let r = &self.rc;
            out[i] = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        }
    }
}

/// Time-stamped states of one integration.
///
/// `times` is the elapsed flow parameter `s ≥ 0`; the state at `s` is
/// `γ(time_sign · s)`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    chart: ChartRef,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub termination: Termination,
    pub invariant_drift: Vec<f64>,
    pub events: Vec<Event>,
    pub time_sign: f64,
    pub rejected_steps: usize,
    segments: Vec<Segment>,
}

impl Trajectory {
    pub fn chart(&self) -> &ChartRef {
        &self.chart
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn initial(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectories hold at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn has_dense(&self) -> bool {
        !self.segments.is_empty() || self.states.len() == 1
    }

    /// Dense-output state at elapsed time `s`.
    pub fn state_at(&self, s: f64) -> Option<Vec<f64>> {
        if self.segments.is_empty() || s < 0.0 || s > self.final_time() {
            return None;
        }
        let k = self.segments.partition_point(|seg| seg.t0 + seg.h < s).min(self.segments.len() - 1);
        let mut out = vec![0.0; self.chart.dim()];
        self.segments[k].eval(s, &mut out);
        Some(out)
    }

    /// The last `n` states (or all of them).
    pub fn tail(&self, n: usize) -> (&[f64], &[Vec<f64>]) {
        let k = self.states.len().saturating_sub(n);
        (&self.times[k..], &self.states[k..])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names = self.chart.coord_names().join(",");
        writeln!(w, "t,{names}")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let row: Vec<String> = s.iter().map(|c| format!("{c:.17e}")).collect();
            writeln!(w, "{:.17e},{}", self.time_sign * t, row.join(","))?;
        }
        Ok(())
    }

    pub fn metadata(&self) -> TrajectoryMetadata {
        TrajectoryMetadata {
            chart: self.chart.name().to_string(),
            coords: self.chart.coord_names().to_vec(),
            n_states: self.states.len(),
            time_sign: self.time_sign,
            final_time: self.final_time(),
            termination: self.termination,
            invariant_drift: self.invariant_drift.clone(),
            events: self.events.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub chart: String,
    pub coords: Vec<String>,
    pub n_states: usize,
    pub time_sign: f64,
    pub final_time: f64,
    pub termination: Termination,
    pub invariant_drift: Vec<f64>,
    pub events: Vec<Event>,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

type StopFn<'a> = dyn Fn(&[f64]) -> bool + 'a;

/// Configurable integration run.
pub struct Integrator<'a> {
    field: &'a VectorField,
    opts: IntegratorOptions,
    stop: Option<Box<StopFn<'a>>>,
}

impl<'a> Integrator<'a> {
    pub fn new(field: &'a VectorField, opts: &IntegratorOptions) -> Self {
        Integrator { field, opts: opts.clone(), stop: None }
    }

    /// Terminate (`Termination::Stopped`) after the first accepted step whose
    /// end state satisfies `pred`.
    pub fn stop_when<F: Fn(&[f64]) -> bool + 'a>(mut self, pred: F) -> Self {
        self.stop = Some(Box::new(pred));
        self
    }

    pub fn run(&self, x0: &[f64], time_sign: f64) -> Result<Trajectory> {
        self.opts.validate()?;
        let n = self.field.chart().dim();
        if x0.len() != n {
            return Err(Error::Dimension(format!("initial state has {} entries, chart needs {n}", x0.len())));
        }
        if time_sign != 1.0 && time_sign != -1.0 {
            return Err(Error::Config(format!("time_sign must be ±1, got {time_sign}")));
        }
        if x0.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite initial state".into()));
        }
        let crit = self.field.critical();
        let zstop = self.opts.z_proximity_stop;
        if let Some(t) = crit {
            if t.eval(x0).abs() <= zstop {
                return Err(Error::Domain(format!("initial state {x0:?} within the proximity stop of Z")));
            }
        }
        Ok(self.dopri(x0, time_sign, crit, zstop))
    }

    fn deriv(&self, sign: f64, y: &[f64], out: &mut [f64]) {
        self.field.eval(y, out);
        if sign < 0.0 {
            for v in out.iter_mut() {
                *v = -*v;
            }
        }
    }

    fn dopri(&self, x0: &[f64], sign: f64, crit: Option<&ScalarField>, zstop: f64) -> Trajectory {
        let o = &self.opts;
        let hmax = o.max_step.unwrap_or(f64::INFINITY);
        let n = x0.len();
        let invs = self.field.invariants();
        let inv0: Vec<f64> = invs.iter().map(|i| i.eval(x0)).collect();
        let mut drift = vec![0.0; invs.len()];
        let mut traj = Trajectory {
            chart: self.field.chart().clone(),
            times: vec![0.0],
            states: vec![x0.to_vec()],
            termination: Termination::TimeLimit,
            invariant_drift: vec![],
            events: vec![],
            time_sign: sign,
            rejected_steps: 0,
            segments: vec![],
        };
        let mut y = x0.to_vec();
        let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
        let mut ytmp = vec![0.0; n];
        let mut ynew = vec![0.0; n];
        self.deriv(sign, &y, &mut k[0]);
        if k[0].iter().any(|v| !v.is_finite()) {
            traj.termination = Termination::Blowup;
            traj.events.push(Event { time: 0.0, kind: EventKind::NonFinite, state: y.clone() });
            traj.invariant_drift = drift;
            return traj;
        }
        let sk = |a: f64, b: f64| o.abs_tol + o.rel_tol * a.abs().max(b.abs());
        let mut h = {
            let d0 = (y.iter().map(|v| (v / sk(*v, *v)).powi(2)).sum::<f64>() / n as f64).sqrt();
            let d1 = (k[0].iter().zip(&y).map(|(f, v)| (f / sk(*v, *v)).powi(2)).sum::<f64>() / n as f64).sqrt();
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            let h0 = h0.min(hmax).min(o.max_time);
            for i in 0..n {
                ytmp[i] = y[i] + h0 * k[0][i];
            }
            let mut f1 = vec![0.0; n];
            self.deriv(sign, &ytmp, &mut f1);
            let d2 = (f1.iter().zip(&k[0]).zip(&y).map(|((a, b), v)| ((a - b) / sk(*v, *v)).powi(2)).sum::<f64>()
                / n as f64)
                .sqrt()
                / h0;
            let m = d1.max(d2);
            let h1 = if m <= 1e-15 || !m.is_finite() { (h0 * 1e-3).max(1e-6) } else { (0.01 / m).powf(0.2) };
            (100.0 * h0).min(h1).min(hmax).min(o.max_time)
        };
        let mut s = 0.0;
        let mut facold: f64 = 1e-4;
        let mut last_rejected = false;
        let mut steps = 0usize;
        let beta = 0.04;
        let expo1 = 0.2 - beta * 0.75;
        let safe = 0.9;
        loop {
            if steps >= o.max_steps {
                traj.termination = Termination::StepLimit;
                break;
            }
            let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let floor = 1e-14 * ynorm.max(1.0);
            let mut last = false;
            if s + h >= o.max_time {
                h = o.max_time - s;
                last = true;
            }
            if h < floor && !last {
                traj.termination = Termination::StepLimit;
                traj.events.push(Event { time: s, kind: EventKind::StepFloor, state: y.clone() });
                break;
            }
            steps += 1;
            let (k1, rest) = k.split_at_mut(1);
            let k1 = &k1[0];
            let stage = |coefs: &[f64], ks: &[&Vec<f64>], out: &mut Vec<f64>| {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (c, kk) in coefs.iter().zip(ks) {
                        acc += c * kk[i];
                    }
                    out[i] = y[i] + h * acc;
                }
            };
            stage(&[A21], &[k1], &mut ytmp);
            self.deriv(sign, &ytmp, &mut rest[0]);
            stage(&[A31, A32], &[k1, &rest[0]], &mut ytmp);
            self.deriv(sign, &ytmp, &mut rest[1]);
            stage(&[A41, A42, A43], &[k1, &rest[0], &rest[1]], &mut ytmp);
            self.deriv(sign, &ytmp, &mut rest[2]);
            stage(&[A51, A52, A53, A54], &[k1, &rest[0], &rest[1], &rest[2]], &mut ytmp);
            self.deriv(sign, &ytmp, &mut rest[3]);
            stage(&[A61, A62, A63, A64, A65], &[k1, &rest[0], &rest[1], &rest[2], &rest[3]], &mut ytmp);
            self.deriv(sign, &ytmp, &mut rest[4]);
            stage(&[A71, 0.0, A73, A74, A75, A76], &[k1, &rest[0], &rest[1], &rest[2], &rest[3], &rest[4]], &mut ynew);
            self.deriv(sign, &ynew, &mut rest[5]);
            let mut err = 0.0;
            let mut finite = true;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * rest[1][i] + E4 * rest[2][i] + E5 * rest[3][i] + E6 * rest[4][i] + E7 * rest[5][i]);
                if !e.is_finite() || !ynew[i].is_finite() {
                    finite = false;
                }
                err += (e / sk(y[i], ynew[i])).powi(2);
            }
            if !finite {
                // Shrink hard; a genuine blowup shows up as a collapsing step.
                h *= 0.1;
                traj.rejected_steps += 1;
                last_rejected = true;
                if h < floor {
                    traj.termination = Termination::Blowup;
                    traj.events.push(Event { time: s, kind: EventKind::NonFinite, state: y.clone() });
                    break;
                }
                continue;
            }
            let err = (err / n as f64).sqrt();
            let fac11 = err.powf(expo1);
            if err <= 1.0 {
                let fac = (fac11 / facold.powf(beta) / safe).clamp(0.1, 5.0);
                let mut hnew = h / fac;
                facold = err.max(1e-4);
                if last_rejected {
                    hnew = hnew.min(h);
                }
                last_rejected = false;
                let seg = if o.dense_output || crit.is_some() {
                    let mut rc = [y.clone(), vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
                    for i in 0..n {
                        let ydiff = ynew[i] - y[i];
                        let bspl = h * k1[i] - ydiff;
                        rc[1][i] = ydiff;
                        rc[2][i] = bspl;
                        rc[3][i] = ydiff - h * rest[5][i] - bspl;
                        rc[4][i] = h * (D1 * k1[i] + D3 * rest[1][i] + D4 * rest[2][i] + D5 * rest[3][i] + D6 * rest[4][i] + D7 * rest[5][i]);
                    }
                    Some(Segment { t0: s, h, rc })
                } else {
                    None
                };
                let snew = if last { o.max_time } else { s + h };
                // Proximity stop: locate |t| = zstop on the dense output.
                if let (Some(t), Some(seg)) = (crit, seg.as_ref()) {
                    if t.eval(&ynew).abs() <= zstop {
                        let g = |tt: f64, buf: &mut Vec<f64>| {
                            seg.eval(tt, buf);
                            t.eval(buf).abs() - zstop
                        };
                        let mut buf = vec![0.0; n];
                        let (mut lo, mut hi) = (s, snew);
                        for _ in 0..100 {
                            if hi - lo <= 1e-14 * hi.abs().max(1.0) {
                                break;
                            }
                            let mid = 0.5 * (lo + hi);
                            if g(mid, &mut buf) > 0.0 {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        seg.eval(hi, &mut buf);
                        if o.dense_output {
                            traj.segments.push(seg.clone());
                        }
                        traj.times.push(hi);
                        traj.states.push(buf.clone());
                        update_drift(invs, &inv0, &buf, &mut drift);
                        traj.events.push(Event { time: hi, kind: EventKind::ZProximity, state: buf });
                        traj.termination = Termination::ZProximity;
                        break;
                    }
                }
                if o.dense_output {
                    if let Some(seg) = seg {
                        traj.segments.push(seg);
                    }
                }
                s = snew;
                y.copy_from_slice(&ynew);
                let k7 = rest[5].clone();
                k[0].copy_from_slice(&k7);
                traj.times.push(s);
                traj.states.push(y.clone());
                update_drift(invs, &inv0, &y, &mut drift);
                if let Some(stop) = &self.stop {
                    if stop(&y) {
                        traj.termination = Termination::Stopped;
                        traj.events.push(Event { time: s, kind: EventKind::StopCondition, state: y.clone() });
                        break;
                    }
                }
                if last {
                    traj.termination = Termination::TimeLimit;
                    break;
                }
                h = hnew.min(hmax);
            } else {
                h /= (fac11 / safe).min(5.0);
                last_rejected = true;
                traj.rejected_steps += 1;
            }
        }
        traj.invariant_drift = drift;
        traj
    }
}

fn update_drift(invs: &[ScalarField], inv0: &[f64], y: &[f64], drift: &mut [f64]) {
    for (d, (i, v0)) in drift.iter_mut().zip(invs.iter().zip(inv0)) {
        let dv = (i.eval(y) - v0).abs();
        if dv > *d || dv.is_nan() {
            *d = if dv.is_nan() { f64::INFINITY } else { dv };
        }
    }
}

/// Integrate `field` from `x0` for up to `opts.max_time`; `time_sign = −1` runs backward.
pub fn integrate(field: &VectorField, x0: &Point, opts: &IntegratorOptions, time_sign: f64) -> Result<Trajectory> {
    if **x0.chart() != **field.chart() {
        return Err(Error::Dimension("initial point and field live on different charts".into()));
    }
    Integrator::new(field, opts).run(x0.coords(), time_sign)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
    Both,
}

/// The hypersurface `{g = 0}` with a crossing direction.
#[derive(Clone, Debug)]
pub struct Section {
    pub g: ScalarField,
    pub direction: Direction,
}

impl Section {
    pub fn new(g: ScalarField, direction: Direction) -> Self {
        Section { g, direction }
    }
}

/// Crossings of `s` located on the dense output to 1e-12 in time.
pub fn section_crossings(traj: &Trajectory, sec: &Section) -> Result<Vec<(f64, Point)>> {
    if traj.segments.is_empty() && traj.len() > 1 {
        return Err(Error::Config("section crossings need dense output".into()));
    }
    let n = traj.chart.dim();
    let mut out = Vec::new();
    let mut buf = vec![0.0; n];
    const SUB: usize = 4;
    for seg in &traj.segments {
        let mut ta = seg.t0;
        seg.eval(ta, &mut buf);
        let mut ga = sec.g.eval(&buf);
        for k in 1..=SUB {
            let tb = seg.t0 + seg.h * k as f64 / SUB as f64;
            seg.eval(tb, &mut buf);
            let gb = sec.g.eval(&buf);
            let up = ga < 0.0 && gb >= 0.0;
            let down = ga > 0.0 && gb <= 0.0;
            let hit = match sec.direction {
                Direction::Up => up,
                Direction::Down => down,
                Direction::Both => up || down,
            };
            if hit {
                let (mut lo, mut hi) = (ta, tb);
                let sgn_lo = ga.signum();
                for _ in 0..200 {
                    if hi - lo <= 1e-12 {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    seg.eval(mid, &mut buf);
                    if sec.g.eval(&buf).signum() == sgn_lo {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let tc = 0.5 * (lo + hi);
                seg.eval(tc, &mut buf);
                out.push((tc, Point::new(&traj.chart, &buf)?));
            }
            ta = tb;
            ga = gb;
        }
    }
    Ok(out)
}

/// `max |I(state) − I(x0)|` over the stored states.
pub fn first_integral_drift(traj: &Trajectory, inv: &ScalarField) -> f64 {
    let i0 = inv.eval(traj.initial());
    traj.states.iter().map(|s| (inv.eval(s) - i0).abs()).fold(0.0, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::fields::{coords, Chart};

    fn circle() -> VectorField {
        let x = coords(2);
        VectorField::from_exprs(&Chart::plane2(), "rot", vec![-x[1].clone(), x[0].clone()]).unwrap()
    }

    #[test]
    fn constant_field_translates() {
        let c = Chart::cartesian3();
        let f = VectorField::from_exprs(&c, "2dz", vec![Expr::zero(), Expr::zero(), Expr::constant(2.0)]).unwrap();
        let tr = integrate(&f, &Point::new(&c, &[0.1, 0.0, 0.0]).unwrap(), &IntegratorOptions::default().with_max_time(1.0), 1.0).unwrap();
        assert_eq!(tr.termination, Termination::TimeLimit);
        let e = tr.last();
        assert!((e[0] - 0.1).abs() < 1e-10 && e[1].abs() < 1e-10 && (e[2] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn circle_flow_period_and_accuracy() {
        let tp = std::f64::consts::TAU;
        let tr = integrate(&circle(), &Point::new(&Chart::plane2(), &[1.0, 0.0]).unwrap(), &IntegratorOptions::default().with_max_time(3.0 * tp), 1.0).unwrap();
        let e = tr.last();
        assert!((e[0] - 1.0).abs() < 1e-8 && e[1].abs() < 1e-8);
        let g = ScalarField::new(&Chart::plane2(), Expr::var(1)).unwrap();
        let xs = section_crossings(&tr, &Section::new(g, Direction::Up)).unwrap();
        assert_eq!(xs.len(), 3);
        for (k, (t, _)) in xs.iter().enumerate() {
            assert!((t - tp * (k + 1) as f64).abs() < 1e-8, "{t}");
        }
    }

    #[test]
    fn dense_output_tracks_exact_solution() {
        let tr = integrate(&circle(), &Point::new(&Chart::plane2(), &[1.0, 0.0]).unwrap(), &IntegratorOptions::default().with_max_time(5.0), 1.0).unwrap();
        for k in 0..50 {
            let s = 0.1 * k as f64;
            let y = tr.state_at(s).unwrap();
            assert!((y[0] - s.cos()).abs() < 1e-8 && (y[1] - s.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn backward_time_returns_home() {
        let f = circle();
        let c = Chart::plane2();
        let opts = IntegratorOptions::default().with_max_time(7.3);
        let fw = integrate(&f, &Point::new(&c, &[0.3, 0.8]).unwrap(), &opts, 1.0).unwrap();
        let bw = integrate(&f, &Point::new(&c, fw.last()).unwrap(), &opts, -1.0).unwrap();
        let e = bw.last();
        assert!((e[0] - 0.3).abs() < 1e-7 && (e[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn section_through_plane() {
        let c = Chart::cartesian3();
        let f = VectorField::from_exprs(&c, "dz", vec![Expr::zero(), Expr::zero(), Expr::one()]).unwrap();
        let tr = integrate(&f, &Point::new(&c, &[0.0, 0.0, -1.0]).unwrap(), &IntegratorOptions::default().with_max_time(3.0), 1.0).unwrap();
        let g = ScalarField::new(&c, Expr::var(2)).unwrap();
        let up = section_crossings(&tr, &Section::new(g.clone(), Direction::Up)).unwrap();
        assert_eq!(up.len(), 1);
        assert!((up[0].0 - 1.0).abs() < 1e-10);
        assert!(section_crossings(&tr, &Section::new(g, Direction::Down)).unwrap().is_empty());
    }

    #[test]
    fn gradient_flow_drifts_its_potential() {
        let c = Chart::plane2();
        let x = coords(2);
        let i = ScalarField::new(&c, x[0].powi(2) + x[1].powi(2)).unwrap();
        let f = VectorField::from_exprs(&c, "grad", vec![2.0 * x[0].clone(), 2.0 * x[1].clone()]).unwrap();
        let tr = integrate(&f, &Point::new(&c, &[0.1, 0.1]).unwrap(), &IntegratorOptions::default().with_max_time(1.0), 1.0).unwrap();
        assert!(first_integral_drift(&tr, &i) > 0.1);
        let rot = circle().with_invariants(vec![i.clone()]);
        let tr = integrate(&rot, &Point::new(&c, &[0.1, 0.1]).unwrap(), &IntegratorOptions::default().with_max_time(50.0), 1.0).unwrap();
        assert!(first_integral_drift(&tr, &i) < 1e-10);
        assert!(tr.invariant_drift[0] < 1e-10);
    }

    #[test]
    fn proximity_stop_near_critical_line() {
        // ẋ = −x approaches {x = 0} exponentially: the proximity stop must fire.
        let c = Chart::plane2();
        let x = coords(2);
        let t = ScalarField::new(&c, x[0].clone()).unwrap();
        let f = VectorField::from_exprs(&c, "contract", vec![-x[0].clone(), Expr::one()]).unwrap().with_critical(t);
        let tr = integrate(&f, &Point::new(&c, &[1.0, 0.0]).unwrap(), &IntegratorOptions::default().with_max_time(100.0), 1.0).unwrap();
        assert_eq!(tr.termination, Termination::ZProximity);
        assert!((tr.last()[0] - 1e-6).abs() < 1e-12);
        assert!((tr.final_time() - 1e6f64.ln()).abs() < 1e-6);
        assert!(integrate(&f, &Point::new(&c, &[1e-7, 0.0]).unwrap(), &IntegratorOptions::default(), 1.0).is_err());
    }

    #[test]
    fn finite_time_blowup_is_a_termination() {
        let c = Chart::plane2();
        let x = coords(2);
        let f = VectorField::from_exprs(&c, "riccati", vec![x[0].powi(2), Expr::zero()]).unwrap();
        let tr = integrate(&f, &Point::new(&c, &[1.0, 0.0]).unwrap(), &IntegratorOptions::default().with_max_time(2.0), 1.0).unwrap();
        assert!(matches!(tr.termination, Termination::Blowup | Termination::StepLimit));
        assert!(tr.final_time() < 1.0 + 1e-6);
    }

    #[test]
    fn fifth_order_convergence() {
        // Fixed-count comparison: error ratio between tolerance levels.
        let c = Chart::plane2();
        let run = |tol: f64| {
            let tr = integrate(&circle(), &Point::new(&c, &[1.0, 0.0]).unwrap(), &IntegratorOptions::default().with_tolerances(tol, tol).with_max_time(10.0), 1.0).unwrap();
            let e = tr.last();
            ((e[0] - 10f64.cos()).powi(2) + (e[1] - 10f64.sin()).powi(2)).sqrt()
        };
        let (e1, e2) = (run(1e-6), run(1e-9));
        assert!(e2 < e1 * 1e-2, "{e1} {e2}");
    }

    #[test]
    fn csv_header_and_rows() {
        let tr = integrate(&circle(), &Point::new(&Chart::plane2(), &[1.0, 0.0]).unwrap(), &IntegratorOptions::default().with_max_time(1.0), -1.0).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x,y");
        assert_eq!(lines.count(), tr.len());
        let meta = serde_json::to_value(tr.metadata()).unwrap();
        assert_eq!(meta["time_sign"], -1.0);
        assert_eq!(meta["termination"], "TimeLimit");
    }
}
