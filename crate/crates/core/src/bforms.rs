//! b-forms of degree 1 and 2 in decomposed shape relative to a defining
//! function `t` of the critical hypersurface `Z = {t = 0}`:
//!
//! * `α = f·dt/t + β`
//! * `ω = η ∧ dt/t + B`
//!
//! Coefficients are smooth across `Z`, so every evaluation is finite there.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Expr, Tape, MAX_DIM};
use crate::fields::{ChartRef, Point, ScalarField, SmoothMap, VectorField};
use crate::vecmath::{cross, dot, norm, orthonormal_complement};

/// Default tolerance on `|t|` for a point to count as lying on `Z`.
pub const Z_TOL: f64 = 1e-10;
/// Default lower bound on the contact-volume coefficient.
pub const CONTACT_THRESHOLD: f64 = 1e-6;

/// A chart together with the defining function of its critical set.
#[derive(Clone, Debug)]
pub struct BManifoldChart {
    chart: ChartRef,
    t: ScalarField,
    grad_t: Arc<Tape>,
    level: Option<ScalarField>,
    smooth: bool,
    z_tol: f64,
}

impl BManifoldChart {
    /// b-manifold chart with critical set `{t = 0}`.
    pub fn new(chart: &ChartRef, t: Expr) -> Result<BManifoldChart> {
        if !(3..=4).contains(&chart.dim()) {
            return Err(Error::Dimension(format!("b-manifold charts have dimension 3 or 4, got {}", chart.dim())));
        }
        let grads: Vec<Expr> = (0..chart.dim()).map(|i| t.diff(i)).collect::<Result<_>>()?;
        Ok(BManifoldChart {
            chart: chart.clone(),
            t: ScalarField::new(chart, t)?,
            grad_t: Arc::new(Tape::compile(&grads)),
            level: None,
            smooth: false,
            z_tol: Z_TOL,
        })
    }

    /// Ordinary manifold: `t ≡ 1` sentinel, empty critical set.
    pub fn smooth(chart: &ChartRef) -> Result<BManifoldChart> {
        let mut b = BManifoldChart::new(chart, Expr::one())?;
        b.smooth = true;
        Ok(b)
    }

    /// Restrict attention to the hypersurface `{level = 0}` (e.g. a 3-sphere in R⁴).
    pub fn with_level(mut self, level: Expr) -> Result<BManifoldChart> {
        self.level = Some(ScalarField::new(&self.chart, level)?);
        Ok(self)
    }

    pub fn with_z_tol(mut self, tol: f64) -> BManifoldChart {
        self.z_tol = tol;
        self
    }

    pub fn chart(&self) -> &ChartRef {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn t(&self) -> &ScalarField {
        &self.t
    }

    pub fn level(&self) -> Option<&ScalarField> {
        self.level.as_ref()
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn z_tol(&self) -> f64 {
        self.z_tol
    }

    pub fn on_z(&self, x: &[f64]) -> bool {
        !self.smooth && self.t.eval(x).abs() <= self.z_tol
    }

    /// Hessian of `t` (rows `∂_j ∂_i t`).
    pub fn hessian_t(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n = self.dim();
        self.grad_t.eval_dual(x).iter().map(|d| d.d[..n].to_vec()).collect()
    }

    /// Regular-value check: `|∇t| ≥ 1e-3` wherever `|t| ≤ 1e-3` among `samples`.
    pub fn check_regular(&self, samples: &[Vec<f64>]) -> Result<()> {
        if self.smooth {
            return Ok(());
        }
        let n = self.dim();
        for x in samples {
            let d = self.t.value_grad(x);
            if d.v.abs() <= 1e-3 && norm(&d.d[..n]) < 1e-3 {
                return Err(Error::Domain(format!("0 is not a regular value of t near {x:?}")));
            }
        }
        Ok(())
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        if **p.chart() != *self.chart {
            return Err(Error::Dimension(format!(
                "point on chart {} used with b-chart on {}",
                p.chart().name(),
                self.chart.name()
            )));
        }
        Ok(())
    }
}

/// Pointwise values and first derivatives of the coefficients of a [`BForm1`].
#[derive(Clone, Copy, Debug)]
pub struct FormJet {
    pub dim: usize,
    pub t: f64,
    pub dt: [f64; MAX_DIM],
    pub f: f64,
    pub df: [f64; MAX_DIM],
    pub beta: [f64; MAX_DIM],
    /// `dbeta[i][j] = ∂_i β_j`.
    pub dbeta: [[f64; MAX_DIM]; MAX_DIM],
}

impl FormJet {
    /// `dβ(e_i, e_j) = ∂_i β_j − ∂_j β_i`.
    pub fn dbeta_form(&self, i: usize, j: usize) -> f64 {
        self.dbeta[i][j] - self.dbeta[j][i]
    }

    /// `dβ(u, v)`.
    pub fn dbeta_pair(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += u[i] * v[j] * self.dbeta_form(i, j);
            }
        }
        s
    }

    /// curl β (3D only).
    pub fn curl(&self) -> [f64; 3] {
        [self.dbeta_form(1, 2), self.dbeta_form(2, 0), self.dbeta_form(0, 1)]
    }

    fn all_finite(&self) -> bool {
        self.t.is_finite()
            && self.f.is_finite()
            && self.dt.iter().chain(&self.df).chain(&self.beta).all(|x| x.is_finite())
            && self.dbeta.iter().flatten().all(|x| x.is_finite())
    }

    /// `t·(α∧dα)(u, v, w) = ((f dt + tβ)∧dβ + β∧df∧dt)(u, v, w)`.
    pub fn scaled_volume_on(&self, u: &[f64], v: &[f64], w: &[f64]) -> f64 {
        let n = self.dim;
        let a: Vec<f64> = (0..n).map(|i| self.f * self.dt[i] + self.t * self.beta[i]).collect();
        let dfdt = |x: &[f64], y: &[f64]| dot(&self.df[..n], x) * dot(&self.dt[..n], y) - dot(&self.df[..n], y) * dot(&self.dt[..n], x);
        let b = &self.beta[..n];
        let wedge = |a: &[f64], two: &dyn Fn(&[f64], &[f64]) -> f64| {
            dot(a, u) * two(v, w) - dot(a, v) * two(u, w) + dot(a, w) * two(u, v)
        };
        let db = |x: &[f64], y: &[f64]| self.dbeta_pair(x, y);
        wedge(&a, &db) + wedge(b, &dfdt)
    }
}

/// `α = f·dt/t + Σ β_i dx_i`.
#[derive(Clone, Debug)]
pub struct BForm1 {
    base: BManifoldChart,
    f: ScalarField,
    beta: Vec<ScalarField>,
    bundle: Arc<Tape>,
}

impl BForm1 {
    pub fn new(base: &BManifoldChart, f: Expr, beta: Vec<Expr>) -> Result<BForm1> {
        let n = base.dim();
        if beta.len() != n {
            return Err(Error::Dimension(format!("β has {} components on a {n}-dimensional chart", beta.len())));
        }
        if base.is_smooth() && !f.is_zero() {
            return Err(Error::Config("a form on a smooth chart has no singular part".into()));
        }
        let chart = base.chart();
        let fs = ScalarField::new(chart, f.clone())?;
        let bs = beta.iter().map(|b| ScalarField::new(chart, b.clone())).collect::<Result<Vec<_>>>()?;
        let mut outs = vec![base.t().expr().clone(), f];
        outs.extend(beta);
        Ok(BForm1 { base: base.clone(), f: fs, beta: bs, bundle: Arc::new(Tape::compile(&outs)) })
    }

    /// Smooth 1-form `Σ β_i dx_i` on an ordinary chart.
    pub fn smooth(base: &BManifoldChart, beta: Vec<Expr>) -> Result<BForm1> {
        BForm1::new(base, Expr::zero(), beta)
    }

    pub fn zero(base: &BManifoldChart) -> BForm1 {
        BForm1::new(base, Expr::zero(), vec![Expr::zero(); base.dim()]).expect("zero form is well formed")
    }

    pub fn base(&self) -> &BManifoldChart {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn beta(&self) -> &[ScalarField] {
        &self.beta
    }

    pub fn beta_exprs(&self) -> Vec<Expr> {
        self.beta.iter().map(|b| b.expr().clone()).collect()
    }

    /// All coefficients with first derivatives at `x` in one dual pass.
    pub fn jet(&self, x: &[f64]) -> FormJet {
        let d = self.bundle.eval_dual(x);
        let n = self.dim();
        let mut beta = [0.0; MAX_DIM];
        let mut dbeta = [[0.0; MAX_DIM]; MAX_DIM];
        for j in 0..n {
            beta[j] = d[2 + j].v;
            for i in 0..n {
                dbeta[i][j] = d[2 + j].d[i];
            }
        }
        FormJet { dim: n, t: d[0].v, dt: d[0].d, f: d[1].v, df: d[1].d, beta, dbeta }
    }

    pub(crate) fn checked_jet(&self, p: &Point) -> Result<FormJet> {
        self.base.check_point(p)?;
        let j = self.jet(p.coords());
        if !j.all_finite() {
            return Err(Error::Domain(format!("form coefficients not finite at {p}")));
        }
        Ok(j)
    }

    /// Coefficientwise `(1 − w)·self + w·other`; both forms must share `t`.
    pub fn blend(&self, other: &BForm1, w: &Expr) -> Result<BForm1> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension("blended forms live on different dimensions".into()));
        }
        let v = 1.0 - w.clone();
        let f = v.clone() * self.f.expr().clone() + w.clone() * other.f.expr().clone();
        let beta = self
            .beta
            .iter()
            .zip(&other.beta)
            .map(|(a, b)| v.clone() * a.expr().clone() + w.clone() * b.expr().clone())
            .collect();
        BForm1::new(&self.base, f, beta)
    }

    /// `λ·α` for a scalar expression `λ`.
    pub fn scaled(&self, lambda: &Expr) -> Result<BForm1> {
        let f = lambda.clone() * self.f.expr().clone();
        let beta = self.beta.iter().map(|b| lambda.clone() * b.expr().clone()).collect();
        BForm1::new(&self.base, f, beta)
    }

    /// Wrap the same coefficients over another base chart (same coordinates).
    pub fn rebase(&self, base: &BManifoldChart) -> Result<BForm1> {
        BForm1::new(base, self.f.expr().clone(), self.beta_exprs())
    }
}

/// `ω = η ∧ dt/t + B` with `B` antisymmetric.
#[derive(Clone, Debug)]
pub struct BForm2 {
    base: BManifoldChart,
    eta: Vec<ScalarField>,
    b: Vec<Vec<ScalarField>>,
    tape: Arc<Tape>,
}

impl BForm2 {
    /// `b` must be antisymmetric; diagonal entries must be literally zero and
    /// `b[j][i] = −b[i][j]` is checked at probe points.
    pub fn new(base: &BManifoldChart, eta: Vec<Expr>, b: Vec<Vec<Expr>>) -> Result<BForm2> {
        let n = base.dim();
        if eta.len() != n || b.len() != n || b.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("2-form coefficients must match the chart dimension".into()));
        }
        for i in 0..n {
            if !b[i][i].is_zero() {
                return Err(Error::Config("2-form matrix has a nonzero diagonal".into()));
            }
        }
        if base.is_smooth() && eta.iter().any(|e| !e.is_zero()) {
            return Err(Error::Config("a 2-form on a smooth chart has no singular part".into()));
        }
        let chart = base.chart();
        let eta_s = eta.iter().map(|e| ScalarField::new(chart, e.clone())).collect::<Result<Vec<_>>>()?;
        let b_s = b
            .iter()
            .map(|r| r.iter().map(|e| ScalarField::new(chart, e.clone())).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let mut outs = eta.clone();
        outs.extend(b.iter().flatten().cloned());
        let form = BForm2 { base: base.clone(), eta: eta_s, b: b_s, tape: Arc::new(Tape::compile(&outs)) };
        for probe in [[0.31, -0.47, 0.73, 0.19], [-0.83, 0.29, -0.11, 0.61]] {
            let (_, m) = form.eval(&probe[..n]);
            for i in 0..n {
                for j in 0..n {
                    if m[i][j].is_finite() && (m[i][j] + m[j][i]).abs() > 1e-12 * (1.0 + m[i][j].abs()) {
                        return Err(Error::Config("2-form matrix is not antisymmetric".into()));
                    }
                }
            }
        }
        Ok(form)
    }

    pub fn base(&self) -> &BManifoldChart {
        &self.base
    }

    pub fn eta(&self) -> &[ScalarField] {
        &self.eta
    }

    pub fn b(&self) -> &[Vec<ScalarField>] {
        &self.b
    }

    /// `(η(x), B(x))`.
    pub fn eval(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.base.dim();
        let v = self.tape.eval_f64(x);
        let eta = v[..n].to_vec();
        let b = (0..n).map(|i| v[n + i * n..n + (i + 1) * n].to_vec()).collect();
        (eta, b)
    }

    /// `ω(u, v)` off `Z`.
    pub fn pair(&self, p: &Point, u: &[f64], v: &[f64]) -> Result<f64> {
        self.base.check_point(p)?;
        let x = p.coords();
        let n = self.base.dim();
        let (eta, b) = self.eval(x);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += u[i] * v[j] * b[i][j];
            }
        }
        if !self.base.is_smooth() {
            let td = self.base.t().value_grad(x);
            if td.v.abs() <= self.base.z_tol() {
                return Err(Error::SingularPairing(format!("2-form paired at {p} on the critical set")));
            }
            let dt = &td.d[..n];
            s += (dot(&eta, u) * dot(dt, v) - dot(&eta, v) * dot(dt, u)) / td.v;
        }
        Ok(s)
    }

    /// Coefficients of the 3-forms `dB` and `dη` at `x`:
    /// `(dB)_{ijk} = ∂_i B_jk + ∂_j B_ki + ∂_k B_ij`, `(dη)_{ij} = ∂_i η_j − ∂_j η_i`.
    pub fn differential(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
        let n = self.base.dim();
        let d = self.tape.eval_dual(x);
        let deta = (0..n).map(|i| (0..n).map(|j| d[j].d[i] - d[i].d[j]).collect()).collect();
        let bd = |i: usize, j: usize, k: usize| d[n + j * n + k].d[i];
        let db = (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| bd(i, j, k) + bd(j, k, i) + bd(k, i, j)).collect()).collect())
            .collect();
        (deta, db)
    }
}

/// `dα = df ∧ dt/t + dβ`, computed structurally.
pub fn exterior_derivative(a: &BForm1) -> Result<BForm2> {
    let n = a.dim();
    let eta = (0..n).map(|i| a.f().expr().diff(i)).collect::<Result<Vec<_>>>()?;
    let mut d = vec![vec![Expr::zero(); n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            if i != j {
                *entry = a.beta()[j].expr().diff(i)? - a.beta()[i].expr().diff(j)?;
            }
        }
    }
    let eta = if a.base().is_smooth() { vec![Expr::zero(); n] } else { eta };
    BForm2::new(a.base(), eta, d)
}

/// `α(v)`. On `Z` only vectors tangent to `Z` may be paired; the singular
/// term is then taken as 0.
pub fn pair_1form(a: &BForm1, p: &Point, v: &[f64]) -> Result<f64> {
    let j = a.checked_jet(p)?;
    let n = a.dim();
    if v.len() != n {
        return Err(Error::Dimension(format!("vector of length {} paired with a {n}-form", v.len())));
    }
    let smooth = dot(&j.beta[..n], v);
    if a.base().is_smooth() {
        return Ok(smooth);
    }
    let dtv = dot(&j.dt[..n], v);
    if j.t.abs() > a.base().z_tol() {
        return Ok(j.f * dtv / j.t + smooth);
    }
    if dtv.abs() <= 1e-12 * (1.0 + norm(&j.dt[..n]) * norm(v)) {
        Ok(smooth)
    } else {
        Err(Error::SingularPairing(format!("vector transverse to Z at {p}")))
    }
}

/// `α(v)` for a b-vector with tangent value `v` and normal rate `dt(v)/t = u`.
pub fn pair_b_vector(a: &BForm1, p: &Point, v: &[f64], normal_rate: f64) -> Result<f64> {
    let j = a.checked_jet(p)?;
    Ok(j.f * normal_rate + dot(&j.beta[..a.dim()], v))
}

/// `α(X)(p)` for a b-vector field. Off `Z` this is [`pair_1form`]; on `Z` the
/// normal rate `dt(X)/t` is obtained from its limit along `∇t` (requires an
/// expression-built field for the exact Jacobian).
pub fn pair_with_field(a: &BForm1, x_field: &VectorField, p: &Point) -> Result<f64> {
    let v = x_field.eval_point(p)?;
    if !a.base().on_z(p.coords()) {
        return pair_1form(a, p, &v);
    }
    let x = p.coords();
    let n = a.dim();
    let td = a.base().t().value_grad(x);
    let dt = &td.d[..n];
    let jac = x_field
        .jacobian(x)
        .ok_or_else(|| Error::SingularPairing("normal rate on Z needs an expression-built field".into()))?;
    let hess = a.base().hessian_t(x);
    let g = norm(dt);
    if g == 0.0 {
        return Err(Error::Domain(format!("∇t vanishes at {p}")));
    }
    // d/dn (∇t·X) / d/dn t along the unit normal n = ∇t/|∇t|.
    let mut num = 0.0;
    for jdx in 0..n {
        let nj = dt[jdx] / g;
        let mut s = 0.0;
        for i in 0..n {
            s += hess[i][jdx] * v[i] + dt[i] * jac[i][jdx];
        }
        num += nj * s;
    }
    pair_b_vector(a, p, &v, num / g)
}

/// `C(p)` with `α∧dα = C·dx∧dy∧dz / t` (3D). Smooth across `Z`.
pub fn contact_volume_coefficient(a: &BForm1, p: &Point) -> Result<f64> {
    if a.dim() != 3 {
        return Err(Error::Dimension(format!("contact volume coefficient needs dim 3, got {}", a.dim())));
    }
    Ok(volume_from_jet(&a.checked_jet(p)?))
}

pub(crate) fn volume_from_jet(j: &FormJet) -> f64 {
    let curl = j.curl();
    let fxt = cross(&j.df[..3], &j.dt[..3]);
    j.f * dot(&j.dt[..3], &curl) + dot(&j.beta[..3], &fxt) + j.t * dot(&j.beta[..3], &curl)
}

/// Positively oriented orthonormal tangent frame of the level hypersurface at `x`.
fn level_frame(level: &ScalarField, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = level.chart().dim();
    let d = level.value_grad(x);
    let g = d.d[..n].to_vec();
    let gn = norm(&g);
    if gn == 0.0 {
        return Err(Error::Domain("level function has vanishing gradient".into()));
    }
    let nrm: Vec<f64> = g.iter().map(|c| c / gn).collect();
    let mut frame = orthonormal_complement(std::slice::from_ref(&nrm), n);
    let det = {
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, 0)] = nrm[i];
            for (k, e) in frame.iter().enumerate() {
                m[(i, k + 1)] = e[i];
            }
        }
        m.determinant()
    };
    if det < 0.0 {
        frame.swap(0, 1);
    }
    Ok((nrm, frame))
}

/// Contact-volume coefficient of a 4D b-form restricted to its level
/// hypersurface: `t·α∧dα` evaluated on an oriented orthonormal tangent frame.
pub fn contact_volume_coefficient_on_level(a: &BForm1, p: &Point) -> Result<f64> {
    let level = a
        .base()
        .level()
        .ok_or_else(|| Error::Config("form has no level hypersurface declared".into()))?;
    if a.dim() != 4 {
        return Err(Error::Dimension("level-restricted volume needs dim 4".into()));
    }
    let j = a.checked_jet(p)?;
    let (_, fr) = level_frame(level, p.coords())?;
    Ok(j.scaled_volume_on(&fr[0], &fr[1], &fr[2]))
}

/// Where to test the contact condition.
#[derive(Clone, Debug)]
pub struct SamplingPlan {
    pub points: Vec<Vec<f64>>,
    pub threshold: f64,
}

impl SamplingPlan {
    pub fn new(points: Vec<Vec<f64>>) -> SamplingPlan {
        SamplingPlan { points, threshold: CONTACT_THRESHOLD }
    }

    /// Cartesian grid with `n` points per axis on the box `[lo_i, hi_i]`.
    pub fn grid(lo: &[f64], hi: &[f64], n: usize) -> SamplingPlan {
        let d = lo.len();
        let mut pts = Vec::with_capacity(n.pow(d as u32));
        let step = |i: usize, k: usize| {
            if n == 1 {
                0.5 * (lo[i] + hi[i])
            } else {
                lo[i] + (hi[i] - lo[i]) * k as f64 / (n - 1) as f64
            }
        };
        let mut idx = vec![0usize; d];
        loop {
            pts.push((0..d).map(|i| step(i, idx[i])).collect());
            let mut c = 0;
            loop {
                if c == d {
                    return SamplingPlan::new(pts);
                }
                idx[c] += 1;
                if idx[c] < n {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
        }
    }

    /// Uniform random points in the box.
    pub fn uniform<R: Rng>(lo: &[f64], hi: &[f64], n: usize, rng: &mut R) -> SamplingPlan {
        let pts = (0..n).map(|_| lo.iter().zip(hi).map(|(a, b)| rng.random_range(*a..*b)).collect()).collect();
        SamplingPlan::new(pts)
    }

    /// Random points pushed by Newton steps along `∇t` to `t = s` with
    /// `|s| < band` (samples concentrated around `Z`).
    pub fn near_z<R: Rng>(base: &BManifoldChart, lo: &[f64], hi: &[f64], n: usize, band: f64, rng: &mut R) -> SamplingPlan {
        let d = base.dim();
        let mut pts = Vec::with_capacity(n);
        while pts.len() < n {
            let mut x: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| rng.random_range(*a..*b)).collect();
            let target = rng.random_range(-band..band);
            let mut ok = false;
            for _ in 0..50 {
                let td = base.t().value_grad(&x);
                let r = td.v - target;
                if r.abs() < 1e-14 {
                    ok = true;
                    break;
                }
                let g2: f64 = td.d[..d].iter().map(|c| c * c).sum();
                if g2 < 1e-20 {
                    break;
                }
                for i in 0..d {
                    x[i] -= r * td.d[i] / g2;
                }
            }
            if ok && x.iter().zip(lo.iter().zip(hi)).all(|(c, (a, b))| c >= a && c <= b) {
                pts.push(x);
            }
        }
        SamplingPlan::new(pts)
    }

    pub fn extend(mut self, other: SamplingPlan) -> SamplingPlan {
        self.points.extend(other.points);
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> SamplingPlan {
        self.threshold = threshold;
        self
    }
}

/// Outcome of a contact test.
#[derive(Clone, Debug, Serialize)]
pub struct ContactReport {
    pub n_samples: usize,
    pub min_abs_coeff: f64,
    pub worst_point: Vec<f64>,
    pub threshold: f64,
    /// Both signs of `C` occurred (so `C` vanishes somewhere in between).
    pub mixed_signs: bool,
    pub pass: bool,
}

/// Sampled b-contact test: `min |C| > threshold` with one sign over the plan. 4D forms
/// with a declared level hypersurface are tested on that hypersurface.
pub fn is_b_contact(a: &BForm1, plan: &SamplingPlan) -> Result<ContactReport> {
    if plan.points.is_empty() {
        return Err(Error::Config("empty sampling plan".into()));
    }
    let chart = a.base().chart().clone();
    let mut best = f64::INFINITY;
    let mut worst = plan.points[0].clone();
    let (mut pos, mut neg) = (false, false);
    for x in &plan.points {
        let p = Point::new(&chart, x)?;
        let c = match a.dim() {
            3 => contact_volume_coefficient(a, &p)?,
            _ => contact_volume_coefficient_on_level(a, &p)?,
        };
        pos |= c > 0.0;
        neg |= c < 0.0;
        let c = if c.is_finite() { c.abs() } else { 0.0 };
        if c < best {
            best = c;
            worst = x.clone();
        }
    }
    Ok(ContactReport {
        n_samples: plan.points.len(),
        min_abs_coeff: best,
        worst_point: worst,
        threshold: plan.threshold,
        mixed_signs: pos && neg,
        pass: best > plan.threshold && !(pos && neg),
    })
}

/// Induced symplectic data on `Z` at a point: the restriction of
/// `f dβ + β∧df` and of `df` to an orthonormal tangent basis of `Z`.
#[derive(Clone, Debug, Serialize)]
pub struct ExceptionalData {
    pub point: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    /// `omega[a][b] = ω_Z(e_a, e_b)`.
    pub omega: [[f64; 2]; 2],
    /// `d(f|_Z)(e_a)`.
    pub dh: [f64; 2],
    pub pfaffian: f64,
    pub nondegenerate: bool,
}

/// Orthonormal basis of `T_pZ` (intersected with the level hypersurface, if any).
pub fn z_tangent_basis(base: &BManifoldChart, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = base.dim();
    let mut normals = vec![base.t().value_grad(x).d[..n].to_vec()];
    if let Some(l) = base.level() {
        normals.push(l.value_grad(x).d[..n].to_vec());
    }
    let basis = orthonormal_complement(&normals, n);
    if basis.len() != 2 {
        return Err(Error::Dimension(format!("critical set has tangent dimension {} (expected 2)", basis.len())));
    }
    Ok(basis)
}

pub fn exceptional_data(a: &BForm1, p: &Point) -> Result<ExceptionalData> {
    if a.base().is_smooth() {
        return Err(Error::NotOnCriticalSet("smooth chart has no critical set".into()));
    }
    let j = a.checked_jet(p)?;
    if j.t.abs() > a.base().z_tol() {
        return Err(Error::NotOnCriticalSet(format!("|t| = {:e} at {p}", j.t.abs())));
    }
    let n = a.dim();
    let basis = z_tangent_basis(a.base(), p.coords())?;
    let om = |u: &[f64], v: &[f64]| {
        j.f * j.dbeta_pair(u, v) + dot(&j.beta[..n], u) * dot(&j.df[..n], v) - dot(&j.beta[..n], v) * dot(&j.df[..n], u)
    };
    let w = om(&basis[0], &basis[1]);
    let dh = [dot(&j.df[..n], &basis[0]), dot(&j.df[..n], &basis[1])];
    Ok(ExceptionalData {
        point: p.coords().to_vec(),
        omega: [[0.0, w], [-w, 0.0]],
        dh,
        pfaffian: w,
        nondegenerate: w.abs() > 1e-8,
        basis,
    })
}

/// Pull `a` back along `map: U → chart(a)`; the defining function becomes `t∘map`.
pub fn pullback(a: &BForm1, map: &SmoothMap) -> Result<BForm1> {
    if **map.target() != **a.base().chart() {
        return Err(Error::Dimension("pullback map does not land in the form's chart".into()));
    }
    let comps = map.components();
    let jac = map.jac_exprs()?;
    let src = map.source();
    let base = if a.base().is_smooth() {
        BManifoldChart::smooth(src)?
    } else {
        BManifoldChart::new(src, a.base().t().expr().substitute(comps)?)?
    };
    let base = base.with_z_tol(a.base().z_tol());
    let f = a.f().expr().substitute(comps)?;
    let pulled: Vec<Expr> = a.beta().iter().map(|b| b.expr().substitute(comps)).collect::<Result<_>>()?;
    let beta = (0..src.dim())
        .map(|i| crate::expr::sum((0..a.dim()).map(|jdx| pulled[jdx].clone() * jac[jdx][i].clone())))
        .collect();
    BForm1::new(&base, f, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{coords, Chart};

    fn bubble() -> BForm1 {
        let c = Chart::cartesian3();
        let x = coords(3);
        let r2 = x[0].powi(2) + x[1].powi(2) + x[2].powi(2);
        let base = BManifoldChart::new(&c, r2.clone() - 1.0).unwrap();
        let f = 0.5 * x[2].clone() * (3.0 + r2.clone());
        BForm1::new(&base, f, vec![-x[1].clone(), x[0].clone(), -0.5 * (r2 + 1.0)]).unwrap()
    }

    fn p3(x: f64, y: f64, z: f64) -> Point {
        Point::new(&Chart::cartesian3(), &[x, y, z]).unwrap()
    }

    #[test]
    fn area_form_derivative() {
        let c = Chart::cartesian3();
        let x = coords(3);
        let a = BForm1::smooth(&BManifoldChart::smooth(&c).unwrap(), vec![-x[1].clone(), x[0].clone(), Expr::zero()]).unwrap();
        let d = exterior_derivative(&a).unwrap();
        let (eta, b) = d.eval(&[0.3, 0.1, -2.0]);
        assert_eq!(eta, vec![0.0; 3]);
        assert_eq!(b[0][1], 2.0);
        assert_eq!(b[1][0], -2.0);
        assert_eq!(b[0][2], 0.0);
    }

    #[test]
    fn bubble_volume_at_origin_and_pole() {
        let a = bubble();
        assert!((contact_volume_coefficient(&a, &p3(0.0, 0.0, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((contact_volume_coefficient(&a, &p3(0.0, 0.0, 1.0)).unwrap() - 8.0).abs() < 1e-14);
    }

    #[test]
    fn generic_volume_on_frame_agrees_with_cross_product_formula() {
        let a = bubble();
        let j = a.jet(&[0.4, -0.3, 0.8]);
        let e = |i: usize| {
            let mut v = vec![0.0; 3];
            v[i] = 1.0;
            v
        };
        let c = j.scaled_volume_on(&e(0), &e(1), &e(2));
        assert!((c - volume_from_jet(&j)).abs() < 1e-13);
    }

    #[test]
    fn smooth_standard_contact_volume_is_two() {
        let c = Chart::cartesian3();
        let x = coords(3);
        let a = BForm1::smooth(&BManifoldChart::smooth(&c).unwrap(), vec![-x[1].clone(), x[0].clone(), Expr::one()]).unwrap();
        assert_eq!(contact_volume_coefficient(&a, &p3(1.5, -0.5, 3.0)).unwrap(), 2.0);
    }

    #[test]
    fn pairing_conventions() {
        let a = bubble();
        assert!((pair_1form(&a, &p3(0.0, 0.0, 0.0), &[0.0, 0.0, -2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(pair_1form(&a, &p3(0.2, 0.1, 0.0), &[0.0; 3]).unwrap(), 0.0);
        // On Z: tangent vectors pair through β alone, transverse ones are rejected.
        let pz = p3(1.0, 0.0, 0.0);
        assert_eq!(pair_1form(&a, &pz, &[0.0, 1.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(pair_1form(&a, &pz, &[1.0, 0.0, 0.0]), Err(Error::SingularPairing(_))));
    }

    #[test]
    fn bubble_dalpha_matches_printed_coefficients() {
        let a = bubble();
        let d = exterior_derivative(&a).unwrap();
        let (u, v) = ([0.3, -1.1, 0.7], [0.5, 0.2, -0.4]);
        for &(x, y, z) in &[(0.3, 0.4, 0.2), (1.3, -0.2, -0.7), (0.1, 0.0, 1.5)] {
            let r2 = x * x + y * y + z * z;
            // 2(r²+1)/(r²−1)·dz∧(x dx + y dy + z dz) + 2dx∧dy on (u, v).
            let k = 2.0 * (r2 + 1.0) / (r2 - 1.0);
            let want = k * (x * (u[2] * v[0] - v[2] * u[0]) + y * (u[2] * v[1] - v[2] * u[1]))
                + 2.0 * (u[0] * v[1] - v[0] * u[1]);
            let got = d.pair(&p3(x, y, z), &u, &v).unwrap();
            assert!((got - want).abs() < 1e-12, "{got} {want}");
        }
    }

    #[test]
    fn second_differential_vanishes() {
        let a = bubble();
        let d = exterior_derivative(&a).unwrap();
        let (deta, db) = d.differential(&[0.3, -0.8, 0.4]);
        assert!(deta.iter().flatten().all(|v| v.abs() < 1e-12));
        assert!(db.iter().flatten().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn exceptional_data_at_pole_and_equator() {
        let a = bubble();
        let pole = exceptional_data(&a, &p3(0.0, 0.0, 1.0)).unwrap();
        assert!(pole.nondegenerate);
        assert!(pole.dh.iter().all(|v| v.abs() < 1e-14));
        let eq = exceptional_data(&a, &p3(1.0, 0.0, 0.0)).unwrap();
        assert!(eq.dh.iter().any(|v| v.abs() > 0.1));
        assert!(matches!(exceptional_data(&a, &p3(0.5, 0.0, 0.0)), Err(Error::NotOnCriticalSet(_))));
    }

    #[test]
    fn zero_form_fails_contact_test_everywhere() {
        let a = bubble();
        let z = BForm1::zero(a.base());
        let rep = is_b_contact(&z, &SamplingPlan::grid(&[-1.0; 3], &[1.0; 3], 4)).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.min_abs_coeff, 0.0);
        assert!(is_b_contact(&z, &SamplingPlan::new(vec![])).is_err());
    }

    #[test]
    fn pullback_by_identity_is_identity_and_translation_moves_z() {
        let a = bubble();
        let c = Chart::cartesian3();
        let x = coords(3);
        let shift = SmoothMap::new(&c, &c, "shift", vec![x[0].clone() + 1.0, x[1].clone(), x[2].clone()]).unwrap();
        let b = pullback(&a, &shift).unwrap();
        let p = [0.2, 0.3, -0.4];
        let q = [1.2, 0.3, -0.4];
        let (ja, jb) = (a.jet(&q), b.jet(&p));
        assert!((ja.t - jb.t).abs() < 1e-15 && (ja.f - jb.f).abs() < 1e-15);
        for i in 0..3 {
            assert!((ja.beta[i] - jb.beta[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn regular_value_check_flags_critical_points_of_t() {
        let c = Chart::cartesian3();
        let x = coords(3);
        let bad = BManifoldChart::new(&c, x[0].powi(2)).unwrap();
        assert!(bad.check_regular(&[vec![0.0, 0.0, 0.0]]).is_err());
        assert!(bubble().base().check_regular(&[vec![1.0, 0.0, 0.0]]).is_ok());
    }
}
