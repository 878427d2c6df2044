//! Charts, points, scalar and vector fields, smooth maps.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Dual, Expr, Tape, MAX_DIM};

/// A named coordinate system of dimension 2, 3 or 4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chart {
    name: String,
    coord_names: Vec<String>,
}

pub type ChartRef = Arc<Chart>;

impl Chart {
    pub fn new(name: &str, coords: &[&str]) -> Result<ChartRef> {
        if !(2..=MAX_DIM).contains(&coords.len()) {
            return Err(Error::Dimension(format!("chart {name}: dimension {} not in 2..=4", coords.len())));
        }
        for (i, c) in coords.iter().enumerate() {
            if coords[..i].contains(c) {
                return Err(Error::Config(format!("chart {name}: duplicate coordinate {c}")));
            }
        }
        Ok(Arc::new(Chart { name: name.to_string(), coord_names: coords.iter().map(|s| s.to_string()).collect() }))
    }

    fn builtin(name: &str, coords: &[&str]) -> ChartRef {
        Chart::new(name, coords).expect("built-in chart is valid")
    }

    /// Cartesian R³ with coordinates x, y, z.
    pub fn cartesian3() -> ChartRef {
        Chart::builtin("R3", &["x", "y", "z"])
    }

    /// Cylindrical (ρ, φ, z) coordinates on R³.
    pub fn cylindrical3() -> ChartRef {
        Chart::builtin("cyl3", &["rho", "phi", "z"])
    }

    /// R⁴ with Darboux coordinates x1, y1, x2, y2.
    pub fn r4() -> ChartRef {
        Chart::builtin("R4", &["x1", "y1", "x2", "y2"])
    }

    /// R⁴ with polar coordinates in the second plane: x1, y1, r, φ.
    pub fn r4_polar() -> ChartRef {
        Chart::builtin("R4polar", &["x1", "y1", "r", "phi"])
    }

    pub fn plane2() -> ChartRef {
        Chart::builtin("R2", &["x", "y"])
    }

    /// Angle coordinates on the 2-torus.
    pub fn torus2() -> ChartRef {
        Chart::builtin("T2", &["theta1", "theta2"])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.coord_names.len()
    }

    pub fn coord_names(&self) -> &[String] {
        &self.coord_names
    }
}

/// Coordinates on a chart.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    chart: ChartRef,
    coords: Vec<f64>,
}

impl Point {
    pub fn new(chart: &ChartRef, coords: &[f64]) -> Result<Point> {
        if coords.len() != chart.dim() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, chart {} needs {}",
                coords.len(),
                chart.name(),
                chart.dim()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinates {coords:?}")));
        }
        Ok(Point { chart: chart.clone(), coords: coords.to_vec() })
    }

    pub fn chart(&self) -> &ChartRef {
        &self.chart
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}", self.chart.name(), self.coords)
    }
}

fn check_chart(expected: &ChartRef, p: &Point) -> Result<()> {
    if **expected != **p.chart() {
        return Err(Error::Dimension(format!("point on chart {} used with chart {}", p.chart().name(), expected.name())));
    }
    Ok(())
}

/// Coordinate functions `x_0 .. x_{n-1}` as expressions.
pub fn coords(n: usize) -> Vec<Expr> {
    (0..n).map(Expr::var).collect()
}

/// Scalar function on a chart with exact gradient.
#[derive(Clone)]
pub struct ScalarField {
    chart: ChartRef,
    expr: Expr,
    tape: Arc<Tape>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField[{}]({})", self.chart.name(), self.expr)
    }
}

impl ScalarField {
    pub fn new(chart: &ChartRef, expr: Expr) -> Result<ScalarField> {
        if let Some(v) = expr.max_var() {
            if v >= chart.dim() {
                return Err(Error::Dimension(format!("expression uses x{v} on {}-dimensional chart", chart.dim())));
            }
        }
        let tape = Arc::new(Tape::compile(std::slice::from_ref(&expr)));
        Ok(ScalarField { chart: chart.clone(), expr, tape })
    }

    pub fn constant(chart: &ChartRef, c: f64) -> ScalarField {
        ScalarField::new(chart, Expr::constant(c)).expect("constants fit every chart")
    }

    pub fn chart(&self) -> &ChartRef {
        &self.chart
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Raw evaluation on coordinates (no chart check).
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut out = [0.0];
        self.tape.eval(x, &mut out);
        out[0]
    }

    /// Value and gradient from one dual pass (no chart check).
    pub fn value_grad(&self, x: &[f64]) -> Dual {
        self.tape.eval_dual(x)[0]
    }

    pub fn gradient_fields(&self) -> Result<Vec<ScalarField>> {
        (0..self.chart.dim()).map(|i| ScalarField::new(&self.chart, self.expr.diff(i)?)).collect()
    }
}

/// Value and gradient of `field` at `p`, in a single evaluation pass.
pub fn eval_with_gradient(field: &ScalarField, p: &Point) -> Result<(f64, Vec<f64>)> {
    check_chart(&field.chart, p)?;
    let d = field.value_grad(p.coords());
    let g = d.d[..p.chart().dim()].to_vec();
    if !d.v.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("field not finite at {p}")));
    }
    Ok((d.v, g))
}

type FieldFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
enum FieldImpl {
    Exprs { exprs: Vec<Expr>, tape: Arc<Tape> },
    Closure(Arc<FieldFn>),
}

/// Evaluatable vector field, optionally carrying known first integrals and
/// the defining function of a critical hypersurface it is tangent to.
#[derive(Clone)]
pub struct VectorField {
    chart: ChartRef,
    imp: FieldImpl,
    invariants: Vec<ScalarField>,
    critical: Option<ScalarField>,
    name: String,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField[{}]({})", self.chart.name(), self.name)
    }
}

impl VectorField {
    pub fn from_exprs(chart: &ChartRef, name: &str, exprs: Vec<Expr>) -> Result<VectorField> {
        if exprs.len() != chart.dim() {
            return Err(Error::Dimension(format!("{} components for a {}-dimensional chart", exprs.len(), chart.dim())));
        }
        for e in &exprs {
            if e.max_var().is_some_and(|v| v >= chart.dim()) {
                return Err(Error::Dimension("field component uses a coordinate outside its chart".into()));
            }
        }
        let tape = Arc::new(Tape::compile(&exprs));
        Ok(VectorField {
            chart: chart.clone(),
            imp: FieldImpl::Exprs { exprs, tape },
            invariants: Vec::new(),
            critical: None,
            name: name.to_string(),
        })
    }

    pub fn from_fn<F>(chart: &ChartRef, name: &str, f: F) -> VectorField
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        VectorField {
            chart: chart.clone(),
            imp: FieldImpl::Closure(Arc::new(f)),
            invariants: Vec::new(),
            critical: None,
            name: name.to_string(),
        }
    }

    pub fn with_invariants(mut self, inv: Vec<ScalarField>) -> VectorField {
        self.invariants = inv;
        self
    }

    pub fn with_critical(mut self, t: ScalarField) -> VectorField {
        self.critical = Some(t);
        self
    }

    pub fn with_name(mut self, name: &str) -> VectorField {
        self.name = name.to_string();
        self
    }

    pub fn chart(&self) -> &ChartRef {
        &self.chart
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn invariants(&self) -> &[ScalarField] {
        &self.invariants
    }

    /// Defining function of the hypersurface the field is tangent to, if any.
    pub fn critical(&self) -> Option<&ScalarField> {
        self.critical.as_ref()
    }

    pub fn exprs(&self) -> Option<&[Expr]> {
        match &self.imp {
            FieldImpl::Exprs { exprs, .. } => Some(exprs),
            FieldImpl::Closure(_) => None,
        }
    }

    /// Raw evaluation on coordinates.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match &self.imp {
            FieldImpl::Exprs { tape, .. } => tape.eval(x, out),
            FieldImpl::Closure(f) => f(x, out),
        }
    }

    pub fn eval_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.chart.dim()];
        self.eval(x, &mut out);
        out
    }

    pub fn eval_point(&self, p: &Point) -> Result<Vec<f64>> {
        check_chart(&self.chart, p)?;
        let v = self.eval_vec(p.coords());
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("field {} not finite at {p}", self.name)));
        }
        Ok(v)
    }

    /// Exact Jacobian rows `∂X^i/∂x_j`; available for expression-built fields.
    pub fn jacobian(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        match &self.imp {
            FieldImpl::Exprs { tape, .. } => {
                let n = self.chart.dim();
                Some(tape.eval_dual(x).iter().map(|d| d.d[..n].to_vec()).collect())
            }
            FieldImpl::Closure(_) => None,
        }
    }
}

/// Smooth map between charts given by component expressions.
#[derive(Clone)]
pub struct SmoothMap {
    source: ChartRef,
    target: ChartRef,
    comps: Vec<Expr>,
    tape: Arc<Tape>,
    name: String,
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SmoothMap({}: {} -> {})", self.name, self.source.name(), self.target.name())
    }
}

impl SmoothMap {
    pub fn new(source: &ChartRef, target: &ChartRef, name: &str, comps: Vec<Expr>) -> Result<SmoothMap> {
        if comps.len() != target.dim() {
            return Err(Error::Dimension(format!("map {name} has {} components, target needs {}", comps.len(), target.dim())));
        }
        if comps.iter().any(|e| e.max_var().is_some_and(|v| v >= source.dim())) {
            return Err(Error::Dimension(format!("map {name} reads a coordinate outside its source chart")));
        }
        let tape = Arc::new(Tape::compile(&comps));
        Ok(SmoothMap { source: source.clone(), target: target.clone(), comps, tape, name: name.to_string() })
    }

    pub fn identity(chart: &ChartRef) -> SmoothMap {
        SmoothMap::new(chart, chart, "id", coords(chart.dim())).expect("identity is well formed")
    }

    /// `x ↦ M x` on a single chart.
    pub fn linear(chart: &ChartRef, m: &[Vec<f64>]) -> Result<SmoothMap> {
        let n = chart.dim();
        if m.len() != n || m.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("linear map matrix must be square of chart dimension".into()));
        }
        let x = coords(n);
        let comps = m
            .iter()
            .map(|row| crate::expr::sum(row.iter().zip(&x).map(|(&a, xi)| a * xi.clone())))
            .collect();
        SmoothMap::new(chart, chart, "linear", comps)
    }

    pub fn source(&self) -> &ChartRef {
        &self.source
    }

    pub fn target(&self) -> &ChartRef {
        &self.target
    }

    pub fn components(&self) -> &[Expr] {
        &self.comps
    }

    pub fn eval(&self, p: &Point) -> Result<Point> {
        check_chart(&self.source, p)?;
        let v = self.tape.eval_f64(p.coords());
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("map {} undefined at {p}", self.name)));
        }
        Point::new(&self.target, &v)
    }

    /// Jacobian as `dim_target` rows of length `dim_source`.
    pub fn jac(&self, p: &Point) -> Result<Vec<Vec<f64>>> {
        check_chart(&self.source, p)?;
        let n = self.source.dim();
        let d = self.tape.eval_dual(p.coords());
        let rows: Vec<Vec<f64>> = d.iter().map(|c| c.d[..n].to_vec()).collect();
        if d.iter().any(|c| !c.v.is_finite()) || rows.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("map {} undefined at {p}", self.name)));
        }
        Ok(rows)
    }

    /// Symbolic Jacobian entries `∂φ_i/∂u_j`.
    pub fn jac_exprs(&self) -> Result<Vec<Vec<Expr>>> {
        self.comps.iter().map(|c| (0..self.source.dim()).map(|j| c.diff(j)).collect()).collect()
    }
}

/// Jacobian–vector product of `field` at `p`, attached at `map(p)`.
pub fn pushforward(map: &SmoothMap, field: &VectorField, p: &Point) -> Result<(Point, Vec<f64>)> {
    check_chart(field.chart(), p)?;
    let q = map.eval(p)?;
    let j = map.jac(p)?;
    let v = field.eval_point(p)?;
    let w = j.iter().map(|row| crate::vecmath::dot(row, &v)).collect();
    Ok((q, w))
}

/// Convert between registered coordinate systems.
///
/// Registered pairs: R3 ↔ cyl3 and R4 ↔ R4polar (polar in the second plane).
/// The angle at the polar axis is 0 by convention.
pub fn change_chart(p: &Point, target: &ChartRef) -> Result<Point> {
    let src = p.chart().name();
    let c = p.coords();
    if **p.chart() == **target {
        return Ok(p.clone());
    }
    let polar = |x: f64, y: f64| {
        let rho = x.hypot(y);
        let phi = if rho == 0.0 { 0.0 } else { y.atan2(x) };
        (rho, phi)
    };
    let out = match (src, target.name()) {
        ("R3", "cyl3") => {
            let (rho, phi) = polar(c[0], c[1]);
            vec![rho, phi, c[2]]
        }
        ("cyl3", "R3") => {
            if c[0] < 0.0 {
                return Err(Error::Domain(format!("negative radius {}", c[0])));
            }
            vec![c[0] * c[1].cos(), c[0] * c[1].sin(), c[2]]
        }
        ("R4", "R4polar") => {
            let (rho, phi) = polar(c[2], c[3]);
            vec![c[0], c[1], rho, phi]
        }
        ("R4polar", "R4") => {
            if c[2] < 0.0 {
                return Err(Error::Domain(format!("negative radius {}", c[2])));
            }
            vec![c[0], c[1], c[2] * c[3].cos(), c[2] * c[3].sin()]
        }
        (a, b) => return Err(Error::Config(format!("no chart conversion registered from {a} to {b}"))),
    };
    Point::new(target, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd_grad(f: &ScalarField, x: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (f.eval(&a) - f.eval(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn oscillator_gradient() {
        let c = Chart::r4();
        let x = coords(4);
        let h = 0.5 * crate::expr::sum(x.iter().map(|e| e.powi(2)));
        let f = ScalarField::new(&c, h).unwrap();
        let (v, g) = eval_with_gradient(&f, &Point::new(&c, &[1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(g, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn defining_function_at_origin() {
        let c = Chart::cartesian3();
        let x = coords(3);
        let t = ScalarField::new(&c, x[0].powi(2) + x[1].powi(2) - 1.0).unwrap();
        let (v, g) = eval_with_gradient(&t, &Point::new(&c, &[0.0, 0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(v, -1.0);
        assert_eq!(g, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn bubble_coefficient_gradient_matches_central_differences() {
        let c = Chart::cartesian3();
        let x = coords(3);
        let r2 = x[0].powi(2) + x[1].powi(2);
        let f = ScalarField::new(&c, 0.5 * x[2].clone() * (3.0 + r2)).unwrap();
        let p = [1.0, 0.0, 1.0];
        let (v, g) = eval_with_gradient(&f, &Point::new(&c, &p).unwrap()).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
        let fd = fd_grad(&f, &p);
        for i in 0..3 {
            assert!((g[i] - fd[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_value_is_domain_error() {
        let c = Chart::plane2();
        let f = ScalarField::new(&c, 1.0 / Expr::var(0)).unwrap();
        let p = Point::new(&c, &[0.0, 1.0]).unwrap();
        assert!(matches!(eval_with_gradient(&f, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn expression_outside_chart_is_rejected() {
        assert!(ScalarField::new(&Chart::plane2(), Expr::var(2)).is_err());
        assert!(Chart::new("bad", &["x", "x"]).is_err());
        assert!(Chart::new("bad", &["x"]).is_err());
    }

    #[test]
    fn identity_pushforward_is_the_field() {
        let c = Chart::cartesian3();
        let x = coords(3);
        let v = VectorField::from_exprs(&c, "rot", vec![-x[1].clone(), x[0].clone(), x[2].sin()]).unwrap();
        let p = Point::new(&c, &[0.3, -0.2, 0.9]).unwrap();
        let (q, w) = pushforward(&SmoothMap::identity(&c), &v, &p).unwrap();
        assert_eq!(q, p);
        assert_eq!(w, v.eval_point(&p).unwrap());
    }

    #[test]
    fn linear_map_pushes_constant_field() {
        let c = Chart::cartesian3();
        let m = vec![vec![1.0, 2.0, 0.0], vec![0.0, 1.0, -1.0], vec![3.0, 0.0, 1.0]];
        let map = SmoothMap::linear(&c, &m).unwrap();
        let v = VectorField::from_exprs(&c, "const", vec![Expr::one(), Expr::constant(2.0), Expr::constant(-1.0)]).unwrap();
        let (_, w) = pushforward(&map, &v, &Point::new(&c, &[5.0, 1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(w, vec![5.0, 3.0, 2.0]);
    }

    #[test]
    fn undefined_map_point_is_domain_error() {
        let c = Chart::plane2();
        let x = coords(2);
        let map = SmoothMap::new(&c, &c, "inv", vec![x[1].clone() / (1.0 - x[0].clone()), x[1].clone()]).unwrap();
        assert!(matches!(map.eval(&Point::new(&c, &[1.0, 0.5]).unwrap()), Err(Error::Domain(_))));
    }

    #[test]
    fn chart_changes() {
        let r3 = Chart::cartesian3();
        let cyl = Chart::cylindrical3();
        let p = change_chart(&Point::new(&r3, &[1.0, 0.0, 0.0]).unwrap(), &cyl).unwrap();
        assert_eq!(p.coords(), &[1.0, 0.0, 0.0]);
        let p = change_chart(&Point::new(&r3, &[0.0, 1.0, 0.0]).unwrap(), &cyl).unwrap();
        assert!((p.coords()[1] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let axis = change_chart(&Point::new(&r3, &[0.0, 0.0, 4.0]).unwrap(), &cyl).unwrap();
        assert_eq!(axis.coords(), &[0.0, 0.0, 4.0]);
        assert!(matches!(change_chart(&p, &Chart::torus2()), Err(Error::Config(_))));
    }

    fn random_exprs() -> Vec<Expr> {
        let x = coords(3);
        vec![
            (x[0].clone() * x[1].clone()).sin() + x[2].powi(3),
            (x[0].powi(2) + x[1].powi(2) + 1.0).sqrt() / (2.0 + x[2].cos()),
            (x[0].clone() - x[2].clone()).exp() * x[1].clone(),
        ]
    }

    proptest! {
        #[test]
        fn cylindrical_round_trip(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64) {
            prop_assume!(x.hypot(y) > 1e-9);
            let r3 = Chart::cartesian3();
            let p = Point::new(&r3, &[x, y, z]).unwrap();
            let back = change_chart(&change_chart(&p, &Chart::cylindrical3()).unwrap(), &r3).unwrap();
            for i in 0..3 {
                prop_assert!((back.coords()[i] - p.coords()[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn gradients_match_finite_differences(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64) {
            let c = Chart::cartesian3();
            for e in random_exprs() {
                let f = ScalarField::new(&c, e).unwrap();
                let (_, g) = eval_with_gradient(&f, &Point::new(&c, &[x, y, z]).unwrap()).unwrap();
                let fd = fd_grad(&f, &[x, y, z]);
                for i in 0..3 {
                    prop_assert!((g[i] - fd[i]).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn map_jacobian_matches_finite_differences(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64) {
            let c = Chart::cartesian3();
            let map = SmoothMap::new(&c, &c, "m", random_exprs()).unwrap();
            let p = Point::new(&c, &[x, y, z]).unwrap();
            let j = map.jac(&p).unwrap();
            let h = 1e-5;
            for k in 0..3 {
                let mut a = p.coords().to_vec();
                let mut b = p.coords().to_vec();
                a[k] += h;
                b[k] -= h;
                let fa = map.eval(&Point::new(&c, &a).unwrap()).unwrap();
                let fb = map.eval(&Point::new(&c, &b).unwrap()).unwrap();
                for i in 0..3 {
                    let fd = (fa.coords()[i] - fb.coords()[i]) / (2.0 * h);
                    prop_assert!((j[i][k] - fd).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn pushforward_is_linear_in_the_field(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64, a in -3.0..3.0f64) {
            let c = Chart::cartesian3();
            let map = SmoothMap::new(&c, &c, "m", random_exprs()).unwrap();
            let u = coords(3);
            let f1 = VectorField::from_exprs(&c, "f1", vec![u[1].clone(), -u[0].clone(), Expr::one()]).unwrap();
            let f2 = VectorField::from_exprs(&c, "f2", vec![u[2].powi(2), u[0].clone(), u[1].clone()]).unwrap();
            let comb = VectorField::from_exprs(&c, "f1+a f2", f1.exprs().unwrap().iter().zip(f2.exprs().unwrap())
                .map(|(p, q)| p.clone() + a * q.clone()).collect()).unwrap();
            let p = Point::new(&c, &[x, y, z]).unwrap();
            let (_, w1) = pushforward(&map, &f1, &p).unwrap();
            let (_, w2) = pushforward(&map, &f2, &p).unwrap();
            let (_, w) = pushforward(&map, &comb, &p).unwrap();
            for i in 0..3 {
                prop_assert!((w[i] - (w1[i] + a * w2[i])).abs() < 1e-12 * (1.0 + w[i].abs()));
            }
        }
    }
}
