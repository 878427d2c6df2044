//! Reeb b-vector fields, (b-)symplectic Hamiltonian fields and Liouville
//! contraction.

use serde::Serialize;

use crate::bforms::{exceptional_data, pair_with_field, volume_from_jet, BForm1, BForm2, BManifoldChart, FormJet};
use crate::error::{Error, Result};
use crate::expr::{sum, Expr};
use crate::fields::{Chart, ChartRef, Point, ScalarField, VectorField};
use crate::vecmath::{cross, dot, norm};

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct ReebSolveDiagnostics {
    /// `|α(R) − 1|`.
    pub residual_alpha: f64,
    /// `max_i |dα(R, e_i)|`.
    pub residual_dalpha: f64,
    /// Ratio of coefficient magnitudes to the volume coefficient.
    pub condition: f64,
}

/// Kernel direction `w` of `t·dα` and `C = t·α(w)` (3D).
///
/// `w = ∇f×∇t + t·curl β` is the axial vector of the 2-form `t·dα`; both
/// `w` and `C` stay finite and smooth across `Z`, and `R = w/C`.
pub(crate) fn reeb_numerator(j: &FormJet) -> ([f64; 3], f64) {
    let curl = j.curl();
    let fxt = cross(&j.df[..3], &j.dt[..3]);
    let w = [fxt[0] + j.t * curl[0], fxt[1] + j.t * curl[1], fxt[2] + j.t * curl[2]];
    (w, volume_from_jet(j))
}

fn alpha_of(j: &FormJet, v: &[f64]) -> f64 {
    let n = j.dim;
    j.f * dot(&j.dt[..n], v) / j.t + dot(&j.beta[..n], v)
}

fn dalpha_of(j: &FormJet, u: &[f64], v: &[f64]) -> f64 {
    let n = j.dim;
    let sing = (dot(&j.df[..n], u) * dot(&j.dt[..n], v) - dot(&j.df[..n], v) * dot(&j.dt[..n], u)) / j.t;
    sing + j.dbeta_pair(u, v)
}

/// Reeb vector of a 3D b-contact form at a point off `Z`.
pub fn reeb_at(a: &BForm1, p: &Point) -> Result<(Vec<f64>, ReebSolveDiagnostics)> {
    if a.dim() != 3 {
        return Err(Error::Dimension(format!("pointwise Reeb solve needs dim 3, got {}", a.dim())));
    }
    let j = a.checked_jet(p)?;
    if !a.base().is_smooth() && j.t.abs() <= a.base().z_tol() {
        return Err(Error::Domain(format!("{p} lies on Z; use reeb_on_z")));
    }
    let (w, c) = reeb_numerator(&j);
    let wn = norm(&w);
    // α(w/|w|) = C / (t |w|).
    if wn == 0.0 || (c / (j.t * wn)).abs() < 1e-12 {
        return Err(Error::DegenerateContact(format!("kernel of dα is (almost) in ker α at {p}")));
    }
    let r: Vec<f64> = w.iter().map(|x| x / c).collect();
    let mut res_d: f64 = 0.0;
    for i in 0..3 {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        res_d = res_d.max(dalpha_of(&j, &r, &e).abs());
    }
    let scale = norm(&j.beta[..3]) + (j.f * norm(&j.dt[..3]) / j.t).abs();
    let diag = ReebSolveDiagnostics {
        residual_alpha: (alpha_of(&j, &r) - 1.0).abs(),
        residual_dalpha: res_d,
        condition: wn * scale / (c / j.t).abs(),
    };
    Ok((r, diag))
}

/// The Reeb field of a 3D b-contact form as an evaluatable vector field,
/// valid on and off `Z` (regularized quotient `w/C`).
pub fn reeb_field(a: &BForm1) -> Result<VectorField> {
    if a.dim() != 3 {
        return Err(Error::Dimension("Reeb field construction needs dim 3".into()));
    }
    let form = a.clone();
    let vf = VectorField::from_fn(a.base().chart(), "reeb", move |x, out| {
        let (w, c) = reeb_numerator(&form.jet(x));
        for i in 0..3 {
            out[i] = w[i] / c;
        }
    });
    Ok(if a.base().is_smooth() { vf } else { vf.with_critical(a.base().t().clone()) })
}

/// Reeb vector on `Z`: the solution of `ι_R ω_Z = d(f|_Z)` in ambient coordinates.
pub fn reeb_on_z(a: &BForm1, p: &Point) -> Result<Vec<f64>> {
    let ex = exceptional_data(a, p)?;
    if !ex.nondegenerate {
        return Err(Error::DegenerateSymplectic(format!("ω_Z degenerates at {p} (pfaffian {:e})", ex.pfaffian)));
    }
    // Σ_a c_a ω_ab = h_b, with ω = [[0, w], [−w, 0]].
    let w = ex.pfaffian;
    let c1 = ex.dh[1] / w;
    let c2 = -ex.dh[0] / w;
    Ok((0..a.dim()).map(|i| c1 * ex.basis[0][i] + c2 * ex.basis[1][i]).collect())
}

/// Reeb vector of a 4D b-form restricted to its level hypersurface, at a
/// point off `Z`: the kernel of `dα` on the tangent space, normalized by `α`.
pub fn reeb_on_level(a: &BForm1, p: &Point) -> Result<(Vec<f64>, ReebSolveDiagnostics)> {
    let level = a
        .base()
        .level()
        .ok_or_else(|| Error::Config("level-set Reeb solve needs a base with a level function".into()))?;
    if a.dim() != 4 {
        return Err(Error::Dimension(format!("level-set Reeb solve needs dim 4, got {}", a.dim())));
    }
    let j = a.checked_jet(p)?;
    if !a.base().is_smooth() && j.t.abs() <= a.base().z_tol() {
        return Err(Error::Domain(format!("{p} lies on Z; use reeb_on_z")));
    }
    let lv = level.value_grad(p.coords());
    if !(lv.v.abs() <= 1e-10) {
        return Err(Error::Domain(format!("{p} is off the level set (residual {:e})", lv.v)));
    }
    let e = crate::vecmath::orthonormal_complement(&[lv.d[..4].to_vec()], 4);
    let m = |u: usize, v: usize| dalpha_of(&j, &e[u], &e[v]);
    // Kernel of a 3×3 antisymmetric matrix is its axial vector.
    let k = [m(1, 2), m(2, 0), m(0, 1)];
    let kv: Vec<f64> = (0..4).map(|i| k[0] * e[0][i] + k[1] * e[1][i] + k[2] * e[2][i]).collect();
    let s = alpha_of(&j, &kv);
    let kn = norm(&kv);
    let scale = norm(&j.beta[..4]) + (j.f * norm(&j.dt[..4]) / j.t).abs();
    if kn == 0.0 || !(s.abs() > 1e-12 * kn * scale) {
        return Err(Error::DegenerateContact(format!("kernel of dα is (almost) in ker α at {p}")));
    }
    let r: Vec<f64> = kv.iter().map(|c| c / s).collect();
    let res_d = e.iter().map(|ei| dalpha_of(&j, &r, ei).abs()).fold(0.0, f64::max);
    let diag = ReebSolveDiagnostics {
        residual_alpha: (alpha_of(&j, &r) - 1.0).abs(),
        residual_dalpha: res_d,
        condition: kn * scale / s.abs(),
    };
    Ok((r, diag))
}

/// Sign convention relating Hamiltonian vector fields to `dH`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SignConvention {
    /// `ι_X ω = −dH`.
    MinusDH,
    /// `ι_X ω = dH` (only used to exercise fault detection).
    PlusDH,
}

/// A b-symplectic (or symplectic) form on a 4D chart whose defining function
/// is a coordinate.
#[derive(Clone, Debug)]
pub struct BSymplectic4 {
    form: BForm2,
    normal_axis: Option<usize>,
    convention: SignConvention,
}

impl BSymplectic4 {
    /// Wrap a 2-form. For a b-chart, `t` must equal the coordinate `normal_axis`.
    pub fn new(form: BForm2, normal_axis: Option<usize>) -> Result<BSymplectic4> {
        if form.base().dim() != 4 {
            return Err(Error::Dimension("b-symplectic forms here are 4-dimensional".into()));
        }
        match (form.base().is_smooth(), normal_axis) {
            (true, None) => {}
            (false, Some(a)) if a < 4 => {
                for probe in [[0.3, -0.2, 0.7, 0.1], [-1.1, 0.4, 0.2, -0.6]] {
                    if (form.base().t().eval(&probe) - probe[a]).abs() > 1e-15 {
                        return Err(Error::Config(format!("defining function is not the coordinate x{a}")));
                    }
                }
            }
            _ => return Err(Error::Config("normal axis must be given exactly for b-charts".into())),
        }
        Ok(BSymplectic4 { form, normal_axis, convention: SignConvention::MinusDH })
    }

    /// `ω₀ = dx₁/x₁ ∧ dy₁ + dx₂ ∧ dy₂` on R⁴ (x1, y1, x2, y2); Z = {x₁ = 0}.
    pub fn standard_b() -> BSymplectic4 {
        let c = Chart::r4();
        let base = BManifoldChart::new(&c, Expr::var(0)).expect("x1 defines Z");
        // dx₁/x₁ ∧ dy₁ = (−dy₁) ∧ dx₁/x₁.
        let eta = vec![Expr::zero(), Expr::constant(-1.0), Expr::zero(), Expr::zero()];
        let form = BForm2::new(&base, eta, area_pairs(&[(2, 3)])).expect("ω₀ coefficients are valid");
        BSymplectic4::new(form, Some(0)).expect("ω₀ is well formed")
    }

    /// `ω = dx₁ ∧ dy₁ + dx₂ ∧ dy₂`.
    pub fn standard_smooth() -> BSymplectic4 {
        let c = Chart::r4();
        let base = BManifoldChart::smooth(&c).expect("R4 is a valid chart");
        let form = BForm2::new(&base, vec![Expr::zero(); 4], area_pairs(&[(0, 1), (2, 3)])).expect("valid coefficients");
        BSymplectic4::new(form, None).expect("ω_std is well formed")
    }

    pub fn with_convention(mut self, c: SignConvention) -> BSymplectic4 {
        self.convention = c;
        self
    }

    pub fn convention(&self) -> SignConvention {
        self.convention
    }

    pub fn form(&self) -> &BForm2 {
        &self.form
    }

    pub fn base(&self) -> &BManifoldChart {
        self.form.base()
    }

    pub fn chart(&self) -> &ChartRef {
        self.form.base().chart()
    }

    pub fn normal_axis(&self) -> Option<usize> {
        self.normal_axis
    }

    /// Matrix `ω(e_i, e_j)` in the b-frame where `e_a = x_a ∂_{x_a}`; finite on `Z`.
    fn frame_matrix(&self, x: &[f64]) -> nalgebra::Matrix4<f64> {
        let (eta, b) = self.form.eval(x);
        let mut m = nalgebra::Matrix4::<f64>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = match self.normal_axis {
                    Some(a) if i == a && j == a => 0.0,
                    Some(a) if j == a => eta[i] + x[a] * b[i][j],
                    Some(a) if i == a => -eta[j] + x[a] * b[i][j],
                    _ => b[i][j],
                };
            }
        }
        m
    }

    /// Determinant of the b-frame matrix (nondegeneracy witness).
    pub fn frame_determinant(&self, x: &[f64]) -> f64 {
        self.frame_matrix(x).determinant()
    }
}

fn area_pairs(pairs: &[(usize, usize)]) -> Vec<Vec<Expr>> {
    let mut b = vec![vec![Expr::zero(); 4]; 4];
    for &(i, j) in pairs {
        b[i][j] = Expr::one();
        b[j][i] = Expr::constant(-1.0);
    }
    b
}

fn solve_hamiltonian(w: &BSymplectic4, x: &[f64], grad_h: &[f64]) -> Result<Vec<f64>> {
    let m = w.frame_matrix(x);
    let sign = match w.convention {
        SignConvention::MinusDH => 1.0,
        SignConvention::PlusDH => -1.0,
    };
    let mut rhs = nalgebra::Vector4::new(grad_h[0], grad_h[1], grad_h[2], grad_h[3]) * sign;
    if let Some(a) = w.normal_axis {
        rhs[a] *= x[a];
    }
    let lu = m.lu();
    let det = lu.determinant();
    let scale = m.norm().powi(4).max(1e-300);
    if !(det.abs() > 1e-12 * scale) {
        return Err(Error::DegenerateSymplectic(format!("ω degenerates at {x:?}")));
    }
    let v = lu.solve(&rhs).ok_or_else(|| Error::DegenerateSymplectic(format!("singular solve at {x:?}")))?;
    let mut out: Vec<f64> = v.iter().copied().collect();
    if let Some(a) = w.normal_axis {
        out[a] *= x[a];
    }
    Ok(out)
}

/// Hamiltonian vector field of `h` at `p`: solves `ι_X ω = −dH` in the
/// b-frame, so the solve is finite on `Z` as well.
pub fn hamiltonian_field(w: &BSymplectic4, h: &ScalarField, p: &Point) -> Result<Vec<f64>> {
    if **p.chart() != **w.chart() || **h.chart() != **w.chart() {
        return Err(Error::Dimension("Hamiltonian, form and point must share a chart".into()));
    }
    let d = h.value_grad(p.coords());
    if !d.v.is_finite() || d.d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("Hamiltonian not finite at {p}")));
    }
    solve_hamiltonian(w, p.coords(), &d.d)
}

/// Hamiltonian vector field as an evaluatable field (tangent to `Z`, `H` listed as invariant).
pub fn hamiltonian_vector_field(w: &BSymplectic4, h: &ScalarField) -> VectorField {
    let (form, ham) = (w.clone(), h.clone());
    let vf = VectorField::from_fn(w.chart(), "hamiltonian", move |x, out| {
        let d = ham.value_grad(x);
        match solve_hamiltonian(&form, x, &d.d) {
            Ok(v) => out.copy_from_slice(&v),
            Err(_) => out.iter_mut().for_each(|o| *o = f64::NAN),
        }
    })
    .with_invariants(vec![h.clone()]);
    match w.normal_axis {
        Some(_) => vf.with_critical(w.base().t().clone()),
        None => vf,
    }
}

/// b-vector field given by its normal rate `u = X^a / x_a` and the remaining components.
#[derive(Clone, Debug)]
pub struct BVectorField {
    chart: ChartRef,
    normal_axis: Option<usize>,
    normal_rate: Expr,
    comps: Vec<Expr>,
}

impl BVectorField {
    /// `comps[normal_axis]` is ignored and replaced by `x_a·normal_rate`.
    pub fn new(chart: &ChartRef, normal_axis: usize, normal_rate: Expr, comps: Vec<Expr>) -> Result<BVectorField> {
        if comps.len() != chart.dim() || normal_axis >= chart.dim() {
            return Err(Error::Dimension("b-vector field components must match the chart".into()));
        }
        Ok(BVectorField { chart: chart.clone(), normal_axis: Some(normal_axis), normal_rate, comps })
    }

    /// Ordinary vector field (no normal axis).
    pub fn smooth(chart: &ChartRef, comps: Vec<Expr>) -> Result<BVectorField> {
        if comps.len() != chart.dim() {
            return Err(Error::Dimension("vector field components must match the chart".into()));
        }
        Ok(BVectorField { chart: chart.clone(), normal_axis: None, normal_rate: Expr::zero(), comps })
    }

    pub fn components(&self) -> Vec<Expr> {
        let mut c = self.comps.clone();
        if let Some(a) = self.normal_axis {
            c[a] = Expr::var(a) * self.normal_rate.clone();
        }
        c
    }

    pub fn to_vector_field(&self, name: &str) -> Result<VectorField> {
        VectorField::from_exprs(&self.chart, name, self.components())
    }
}

/// `ι_X ω` computed structurally: `f = η(X)`, `β = −(dt(X)/t)·η + ι_X B`.
pub fn liouville_contract(w: &BSymplectic4, x: &BVectorField) -> Result<BForm1> {
    if *x.chart != **w.chart() {
        return Err(Error::Dimension("vector field and form live on different charts".into()));
    }
    if x.normal_axis != w.normal_axis && w.normal_axis.is_some() {
        return Err(Error::Config("b-vector field must be expressed relative to the form's normal axis".into()));
    }
    let comps = x.components();
    let eta: Vec<Expr> = w.form().eta().iter().map(|e| e.expr().clone()).collect();
    let b = w.form().b();
    let n = 4;
    let contract_b =
        |j: usize| sum((0..n).map(|i| comps[i].clone() * b[i][j].expr().clone()));
    if w.normal_axis.is_none() {
        return BForm1::smooth(w.base(), (0..n).map(contract_b).collect());
    }
    let f = sum((0..n).map(|i| eta[i].clone() * comps[i].clone()));
    let beta = (0..n).map(|j| -(x.normal_rate.clone() * eta[j].clone()) + contract_b(j)).collect();
    BForm1::new(w.base(), f, beta)
}

/// Reeb field induced on a level set by a Hamiltonian field: `X_H / α(X_H)`.
pub fn induced_reeb_on_level(a: &BForm1, xh: &VectorField, level: &ScalarField, p: &Point) -> Result<Vec<f64>> {
    let lv = level.eval(p.coords());
    if !(lv.abs() <= 1e-10) {
        return Err(Error::Domain(format!("{p} is off the level set (residual {lv:e})")));
    }
    let v = xh.eval_point(p)?;
    let s = pair_with_field(a, xh, p)?;
    if !(s.abs() > 1e-14) {
        return Err(Error::Degeneracy(format!("α(X_H) vanishes at {p}")));
    }
    Ok(v.iter().map(|c| c / s).collect())
}
