//! One function per named experiment.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::plot::{render_svg, PlotSeries, Projection, StrokeStyle};
use super::verify::prop22_residual;
use super::{CheckRecord, Comparison, Fault, Run};
use crate::bforms::{contact_volume_coefficient, BForm1, SamplingPlan, CONTACT_THRESHOLD};
use crate::constructions::*;
use crate::error::{Error, Result};
use crate::fields::{coords, Chart, ChartRef, Point, ScalarField, VectorField};
use crate::flow::{first_integral_drift, Integrator, IntegratorOptions, Trajectory};
use crate::orbits::{
    classify_batch, find_critical_points, singular_periodic_count, tally, trace_separatrices, ClassificationReport,
    ExceptionalSurface, OrbitKind, OrbitSystem, SeparatrixLabel, SeparatrixOptions,
};
use crate::reeb::{hamiltonian_vector_field, reeb_at, reeb_field, reeb_on_level, SignConvention};
use crate::vecmath::{dot, norm, sub};

const A_BUBBLE: &str = "singular bubble lemma";
const A_REEB: &str = "Reeb field closed forms";
const A_EXC: &str = "exceptional Hamiltonian proposition";
const A_FOL: &str = "characteristic foliation lemma";
const A_GLUE: &str = "gluing proposition";
const A_BREAK: &str = "breaking proposition: phase law";
const A_HOPF: &str = "b-Hopf construction";
const A_HOPF_ORB: &str = "b-Hopf orbit proposition";
const A_CE: &str = "counterexample theorem";
const A_SEP: &str = "separatrix proposition";
const A_SEIF: &str = "Seifert lemma";
const A_TAX: &str = "quasi-closed taxonomy";

pub(super) fn rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt)
}

pub(super) fn convention(r: &Run) -> SignConvention {
    match r.cfg.fault {
        Some(Fault::FlipHamiltonianSign) => SignConvention::PlusDH,
        None => SignConvention::MinusDH,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn vec_rel(a: &[f64], b: &[f64]) -> f64 {
    norm(&sub(a, b)) / (1.0 + norm(b))
}

fn spec(r: &Run) -> Result<BumpSpec> {
    BumpSpec::with_delta(r.cfg.delta)
}

fn kind_name(k: OrbitKind) -> String {
    format!("{k:?}")
}

fn tally_named(reports: &[ClassificationReport]) -> BTreeMap<String, usize> {
    let mut m: BTreeMap<String, usize> = tally(reports).into_iter().map(|(k, v)| (kind_name(k), v)).collect();
    m.insert("quasi_closed".into(), reports.iter().filter(|r| r.quasi_closed).count());
    m
}

fn count(reports: &[ClassificationReport], k: OrbitKind) -> usize {
    reports.iter().filter(|r| r.class.kind == k).count()
}

fn points(c: &ChartRef, xs: &[Vec<f64>]) -> Result<Vec<Point>> {
    xs.iter().map(|x| Point::new(c, x)).collect()
}

fn csv_of(tr: &Trajectory) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    tr.write_csv(&mut buf)?;
    Ok(buf)
}

fn classification_csv(reports: &[ClassificationReport]) -> Vec<u8> {
    let mut s = String::from("seed,kind,quasi_closed,forward_time,backward_time\n");
    for r in reports {
        let seed: Vec<String> = r.seed.iter().map(|c| format!("{c:.12e}")).collect();
        s.push_str(&format!(
            "\"{}\",{},{},{:.6e},{:.6e}\n",
            seed.join(" "),
            kind_name(r.class.kind),
            r.quasi_closed,
            r.forward_time,
            r.backward_time
        ));
    }
    s.into_bytes()
}

/// Both ends of an orbit for plotting, integrated in one chart only and
/// stopped once the orbit leaves `radius`.
fn orbit_for_plot(field: &VectorField, x0: &[f64], horizon: f64, radius: f64) -> Result<(Trajectory, Trajectory)> {
    let o = IntegratorOptions { max_time: horizon, rel_tol: 1e-9, abs_tol: 1e-11, ..IntegratorOptions::default() };
    let f = Integrator::new(field, &o).stop_when(move |y| norm(y) > radius).run(x0, 1.0)?;
    let b = Integrator::new(field, &o).stop_when(move |y| norm(y) > radius).run(x0, -1.0)?;
    Ok((b, f))
}

fn push_catalog_checks(r: &mut Run, entries: &[CatalogEntry]) {
    for e in entries {
        for o in &e.oracles {
            let c = if o.lower_bound {
                CheckRecord::new(&o.name, &o.anchor, o.residual, o.tolerance, 0.0, Comparison::AtLeast)
            } else {
                CheckRecord::residual(&o.name, &o.anchor, o.residual, o.tolerance)
            };
            debug_assert_eq!(c.pass, o.pass);
            r.check(c);
        }
    }
}

// ---------------------------------------------------------------------------

pub(super) fn catalog(r: &mut Run) -> Result<()> {
    let entries = full_catalog_with(convention(r))?;
    push_catalog_checks(r, &entries);
    let json = serde_json::to_string_pretty(&catalog_json(&entries))?;
    r.artifact("catalog.json", json.as_bytes())
}

/// Volume coefficient, Reeb closed forms and the exceptional-Hamiltonian identity.
pub(super) fn verify_forms(r: &mut Run) -> Result<()> {
    let tol = r.cfg.tolerances.clone();
    let a = bubble_form();
    let c3 = Chart::cartesian3();
    let mut g = rng(r.cfg.seed, 1);

    // Volume coefficient at 10³ points, a fifth of them in the band |t| < 1e-2.
    let mut pts = sample_box(&mut g, &[-2.0; 3], &[2.0; 3], 800, |_| true);
    pts.extend(SamplingPlan::near_z(a.base(), &[-2.0; 3], &[2.0; 3], 200, 1e-2, &mut g).points);
    let near = pts.iter().filter(|x| (dot(x, x) - 1.0).abs() < 1e-2).count();
    let (mut corrected, mut printed) = (0.0f64, 0.0f64);
    for x in &pts {
        let cv = contact_volume_coefficient(&a, &Point::new(&c3, x)?)?;
        corrected = corrected.max(rel(cv, bubble_volume_coefficient(x)));
        printed = printed.max(rel(cv, bubble_volume_coefficient_printed(x)));
    }
    r.check(CheckRecord::residual("bubble: α∧dα coefficient equals 4z²+(1+r²)² (10³ points)", A_BUBBLE, corrected, tol.identity));
    r.check(CheckRecord::new("bubble: samples with |t| < 1e-2", A_BUBBLE, near as f64, 100.0, 0.0, Comparison::AtLeast));
    r.discrepancy(CheckRecord::residual("bubble: α∧dα coefficient equals 2(4z²+(1+r²)²) as printed", A_BUBBLE, printed, tol.identity));

    // Reeb fields against closed forms, 500 points each.
    let pts = sample_box(&mut g, &[-2.0; 3], &[2.0; 3], 500, |x| (dot(x, x) - 1.0).abs() > 1e-3);
    let (mut dev, mut ra, mut rd) = (0.0f64, 0.0f64, 0.0f64);
    for x in &pts {
        let (v, d) = reeb_at(&a, &Point::new(&c3, x)?)?;
        dev = dev.max(vec_rel(&v, &bubble_reeb_closed_form(x)));
        ra = ra.max(d.residual_alpha);
        rd = rd.max(d.residual_dalpha);
    }
    r.check(CheckRecord::residual("bubble: solver Reeb equals closed form (500 points)", A_REEB, dev, tol.reeb));
    r.check(CheckRecord::residual("bubble: solver |α(R)−1|", A_REEB, ra, tol.reeb));
    r.check(CheckRecord::residual("bubble: solver |ι_R dα|", A_REEB, rd, tol.reeb));
    let cat = bhopf_catalog()?;
    let c4 = Chart::r4();
    let sph = BHopfCatalog::sphere_points(&mut g, 500, 0.0, 1e-3);
    let (mut dev, mut ra, mut rd) = (0.0f64, 0.0f64, 0.0f64);
    for x in &sph {
        let (v, d) = reeb_on_level(&cat.alpha, &Point::new(&c4, x)?)?;
        dev = dev.max(vec_rel(&v, &cat.reeb_printed.eval_vec(x)));
        ra = ra.max(d.residual_alpha);
        rd = rd.max(d.residual_dalpha);
    }
    r.check(CheckRecord::residual("b-Hopf: solver Reeb on S³ equals 2/(1+y₁²)·X_H (500 points)", A_REEB, dev, tol.reeb));
    r.check(CheckRecord::residual("b-Hopf: solver |α(R)−1|", A_REEB, ra, tol.reeb));
    r.check(CheckRecord::residual("b-Hopf: solver |ι_R dα|", A_REEB, rd, tol.reeb));

    // ι_R ω_Z = d(f|_Z) with R from an independent route.
    let zb = sample_sphere(&mut g, 3, 1.0, 200, |_| true);
    let reg = reeb_field(&a)?;
    let res = prop22_residual(&a, |x| reg.eval_vec(x), &zb)?;
    r.check(CheckRecord::residual("bubble: ι_R ω_Z = d(f|_Z) at 200 points of Z", A_EXC, res, tol.prop22));
    let zh: Vec<Vec<f64>> = sample_sphere(&mut g, 3, 1.0, 200, |_| true).into_iter().map(|p| vec![0.0, p[0], p[1], p[2]]).collect();
    let res = prop22_residual(&cat.alpha, |x| cat.reeb_printed.eval_vec(x), &zh)?;
    r.check(CheckRecord::residual("b-Hopf: ι_R ω_Z = d(f|_Z) at 200 points of Z", A_EXC, res, tol.prop22));

    push_catalog_checks(r, &[crate::constructions::bubble()?, darboux()?, twist()?]);
    Ok(())
}

/// Axis, interior and exterior seeds.
type SeedSets = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>);

fn bubble_seeds(g: &mut ChaCha8Rng) -> SeedSets {
    let axis = vec![vec![0.0, 0.0, 0.5]];
    let interior = sample_box(g, &[-0.9; 3], &[0.9; 3], 20, |x| {
        let r2 = dot(x, x);
        r2 < 0.85 && r2 > 0.01 && x[0].hypot(x[1]) > 0.05
    });
    let exterior = sample_box(g, &[-0.7, -0.7, 1.2], &[0.7, 0.7, 2.0], 10, |x| x[0].hypot(x[1]) > 0.05)
        .into_iter()
        .enumerate()
        .map(|(i, mut x)| {
            if i % 2 == 1 {
                x[2] = -x[2];
            }
            x
        })
        .collect();
    (axis, interior, exterior)
}

pub(super) fn bubble(r: &mut Run) -> Result<()> {
    let a = bubble_form();
    let c3 = Chart::cartesian3();
    let reeb = reeb_field(&a)?;
    let sys = OrbitSystem::from(reeb.clone());
    let opts = r.cfg.classifier();
    let (axis, interior, exterior) = bubble_seeds(&mut rng(r.cfg.seed, 2));

    let rho2 = ScalarField::new(&c3, coords(3)[0].powi(2) + coords(3)[1].powi(2))?;
    let io = IntegratorOptions { max_time: 100.0, ..opts.integrator() };
    let mut drift = 0.0f64;
    for x in interior.iter().take(4).chain(exterior.iter().take(4)) {
        for sign in [1.0, -1.0] {
            let tr = Integrator::new(&reeb, &io).run(x, sign)?;
            drift = drift.max(first_integral_drift(&tr, &rho2));
        }
    }
    r.check(CheckRecord::residual("bubble: x²+y² drift over horizon 100 (8 orbits, both directions)", A_BUBBLE, drift, r.cfg.tolerances.conservation));

    let ax = classify_batch(&sys, a.base(), &points(&c3, &axis)?, &opts);
    let inn = classify_batch(&sys, a.base(), &points(&c3, &interior)?, &opts);
    let ext = classify_batch(&sys, a.base(), &points(&c3, &exterior)?, &opts);
    r.check(CheckRecord::count("bubble: axis seed is SingularPeriodic", A_BUBBLE, count(&ax, OrbitKind::SingularPeriodic), 1));
    r.check(CheckRecord::count(
        "bubble: interior seeds are GeneralizedSingularPeriodic",
        A_BUBBLE,
        count(&inn, OrbitKind::GeneralizedSingularPeriodic),
        inn.len(),
    ));
    let esc = count(&ext, OrbitKind::EscapeOrbit) + count(&ext, OrbitKind::GeneralizedEscape);
    r.check(CheckRecord::count("bubble: exterior seeds are EscapeOrbit or GeneralizedEscape", A_BUBBLE, esc, ext.len()));
    let all: Vec<ClassificationReport> = ax.iter().chain(&inn).chain(&ext).cloned().collect();
    r.check(CheckRecord::count("bubble: no PeriodicOffZ", A_BUBBLE, count(&all, OrbitKind::PeriodicOffZ), 0));
    r.check(CheckRecord::count("bubble: exactly one SingularPeriodic among all seeds", A_BUBBLE, count(&all, OrbitKind::SingularPeriodic), 1));
    r.tally("bubble", tally_named(&all));

    if r.wants_csv() {
        let (b, f) = orbit_for_plot(&reeb, &axis[0], 50.0, 10.0)?;
        r.artifact("axis_forward.csv", &csv_of(&f)?)?;
        r.artifact("axis_backward.csv", &csv_of(&b)?)?;
        r.artifact("classification.csv", &classification_csv(&all))?;
    }
    if r.wants_svg() {
        let mut series = Vec::new();
        for rep in &all {
            let (b, f) = orbit_for_plot(&reeb, &rep.seed, 30.0, 4.0)?;
            series.push(PlotSeries::from_ends(&format!("{:?}", rep.seed), StrokeStyle::for_kind(rep.class.kind), &b, &f));
        }
        let proj = Projection::new([0, 2], [[-2.5, 2.5], [-2.5, 2.5]])
            .with_critical(a.base().t())
            .with_title("singular bubble: Reeb orbits, (x, z) projection");
        r.artifact("bubble_xz.svg", render_svg(&series, &proj)?.as_bytes())?;
    }
    Ok(())
}

pub(super) fn foliation(r: &mut Run) -> Result<()> {
    let c3 = Chart::cartesian3();
    let mut g = rng(r.cfg.seed, 3);
    let (mut res, mut max_vz) = (0.0f64, f64::NEG_INFINITY);
    let mut samples = 0usize;
    for radius in [1.2, 2.0] {
        for x in sample_sphere(&mut g, 3, radius, 200, |p| p[0].hypot(p[1]) > 1e-3) {
            for kind in [FoliationKind::Standard, FoliationKind::B] {
                let v = char_foliation_generator(kind, radius, &Point::new(&c3, &x)?)?;
                let [t, k] = foliation_system_residual(kind, &x, &v);
                res = res.max(t.abs()).max(k.abs());
                max_vz = max_vz.max(v[2]);
                samples += 1;
            }
        }
    }
    r.check(CheckRecord::residual("foliation: generators solve their linear systems (200 points, R ∈ {1.2, 2})", A_FOL, res, r.cfg.tolerances.foliation));
    r.check(CheckRecord::new("foliation: X_z < 0 off the poles (max X_z)", A_FOL, max_vz, 0.0, 0.0, Comparison::AtMost));
    let pole = char_foliation_generator(FoliationKind::Standard, 2.0, &Point::new(&c3, &[0.0, 0.0, 2.0])?)?;
    r.check(CheckRecord::residual("foliation: standard generator vanishes at the pole", A_FOL, norm(&pole), 0.0));
    let eq = char_foliation_generator(FoliationKind::B, 2.0, &Point::new(&c3, &[2.0, 0.0, 0.0])?)?;
    r.check(CheckRecord::residual("foliation: b generator at (R,0,0) is (0, −(R²+1)R/2, −R²)", A_FOL, vec_rel(&eq, &[0.0, -5.0, -4.0]), 1e-15));
    let bad = char_foliation_generator(FoliationKind::B, 2.0, &Point::new(&c3, &[1.0, 0.0, 0.0])?);
    r.check(CheckRecord::flag("foliation: off-sphere point is a domain error", A_FOL, matches!(bad, Err(Error::Domain(_)))));
    let _ = samples;

    if r.wants_svg() {
        let x = coords(3);
        let k = 0.5 * (x[0].powi(2) + x[1].powi(2) + x[2].powi(2) + 1.0);
        let rho2 = x[0].powi(2) + x[1].powi(2);
        let field = VectorField::from_exprs(
            &c3,
            "b foliation",
            vec![x[0].clone() * x[2].clone() + k.clone() * x[1].clone(), x[1].clone() * x[2].clone() - k * x[0].clone(), -rho2],
        )?;
        let mut series = Vec::new();
        for i in 0..6 {
            let th = 0.35 + 0.4 * i as f64;
            let p = [2.0 * th.sin(), 0.0, 2.0 * th.cos()];
            let o = IntegratorOptions { max_time: 3.0, ..IntegratorOptions::default() };
            let tr = Integrator::new(&field, &o).run(&p, 1.0)?;
            series.push(PlotSeries::from_trajectory(&format!("leaf {i}"), StrokeStyle::Generic, &tr));
        }
        let proj = Projection::new([0, 1], [[-2.2, 2.2], [-2.2, 2.2]]).with_title("b characteristic foliation of the sphere r = 2, (x, y) projection");
        r.artifact("foliation_xy.svg", render_svg(&series, &proj)?.as_bytes())?;
    }
    Ok(())
}

pub(super) fn glue(r: &mut Run) -> Result<()> {
    let mut g = rng(r.cfg.seed, 4);
    let shell = shell_samples(&mut g, 1.5, 2.0, 10_000);
    let out = glue_bubble_conformal(&shell)?;
    r.check(CheckRecord::new(
        "glue: glued form is b-contact on 10⁴ shell samples (min |C|)",
        A_GLUE,
        out.contact.min_abs_coeff,
        CONTACT_THRESHOLD,
        0.0,
        Comparison::Above,
    ));
    r.check(CheckRecord::flag("glue: one sign of C over the shell", A_GLUE, !out.contact.mixed_signs));
    r.check(CheckRecord::new(
        "glue: positivity witness min(1 − g + λg) over the shell",
        A_GLUE,
        out.witness_min.unwrap_or(f64::NAN),
        0.0,
        0.0,
        Comparison::Above,
    ));
    let naive = glue_bubble_naive(&shell);
    r.check(CheckRecord::flag("glue: naive blend into standard contact R³ is rejected", A_GLUE, matches!(naive, Err(Error::Gluing(_)))));
    let base = bubble_form().scaled(&glue_conformal_factor())?;
    let ins = bubble_form();
    let mut bad = 0usize;
    for x in sample_box(&mut g, &[-3.0; 3], &[3.0; 3], 2000, |x| (dot(x, x) - 1.0).abs() > 1e-6) {
        let rr = norm(&x);
        let reference: Option<&BForm1> = if rr >= 2.0 {
            Some(&base)
        } else if rr <= 1.5 {
            Some(&ins)
        } else {
            None
        };
        if let Some(b) = reference {
            let same = (0..3).all(|i| out.form.beta()[i].eval(&x).to_bits() == b.beta()[i].eval(&x).to_bits())
                && out.form.f().eval(&x).to_bits() == b.f().eval(&x).to_bits();
            bad += !same as usize;
        }
    }
    r.check(CheckRecord::count("glue: outside the shell the glued form is bit-identical to its pieces", A_GLUE, bad, 0));
    Ok(())
}

/// One passage through the twisted Darboux model.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PhaseMeasurement {
    pub eps: f64,
    pub phase: f64,
    pub predicted: f64,
}

/// `φ(T)` from local radius 0.05 for each `ε`.
pub fn phase_measurements(eps_list: &[f64], spec: &BumpSpec) -> Result<Vec<PhaseMeasurement>> {
    let frame = DarbouxFrame::identity();
    let base = darboux_form();
    eps_list
        .iter()
        .map(|&eps| {
            let p = breaking_perturbation(&base, eps, spec, &frame)?;
            let phase = passage_phase(&reeb_field(&p)?, &frame, 0.05, spec.delta)?;
            Ok(PhaseMeasurement { eps, phase, predicted: predicted_phase(eps, spec) })
        })
        .collect()
}

fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

pub(super) fn break_scaling(r: &mut Run) -> Result<()> {
    let sp = spec(r)?;
    let d = sp.delta;
    let oracle = simpson(|s| sp.value(s), -d, d, 20_000);
    r.check(CheckRecord::new("break: ∫f (adaptive quadrature) against composite Simpson", A_BREAK, sp.integral(), oracle, 1e-10, Comparison::Abs));
    let ms = phase_measurements(&r.cfg.eps_list, &sp)?;
    for m in &ms {
        r.check(CheckRecord::new(
            &format!("break: φ(T) at ε = {:e} against ½ε∫f", m.eps),
            A_BREAK,
            m.phase,
            m.predicted,
            r.cfg.tolerances.phase_rel,
            Comparison::Rel,
        ));
    }
    let xs: Vec<f64> = ms.iter().map(|m| m.eps).collect();
    let ys: Vec<f64> = ms.iter().map(|m| m.phase).collect();
    r.check(CheckRecord::new(
        "break: least-squares slope of φ(T) in ε against ½∫f",
        A_BREAK,
        ols_slope(&xs, &ys),
        0.5 * sp.integral(),
        r.cfg.tolerances.slope_rel,
        Comparison::Rel,
    ));
    if r.wants_csv() {
        let mut s = String::from("eps,phase,predicted\n");
        for m in &ms {
            s.push_str(&format!("{:.6e},{:.12e},{:.12e}\n", m.eps, m.phase, m.predicted));
        }
        r.artifact("phase_law.csv", s.as_bytes())?;
    }
    if r.wants_svg() {
        let plane = Chart::plane2();
        let meas = PlotSeries::new("measured", StrokeStyle::Generic, &plane, ms.iter().map(|m| vec![m.eps, m.phase]).collect());
        let pred = PlotSeries::new(
            "½ε∫f",
            StrokeStyle::Escape,
            &plane,
            vec![vec![0.0, 0.0], vec![xs.iter().cloned().fold(0.0, f64::max), 0.5 * sp.integral() * xs.iter().cloned().fold(0.0, f64::max)]],
        );
        let series = [pred, meas];
        let proj = Projection::fit([0, 1], &series).with_title("phase gained through the twisted model against ε");
        r.artifact("phase_law.svg", render_svg(&series, &proj)?.as_bytes())?;
    }
    Ok(())
}

/// Axis seeds `(0,0,±0.5)`, `(0,0,±2)` followed by uniform seeds in
/// `[−2.5, 2.5]³` with `|r − 1| > 0.05`; `n` seeds in total.
pub fn classification_seeds(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = [[0.0, 0.0, 0.5], [0.0, 0.0, -0.5], [0.0, 0.0, 2.0], [0.0, 0.0, -2.0]]
        .iter()
        .take(n)
        .map(|p| p.to_vec())
        .collect();
    let mut g = rng(seed, 6);
    out.extend(sample_box(&mut g, &[-2.5; 3], &[2.5; 3], n.saturating_sub(4), |x| (norm(x) - 1.0).abs() > 0.05));
    out
}

/// Stereographic and conservation checks for the b-Hopf field.
pub(super) fn bhopf_algebra(r: &mut Run) -> Result<BHopfCatalog> {
    let cat = bhopf_catalog()?;
    let omega = cat.omega0.clone().with_convention(convention(r));
    let xh = hamiltonian_vector_field(&omega, &cat.hamiltonian);
    let mut g = rng(r.cfg.seed, 5);
    let sph = BHopfCatalog::sphere_points(&mut g, 200, 0.1, 0.0);
    let res = cat.stereographic_residual(&xh, &sph)?;
    r.check(CheckRecord::residual("b-Hopf: Ψ_* X_H equals the projected b-Hopf field (200 points)", A_HOPF, res, r.cfg.tolerances.stereographic));
    let io = IntegratorOptions { max_time: 100.0, ..IntegratorOptions::default() };
    let mut drift = 0.0f64;
    for x in sph.iter().take(8) {
        let tr = Integrator::new(&xh, &io).run(x, 1.0)?;
        drift = drift.max(first_integral_drift(&tr, &cat.hamiltonian));
    }
    r.check(CheckRecord::residual("b-Hopf: H drift of the double oscillator over horizon 100", A_HOPF, drift, r.cfg.tolerances.conservation));
    Ok(cat)
}

fn bhopf_portrait(r: &mut Run, name: &str, title: &str, field: &VectorField, reports: &[ClassificationReport], t: &ScalarField) -> Result<()> {
    let mut series = Vec::new();
    for rep in reports.iter().take(24) {
        let (b, f) = orbit_for_plot(field, &rep.seed, 40.0, 4.0)?;
        series.push(PlotSeries::from_ends(&format!("{:?}", rep.seed), StrokeStyle::for_kind(rep.class.kind), &b, &f));
    }
    let proj = Projection::new([0, 2], [[-2.5, 2.5], [-2.5, 2.5]]).with_critical(t).with_title(title);
    r.artifact(name, render_svg(&series, &proj)?.as_bytes())
}

pub(super) fn bhopf(r: &mut Run) -> Result<()> {
    let cat = bhopf_algebra(r)?;
    push_catalog_checks(r, &cat.entries_with(convention(r))?);
    let sys = OrbitSystem::inverted(cat.projected_reeb.clone(), cat.projected_reeb.clone());
    let base = cat.projected_alpha.base();
    let seeds = classification_seeds(r.cfg.seeds.min(100), r.cfg.seed);
    let reps = classify_batch(&sys, base, &points(&Chart::cartesian3(), &seeds)?, &r.cfg.classifier());
    let n_axis = seeds.len().min(4);
    r.check(CheckRecord::count(
        "b-Hopf: axis seeds are SingularPeriodic",
        A_HOPF_ORB,
        count(&reps[..n_axis], OrbitKind::SingularPeriodic),
        n_axis,
    ));
    r.check(CheckRecord::count("b-Hopf: no PeriodicOffZ", A_HOPF_ORB, count(&reps, OrbitKind::PeriodicOffZ), 0));
    let bad = reps.iter().filter(|x| !(x.quasi_closed || x.class.kind == OrbitKind::Unresolved)).count();
    r.check(CheckRecord::count("b-Hopf: every classified orbit is quasi-closed", A_HOPF_ORB, bad, 0));
    r.tally("bhopf", tally_named(&reps));
    if r.wants_csv() {
        r.artifact("classification.csv", &classification_csv(&reps))?;
    }
    if r.wants_svg() {
        bhopf_portrait(r, "bhopf_xz.svg", "projected b-Hopf Reeb orbits, (x, z) projection", &cat.projected_reeb, &reps, base.t())?;
    }
    Ok(())
}

pub(super) fn counterexample(r: &mut Run) -> Result<()> {
    let sp = spec(r)?;
    let p = perturbed_bhopf(r.cfg.eps, sp)?;
    let c3 = Chart::cartesian3();
    let seeds = classification_seeds(r.cfg.seeds, r.cfg.seed);
    let pts = points(&c3, &seeds)?;
    let opts = r.cfg.classifier();
    let reps = classify_batch(&p.system(), p.form.base(), &pts, &opts);
    let n_axis = seeds.len().min(4);
    let control = classify_batch(&p.unperturbed_system(), p.form.base(), &pts[..n_axis], &opts);
    r.check(CheckRecord::count("counterexample: no SingularPeriodic", A_CE, count(&reps, OrbitKind::SingularPeriodic), 0));
    r.check(CheckRecord::count("counterexample: no PeriodicOffZ", A_CE, count(&reps, OrbitKind::PeriodicOffZ), 0));
    r.check(CheckRecord::count(
        "counterexample: former axis orbits were SingularPeriodic before the perturbation",
        A_CE,
        count(&control, OrbitKind::SingularPeriodic),
        n_axis,
    ));
    let moved = reps[..n_axis].iter().filter(|x| x.class.kind != OrbitKind::SingularPeriodic).count();
    r.check(CheckRecord::count("counterexample: former axis orbits reclassified", A_CE, moved, n_axis));
    let bad = reps.iter().filter(|x| !(x.quasi_closed || x.class.kind == OrbitKind::Unresolved)).count();
    r.check(CheckRecord::count("counterexample: every classified orbit is quasi-closed", A_CE, bad, 0));
    let pred = predicted_phase(r.cfg.eps, &sp);
    for k in 0..p.frames.len() {
        let off = p.phase_offset(k)?;
        r.check(CheckRecord::new(
            &format!("counterexample: phase offset through perturbation {k} against ½ε∫f"),
            A_CE,
            off,
            pred,
            r.cfg.tolerances.phase_rel,
            Comparison::Rel,
        ));
    }
    r.tally("perturbed", tally_named(&reps));
    r.tally("unperturbed_axis", tally_named(&control));
    if r.wants_csv() {
        r.artifact("classification.csv", &classification_csv(&reps))?;
    }
    if r.wants_svg() {
        bhopf_portrait(r, "counterexample_xz.svg", "perturbed b-Hopf Reeb orbits, (x, z) projection", &p.reeb, &reps, p.form.base().t())?;
    }
    Ok(())
}

pub(super) fn torus_separatrix(r: &mut Run) -> Result<()> {
    let flat = torus_demo();
    let s = ExceptionalSurface::Flat(flat.clone());
    let set = find_critical_points(&s, &torus_seeds(8))?;
    r.check(CheckRecord::count("torus: critical points found", A_SEP, set.points.len(), 4));
    r.check(CheckRecord::flag("torus: all critical points nondegenerate", A_SEP, set.all_morse));
    let mut off = 0usize;
    let mut worst = 0.0f64;
    for (a, b, idx, val) in TORUS_CRITICAL {
        match set.points.iter().find(|p| s.distance(&p.coords, &[a, b]) < 1e-8) {
            Some(p) => {
                off += (p.morse_index != idx) as usize;
                worst = worst.max((p.value - val).abs());
            }
            None => off += 1,
        }
    }
    r.check(CheckRecord::count("torus: critical points and indices match (2,1,1,0)", A_SEP, off, 0));
    r.check(CheckRecord::residual("torus: critical values ±1.5, ±0.5", A_SEP, worst, 1e-12));
    let mut seps = Vec::new();
    for sad in set.saddles() {
        seps.extend(trace_separatrices(&s, sad, &set.points, &SeparatrixOptions::default())?);
    }
    let homoclinic = seps.iter().filter(|x| x.label == SeparatrixLabel::Homoclinic).count();
    r.check(CheckRecord::count("torus: homoclinic separatrices = 2·b₁(T²)", A_SEP, homoclinic, 4));
    r.check(CheckRecord::count("torus: singular periodic separatrix orbits", A_SEP, singular_periodic_count(&seps), 4));
    let h = |a: f64, b: f64| a.cos() + 0.5 * b.cos();
    let branches = level_branch_count(h, 0.5, [0.0, PI], 400) + level_branch_count(h, -0.5, [PI, 0.0], 400);
    r.check(CheckRecord::count("torus: level-set branch oracle agrees", A_SEP, branches, homoclinic));
    let drift = seps.iter().map(|x| x.energy_drift).fold(0.0, f64::max);
    r.check(CheckRecord::residual("torus: energy drift along separatrices", A_SEP, drift, 1e-8));
    if r.wants_svg() {
        let tau = std::f64::consts::TAU;
        let mut series = Vec::new();
        for x in &seps {
            let Some(t) = x.trajectory.as_ref() else { continue };
            let label = format!("saddle {:?} branch {}", x.saddle, x.branch);
            let mut piece: Vec<Vec<f64>> = Vec::new();
            for p in &t.states {
                let q: Vec<f64> = p.iter().map(|c| c.rem_euclid(tau)).collect();
                if let Some(last) = piece.last() {
                    if last.iter().zip(&q).any(|(a, b)| (a - b).abs() > PI) {
                        series.push(PlotSeries::new(&label, StrokeStyle::Separatrix, &flat.chart, std::mem::take(&mut piece)));
                    }
                }
                piece.push(q);
            }
            series.push(PlotSeries::new(&label, StrokeStyle::Separatrix, &flat.chart, piece));
        }
        if !series.is_empty() {
            let proj = Projection::new([0, 1], [[0.0, tau], [0.0, tau]]).with_title("torus demo: homoclinic separatrices");
            r.artifact("torus_separatrices.svg", render_svg(&series, &proj)?.as_bytes())?;
        }
    }
    Ok(())
}

/// Max componentwise deviation `(x₁, y₁, r, φ)` between an integrated orbit
/// and a closed form at 20 sample times.
fn seifert_dev(cat: &SeifertCatalog, tr: &Trajectory, s: &SeifertStart, v: ClosedFormVariant) -> Result<f64> {
    let t_end = cat.passage_time(s);
    let mut dev = 0.0f64;
    for k in 1..=20 {
        let t = t_end * k as f64 / 20.0;
        let x = tr.state_at(t).ok_or_else(|| Error::Domain(format!("no dense state at t = {t}")))?;
        let num = to_polar4(&x);
        let cf = cat.closed_form_orbit(t, s, v);
        for i in 0..4 {
            dev = dev.max((num[i] - cf[i]).abs());
        }
    }
    Ok(dev)
}

pub(super) fn seifert(r: &mut Run) -> Result<()> {
    let sp = spec(r)?;
    let cat = seifert_catalog(r.cfg.eps, sp)?;
    let field = cat.field();
    let tol = r.cfg.tolerances.clone();
    let io = IntegratorOptions { rel_tol: 1e-12, abs_tol: 1e-14, ..IntegratorOptions::default() };
    let (mut dev, mut dev_lit, mut end_x1, mut c_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut c_min = f64::INFINITY;
    let mut orbit0 = None;
    for c in cat.energies() {
        let s = cat.start(c);
        let t_end = cat.passage_time(&s);
        let tr = Integrator::new(&field, &io.clone().with_max_time(t_end)).run(&cat.start_point(&s), 1.0)?;
        dev = dev.max(seifert_dev(&cat, &tr, &s, ClosedFormVariant::Conserving)?);
        dev_lit = dev_lit.max(seifert_dev(&cat, &tr, &s, ClosedFormVariant::Printed)?);
        let end = to_polar4(tr.state_at(t_end).as_deref().unwrap_or(tr.last()));
        end_x1 = end_x1.max((end[0] - c).abs());
        let cm = (end[3] - s.phi) / r.cfg.eps;
        c_min = c_min.min(cm);
        c_err = c_err.max(rel(cm, sp.integral()));
        if orbit0.is_none() {
            orbit0 = Some(tr);
        }
    }
    r.check(CheckRecord::residual(
        "Seifert: numeric orbits match x₁ = c* − εη(f(y₁) − f(−y₁*)), y₁, r, φ (5 energies × 20 times)",
        A_SEIF,
        dev,
        tol.seifert_orbit,
    ));
    r.discrepancy(CheckRecord::residual(
        "Seifert: numeric orbits match the printed closed form with x₁ = c* + εη(f(y₁) − f(−y₁*))",
        A_SEIF,
        dev_lit,
        tol.seifert_orbit,
    ));
    r.check(CheckRecord::residual("Seifert: x₁(T) = c*", A_SEIF, end_x1, tol.seifert_endpoint));
    r.check(CheckRecord::new("Seifert: C = (φ(T) − φ*)/ε is positive (min)", A_SEIF, c_min, 0.0, 0.0, Comparison::Above));
    r.check(CheckRecord::residual("Seifert: C matches ∫f (max relative error)", A_SEIF, c_err, tol.seifert_constant_rel));
    push_catalog_checks(r, &cat.entries()?);
    if let Some(tr) = orbit0 {
        if r.wants_csv() {
            r.artifact("seifert_orbit.csv", &csv_of(&tr)?)?;
        }
        if r.wants_svg() {
            let plane = Chart::plane2();
            let pts: Vec<Vec<f64>> = tr.states.iter().map(|x| to_polar4(x)).map(|p| vec![p[1], p[3]]).collect();
            let s = [PlotSeries::new("orbit at c* = −δ/4", StrokeStyle::Generic, &plane, pts)];
            let proj = Projection::fit([0, 1], &s).with_title("Seifert model: angle φ against y₁");
            r.artifact("seifert_phase.svg", render_svg(&s, &proj)?.as_bytes())?;
        }
    }
    Ok(())
}

fn implication_violations(reports: &[ClassificationReport]) -> usize {
    reports.iter().filter(|x| !x.class.implications_hold() || x.quasi_closed != x.class.is_quasi_closed()).count()
}

pub(super) fn taxonomy(r: &mut Run) -> Result<()> {
    let c3 = Chart::cartesian3();
    let opts = r.cfg.classifier();
    let a = bubble_form();
    let (axis, interior, exterior) = bubble_seeds(&mut rng(r.cfg.seed, 2));
    let seeds: Vec<Vec<f64>> = axis.into_iter().chain(interior).chain(exterior).collect();
    let bub = classify_batch(&OrbitSystem::from(reeb_field(&a)?), a.base(), &points(&c3, &seeds)?, &opts);
    let p = perturbed_bhopf(r.cfg.eps, spec(r)?)?;
    let hs = points(&c3, &classification_seeds(r.cfg.seeds, r.cfg.seed))?;
    let hopf = classify_batch(&p.unperturbed_system(), p.form.base(), &hs, &opts);
    let pert = classify_batch(&p.system(), p.form.base(), &hs, &opts);
    for (name, reps) in [("bubble", &bub), ("b-Hopf", &hopf), ("perturbed b-Hopf", &pert)] {
        r.check(CheckRecord::count(&format!("taxonomy: {name} classes consistent with their limit-set predicates"), A_TAX, implication_violations(reps), 0));
    }
    r.check(CheckRecord::count("taxonomy: bubble has exactly one SingularPeriodic", A_TAX, count(&bub, OrbitKind::SingularPeriodic), 1));
    r.check(CheckRecord::count("taxonomy: b-Hopf axis seeds are SingularPeriodic", A_TAX, count(&hopf[..4.min(hopf.len())], OrbitKind::SingularPeriodic), 4.min(hopf.len())));
    r.check(CheckRecord::count("taxonomy: perturbed b-Hopf has no SingularPeriodic", A_TAX, count(&pert, OrbitKind::SingularPeriodic), 0));
    let all_qc = |reps: &[ClassificationReport]| reps.iter().filter(|x| !(x.quasi_closed || x.class.kind == OrbitKind::Unresolved)).count();
    r.check(CheckRecord::count("taxonomy: b-Hopf orbits quasi-closed", A_TAX, all_qc(&hopf), 0));
    r.check(CheckRecord::count("taxonomy: perturbed b-Hopf orbits quasi-closed", A_TAX, all_qc(&pert), 0));
    for (name, reps) in [("bubble", &bub), ("bhopf", &hopf), ("perturbed_bhopf", &pert)] {
        r.report.tallies.insert(name.into(), tally_named(reps));
    }
    if r.wants_csv() {
        r.artifact("bubble_classification.csv", &classification_csv(&bub))?;
        r.artifact("bhopf_classification.csv", &classification_csv(&hopf))?;
        r.artifact("perturbed_classification.csv", &classification_csv(&pert))?;
    }
    Ok(())
}
