use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srl::bforms::BForm1;
use srl::cli::{CheckRecord, Comparison, ExperimentConfig};
use srl::constructions::{
    bubble_form, breaking_perturbation, char_foliation_generator, darboux_form, foliation_system_residual,
    glue_bubble_conformal, glue_conformal_factor, shell_samples, twist_form, BumpSpec, DarbouxFrame, FoliationKind,
};
use srl::fields::Point;
use srl::orbits::{LimitSet, LimitSetKind, OrbitClass, OrbitKind};
use srl::reeb::reeb_at;

fn coefficients(a: &BForm1, x: &[f64]) -> Vec<f64> {
    std::iter::once(a.f().eval(x)).chain(a.beta().iter().map(|b| b.eval(x))).collect()
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn direction() -> impl Strategy<Value = [f64; 3]> {
    [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64]
        .prop_filter("non-degenerate direction", |v| v.iter().map(|c| c * c).sum::<f64>() > 1e-4)
        .prop_map(unit)
}

fn glued() -> &'static BForm1 {
    static G: OnceLock<BForm1> = OnceLock::new();
    G.get_or_init(|| {
        let shell = shell_samples(&mut ChaCha8Rng::seed_from_u64(11), 1.5, 2.0, 2000);
        glue_bubble_conformal(&shell).expect("conformal glue is contact").form
    })
}

fn limit_set() -> impl Strategy<Value = LimitSet> {
    prop_oneof![
        [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64].prop_map(|c| LimitSetKind::PointOnZ { coords: c.to_vec() }),
        (-1.0..1.0f64, 0.01..1.0f64, prop::sample::select(vec![-1i8, 1])).prop_map(|(z, r, s)| LimitSetKind::CircleOnZ {
            axial_level: z,
            radius: r,
            angular_rate_sign: s
        }),
        Just(LimitSetKind::OffZUnknown),
        Just(LimitSetKind::Unresolved),
    ]
    .prop_map(|kind| LimitSet { kind, confidence: 1.0, residual: 0.0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bump_is_an_even_plateau_cutoff(delta in 0.05..0.4f64, p in 0.1..0.9f64, u in -1.5..1.5f64) {
        let b = BumpSpec::new(delta, p).unwrap();
        let s = u * delta;
        let v = b.value(s);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, b.value(-s));
        if s.abs() <= p * delta {
            prop_assert_eq!(v, 1.0);
            prop_assert_eq!(b.derivative(s), 0.0);
        }
        if s.abs() >= delta {
            prop_assert_eq!(v, 0.0);
            prop_assert_eq!(b.derivative(s), 0.0);
        }
        let i = b.integral();
        prop_assert!(i >= 2.0 * p * delta - 1e-12 && i <= 2.0 * delta + 1e-12);
    }

    #[test]
    fn bump_derivative_matches_difference_quotient(delta in 0.1..0.4f64, u in -1.0..1.0f64) {
        let b = BumpSpec::with_delta(delta).unwrap();
        let (s, h) = (u * delta, 1e-6 * delta);
        let fd = (b.value(s + h) - b.value(s - h)) / (2.0 * h);
        prop_assert!((fd - b.derivative(s)).abs() <= 1e-5 / delta);
    }

    #[test]
    fn radial_cutoff_follows_the_radius(delta in 0.05..0.4f64, u in 0.0..1.5f64) {
        let b = BumpSpec::with_delta(delta).unwrap();
        let r = u * delta;
        let v = b.radial_value(r * r);
        prop_assert!((0.0..=1.0).contains(&v));
        if r <= 0.5 * delta {
            prop_assert_eq!(v, 1.0);
        }
        if r >= delta {
            prop_assert_eq!(v, 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn perturbation_is_local(eps in 1e-4..0.05f64, delta in 0.1..0.3f64, d in direction(), reach in 1.01..3.0f64) {
        let base = darboux_form();
        let spec = BumpSpec::with_delta(delta).unwrap();
        let pert = breaking_perturbation(&base, eps, &spec, &DarbouxFrame::identity()).unwrap();
        // Outside the cube of half-width δ the cutoff vanishes identically.
        let m = d.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let x: Vec<f64> = d.iter().map(|c| c / m * reach * delta).collect();
        prop_assert_eq!(coefficients(&pert, &x), coefficients(&base, &x));
        // On the plateau the twist is added with weight exactly ε.
        let y: Vec<f64> = d.iter().map(|c| c * 0.3 * delta).collect();
        let twist = [y[2] * y[0], y[2] * y[1], 0.5 * (y[2] * y[2] - y[0] * y[0] - y[1] * y[1])];
        let (cb, cp) = (coefficients(&base, &y), coefficients(&pert, &y));
        for i in 0..3 {
            prop_assert!((cp[i + 1] - cb[i + 1] - eps * twist[i]).abs() <= 1e-15);
        }
    }

    #[test]
    fn glue_is_local(d in direction(), inner in 0.0..1.5f64, outer in 2.0..4.0f64) {
        let g = glued();
        let x: Vec<f64> = d.iter().map(|c| c * inner).collect();
        prop_assert_eq!(coefficients(g, &x), coefficients(&bubble_form(), &x));
        let y: Vec<f64> = d.iter().map(|c| c * outer).collect();
        let lam = glue_conformal_factor().eval(&y);
        let far = coefficients(g, &y);
        for (a, b) in far.iter().zip(coefficients(&bubble_form(), &y)) {
            prop_assert!((a - lam * b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn foliation_generators_solve_their_systems(d in direction(), radius in 0.3..3.0f64, b in any::<bool>()) {
        let kind = if b { FoliationKind::B } else { FoliationKind::Standard };
        let x: Vec<f64> = d.iter().map(|c| c * radius).collect();
        let p = Point::new(&srl::fields::Chart::cartesian3(), &x).unwrap();
        let v = char_foliation_generator(kind, radius, &p).unwrap();
        let scale = 1.0 + radius.powi(4);
        for r in foliation_system_residual(kind, &x, &v) {
            prop_assert!(r.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn twist_reeb_is_a_positive_multiple_of_the_rotation(x in [-1.5..1.5f64, -1.5..1.5f64, -1.5..1.5f64]) {
        let a = twist_form();
        let p = Point::new(a.base().chart(), &x).unwrap();
        let (r, _) = reeb_at(&a, &p).unwrap();
        let v = [-x[1], x[0], 1.0];
        let k = (r[0] * v[0] + r[1] * v[1] + r[2] * v[2]) / (v[0] * v[0] + v[1] * v[1] + 1.0);
        prop_assert!(k > 0.0);
        for i in 0..3 {
            prop_assert!((r[i] - k * v[i]).abs() <= 1e-12 * (1.0 + r[i].abs()));
        }
    }
}

proptest! {
    #[test]
    fn taxonomy_implications_hold(f in limit_set(), b in limit_set()) {
        let c = OrbitClass::from_ends(f, b);
        prop_assert!(c.implications_hold(), "{:?}", c);
        if c.forward.is_point() && c.backward.is_point() {
            prop_assert_eq!(c.kind, OrbitKind::SingularPeriodic);
        }
        if c.kind == OrbitKind::SingularPeriodic {
            prop_assert!(c.is_escape() && c.is_generalized_escape() && c.is_quasi_closed());
        }
    }

    #[test]
    fn config_roundtrips_through_json(
        eps in 1e-4..0.1f64,
        list in prop::collection::vec(1e-4..0.1f64, 2..5),
        delta in 0.01..0.4f64,
        horizon in 1.0..1e3f64,
        seeds in 1usize..500,
        seed in any::<u64>(),
    ) {
        let c = ExperimentConfig { eps, eps_list: list, delta, horizon, seeds, seed, ..ExperimentConfig::default() };
        c.validate().unwrap();
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn config_rejects_out_of_range_values(bad in prop_oneof![0.1000001..10.0f64, -10.0..=0.0f64]) {
        let c = ExperimentConfig { eps: bad, ..ExperimentConfig::default() };
        prop_assert!(c.validate().is_err());
        let c = ExperimentConfig { eps_list: vec![1e-3, bad], ..ExperimentConfig::default() };
        prop_assert!(c.validate().is_err());
    }

    #[test]
    fn check_record_comparisons(m in -10.0..10.0f64, e in -10.0..10.0f64, tol in 0.0..2.0f64) {
        prop_assert_eq!(CheckRecord::new("c", "a", m, e, tol, Comparison::AtMost).pass, m <= tol);
        prop_assert_eq!(CheckRecord::new("c", "a", m, e, tol, Comparison::AtLeast).pass, m >= e);
        prop_assert_eq!(CheckRecord::new("c", "a", m, e, tol, Comparison::Above).pass, m > e);
        prop_assert_eq!(CheckRecord::new("c", "a", m, e, tol, Comparison::Abs).pass, (m - e).abs() <= tol);
        prop_assert_eq!(CheckRecord::new("c", "a", m, e, tol, Comparison::Rel).pass, (m - e).abs() <= tol * e.abs());
        prop_assert!(!CheckRecord::residual("c", "a", f64::NAN, tol).pass);
    }
}
