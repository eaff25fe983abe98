use approx::assert_relative_eq;
use nalgebra::DVector;
use proptest::prelude::*;

use nlscanon::backend::BackendSpec;
use nlscanon::experiments::{ExperimentConfig, ExperimentId};
use nlscanon::fit::{slope_fit, tame_fit, TamePoint};
use nlscanon::forms::{poincare_closed_residual, poincare_residual, symplecticity_residual_seq, ExactTwoForm, PolyOneForm, PolyTwoForm};
use nlscanon::phase_space::*;
use nlscanon::quadrature::{gauss_legendre, integrate};
use nlscanon::sampling::{direction, rng};

fn layout() -> ModeLayout {
    ModeLayout::new(4, &[1, -2]).unwrap()
}

fn seq(layout: &ModeLayout) -> impl Strategy<Value = Seq> {
    prop::collection::vec(-0.05f64..0.05, layout.dim()).prop_map(DVector::from_vec)
}

fn tame_points() -> impl Strategy<Value = Vec<TamePoint>> {
    prop::collection::vec((0.0f64..10.0, 0.1f64..10.0).prop_map(|(num, den)| TamePoint { num, den }), 1..20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fourier_map_round_trip(z in seq(&layout())) {
        let l = layout();
        let back = fnls_forward(&l, &fnls_inverse(&l, &z)).unwrap();
        prop_assert!((back - &z).norm() <= 1e-14 * (1.0 + z.norm()));
    }

    #[test]
    fn j_is_a_complex_structure(z in seq(&layout()), zp in seq(&layout())) {
        prop_assert!((apply_j(&apply_j(&z)) + &z).norm() < 1e-15);
        let a = pairing_seq_r(&apply_j(&z), &zp);
        let b = pairing_seq_r(&z, &apply_j(&zp));
        prop_assert!((a + b).abs() < 1e-15);
    }

    #[test]
    fn sobolev_norms_increase_with_s(z in seq(&layout())) {
        let l = layout();
        for s in 0..3 {
            prop_assert!(sobolev_norm(&l, &z, s, Part::Full) <= sobolev_norm(&l, &z, s + 1, Part::Full) + 1e-15);
        }
        let split = sobolev_norm(&l, &project_s(&l, &z), 1, Part::Full).powi(2) + sobolev_norm(&l, &project_perp(&l, &z), 1, Part::Full).powi(2);
        prop_assert!((split - sobolev_norm(&l, &z, 1, Part::Full).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn toy_backend_is_symplectic(z in seq(&layout())) {
        let l = layout();
        let b = BackendSpec::toy().build(&l).unwrap();
        prop_assert!(symplecticity_residual_seq(&b.phi_jac(&z).unwrap()) < 1e-10);
        let back = b.phi_inverse(&b.phi(&z).unwrap()).unwrap();
        prop_assert!((back - &z).norm() < 1e-10);
    }

    #[test]
    fn tame_fit_is_scale_invariant(train in tame_points(), test in tame_points(), c in 0.01f64..100.0) {
        let f = tame_fit(&train, &test).unwrap();
        let scale = |b: &[TamePoint]| b.iter().map(|p| TamePoint { num: c * p.num, den: p.den }).collect::<Vec<_>>();
        let g = tame_fit(&scale(&train), &scale(&test)).unwrap();
        prop_assert_eq!(f.pass, g.pass);
        prop_assert!((g.c_train - c * f.c_train).abs() <= 1e-12 * g.c_train.max(1.0));
        // A test batch equal to the train batch always passes.
        prop_assert!(tame_fit(&train, &train).unwrap().pass);
    }

    #[test]
    fn slope_of_a_power_law(p in -3.0f64..5.0, a in 0.1f64..10.0) {
        let eps: Vec<f64> = (0..6).map(|k| 10f64.powf(-3.0 + 0.5 * k as f64)).collect();
        let vals: Vec<f64> = eps.iter().map(|e| a * e.powf(p)).collect();
        prop_assert!((slope_fit(&eps, &vals).unwrap().slope - p).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_is_exact_for_low_degree(coef in prop::collection::vec(-1.0f64..1.0, 1..12)) {
        let p = |t: f64| coef.iter().rev().fold(0.0, |acc, c| acc * t + c);
        let exact: f64 = coef.iter().enumerate().map(|(k, c)| c / (k + 1) as f64).sum();
        prop_assert!((integrate(p, 8) - exact).abs() < 1e-13);
    }

    #[test]
    fn config_json_round_trip(k in 0usize..9, seed in any::<u64>()) {
        let mut cfg = ExperimentConfig::new(ExperimentId::ALL[k]);
        cfg.seed = seed;
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        prop_assert_eq!(serde_json::to_value(&back).unwrap(), serde_json::to_value(&cfg).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn cone_primitive_identities(seed in any::<u64>()) {
        let n = 4;
        let y_idx = [2, 3];
        let mut r = rng(seed, 0);
        let z = DVector::from_fn(n, |i, _| 0.1 + 0.1 * i as f64);
        let l = ModeLayout::new(1, &[]).unwrap();
        let vs: Vec<Seq> = (0..2).map(|_| direction(&l, &mut r, 0).rows(0, n).into_owned()).collect();
        let one = PolyOneForm::random_hypothesis(n, &y_idx, &mut r);
        let two = PolyTwoForm::random_hypothesis(n, &y_idx, &mut r);
        prop_assert!(poincare_residual(&one, &y_idx, &z, &[&vs[0]]).unwrap().abs() < 1e-8);
        prop_assert!(poincare_residual(&two, &y_idx, &z, &[&vs[0], &vs[1]]).unwrap().abs() < 1e-8);
        // `dω` is closed, so its cone primitive is an exact primitive.
        let closed = ExactTwoForm { primitive: PolyOneForm::random_hypothesis(n, &y_idx, &mut r) };
        prop_assert!(poincare_closed_residual(&closed, &y_idx, &z, &[&vs[0], &vs[1]]).abs() < 1e-8);
    }
}

#[test]
fn gauss_weights_sum_to_one() {
    for n in [1, 4, 16] {
        let (_, w) = gauss_legendre(n);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
    }
}
