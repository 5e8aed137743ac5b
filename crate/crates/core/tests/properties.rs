//! Randomised invariants across the solver, weights and estimates.

use carleman_lab::carleman::{
    algebraic_inequality_variant, boundary_term_initial, sweep_params, time_decay_integral, LemmaVariant,
};
use carleman_lab::estimates::integral::{verify_wave_carleman, VerifyOptions};
use carleman_lab::forward::leapfrog;
use carleman_lab::grid::BoundaryLayout;
use carleman_lab::testfn::TrigPoly;
use carleman_lab::{GridSpec, ScalarField};
use proptest::prelude::*;

fn interval() -> GridSpec {
    GridSpec::unit_interval(21, 0.6, 31).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn leapfrog_is_linear_in_the_data(s1 in 0u64..1000, s2 in 0u64..1000, c in -3.0f64..3.0) {
        let g = interval();
        let q: Vec<f64> = ScalarField::from_fn(g, |x| 1.0 + x[0]).into_values();
        let u1 = TrigPoly::random(1, 2, 3, s1).sample(&g);
        let u2 = TrigPoly::random(1, 2, 3, s2).sample(&g);
        let nb = BoundaryLayout::new(&g).len();
        let d1: Vec<f64> = (0..g.nt * nb).map(|i| (i as f64 * 0.37 + s1 as f64).sin()).collect();
        let d2: Vec<f64> = (0..g.nt * nb).map(|i| (i as f64 * 0.11 + s2 as f64).cos()).collect();
        let comb = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(a, b)| a + c * b).collect() };
        let (a1, a2) = (u1.slice(0), u2.slice(0));
        let (b1, b2) = (u1.slice(1), u2.slice(1));
        let w1 = leapfrog(&g, &q, a1, b1, &d1, None).unwrap();
        let w2 = leapfrog(&g, &q, a2, b2, &d2, None).unwrap();
        let w = leapfrog(&g, &q, &comb(a1, a2), &comb(b1, b2), &comb(&d1, &d2), None).unwrap();
        let scale = w1.iter().chain(&w2).fold(1.0f64, |m, v| m.max(v.abs()));
        for ((x, y), z) in w1.iter().zip(&w2).zip(&w) {
            prop_assert!((x + c * y - z).abs() <= 1e-12 * scale * (1.0 + c.abs()));
        }
    }

    #[test]
    fn doubled_lemma_never_fails(
        a in prop::collection::vec(-10.0f64..10.0, 2..6),
        b in -10.0f64..10.0,
        j in 0usize..6,
        k in 0usize..6,
    ) {
        let n = a.len();
        let r = algebraic_inequality_variant(&a, b, j % n, k % n, LemmaVariant::Double);
        prop_assert!(r.holds, "{r:?}");
    }

    #[test]
    fn decay_integral_stays_below_its_bound(lb in 1e-2f64..1e4, t in 0.0f64..50.0) {
        let d = time_decay_integral(lb, t);
        prop_assert!(d.numeric <= d.bound * (1.0 + 1e-12));
        prop_assert!((d.numeric - d.closed_form).abs() <= 1e-6 * d.bound);
    }

    #[test]
    fn boundary_term_vanishes_without_initial_velocity(seed in 0u64..10_000, lambda in 0.5f64..50.0) {
        let g = GridSpec::unit_square(9, 1.0, 21).unwrap();
        let c = sweep_params(&g, &[-1.0, -1.0], &[-1.0, -1.0], 1.0, lambda, None).unwrap();
        let a = TrigPoly::random(2, 3, 3, seed).sample(&g).time_slice(0);
        let b = ScalarField::zeros(g);
        let term = boundary_term_initial(&a, &b, &c);
        prop_assert!(term.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wave_constant_ignores_the_phase_shift(seed in 0u64..1000, s in -2.0f64..2.0) {
        let g = GridSpec::unit_interval(41, 1.0, 51).unwrap();
        let c = sweep_params(&g, &[-1.5], &[-1.5], 1.0, 4.0, Some(0.1)).unwrap();
        let u = TrigPoly::random(1, 3, 3, seed).sample(&g);
        let base = verify_wave_carleman(&u, &c, None, &VerifyOptions::default());
        let moved = verify_wave_carleman(&u, &c, None, &VerifyOptions { shift: Some(s), ..Default::default() });
        let (x, y) = (base.empirical_constant, moved.empirical_constant);
        prop_assume!(x.is_finite() && y.is_finite());
        prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()), "{x} vs {y}");
    }
}
