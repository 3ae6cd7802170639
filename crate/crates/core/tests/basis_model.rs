mod common;

use std::f64::consts::PI;

use common::{psi_reference, simpson};
use graphfdr::model::{f1_cdf, lfdr_ratio};
use graphfdr::{
    f1_from_mix, f_mix, graph_fourier_basis, laplacian, lfdr, pi0_from_mix, CoefficientMatrix,
    Graph, JointBasis, NullDensity, TemporalBasis, TimeWindow,
};
use proptest::prelude::*;

fn path_graph(n: usize) -> Graph {
    let ids = (0..n).map(|i| i.to_string()).collect();
    let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    Graph::from_edges(ids, &edges).unwrap()
}

fn linear_null() -> NullDensity {
    // f0(p) = 0.5 + p
    let p: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let d = p.iter().map(|x| 0.5 + x).collect();
    NullDensity::tabulated(p, d).unwrap()
}

#[test]
fn temporal_basis_is_orthonormal() {
    let k2 = 7;
    let basis = TemporalBasis::new(k2).unwrap();
    for i in 0..k2 {
        for j in 0..k2 {
            let ip = simpson(|t| basis.eval(t)[i] * basis.eval(t)[j], -PI, PI, 2000);
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((ip - want).abs() < 1e-10, "<psi{i}, psi{j}> = {ip}");
        }
    }
}

#[test]
fn f1_integrates_to_one() {
    // p = u^(2/a) turns a p^(a-1) dp into a smooth polynomial in u
    for f0 in [NullDensity::Uniform, linear_null()] {
        for gamma in [-2.0, 0.0, 2.0] {
            let a = graphfdr::sigmoid(gamma);
            let k = 2.0 / a;
            let integrand = |u: f64| {
                if u == 0.0 {
                    return 0.0;
                }
                f1_from_mix(u.powf(k), gamma, &f0).unwrap() * k * u.powf(k - 1.0)
            };
            let total = simpson(integrand, 0.0, 1.0, 20_000);
            assert!((total - 1.0).abs() < 1e-4, "gamma {gamma}: {total}");
            assert!((f1_cdf(1.0, gamma, &f0).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn mixture_integrates_to_one() {
    for gamma in [-3.0, -0.5, 0.0, 1.5, 4.0] {
        let a = graphfdr::sigmoid(gamma);
        // u = p^a again; the integrand becomes 1 / a * a = 1 up to rounding
        let total = simpson(
            |u: f64| {
                if u == 0.0 {
                    return 1.0;
                }
                let p = u.powf(1.0 / a);
                f_mix(p, gamma).unwrap() * u.powf(1.0 / a - 1.0) / a
            },
            0.0,
            1.0,
            2000,
        );
        assert!((total - 1.0).abs() < 1e-8, "gamma {gamma}: {total}");
    }
}

#[test]
fn tabulated_prior_example() {
    // f0(1) = 2 with a = 0.5
    let f0 = NullDensity::tabulated(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
    assert!((pi0_from_mix(0.0, &f0).unwrap() - 0.25).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_matches_double_loop(
        n in 2usize..7,
        k1_raw in 1usize..7,
        k2 in 1usize..6,
        coeffs in prop::collection::vec(-10.0..10.0f64, 36),
        v_raw in 0usize..7,
        t in -PI..PI,
    ) {
        let k1 = k1_raw.min(n);
        let v = v_raw % n;
        let full = graph_fourier_basis(&laplacian(&path_graph(n)), n).unwrap();
        let basis = JointBasis::from_full(&full, k1, k2).unwrap();
        let xi = CoefficientMatrix::from_row_major(k1, k2, &coeffs[..k1 * k2], 10.0).unwrap();
        let mut want = 0.0;
        for a in 0..k1 {
            for b in 0..k2 {
                want += coeffs[a * k2 + b] * full.eigenvectors[(v, a)] * psi_reference(b + 1, t);
            }
        }
        let got = basis.evaluate_gamma(&xi, v, t).unwrap();
        prop_assert!((got - want).abs() < 1e-12, "{} vs {}", got, want);
    }

    #[test]
    fn gamma_is_linear_in_coefficients(
        x in prop::collection::vec(-4.0..4.0f64, 6),
        y in prop::collection::vec(-4.0..4.0f64, 6),
        c in -1.0..1.0f64,
        v in 0usize..5,
        t in -PI..PI,
    ) {
        let full = graph_fourier_basis(&laplacian(&path_graph(5)), 5).unwrap();
        let basis = JointBasis::from_full(&full, 2, 3).unwrap();
        let mat = |w: &[f64]| CoefficientMatrix::from_row_major(2, 3, w, 10.0).unwrap();
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + c * b).collect();
        let g = |w: &[f64]| basis.evaluate_gamma(&mat(w), v, t).unwrap();
        prop_assert!((g(&z) - (g(&x) + c * g(&y))).abs() < 1e-12);
        prop_assert_eq!(g(&[0.0; 6]), 0.0);
    }

    #[test]
    fn window_round_trip(start in -1e6..1e6f64, width in 1e-3..1e6f64, frac in 0.0..=1.0f64) {
        let w = TimeWindow::new(start, start + width).unwrap();
        let raw = start + frac * width;
        let t = w.normalize(raw).unwrap();
        prop_assert!((-PI..=PI).contains(&t));
        prop_assert!((t - (-PI + 2.0 * PI * frac)).abs() < 1e-9);
        prop_assert!((w.denormalize(t) - raw).abs() <= 1e-9 * (1.0 + raw.abs() + width));
    }

    #[test]
    fn f1_is_nonincreasing_and_nonnegative(gamma in -6.0..6.0f64, p in 1e-6..1.0f64, dp in 1e-6..0.5f64) {
        let q = (p + dp).min(1.0);
        for f0 in [NullDensity::Uniform, linear_null()] {
            let a = f1_from_mix(p, gamma, &f0).unwrap();
            let b = f1_from_mix(q, gamma, &f0).unwrap();
            prop_assert!(a >= b - 1e-12 * a.abs().max(1.0));
            prop_assert!(b >= -1e-12);
        }
    }

    #[test]
    fn lfdr_is_monotone_and_in_unit_interval(gamma in -30.0..30.0f64, p in 1e-12..1.0f64, dp in 0.0..0.5f64) {
        let q = (p + dp).min(1.0);
        for f0 in [NullDensity::Uniform, linear_null()] {
            let a = lfdr(p, gamma, &f0).unwrap();
            let b = lfdr(q, gamma, &f0).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(a <= b);
            let r = lfdr_ratio(p, gamma, &f0).unwrap();
            prop_assert!((a - r).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_complements(x in -700.0..700.0f64) {
        let s = graphfdr::sigmoid(x) + graphfdr::sigmoid(-x);
        prop_assert!((s - 1.0).abs() < 1e-15);
    }
}
