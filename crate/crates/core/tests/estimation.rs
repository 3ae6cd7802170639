//! Data here is drawn straight from the marginal: under a uniform null the
//! mixture density `a p^(a-1)` is Beta(a, 1), so `p = U^(1/a)`.

use std::f64::consts::PI;

use graphfdr::estimation::{default_grid, Design};
use graphfdr::seed::rng_from_seed;
use graphfdr::{
    bic, grad_log_likelihood, graph_fourier_basis, laplacian, log_likelihood, mle_fit,
    select_model, sigmoid, CoefficientMatrix, Graph, JointBasis, ObservationSet, OptimizerConfig,
    Sample, SpectralBasis,
};
use proptest::prelude::*;
use rand::Rng;
use rayon::prelude::*;

fn full_basis(graph: &Graph) -> SpectralBasis {
    graph_fourier_basis(&laplacian(graph), graph.n_vertices()).unwrap()
}

fn draw(basis: &JointBasis, xi: &CoefficientMatrix, m: usize, seed: u64) -> ObservationSet {
    let mut rng = rng_from_seed(seed);
    let n = basis.n_vertices();
    let samples = (0..m)
        .map(|_| {
            let v = rng.random_range(0..n);
            let t = rng.random_range(-PI..=PI);
            let a = sigmoid(basis.evaluate_gamma(xi, v, t).unwrap());
            let u: f64 = 1.0 - rng.random::<f64>();
            Sample {
                vertex: v,
                time: t,
                p: u.powf(1.0 / a).max(1e-300),
            }
        })
        .collect();
    ObservationSet::new(samples, None, n).unwrap()
}

fn scalar_model() -> JointBasis {
    JointBasis::from_full(&full_basis(&Graph::ring(1).unwrap()), 1, 1).unwrap()
}

fn scalar(x: f64, bound: f64) -> CoefficientMatrix {
    CoefficientMatrix::from_row_major(1, 1, &[x], bound).unwrap()
}

#[test]
fn gradient_vanishes_at_grid_search_maximizer() {
    let basis = scalar_model();
    let obs = draw(&basis, &scalar(1.5, 10.0), 400, 17);
    let l = |x: f64| log_likelihood(&scalar(x, 10.0), &obs, &basis).unwrap();

    // dense scan, then golden-section refinement around the best grid point
    let grid: Vec<f64> = (0..=2000).map(|i| -10.0 + 0.01 * i as f64).collect();
    let best = grid
        .iter()
        .copied()
        .max_by(|a, b| l(*a).total_cmp(&l(*b)))
        .unwrap();
    assert!(best.abs() < 9.9, "maximizer should be interior, got {best}");
    let (mut lo, mut hi) = (best - 0.01, best + 0.01);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if l(x1) < l(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    let x_star = 0.5 * (lo + hi);
    let grad = grad_log_likelihood(&scalar(x_star, 10.0), &obs, &basis).unwrap();
    assert!(
        grad.norm() < 1e-4,
        "gradient norm {} at {x_star}",
        grad.norm()
    );

    let fit = mle_fit(&obs, &basis, 10.0, &OptimizerConfig::default(), 0).unwrap();
    assert!((fit.xi_hat.xi()[(0, 0)] - x_star).abs() < 1e-4);
}

#[test]
fn scalar_coefficient_is_recovered() {
    // asymptotic sd from the Fisher information c^2 (1 - a)^2 per sample,
    // c = phi * psi = 1 / sqrt(2 pi)
    let c = 1.0 / (2.0 * PI).sqrt();
    let a = sigmoid(2.0 * c);
    let sd = 1.0 / (c * (1.0 - a) * 5000f64.sqrt());

    let basis = scalar_model();
    let mut errors: Vec<f64> = (0..10)
        .into_par_iter()
        .map(|s| {
            let obs = draw(&basis, &scalar(2.0, 10.0), 5000, 100 + s);
            let fit = mle_fit(&obs, &basis, 10.0, &OptimizerConfig::default(), s).unwrap();
            (fit.xi_hat.xi()[(0, 0)] - 2.0).abs()
        })
        .collect();
    for e in &errors {
        assert!(*e < 4.0 * sd, "|xi_hat - 2| = {e}, sd {sd}");
    }
    errors.sort_by(f64::total_cmp);
    let median = 0.5 * (errors[4] + errors[5]);
    assert!(median < 0.15, "median error {median}: {errors:?}");
}

#[test]
fn fit_dominates_random_probes() {
    let graph = Graph::ring(6).unwrap();
    let basis = JointBasis::from_full(&full_basis(&graph), 2, 3).unwrap();
    let truth =
        CoefficientMatrix::from_row_major(2, 3, &[-3.0, 2.0, 1.0, 4.0, -1.0, 2.0], 10.0).unwrap();
    let obs = draw(&basis, &truth, 1500, 9);
    let fit = mle_fit(&obs, &basis, 10.0, &OptimizerConfig::default(), 4).unwrap();
    let mut rng = rng_from_seed(31);
    for _ in 0..20 {
        let probe: Vec<f64> = (0..6).map(|_| rng.random_range(-10.0..=10.0)).collect();
        let p = CoefficientMatrix::from_row_major(2, 3, &probe, 10.0).unwrap();
        assert!(fit.log_likelihood >= log_likelihood(&p, &obs, &basis).unwrap());
    }
    assert!(fit.log_likelihood >= log_likelihood(&truth, &obs, &basis).unwrap());
    assert!(fit.converged);
}

#[test]
fn selection_singleton_grid() {
    let graph = Graph::ring(5).unwrap();
    let full = full_basis(&graph);
    let basis = JointBasis::from_full(&full, 2, 1).unwrap();
    let truth = CoefficientMatrix::from_row_major(2, 1, &[1.0, 3.0], 10.0).unwrap();
    let obs = draw(&basis, &truth, 300, 2);
    let sel = select_model(&obs, &full, &[(3, 5)], 10.0, &OptimizerConfig::default(), 0).unwrap();
    assert_eq!((sel.best.k1, sel.best.k2), (3, 5));
    assert_eq!(sel.table.len(), 1);
}

#[test]
fn bic_table_bookkeeping() {
    let graph = Graph::ring(5).unwrap();
    let full = full_basis(&graph);
    let basis = JointBasis::from_full(&full, 2, 3).unwrap();
    let truth =
        CoefficientMatrix::from_row_major(2, 3, &[1.0, 3.0, -2.0, 4.0, 0.0, 1.0], 10.0).unwrap();
    let obs = draw(&basis, &truth, 600, 8);
    let grid = default_grid(5);
    let cfg = OptimizerConfig {
        restarts: 2,
        ..OptimizerConfig::default()
    };
    let sel = select_model(&obs, &full, &grid, 10.0, &cfg, 1).unwrap();
    assert_eq!(sel.table.len(), grid.len());
    let mut best = f64::INFINITY;
    for (row, &(k1, k2)) in sel.table.iter().zip(&grid) {
        assert_eq!((row.k1, row.k2, row.m), (k1, k2, 600));
        let l = row.log_likelihood.unwrap();
        assert_eq!(row.bic.unwrap(), bic(k1, k2, 600, l));
        best = best.min(row.bic.unwrap());
    }
    let chosen = sel
        .table
        .iter()
        .find(|r| (r.k1, r.k2) == (sel.best.k1, sel.best.k2))
        .unwrap();
    assert_eq!(chosen.bic.unwrap(), best);
    let refit_basis = JointBasis::from_full(&full, sel.best.k1, sel.best.k2).unwrap();
    let l = log_likelihood(&sel.best.xi_hat, &obs, &refit_basis).unwrap();
    assert!((l - sel.best.log_likelihood).abs() < 1e-8 * l.abs().max(1.0));
}

#[test]
fn selection_finds_rich_enough_model() {
    let graph = Graph::ring(8).unwrap();
    let full = full_basis(&graph);
    let basis = JointBasis::from_full(&full, 2, 3).unwrap();
    let truth =
        CoefficientMatrix::from_row_major(2, 3, &[-6.0, 6.0, 5.0, 7.0, -5.0, 6.0], 10.0).unwrap();
    let grid: Vec<(usize, usize)> = (1..=4).flat_map(|a| (1..=4).map(move |b| (a, b))).collect();
    let cfg = OptimizerConfig {
        restarts: 2,
        ..OptimizerConfig::default()
    };
    let sizes: Vec<usize> = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let obs = draw(&basis, &truth, 4000, 700 + s);
            let sel = select_model(&obs, &full, &grid, 10.0, &cfg, s).unwrap();
            sel.best.k1 * sel.best.k2
        })
        .collect();
    let hits = sizes.iter().filter(|&&k| k >= 6).count();
    assert!(
        hits >= 16,
        "K1*K2 >= 6 in only {hits} of 20 trials: {sizes:?}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fit_is_feasible_monotone_and_deterministic(
        xi in prop::collection::vec(-4.0..4.0f64, 4),
        bound in 1.0..6.0f64,
        data_seed in any::<u64>(),
        fit_seed in any::<u64>(),
    ) {
        let graph = Graph::ring(4).unwrap();
        let basis = JointBasis::from_full(&full_basis(&graph), 2, 2).unwrap();
        let truth = CoefficientMatrix::from_row_major(2, 2, &xi, 10.0).unwrap();
        let obs = draw(&basis, &truth, 200, data_seed);
        let cfg = OptimizerConfig { restarts: 3, ..OptimizerConfig::default() };
        let fit = mle_fit(&obs, &basis, bound, &cfg, fit_seed).unwrap();
        prop_assert!(fit.xi_hat.xi().iter().all(|x| x.abs() <= bound));
        prop_assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
        let again = mle_fit(&obs, &basis, bound, &cfg, fit_seed).unwrap();
        prop_assert_eq!(&fit, &again);
    }

    #[test]
    fn design_value_matches_per_sample_sum(
        xi in prop::collection::vec(-5.0..5.0f64, 6),
        seed in any::<u64>(),
    ) {
        let graph = Graph::ring(5).unwrap();
        let basis = JointBasis::from_full(&full_basis(&graph), 3, 2).unwrap();
        let mat = CoefficientMatrix::from_row_major(3, 2, &xi, 10.0).unwrap();
        let obs = draw(&basis, &mat, 50, seed);
        let design = Design::new(&obs, &basis).unwrap();
        let direct: f64 = obs
            .samples()
            .iter()
            .map(|s| {
                let a = sigmoid(basis.evaluate_gamma(&mat, s.vertex, s.time).unwrap());
                (a * s.p.powf(a - 1.0)).ln()
            })
            .sum();
        let got = design.log_likelihood(&xi).unwrap();
        prop_assert!((got - direct).abs() < 1e-9 * direct.abs().max(1.0), "{} vs {}", got, direct);
    }
}
