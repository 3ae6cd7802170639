//! Maximum-likelihood estimation of the coefficient matrix and BIC-based
//! bandwidth selection.
//!
//! The objective is `l(xi) = sum_m ln f_mix(p_m | gamma(v_m, t_m; xi))` with
//! `ln f_mix = ln a + (a - 1) ln p`. Differentiating through `a = sigmoid(gamma)`
//! gives `d/dgamma ln f_mix = (1 - a)(1 + a ln p)`, and `gamma` is linear in
//! `xi` with feature vector `phi_k1(v) psi_k2(t)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{CoefficientMatrix, JointBasis};
use crate::error::{Error, Result};
use crate::graph::SpectralBasis;
use crate::model::{ln_sigmoid, sigmoid};
use crate::seed::{derive_seed, rng_from_seed};

/// One hypothesis: a vertex, a normalized time in `[-pi, pi]` and its p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub vertex: usize,
    pub time: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    samples: Vec<Sample>,
    theta: Option<Vec<u8>>,
}

impl ObservationSet {
    /// Validates every sample against a graph with `n_vertices` vertices.
    /// `theta`, when present, holds the 0/1 ground truth (1 = alternative).
    pub fn new(samples: Vec<Sample>, theta: Option<Vec<u8>>, n_vertices: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("observation set is empty".into()));
        }
        for (m, s) in samples.iter().enumerate() {
            if s.vertex >= n_vertices {
                return Err(Error::InvalidInput(format!(
                    "sample {m}: vertex {} out of range for {n_vertices} vertices",
                    s.vertex
                )));
            }
            if !(s.time.is_finite() && (-PI..=PI).contains(&s.time)) {
                return Err(Error::Domain(format!(
                    "sample {m}: time {} outside [-pi, pi]",
                    s.time
                )));
            }
            if !(s.p > 0.0 && s.p <= 1.0) {
                return Err(Error::Domain(format!(
                    "sample {m}: p-value {} outside (0, 1]",
                    s.p
                )));
            }
        }
        if let Some(th) = &theta {
            if th.len() != samples.len() {
                return Err(Error::InvalidInput(format!(
                    "{} labels for {} samples",
                    th.len(),
                    samples.len()
                )));
            }
            if let Some(m) = th.iter().position(|&x| x > 1) {
                return Err(Error::InvalidInput(format!(
                    "sample {m}: label must be 0 or 1"
                )));
            }
        }
        Ok(ObservationSet { samples, theta })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn theta(&self) -> Option<&[u8]> {
        self.theta.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.p).collect()
    }
}

/// Row-major `M x (K1 K2)` design matrix plus `ln p_m`.
#[derive(Debug, Clone)]
pub struct Design {
    features: Vec<f64>,
    ln_p: Vec<f64>,
    k1: usize,
    k2: usize,
}

impl Design {
    pub fn new(obs: &ObservationSet, basis: &JointBasis) -> Result<Self> {
        let width = basis.n_features();
        let mut features = vec![0.0; obs.len() * width];
        for (row, s) in features.chunks_exact_mut(width).zip(obs.samples()) {
            basis.features_into(s.vertex, s.time, row)?;
        }
        Ok(Design {
            features,
            ln_p: obs.samples().iter().map(|s| s.p.ln()).collect(),
            k1: basis.k1(),
            k2: basis.k2(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.ln_p.len()
    }

    pub fn n_features(&self) -> usize {
        self.k1 * self.k2
    }

    fn check(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.n_features() {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for a {}x{} basis",
                xi.len(),
                self.k1,
                self.k2
            )));
        }
        Ok(())
    }

    /// `gamma_m` for every sample.
    pub fn gammas(&self, xi: &[f64]) -> Vec<f64> {
        self.features
            .chunks_exact(self.n_features())
            .map(|row| row.iter().zip(xi).map(|(x, c)| x * c).sum())
            .collect()
    }

    pub fn log_likelihood(&self, xi: &[f64]) -> Result<f64> {
        self.check(xi)?;
        let mut total = 0.0;
        for (m, (row, &ln_p)) in self
            .features
            .chunks_exact(self.n_features())
            .zip(&self.ln_p)
            .enumerate()
        {
            let gamma: f64 = row.iter().zip(xi).map(|(x, c)| x * c).sum();
            let term = ln_sigmoid(gamma) - sigmoid(-gamma) * ln_p;
            if !term.is_finite() {
                return Err(Error::Numerical {
                    index: m,
                    quantity: "log-likelihood term",
                });
            }
            total += term;
        }
        Ok(total)
    }

    /// Log-likelihood and its gradient with respect to the row-major
    /// coefficients.
    pub fn value_and_gradient(&self, xi: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(xi)?;
        let width = self.n_features();
        let mut total = 0.0;
        let mut grad = vec![0.0; width];
        for (m, (row, &ln_p)) in self
            .features
            .chunks_exact(width)
            .zip(&self.ln_p)
            .enumerate()
        {
            let gamma: f64 = row.iter().zip(xi).map(|(x, c)| x * c).sum();
            let a = sigmoid(gamma);
            let one_minus_a = sigmoid(-gamma);
            let term = ln_sigmoid(gamma) - one_minus_a * ln_p;
            let weight = one_minus_a * (1.0 + a * ln_p);
            if !term.is_finite() || !weight.is_finite() {
                return Err(Error::Numerical {
                    index: m,
                    quantity: "log-likelihood term",
                });
            }
            total += term;
            for (g, x) in grad.iter_mut().zip(row) {
                *g += weight * x;
            }
        }
        Ok((total, grad))
    }
}

fn to_matrix(k1: usize, k2: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(k1, k2, v)
}

fn check_shape(xi: &CoefficientMatrix, basis: &JointBasis) -> Result<()> {
    if xi.k1() != basis.k1() || xi.k2() != basis.k2() {
        return Err(Error::InvalidInput(format!(
            "coefficients are {}x{} but the basis is {}x{}",
            xi.k1(),
            xi.k2(),
            basis.k1(),
            basis.k2()
        )));
    }
    Ok(())
}

/// `sum_m ln f_mix(p_m | gamma(v_m, t_m; xi))`.
pub fn log_likelihood(
    xi: &CoefficientMatrix,
    obs: &ObservationSet,
    basis: &JointBasis,
) -> Result<f64> {
    check_shape(xi, basis)?;
    Design::new(obs, basis)?.log_likelihood(&xi.to_row_major())
}

/// Gradient of [`log_likelihood`] as a `K1 x K2` matrix.
pub fn grad_log_likelihood(
    xi: &CoefficientMatrix,
    obs: &ObservationSet,
    basis: &JointBasis,
) -> Result<DMatrix<f64>> {
    check_shape(xi, basis)?;
    let (_, g) = Design::new(obs, basis)?.value_and_gradient(&xi.to_row_major())?;
    Ok(to_matrix(xi.k1(), xi.k2(), &g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Trial step for the first iteration, on the per-sample mean objective.
    pub step_init: f64,
    pub backtrack: f64,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    pub max_iters: usize,
    /// Tolerance on the Euclidean norm of the projected gradient of the
    /// per-sample mean log-likelihood.
    pub grad_tol: f64,
    pub restarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            step_init: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
            max_iters: 500,
            grad_tol: 1e-6,
            restarts: 5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {x}"
                )))
            }
        };
        positive("step_init", self.step_init)?;
        positive("armijo", self.armijo)?;
        positive("grad_tol", self.grad_tol)?;
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidInput(format!(
                "backtrack must lie in (0, 1), got {}",
                self.backtrack
            )));
        }
        if self.armijo >= 1.0 {
            return Err(Error::InvalidInput("armijo must be below 1".into()));
        }
        if self.max_iters == 0 || self.restarts == 0 {
            return Err(Error::InvalidInput(
                "max_iters and restarts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub xi_hat: CoefficientMatrix,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub k1: usize,
    pub k2: usize,
    /// Restart that produced `xi_hat`; restart 0 starts from zero.
    pub restart: usize,
    /// Log-likelihood after each accepted iteration of the winning restart,
    /// starting with the initial point.
    pub trace: Vec<f64>,
}

struct RunOutcome {
    xi: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn project(x: &mut [f64], bound: f64) {
    for v in x.iter_mut() {
        *v = v.clamp(-bound, bound);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], bound: f64) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            let d = (xi + gi).clamp(-bound, bound) - xi;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Projected gradient ascent with Armijo backtracking from `start`. Works
/// on the per-sample mean objective; trial steps after the first iteration
/// use the Barzilai-Borwein ratio of the previous step.
fn ascend(
    design: &Design,
    start: Vec<f64>,
    bound: f64,
    cfg: &OptimizerConfig,
) -> Result<RunOutcome> {
    let scale = 1.0 / design.n_samples() as f64;
    let mut x = start;
    project(&mut x, bound);
    let (value, grad) = design.value_and_gradient(&x)?;
    let mut f = value * scale;
    let mut g: Vec<f64> = grad.iter().map(|v| v * scale).collect();
    let mut trace = vec![value];
    let mut step = cfg.step_init;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        if projected_gradient_norm(&x, &g, bound) < cfg.grad_tol {
            converged = true;
            break;
        }
        let mut t = step;
        let mut accepted = None;
        while t > 1e-20 {
            let mut candidate: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + t * gi).collect();
            project(&mut candidate, bound);
            let dir: Vec<f64> = candidate.iter().zip(&x).map(|(c, xi)| c - xi).collect();
            let slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
            if slope <= 0.0 {
                break;
            }
            if let Ok(v) = design.log_likelihood(&candidate) {
                let fv = v * scale;
                if fv >= f + cfg.armijo * slope {
                    accepted = Some((candidate, dir, v));
                    break;
                }
            }
            t *= cfg.backtrack;
        }
        let Some((next, dir, _)) = accepted else {
            break;
        };
        let (value, grad) = design.value_and_gradient(&next)?;
        let g_next: Vec<f64> = grad.iter().map(|v| v * scale).collect();
        let ss: f64 = dir.iter().map(|d| d * d).sum();
        let sy: f64 = dir
            .iter()
            .zip(g_next.iter().zip(&g))
            .map(|(d, (a, b))| d * (a - b))
            .sum();
        step = if sy < 0.0 {
            (ss / -sy).clamp(1e-10, 1e10)
        } else {
            (t / cfg.backtrack).min(1e10)
        };
        x = next;
        f = value * scale;
        g = g_next;
        trace.push(value);
        iterations += 1;
    }
    if !converged {
        converged = projected_gradient_norm(&x, &g, bound) < cfg.grad_tol;
    }
    Ok(RunOutcome {
        value: f / scale,
        xi: x,
        iterations,
        converged,
        trace,
    })
}

/// Maximum-likelihood fit of the coefficients inside `[-box_bound, box_bound]`.
///
/// Restart 0 starts at zero; restart `r >= 1` draws its start uniformly in
/// the box from `derive_seed(seed, r)`. The restart with the largest final
/// likelihood wins, the lower index on ties.
pub fn mle_fit(
    obs: &ObservationSet,
    basis: &JointBasis,
    box_bound: f64,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<FitResult> {
    cfg.validate()?;
    if !(box_bound.is_finite() && box_bound > 0.0) {
        return Err(Error::InvalidInput(format!(
            "box bound must be positive, got {box_bound}"
        )));
    }
    let design = Design::new(obs, basis)?;
    let width = design.n_features();

    let mut best: Option<(usize, RunOutcome)> = None;
    let mut failures = Vec::new();
    for r in 0..cfg.restarts {
        let start = if r == 0 {
            vec![0.0; width]
        } else {
            let mut rng = rng_from_seed(derive_seed(seed, r as u64));
            (0..width)
                .map(|_| rng.random_range(-box_bound..=box_bound))
                .collect()
        };
        match ascend(&design, start, box_bound, cfg) {
            Ok(run) if run.value.is_finite() => {
                if best.as_ref().is_none_or(|(_, b)| run.value > b.value) {
                    best = Some((r, run));
                }
            }
            Ok(_) => failures.push(format!("restart {r}: non-finite likelihood")),
            Err(e) => failures.push(format!("restart {r}: {e}")),
        }
    }

    let (restart, run) = best.ok_or_else(|| Error::FitFailure(failures.join("; ")))?;
    Ok(FitResult {
        xi_hat: CoefficientMatrix::new(to_matrix(basis.k1(), basis.k2(), &run.xi), box_bound)?,
        log_likelihood: run.value,
        iterations: run.iterations,
        converged: run.converged,
        k1: basis.k1(),
        k2: basis.k2(),
        restart,
        trace: run.trace,
    })
}

/// `K1 K2 ln M - 2 l*`.
pub fn bic(k1: usize, k2: usize, m: usize, l_star: f64) -> f64 {
    (k1 * k2) as f64 * (m as f64).ln() - 2.0 * l_star
}

/// Default bandwidth grid: `K1` in `1..=min(6, n)`, `K2` in `{1, 3, 5, 7, 9}`.
pub fn default_grid(n_vertices: usize) -> Vec<(usize, usize)> {
    let mut grid = Vec::new();
    for k1 in 1..=n_vertices.min(6) {
        for k2 in [1, 3, 5, 7, 9] {
            grid.push((k1, k2));
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicRow {
    pub k1: usize,
    pub k2: usize,
    pub m: usize,
    /// `None` when the fit for this cell failed.
    pub log_likelihood: Option<f64>,
    pub bic: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSelection {
    pub best: FitResult,
    /// One row per grid cell, in grid order.
    pub table: Vec<BicRow>,
}

/// Seed for the fit of grid cell `(k1, k2)`; keyed by the cell, not its
/// position in the grid.
pub fn cell_seed(seed: u64, k1: usize, k2: usize) -> u64 {
    derive_seed(seed, ((k1 as u64) << 32) | k2 as u64)
}

/// Fits every `(K1, K2)` cell and keeps the smallest BIC. Ties go to the
/// smaller `K1 K2`, then the smaller `K1`.
pub fn select_model(
    obs: &ObservationSet,
    full_basis: &SpectralBasis,
    grid: &[(usize, usize)],
    box_bound: f64,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<ModelSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("bandwidth grid is empty".into()));
    }
    for &(k1, k2) in grid {
        if k1 == 0 || k2 == 0 || k1 > full_basis.bandwidth() {
            return Err(Error::InvalidBandwidth {
                requested: k1,
                available: full_basis.bandwidth(),
            });
        }
    }
    cfg.validate()?;
    let m = obs.len();
    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, FitResult)> = None;
    for &(k1, k2) in grid {
        let basis = JointBasis::from_full(full_basis, k1, k2)?;
        match mle_fit(obs, &basis, box_bound, cfg, cell_seed(seed, k1, k2)) {
            Ok(fit) => {
                let score = bic(k1, k2, m, fit.log_likelihood);
                table.push(BicRow {
                    k1,
                    k2,
                    m,
                    log_likelihood: Some(fit.log_likelihood),
                    bic: Some(score),
                    converged: fit.converged,
                    iterations: fit.iterations,
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((b, f)) => {
                        score < *b || (score == *b && (k1 * k2, k1) < (f.k1 * f.k2, f.k1))
                    }
                };
                if better && score.is_finite() {
                    best = Some((score, fit));
                }
            }
            Err(e) => {
                log::warn!("fit for (K1, K2) = ({k1}, {k2}) failed: {e}");
                table.push(BicRow {
                    k1,
                    k2,
                    m,
                    log_likelihood: None,
                    bic: None,
                    converged: false,
                    iterations: 0,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (_, best) = best.ok_or(Error::Selection)?;
    Ok(ModelSelection { best, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{graph_fourier_basis, laplacian, Graph};

    fn basis(n: usize, k1: usize, k2: usize) -> JointBasis {
        let full = graph_fourier_basis(&laplacian(&Graph::ring(n).unwrap()), n).unwrap();
        JointBasis::from_full(&full, k1, k2).unwrap()
    }

    #[test]
    fn single_sample_at_one() {
        let jb = basis(3, 2, 3);
        let obs = ObservationSet::new(
            vec![Sample {
                vertex: 1,
                time: 0.4,
                p: 1.0,
            }],
            None,
            3,
        )
        .unwrap();
        let xi = CoefficientMatrix::from_row_major(2, 3, &[1.0, -0.5, 2.0, 0.3, 0.0, -1.0], 10.0)
            .unwrap();
        let gamma = jb.evaluate_gamma(&xi, 1, 0.4).unwrap();
        let l = log_likelihood(&xi, &obs, &jb).unwrap();
        assert!((l - sigmoid(gamma).ln()).abs() < 1e-14);

        let g = grad_log_likelihood(&xi, &obs, &jb).unwrap();
        let feats = jb.features(1, 0.4).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let want = (1.0 - sigmoid(gamma)) * feats[i * 3 + j];
                assert!((g[(i, j)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_coefficients_closed_form() {
        let jb = basis(4, 2, 2);
        let ps = [0.01, 0.2, 0.7, 1.0, 0.05];
        let samples: Vec<Sample> = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| Sample {
                vertex: i % 4,
                time: -1.0 + 0.5 * i as f64,
                p,
            })
            .collect();
        let obs = ObservationSet::new(samples, None, 4).unwrap();
        let xi = CoefficientMatrix::zeros(2, 2, 10.0).unwrap();
        let want: f64 = ps.iter().map(|p| (0.5 * p.powf(-0.5)).ln()).sum();
        assert!((log_likelihood(&xi, &obs, &jb).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn all_ones_hits_the_box() {
        let jb = basis(1, 1, 1);
        let samples = (0..50)
            .map(|i| Sample {
                vertex: 0,
                time: -3.0 + 0.12 * i as f64,
                p: 1.0,
            })
            .collect();
        let obs = ObservationSet::new(samples, None, 1).unwrap();
        let fit = mle_fit(&obs, &jb, 10.0, &OptimizerConfig::default(), 7).unwrap();
        assert_eq!(fit.xi_hat.xi()[(0, 0)], 10.0);
        assert!(fit.converged);
    }

    #[test]
    fn bic_examples() {
        assert!((bic(1, 1, 100, -50.0) - 104.605_170_185_988_1).abs() < 1e-9);
        assert!((bic(2, 3, 100, 0.0) - 27.631_021_115_928_55).abs() < 1e-9);
        assert!(bic(2, 2, 100, -10.0) > bic(1, 3, 100, -10.0));
    }

    #[test]
    fn default_grid_shape() {
        assert_eq!(default_grid(3).len(), 15);
        assert_eq!(default_grid(32).len(), 30);
        assert!(default_grid(32).contains(&(6, 9)));
    }

    #[test]
    fn config_validation() {
        let cfg = OptimizerConfig {
            backtrack: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = OptimizerConfig {
            restarts: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn observation_validation() {
        let bad_vertex = vec![Sample {
            vertex: 5,
            time: 0.0,
            p: 0.5,
        }];
        assert!(ObservationSet::new(bad_vertex, None, 3).is_err());
        let bad_p = vec![Sample {
            vertex: 0,
            time: 0.0,
            p: 0.0,
        }];
        assert!(ObservationSet::new(bad_p, None, 3).is_err());
        let bad_t = vec![Sample {
            vertex: 0,
            time: 3.5,
            p: 0.5,
        }];
        assert!(ObservationSet::new(bad_t, None, 3).is_err());
        let ok = vec![Sample {
            vertex: 0,
            time: 0.0,
            p: 0.5,
        }];
        assert!(ObservationSet::new(ok, Some(vec![2]), 3).is_err());
    }
}
