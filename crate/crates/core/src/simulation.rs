//! Synthetic data from the hierarchical two-groups model and Monte Carlo
//! evaluation of detection strategies.
//!
//! Per grid point: `gamma = gamma(v, t; xi*)`, `theta ~ Bernoulli(1 - pi0(gamma))`,
//! then `p ~ f0` under the null and `p ~ f1(. ; gamma)` under the
//! alternative, the latter by bisection on the closed-form CDF.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{CoefficientMatrix, JointBasis};
use crate::detection::{bh_procedure, compute_lfdr_vector, detect, DetectionResult};
use crate::error::{Error, Result};
use crate::estimation::{select_model, ObservationSet, OptimizerConfig, Sample};
use crate::graph::{
    build_knn_graph, graph_fourier_basis, laplacian, GeoPoint, Graph, SpectralBasis,
};
use crate::model::{bisect_increasing, f1_cdf, pi0_from_mix, NullDensity};
use crate::seed::{derive_seed, rng_from_seed};

/// Default FDR levels for benchmarks.
pub const DEFAULT_ALPHAS: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];

/// Stream indices under a trial seed.
const DATA_STREAM: u64 = 0;
const FIT_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSource {
    Ring {
        n: usize,
    },
    Knn {
        ids: Vec<String>,
        points: Vec<GeoPoint>,
        k: usize,
    },
    Edges {
        ids: Vec<String>,
        edges: Vec<(usize, usize)>,
    },
}

impl GraphSource {
    pub fn build(&self) -> Result<Graph> {
        match self {
            GraphSource::Ring { n } => Graph::ring(*n),
            GraphSource::Knn { ids, points, k } => build_knn_graph(points, ids.clone(), *k),
            GraphSource::Edges { ids, edges } => Graph::from_edges(ids.clone(), edges),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    /// Every vertex at times `-pi + 2 pi j / T`, `j = 0..=T`.
    Grid,
    /// `samples` i.i.d. points, vertex and time uniform.
    Uniform { samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub graph: GraphSource,
    /// `T`; the grid has `T + 1` time points.
    pub time_points: usize,
    pub sampling: Sampling,
    /// True coefficient rows, `K1 x K2`.
    pub true_xi: Vec<Vec<f64>>,
    pub box_bound: f64,
    pub f0: NullDensity,
    pub alphas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// `(K1, K2)` cells searched by the plug-in fit.
    pub fit_grid: Vec<(usize, usize)>,
    pub optimizer: OptimizerConfig,
}

/// A validated scenario with its graph and bases built.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    graph: Graph,
    full_basis: SpectralBasis,
    true_basis: JointBasis,
    true_xi: CoefficientMatrix,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        if config.time_points == 0 {
            return Err(Error::InvalidInput("time_points must be at least 1".into()));
        }
        if config.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if let Sampling::Uniform { samples: 0 } = config.sampling {
            return Err(Error::InvalidInput(
                "uniform sampling needs at least one sample".into(),
            ));
        }
        if config.alphas.is_empty() {
            return Err(Error::InvalidInput("alpha grid is empty".into()));
        }
        if let Some(a) = config.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidInput(format!("alpha {a} is outside (0, 1)")));
        }
        if config.fit_grid.is_empty() {
            return Err(Error::InvalidInput("fit grid is empty".into()));
        }
        config.optimizer.validate()?;

        let k1 = config.true_xi.len();
        let k2 = config.true_xi.first().map_or(0, Vec::len);
        if k1 == 0 || k2 == 0 || config.true_xi.iter().any(|r| r.len() != k2) {
            return Err(Error::InvalidInput(
                "true coefficient matrix must be a non-empty rectangle".into(),
            ));
        }
        let flat: Vec<f64> = config.true_xi.iter().flatten().copied().collect();
        let true_xi = CoefficientMatrix::from_row_major(k1, k2, &flat, config.box_bound)?;

        let graph = config.graph.build()?;
        let n = graph.n_vertices();
        let full_basis = graph_fourier_basis(&laplacian(&graph), n)?;
        let true_basis = JointBasis::from_full(&full_basis, k1, k2)?;
        if let Some(&(bad, _)) = config
            .fit_grid
            .iter()
            .find(|(a, b)| *a == 0 || *b == 0 || *a > n)
        {
            return Err(Error::InvalidBandwidth {
                requested: bad,
                available: n,
            });
        }
        Ok(Scenario {
            config,
            graph,
            full_basis,
            true_basis,
            true_xi,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn full_basis(&self) -> &SpectralBasis {
        &self.full_basis
    }

    pub fn true_basis(&self) -> &JointBasis {
        &self.true_basis
    }

    pub fn true_xi(&self) -> &CoefficientMatrix {
        &self.true_xi
    }

    /// Deterministic grid `V x {-pi + 2 pi j / T : j = 0..=T}`.
    pub fn grid_points(&self) -> Vec<(usize, f64)> {
        let t_count = self.config.time_points;
        let mut out = Vec::with_capacity(self.graph.n_vertices() * (t_count + 1));
        for v in 0..self.graph.n_vertices() {
            for j in 0..=t_count {
                let t = (-PI + 2.0 * PI * j as f64 / t_count as f64).clamp(-PI, PI);
                out.push((v, t));
            }
        }
        out
    }
}

/// Draws one p-value from the alternative density at `gamma` by inverting
/// its CDF; falls back to the null when the alternative is degenerate.
pub fn sample_alternative(gamma: f64, f0: &NullDensity, u: f64) -> f64 {
    let p = match f1_cdf(0.5, gamma, f0) {
        Ok(_) => bisect_increasing(|p| f1_cdf(p, gamma, f0).unwrap_or(1.0), u, 0.0, 1.0),
        Err(_) => f0.inverse_cdf(u),
    };
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

fn sample_null(f0: &NullDensity, u: f64) -> f64 {
    f0.inverse_cdf(u).clamp(f64::MIN_POSITIVE, 1.0)
}

/// Synthetic observations with ground truth, deterministic given `seed`.
pub fn generate_observations(scenario: &Scenario, seed: u64) -> Result<ObservationSet> {
    let mut rng = rng_from_seed(seed);
    let n = scenario.graph.n_vertices();
    let points = match scenario.config.sampling {
        Sampling::Grid => scenario.grid_points(),
        Sampling::Uniform { samples } => (0..samples)
            .map(|_| (rng.random_range(0..n), rng.random_range(-PI..=PI)))
            .collect(),
    };
    let f0 = &scenario.config.f0;
    let mut samples = Vec::with_capacity(points.len());
    let mut theta = Vec::with_capacity(points.len());
    for (v, t) in points {
        let gamma = scenario
            .true_basis
            .evaluate_gamma(&scenario.true_xi, v, t)?;
        let pi0 = pi0_from_mix(gamma, f0)?.min(1.0);
        let null = rng.random::<f64>() < pi0;
        // (0, 1]
        let u = 1.0 - rng.random::<f64>();
        let p = if null {
            sample_null(f0, u)
        } else {
            sample_alternative(gamma, f0, u)
        };
        samples.push(Sample {
            vertex: v,
            time: t,
            p,
        });
        theta.push(u8::from(!null));
    }
    ObservationSet::new(samples, Some(theta), n)
}

/// Realized false discovery and true positive proportions of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub fdp: f64,
    pub tpp: f64,
    pub rejections: usize,
}

pub fn empirical_fdp_tpp(decisions: &[u8], theta: &[u8]) -> Result<TrialOutcome> {
    if decisions.len() != theta.len() {
        return Err(Error::InvalidInput(format!(
            "{} decisions for {} labels",
            decisions.len(),
            theta.len()
        )));
    }
    let rejections = decisions.iter().filter(|&&d| d == 1).count();
    let false_rej = decisions
        .iter()
        .zip(theta)
        .filter(|(&d, &t)| d == 1 && t == 0)
        .count();
    let true_rej = decisions
        .iter()
        .zip(theta)
        .filter(|(&d, &t)| d == 1 && t == 1)
        .count();
    let alternatives = theta.iter().filter(|&&t| t == 1).count();
    Ok(TrialOutcome {
        fdp: false_rej as f64 / rejections.max(1) as f64,
        tpp: true_rej as f64 / alternatives.max(1) as f64,
        rejections,
    })
}

/// Thresholds the lfdr computed from the true coefficients.
pub fn oracle_detect(
    scenario: &Scenario,
    obs: &ObservationSet,
    alpha: f64,
) -> Result<DetectionResult> {
    let l = compute_lfdr_vector(
        &scenario.true_xi,
        obs,
        &scenario.true_basis,
        &scenario.config.f0,
    )?;
    detect(l, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "plug-in")]
    PlugIn,
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "bh")]
    Bh,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::PlugIn, Method::Oracle, Method::Bh];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::PlugIn => "plug-in",
            Method::Oracle => "oracle",
            Method::Bh => "bh",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything one trial produced. `plug_in` is `None` when the fit failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub selected: Option<(usize, usize)>,
    pub fit_error: Option<String>,
    /// Indexed like the scenario's alpha grid.
    pub plug_in: Option<Vec<TrialOutcome>>,
    pub oracle: Vec<TrialOutcome>,
    pub bh: Vec<TrialOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub alpha: f64,
    pub method: Method,
    pub mean_fdr: f64,
    pub se_fdr: f64,
    pub mean_power: f64,
    pub se_power: f64,
    pub trials_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub trials: Vec<TrialRecord>,
    pub fit_failures: usize,
}

impl BenchmarkReport {
    pub fn row(&self, alpha: f64, method: Method) -> Option<&BenchmarkRow> {
        self.rows
            .iter()
            .find(|r| r.alpha == alpha && r.method == method)
    }
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Seed of trial `index` under the master seed.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, index as u64)
}

/// Seed of the data stream of trial `index`.
pub fn trial_data_seed(master: u64, index: usize) -> u64 {
    derive_seed(trial_seed(master, index), DATA_STREAM)
}

/// Runs one trial: generate, fit, and detect with all three strategies.
pub fn run_trial(scenario: &Scenario, index: usize) -> Result<TrialRecord> {
    let cfg = &scenario.config;
    let seed = trial_seed(cfg.seed, index);
    let obs = generate_observations(scenario, trial_data_seed(cfg.seed, index))?;
    let theta = obs.theta().expect("simulated data carries labels").to_vec();
    let p_values = obs.p_values();

    let oracle_lfdr = compute_lfdr_vector(&scenario.true_xi, &obs, &scenario.true_basis, &cfg.f0)?;

    let fit = select_model(
        &obs,
        &scenario.full_basis,
        &cfg.fit_grid,
        cfg.box_bound,
        &cfg.optimizer,
        derive_seed(seed, FIT_STREAM),
    );
    let (plug_lfdr, selected, fit_error) = match fit {
        Ok(sel) => {
            let basis = JointBasis::from_full(&scenario.full_basis, sel.best.k1, sel.best.k2)?;
            let l = compute_lfdr_vector(&sel.best.xi_hat, &obs, &basis, &cfg.f0)?;
            (Some(l), Some((sel.best.k1, sel.best.k2)), None)
        }
        Err(e) => {
            log::warn!("trial {index}: plug-in fit failed: {e}");
            (None, None, Some(e.to_string()))
        }
    };

    let mut oracle = Vec::new();
    let mut bh = Vec::new();
    let mut plug_in = plug_lfdr.as_ref().map(|_| Vec::new());
    for &alpha in &cfg.alphas {
        let d = detect(oracle_lfdr.clone(), alpha)?;
        oracle.push(empirical_fdp_tpp(&d.decisions, &theta)?);
        bh.push(empirical_fdp_tpp(&bh_procedure(&p_values, alpha)?, &theta)?);
        if let (Some(l), Some(out)) = (&plug_lfdr, plug_in.as_mut()) {
            let d = detect(l.clone(), alpha)?;
            out.push(empirical_fdp_tpp(&d.decisions, &theta)?);
        }
    }
    Ok(TrialRecord {
        trial: index,
        seed,
        n_samples: obs.len(),
        selected,
        fit_error,
        plug_in,
        oracle,
        bh,
    })
}

/// Aggregates trial records into one row per `(alpha, method)`. The mean FDR
/// is the mean of the per-trial FDPs; trials whose fit failed are excluded
/// from the plug-in rows only.
pub fn aggregate(alphas: &[f64], trials: &[TrialRecord]) -> Vec<BenchmarkRow> {
    let mut rows = Vec::with_capacity(alphas.len() * 3);
    for (ai, &alpha) in alphas.iter().enumerate() {
        for method in Method::ALL {
            let outcomes: Vec<TrialOutcome> = trials
                .iter()
                .filter_map(|t| match method {
                    Method::PlugIn => t.plug_in.as_ref().map(|v| v[ai]),
                    Method::Oracle => Some(t.oracle[ai]),
                    Method::Bh => Some(t.bh[ai]),
                })
                .collect();
            let fdps: Vec<f64> = outcomes.iter().map(|o| o.fdp).collect();
            let tpps: Vec<f64> = outcomes.iter().map(|o| o.tpp).collect();
            let (mean_fdr, se_fdr) = mean_and_se(&fdps);
            let (mean_power, se_power) = mean_and_se(&tpps);
            rows.push(BenchmarkRow {
                alpha,
                method,
                mean_fdr,
                se_fdr,
                mean_power,
                se_power,
                trials_used: outcomes.len(),
            });
        }
    }
    rows
}

/// Monte Carlo comparison of plug-in, oracle and BH over the alpha grid.
/// Trials run in parallel; results are ordered by trial index, so the
/// report does not depend on scheduling.
pub fn run_benchmark(scenario: &Scenario) -> Result<BenchmarkReport> {
    let trials: Vec<TrialRecord> = (0..scenario.config.trials)
        .into_par_iter()
        .map(|i| run_trial(scenario, i))
        .collect::<Result<_>>()?;
    let fit_failures = trials.iter().filter(|t| t.plug_in.is_none()).count();
    Ok(BenchmarkReport {
        rows: aggregate(&scenario.config.alphas, &trials),
        trials,
        fit_failures,
    })
}
