//! Flat TOML config files, one schema per subcommand.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Unknown keys are rejected and every value is checked before any
//! computation starts.

use std::path::{Path, PathBuf};

use graphfdr::basis::DEFAULT_BOX_BOUND;
use graphfdr::estimation::default_grid;
use graphfdr::simulation::DEFAULT_ALPHAS;
use graphfdr::OptimizerConfig;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::CliError;

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, PathBuf), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let cfg = toml::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.message().trim())))?;
    let base = path
        .canonicalize()
        .ok()
        .and_then(|p| p.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    Ok((cfg, base))
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn default_k() -> usize {
    3
}

fn default_box() -> f64 {
    DEFAULT_BOX_BOUND
}

fn default_time_points() -> usize {
    60
}

fn default_trials() -> usize {
    100
}

fn default_alphas() -> Vec<f64> {
    DEFAULT_ALPHAS.to_vec()
}

fn default_window_start() -> f64 {
    0.0
}

/// Optimizer keys shared by `fit` and `benchmark`; anything left out keeps
/// its library default.
#[derive(Debug, Clone, Copy, Default)]
pub struct OptimizerKeys {
    pub step_init: Option<f64>,
    pub backtrack: Option<f64>,
    pub armijo: Option<f64>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub restarts: Option<usize>,
}

impl OptimizerKeys {
    pub fn build(self) -> Result<OptimizerConfig, CliError> {
        let d = OptimizerConfig::default();
        let cfg = OptimizerConfig {
            step_init: self.step_init.unwrap_or(d.step_init),
            backtrack: self.backtrack.unwrap_or(d.backtrack),
            armijo: self.armijo.unwrap_or(d.armijo),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            grad_tol: self.grad_tol.unwrap_or(d.grad_tol),
            restarts: self.restarts.unwrap_or(d.restarts),
        };
        cfg.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(cfg)
    }
}

/// Cartesian product of the two bandwidth lists, or the library default
/// grid clipped to `n` when neither is given.
pub fn bandwidth_grid(
    k1: Option<&[usize]>,
    k2: Option<&[usize]>,
    n: usize,
) -> Result<Vec<(usize, usize)>, CliError> {
    if k1.is_none() && k2.is_none() {
        return Ok(default_grid(n));
    }
    let k1: Vec<usize> = k1.map_or_else(|| (1..=n.min(6)).collect(), <[usize]>::to_vec);
    let k2: Vec<usize> = k2.map_or_else(|| vec![1, 3, 5, 7, 9], <[usize]>::to_vec);
    if k1.is_empty() || k2.is_empty() {
        return Err(invalid("k1_grid and k2_grid must not be empty"));
    }
    if let Some(bad) = k1.iter().find(|&&k| k == 0 || k > n) {
        return Err(invalid(format!("k1_grid entry {bad} is outside 1..={n}")));
    }
    if k2.contains(&0) {
        return Err(invalid("k2_grid entries must be positive"));
    }
    Ok(k1
        .iter()
        .flat_map(|&a| k2.iter().map(move |&b| (a, b)))
        .collect())
}

pub fn check_box(b: f64) -> Result<(), CliError> {
    if b.is_finite() && b > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("box_bound must be positive, got {b}")))
    }
}

pub fn check_alpha(a: f64) -> Result<(), CliError> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in (0, 1), got {a}")))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// `vertex_id,lat,lon`.
    pub nodes: PathBuf,
    /// `src,dst`; when absent the graph is the k-NN graph of `nodes`.
    pub edges: Option<PathBuf>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// `vertex_id,time,p_value[,theta]`.
    pub observations: PathBuf,
    pub window_start: f64,
    pub window_end: f64,
    /// `p,density`; uniform null when absent.
    pub null_table: Option<PathBuf>,
    #[serde(default = "default_box")]
    pub box_bound: f64,
    pub k1_grid: Option<Vec<usize>>,
    pub k2_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
    pub step_init: Option<f64>,
    pub backtrack: Option<f64>,
    pub armijo: Option<f64>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub restarts: Option<usize>,
}

impl FitConfig {
    pub fn optimizer(&self) -> OptimizerKeys {
        OptimizerKeys {
            step_init: self.step_init,
            backtrack: self.backtrack,
            armijo: self.armijo,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            restarts: self.restarts,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        check_box(self.box_bound)?;
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if !(self.window_start.is_finite()
            && self.window_end.is_finite()
            && self.window_end > self.window_start)
        {
            return Err(invalid(format!(
                "window_end must exceed window_start, got [{}, {}]",
                self.window_start, self.window_end
            )));
        }
        self.optimizer().build()?;
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectConfig {
    /// `fit_report.json` written by `fit`.
    pub fit_report: PathBuf,
    pub alpha: f64,
    /// Overrides the observations file recorded in the fit report.
    pub observations: Option<PathBuf>,
}

impl DetectConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_alpha(self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    #[default]
    Ring,
    Knn,
    Edges,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingKind {
    #[default]
    Grid,
    Uniform,
}

/// Keys describing a synthetic scenario. `simulate` takes exactly these;
/// `benchmark` adds the Monte Carlo and fitting keys.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub graph: GraphKind,
    /// Ring size.
    pub n: Option<usize>,
    /// Node file for `knn` and `edges` graphs.
    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub k: Option<usize>,
    #[serde(default = "default_time_points")]
    pub time_points: usize,
    #[serde(default)]
    pub sampling: SamplingKind,
    pub samples: Option<usize>,
    pub true_xi: Vec<Vec<f64>>,
    #[serde(default = "default_box")]
    pub box_bound: f64,
    pub null_table: Option<PathBuf>,
    /// Raw time range written to the observation file; the grid maps onto
    /// it affinely. Defaults to `[0, time_points]`.
    #[serde(default = "default_window_start")]
    pub window_start: f64,
    pub window_end: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default)]
    pub graph: GraphKind,
    pub n: Option<usize>,
    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub k: Option<usize>,
    #[serde(default = "default_time_points")]
    pub time_points: usize,
    #[serde(default)]
    pub sampling: SamplingKind,
    pub samples: Option<usize>,
    pub true_xi: Vec<Vec<f64>>,
    #[serde(default = "default_box")]
    pub box_bound: f64,
    pub null_table: Option<PathBuf>,
    pub seed: u64,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub k1_grid: Option<Vec<usize>>,
    pub k2_grid: Option<Vec<usize>>,
    pub step_init: Option<f64>,
    pub backtrack: Option<f64>,
    pub armijo: Option<f64>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub restarts: Option<usize>,
}

/// The part of a scenario shared by `simulate` and `benchmark`.
pub struct ScenarioKeys<'a> {
    pub graph: GraphKind,
    pub n: Option<usize>,
    pub nodes: Option<&'a Path>,
    pub edges: Option<&'a Path>,
    pub k: Option<usize>,
    pub time_points: usize,
    pub sampling: SamplingKind,
    pub samples: Option<usize>,
    pub true_xi: &'a [Vec<f64>],
    pub box_bound: f64,
    pub null_table: Option<&'a Path>,
}

impl SimulateConfig {
    pub fn scenario(&self) -> ScenarioKeys<'_> {
        ScenarioKeys {
            graph: self.graph,
            n: self.n,
            nodes: self.nodes.as_deref(),
            edges: self.edges.as_deref(),
            k: self.k,
            time_points: self.time_points,
            sampling: self.sampling,
            samples: self.samples,
            true_xi: &self.true_xi,
            box_bound: self.box_bound,
            null_table: self.null_table.as_deref(),
        }
    }

    pub fn window(&self) -> (f64, f64) {
        let end = self
            .window_end
            .unwrap_or(self.window_start + self.time_points as f64);
        (self.window_start, end)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scenario().validate()?;
        let (a, b) = self.window();
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(invalid(format!(
                "window_end must exceed window_start, got [{a}, {b}]"
            )));
        }
        Ok(())
    }
}

impl BenchmarkConfig {
    pub fn scenario(&self) -> ScenarioKeys<'_> {
        ScenarioKeys {
            graph: self.graph,
            n: self.n,
            nodes: self.nodes.as_deref(),
            edges: self.edges.as_deref(),
            k: self.k,
            time_points: self.time_points,
            sampling: self.sampling,
            samples: self.samples,
            true_xi: &self.true_xi,
            box_bound: self.box_bound,
            null_table: self.null_table.as_deref(),
        }
    }

    pub fn optimizer(&self) -> OptimizerKeys {
        OptimizerKeys {
            step_init: self.step_init,
            backtrack: self.backtrack,
            armijo: self.armijo,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            restarts: self.restarts,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scenario().validate()?;
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.alphas.is_empty() {
            return Err(invalid("alphas must not be empty"));
        }
        for &a in &self.alphas {
            check_alpha(a)?;
        }
        self.optimizer().build()?;
        Ok(())
    }
}

impl ScenarioKeys<'_> {
    fn validate(&self) -> Result<(), CliError> {
        check_box(self.box_bound)?;
        if self.time_points == 0 {
            return Err(invalid("time_points must be at least 1"));
        }
        match self.graph {
            GraphKind::Ring => {
                if self.n.is_none_or(|n| n == 0) {
                    return Err(invalid("graph = \"ring\" needs a positive `n`"));
                }
            }
            GraphKind::Knn => {
                if self.nodes.is_none() {
                    return Err(invalid("graph = \"knn\" needs `nodes`"));
                }
                if self.k == Some(0) {
                    return Err(invalid("k must be at least 1"));
                }
            }
            GraphKind::Edges => {
                if self.nodes.is_none() || self.edges.is_none() {
                    return Err(invalid("graph = \"edges\" needs `nodes` and `edges`"));
                }
            }
        }
        match (self.sampling, self.samples) {
            (SamplingKind::Uniform, None | Some(0)) => {
                return Err(invalid("sampling = \"uniform\" needs a positive `samples`"));
            }
            (SamplingKind::Grid, Some(_)) => {
                return Err(invalid("`samples` only applies to sampling = \"uniform\""));
            }
            _ => {}
        }
        let k2 = self.true_xi.first().map_or(0, Vec::len);
        if k2 == 0 || self.true_xi.iter().any(|r| r.len() != k2) {
            return Err(invalid(
                "true_xi must be a non-empty rectangular array of rows",
            ));
        }
        if let Some(x) = self
            .true_xi
            .iter()
            .flatten()
            .find(|x| x.is_nan() || x.abs() > self.box_bound)
        {
            return Err(invalid(format!(
                "true_xi entry {x} lies outside [-box_bound, box_bound]"
            )));
        }
        Ok(())
    }
}
