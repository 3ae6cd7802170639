//! The four subcommands. Each validates its config, reads inputs, computes,
//! and only then writes its outputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use graphfdr::detection::{detect as threshold_lfdr, gamma_vector, p_thresholds};
use graphfdr::estimation::BicRow;
use graphfdr::io::{self, NodeTable, ObservationRow};
use graphfdr::simulation::{trial_data_seed, GraphSource, Sampling, TrialRecord};
use graphfdr::{
    build_knn_graph, compute_lfdr_vector, generate_observations, graph_fourier_basis, laplacian,
    run_benchmark, select_model, CoefficientMatrix, GeoPoint, Graph, JointBasis, NullDensity,
    OptimizerConfig, Scenario, ScenarioConfig, SpectralBasis, TemporalBasis, Threshold, TimeWindow,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{
    self, BenchmarkConfig, DetectConfig, FitConfig, GraphKind, SamplingKind, ScenarioKeys,
    SimulateConfig,
};
use crate::CliError;

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn source_name(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut out = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out)
        .and_then(|()| out.flush())
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn read_null(path: Option<&Path>, base: &Path) -> Result<NullDensity, CliError> {
    match path {
        None => Ok(NullDensity::Uniform),
        Some(p) => {
            let p = resolve(base, p);
            Ok(io::read_null_table(open(&p)?, &source_name(&p))?)
        }
    }
}

fn read_nodes(path: &Path) -> Result<NodeTable, CliError> {
    Ok(io::read_nodes(open(path)?, &source_name(path))?)
}

fn read_edges(path: &Path, ids: &[String]) -> Result<Vec<(usize, usize)>, CliError> {
    Ok(io::read_edges(open(path)?, &source_name(path), ids)?)
}

/// Everything `detect` needs to recompute lfdr values without the graph
/// files, plus the fit diagnostics.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitReport {
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub generated_at: u64,
    pub observations: PathBuf,
    pub n_samples: usize,
    pub clamped_p_values: usize,
    pub window: TimeWindow,
    pub f0: NullDensity,
    pub box_bound: f64,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub grid: Vec<(usize, usize)>,
    pub vertex_ids: Vec<String>,
    pub k1: usize,
    pub k2: usize,
    /// Rows indexed by graph frequency, columns by temporal function.
    pub xi: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub bic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub restart: usize,
    /// First `k1` Laplacian eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// First `k1` eigenvectors, one inner list per frequency.
    pub phi: Vec<Vec<f64>>,
    pub bic_table: Vec<BicRow>,
}

pub fn fit(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let (cfg, base): (FitConfig, _) = config::load(config_path)?;
    cfg.validate()?;
    let optimizer = cfg.optimizer().build()?;
    let window = TimeWindow::new(cfg.window_start, cfg.window_end)?;
    let f0 = read_null(cfg.null_table.as_deref(), &base)?;

    let nodes = read_nodes(&resolve(&base, &cfg.nodes))?;
    let graph = match &cfg.edges {
        Some(e) => {
            let edges = read_edges(&resolve(&base, e), &nodes.ids)?;
            Graph::from_edges(nodes.ids.clone(), &edges)?
        }
        None => build_knn_graph(&nodes.points, nodes.ids.clone(), cfg.k)?,
    };
    let n = graph.n_vertices();
    let grid = config::bandwidth_grid(cfg.k1_grid.as_deref(), cfg.k2_grid.as_deref(), n)?;

    let obs_path = resolve(&base, &cfg.observations);
    let obs = io::read_observations(
        open(&obs_path)?,
        &source_name(&obs_path),
        &nodes.ids,
        &window,
    )?;

    let full = graph_fourier_basis(&laplacian(&graph), n)?;
    let sel = select_model(&obs.set, &full, &grid, cfg.box_bound, &optimizer, cfg.seed)?;
    let best = &sel.best;
    let spectral = full.truncate(best.k1)?;
    let bic = sel
        .table
        .iter()
        .find(|r| (r.k1, r.k2) == (best.k1, best.k2))
        .and_then(|r| r.bic)
        .ok_or_else(|| CliError::Runtime("selected cell has no BIC".into()))?;

    let report = FitReport {
        generated_at: unix_time(),
        observations: obs_path,
        n_samples: obs.set.len(),
        clamped_p_values: obs.clamped,
        window,
        f0,
        box_bound: cfg.box_bound,
        seed: cfg.seed,
        optimizer,
        grid,
        vertex_ids: nodes.ids.clone(),
        k1: best.k1,
        k2: best.k2,
        xi: best.xi_hat.to_rows(),
        log_likelihood: best.log_likelihood,
        bic,
        converged: best.converged,
        iterations: best.iterations,
        restart: best.restart,
        eigenvalues: spectral.eigenvalues.clone(),
        phi: spectral
            .eigenvectors
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect(),
        bic_table: sel.table,
    };

    prepare_out_dir(out_dir)?;
    write_json(out_dir, "fit_report.json", &report)?;
    let mut out = create(out_dir, "bic_table.csv")?;
    io::write_bic_table(&mut out, &report.bic_table)?;
    out.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    log::info!(
        "selected (K1, K2) = ({}, {}), log-likelihood {:.6}",
        report.k1,
        report.k2,
        report.log_likelihood
    );
    Ok(())
}

fn basis_from_report(r: &FitReport) -> Result<(JointBasis, CoefficientMatrix), CliError> {
    let n = r.vertex_ids.len();
    let bad = || CliError::Validation("fit report: inconsistent basis dimensions".into());
    if r.phi.len() != r.k1 || r.eigenvalues.len() != r.k1 || r.phi.iter().any(|c| c.len() != n) {
        return Err(bad());
    }
    if r.xi.len() != r.k1 || r.xi.iter().any(|row| row.len() != r.k2) {
        return Err(bad());
    }
    let spectral = SpectralBasis {
        eigenvalues: r.eigenvalues.clone(),
        eigenvectors: DMatrix::from_fn(n, r.k1, |v, k| r.phi[k][v]),
    };
    let basis = JointBasis::new(spectral, TemporalBasis::new(r.k2)?);
    let flat: Vec<f64> = r.xi.iter().flatten().copied().collect();
    let xi = CoefficientMatrix::from_row_major(r.k1, r.k2, &flat, r.box_bound)?;
    Ok((basis, xi))
}

#[derive(Debug, Serialize)]
struct DetectSummary {
    alpha: f64,
    threshold: Threshold,
    rejections: usize,
    n_tests: usize,
    clamped_p_values: usize,
    /// Largest rejected p-value per sample, in input order.
    p_thresholds: Vec<f64>,
}

pub fn detect(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let (cfg, base): (DetectConfig, _) = config::load(config_path)?;
    cfg.validate()?;
    let report_path = resolve(&base, &cfg.fit_report);
    let report: FitReport = serde_json::from_reader(open(&report_path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", source_name(&report_path))))?;
    let (basis, xi) = basis_from_report(&report)?;
    let window = TimeWindow::new(report.window.t_start, report.window.t_end)?;

    let obs_path = cfg
        .observations
        .as_deref()
        .map_or_else(|| report.observations.clone(), |p| resolve(&base, p));
    let obs = io::read_observations(
        open(&obs_path)?,
        &source_name(&obs_path),
        &report.vertex_ids,
        &window,
    )?;

    let lfdr = compute_lfdr_vector(&xi, &obs.set, &basis, &report.f0)?;
    let result = threshold_lfdr(lfdr, cfg.alpha)?;
    let gammas = gamma_vector(&xi, &obs.set, &basis)?;
    let summary = DetectSummary {
        alpha: cfg.alpha,
        threshold: result.threshold,
        rejections: result.rejections(),
        n_tests: obs.set.len(),
        clamped_p_values: obs.clamped,
        p_thresholds: p_thresholds(result.threshold, &gammas, &report.f0),
    };

    prepare_out_dir(out_dir)?;
    let mut out = create(out_dir, "decisions.csv")?;
    io::write_decisions(&mut out, &obs.rows, &result.lfdr_values, &result.decisions)?;
    out.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_json(out_dir, "summary.json", &summary)?;
    Ok(())
}

/// Builds the scenario graph source. A ring gets synthetic coordinates on
/// the equator so that it can be written as a node file.
fn graph_source(
    keys: &ScenarioKeys<'_>,
    base: &Path,
) -> Result<(GraphSource, NodeTable), CliError> {
    match keys.graph {
        GraphKind::Ring => {
            let n = keys.n.unwrap_or(0);
            let nodes = NodeTable {
                ids: (0..n).map(|i| i.to_string()).collect(),
                points: (0..n)
                    .map(|i| GeoPoint {
                        lat: 0.0,
                        lon: -180.0 + 360.0 * i as f64 / n as f64,
                    })
                    .collect(),
            };
            Ok((GraphSource::Ring { n }, nodes))
        }
        GraphKind::Knn => {
            let nodes = read_nodes(&resolve(base, keys.nodes.expect("validated")))?;
            let src = GraphSource::Knn {
                ids: nodes.ids.clone(),
                points: nodes.points.clone(),
                k: keys.k.unwrap_or(3),
            };
            Ok((src, nodes))
        }
        GraphKind::Edges => {
            let nodes = read_nodes(&resolve(base, keys.nodes.expect("validated")))?;
            let edges = read_edges(&resolve(base, keys.edges.expect("validated")), &nodes.ids)?;
            let src = GraphSource::Edges {
                ids: nodes.ids.clone(),
                edges,
            };
            Ok((src, nodes))
        }
    }
}

fn sampling(keys: &ScenarioKeys<'_>) -> Sampling {
    match keys.sampling {
        SamplingKind::Grid => Sampling::Grid,
        SamplingKind::Uniform => Sampling::Uniform {
            samples: keys.samples.unwrap_or(0),
        },
    }
}

#[derive(Debug, Serialize)]
struct Truth<'a> {
    seed: u64,
    data_seed: u64,
    window: TimeWindow,
    time_points: usize,
    true_xi: &'a [Vec<f64>],
    box_bound: f64,
    f0: &'a NullDensity,
    n_samples: usize,
    n_alternatives: usize,
}

pub fn simulate(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let (cfg, base): (SimulateConfig, _) = config::load(config_path)?;
    cfg.validate()?;
    let keys = cfg.scenario();
    let (window_start, window_end) = cfg.window();
    let window = TimeWindow::new(window_start, window_end)?;
    let f0 = read_null(keys.null_table, &base)?;
    let (graph, nodes) = graph_source(&keys, &base)?;
    let scenario = Scenario::new(ScenarioConfig {
        graph,
        time_points: keys.time_points,
        sampling: sampling(&keys),
        true_xi: keys.true_xi.to_vec(),
        box_bound: keys.box_bound,
        f0,
        alphas: graphfdr::simulation::DEFAULT_ALPHAS.to_vec(),
        trials: 1,
        seed: cfg.seed,
        fit_grid: vec![(1, 1)],
        optimizer: OptimizerConfig::default(),
    })?;

    let data_seed = trial_data_seed(cfg.seed, 0);
    let obs = generate_observations(&scenario, data_seed)?;
    let ids = scenario.graph().vertex_ids();
    let rows: Vec<ObservationRow> = obs
        .samples()
        .iter()
        .map(|s| ObservationRow {
            vertex_id: ids[s.vertex].clone(),
            raw_time: window.denormalize(s.time),
            p_value: s.p,
        })
        .collect();
    let theta = obs.theta().expect("simulated data carries labels");
    let truth = Truth {
        seed: cfg.seed,
        data_seed,
        window,
        time_points: keys.time_points,
        true_xi: keys.true_xi,
        box_bound: keys.box_bound,
        f0: &scenario.config().f0,
        n_samples: obs.len(),
        n_alternatives: theta.iter().filter(|&&t| t == 1).count(),
    };

    prepare_out_dir(out_dir)?;
    let mut out = create(out_dir, "nodes.csv")?;
    io::write_nodes(&mut out, &nodes)?;
    out.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut out = create(out_dir, "edges.csv")?;
    io::write_edges(&mut out, ids, &scenario.graph().edges())?;
    out.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut out = create(out_dir, "observations.csv")?;
    io::write_observations(&mut out, &rows, Some(theta))?;
    out.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_json(out_dir, "truth.json", &truth)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    generated_at: u64,
    config_file: &'a Path,
    master_seed: u64,
    scenario: &'a ScenarioConfig,
    fit_failures: usize,
    trials: &'a [TrialRecord],
}

pub fn benchmark(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let (cfg, base): (BenchmarkConfig, _) = config::load(config_path)?;
    cfg.validate()?;
    let keys = cfg.scenario();
    let optimizer = cfg.optimizer().build()?;
    let f0 = read_null(keys.null_table, &base)?;
    let (graph, nodes) = graph_source(&keys, &base)?;
    let fit_grid = config::bandwidth_grid(
        cfg.k1_grid.as_deref(),
        cfg.k2_grid.as_deref(),
        nodes.ids.len(),
    )?;
    let scenario = Scenario::new(ScenarioConfig {
        graph,
        time_points: keys.time_points,
        sampling: sampling(&keys),
        true_xi: keys.true_xi.to_vec(),
        box_bound: keys.box_bound,
        f0,
        alphas: cfg.alphas.clone(),
        trials: cfg.trials,
        seed: cfg.seed,
        fit_grid,
        optimizer,
    })?;

    let report = run_benchmark(&scenario)?;
    if report.fit_failures > 0 {
        log::warn!(
            "{} of {} plug-in fits failed",
            report.fit_failures,
            cfg.trials
        );
    }
    let manifest = Manifest {
        generated_at: unix_time(),
        config_file: config_path,
        master_seed: cfg.seed,
        scenario: scenario.config(),
        fit_failures: report.fit_failures,
        trials: &report.trials,
    };

    prepare_out_dir(out_dir)?;
    let mut out = create(out_dir, "benchmark.csv")?;
    io::write_benchmark(&mut out, &report.rows)?;
    out.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_json(out_dir, "manifest.json", &manifest)?;
    Ok(())
}
