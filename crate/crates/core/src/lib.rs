//! Multiple hypothesis testing over a graph x time domain.
//!
//! Each sample `(v, t)` carries a p-value whose null prior and alternative
//! density are driven by a bandlimited signal `gamma(v, t)` built from the
//! graph Laplacian eigenvectors and a trigonometric time basis. The signal
//! is fitted by maximum likelihood and the resulting local false discovery
//! rates are thresholded to control the FDR.
//!
//! Modules, bottom up:
//!
//! - [`graph`], [`eigen`]: sensor graphs and their Fourier basis
//! - [`basis`]: temporal basis and the joint bandlimited signal
//! - [`model`]: the Beta-sigmoid two-groups model and lfdr
//! - [`estimation`]: likelihood, gradient, projected gradient ascent, BIC
//! - [`detection`]: lfdr thresholding, p-value thresholds, BH
//! - [`simulation`]: synthetic data and Monte Carlo benchmarks
//! - [`io`]: CSV formats

pub mod basis;
pub mod detection;
pub mod eigen;
pub mod error;
pub mod estimation;
pub mod graph;
pub mod io;
pub mod model;
pub mod seed;
pub mod simulation;

pub use basis::{temporal_basis_eval, CoefficientMatrix, JointBasis, TemporalBasis, TimeWindow};
pub use detection::{
    bh_procedure, compute_lfdr_vector, decide, p_thresholds, select_eta, DetectionResult, Threshold,
};
pub use error::{Error, Result};
pub use estimation::{
    bic, grad_log_likelihood, log_likelihood, mle_fit, select_model, FitResult, ModelSelection,
    ObservationSet, OptimizerConfig, Sample,
};
pub use graph::{build_knn_graph, graph_fourier_basis, laplacian, GeoPoint, Graph, SpectralBasis};
pub use model::{f1_from_mix, f_mix, lfdr, pi0_from_mix, sigmoid, NullDensity};
pub use simulation::{generate_observations, run_benchmark, Scenario, ScenarioConfig};
