//! Temporal trigonometric basis and the bandlimited joint signal
//! `gamma(v, t) = sum_{k1, k2} xi[k1, k2] phi_k1(v) psi_k2(t)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpectralBasis;

/// Slack allowed when checking that a normalized time lies in `[-pi, pi]`.
const TIME_SLACK: f64 = 1e-12;

fn check_time(t: f64) -> Result<()> {
    if !(-PI - TIME_SLACK..=PI + TIME_SLACK).contains(&t) {
        return Err(Error::Domain(format!("time {t} is outside [-pi, pi]")));
    }
    Ok(())
}

/// Orthonormal trigonometric basis of `L^2[-pi, pi]`, ordered by frequency:
/// the constant, then `cos(kt)`, `sin(kt)` for `k = 1, 2, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalBasis {
    k2: usize,
}

impl TemporalBasis {
    pub fn new(k2: usize) -> Result<Self> {
        if k2 == 0 {
            return Err(Error::InvalidBandwidth {
                requested: 0,
                available: 0,
            });
        }
        Ok(TemporalBasis { k2 })
    }

    pub fn bandwidth(&self) -> usize {
        self.k2
    }

    /// Fills `out[j]` with `psi_{j+1}(t)` for `j < K2`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        for (j, slot) in out.iter_mut().enumerate().take(self.k2) {
            *slot = psi(j + 1, t);
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.k2];
        self.eval_into(t, &mut out);
        out
    }
}

#[inline]
fn psi(j: usize, t: f64) -> f64 {
    if j == 1 {
        return 1.0 / (2.0 * PI).sqrt();
    }
    let k = (j / 2) as f64;
    if j.is_multiple_of(2) {
        (k * t).cos() / PI.sqrt()
    } else {
        (k * t).sin() / PI.sqrt()
    }
}

/// Evaluates the `j`-th temporal basis function (one-based) at `t`.
pub fn temporal_basis_eval(j: usize, t: f64) -> Result<f64> {
    if j == 0 {
        return Err(Error::InvalidInput(
            "temporal basis index starts at 1".into(),
        ));
    }
    check_time(t)?;
    Ok(psi(j, t))
}

/// Raw time interval mapped affinely onto `[-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub t_start: f64,
    pub t_end: f64,
}

impl TimeWindow {
    pub fn new(t_start: f64, t_end: f64) -> Result<Self> {
        if !t_start.is_finite() || !t_end.is_finite() || t_end <= t_start {
            return Err(Error::InvalidInput(format!(
                "time window needs t_end > t_start, got [{t_start}, {t_end}]"
            )));
        }
        Ok(TimeWindow { t_start, t_end })
    }

    pub fn normalize(&self, raw: f64) -> Result<f64> {
        if !(self.t_start..=self.t_end).contains(&raw) {
            return Err(Error::Domain(format!(
                "time {raw} is outside the window [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        let frac = (raw - self.t_start) / (self.t_end - self.t_start);
        Ok((-PI + 2.0 * PI * frac).clamp(-PI, PI))
    }

    pub fn denormalize(&self, t: f64) -> f64 {
        self.t_start + (t + PI) / (2.0 * PI) * (self.t_end - self.t_start)
    }
}

/// Default half-width of the coefficient box.
pub const DEFAULT_BOX_BOUND: f64 = 10.0;

/// `K1 x K2` Fourier coefficients constrained to `[-B, B]` entrywise.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    xi: DMatrix<f64>,
    box_bound: f64,
}

impl CoefficientMatrix {
    pub fn new(xi: DMatrix<f64>, box_bound: f64) -> Result<Self> {
        if !(box_bound.is_finite() && box_bound > 0.0) {
            return Err(Error::InvalidInput(format!(
                "box bound must be positive, got {box_bound}"
            )));
        }
        if xi.nrows() == 0 || xi.ncols() == 0 {
            return Err(Error::InvalidInput("coefficient matrix is empty".into()));
        }
        if let Some(x) = xi.iter().find(|x| !x.is_finite() || x.abs() > box_bound) {
            return Err(Error::InvalidInput(format!(
                "coefficient {x} lies outside the box [-{box_bound}, {box_bound}]"
            )));
        }
        Ok(CoefficientMatrix { xi, box_bound })
    }

    pub fn zeros(k1: usize, k2: usize, box_bound: f64) -> Result<Self> {
        CoefficientMatrix::new(DMatrix::zeros(k1, k2), box_bound)
    }

    /// Builds from a row-major vector of length `k1 * k2`.
    pub fn from_row_major(k1: usize, k2: usize, values: &[f64], box_bound: f64) -> Result<Self> {
        if values.len() != k1 * k2 {
            return Err(Error::InvalidInput(format!(
                "expected {} coefficients, got {}",
                k1 * k2,
                values.len()
            )));
        }
        CoefficientMatrix::new(DMatrix::from_row_slice(k1, k2, values), box_bound)
    }

    pub fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    pub fn box_bound(&self) -> f64 {
        self.box_bound
    }

    pub fn k1(&self) -> usize {
        self.xi.nrows()
    }

    pub fn k2(&self) -> usize {
        self.xi.ncols()
    }

    /// Row-major flattening, matching [`JointBasis::features`].
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.k1() * self.k2());
        for i in 0..self.k1() {
            for j in 0..self.k2() {
                out.push(self.xi[(i, j)]);
            }
        }
        out
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.k1())
            .map(|i| (0..self.k2()).map(|j| self.xi[(i, j)]).collect())
            .collect()
    }
}

/// Product basis `phi_k1(v) psi_k2(t)` at bandwidths `(K1, K2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointBasis {
    spectral: SpectralBasis,
    temporal: TemporalBasis,
}

impl JointBasis {
    pub fn new(spectral: SpectralBasis, temporal: TemporalBasis) -> Self {
        JointBasis { spectral, temporal }
    }

    /// Truncates `full` to `k1` graph frequencies and pairs it with `k2`
    /// temporal functions.
    pub fn from_full(full: &SpectralBasis, k1: usize, k2: usize) -> Result<Self> {
        Ok(JointBasis::new(full.truncate(k1)?, TemporalBasis::new(k2)?))
    }

    pub fn spectral(&self) -> &SpectralBasis {
        &self.spectral
    }

    pub fn temporal(&self) -> &TemporalBasis {
        &self.temporal
    }

    pub fn k1(&self) -> usize {
        self.spectral.bandwidth()
    }

    pub fn k2(&self) -> usize {
        self.temporal.bandwidth()
    }

    pub fn n_features(&self) -> usize {
        self.k1() * self.k2()
    }

    pub fn n_vertices(&self) -> usize {
        self.spectral.n_vertices()
    }

    fn check_point(&self, v: usize, t: f64) -> Result<()> {
        if v >= self.n_vertices() {
            return Err(Error::InvalidInput(format!(
                "vertex {v} out of range for {} vertices",
                self.n_vertices()
            )));
        }
        check_time(t)
    }

    /// Writes `phi_k1(v) psi_k2(t)` in row-major `(k1, k2)` order.
    pub fn features_into(&self, v: usize, t: f64, out: &mut [f64]) -> Result<()> {
        self.check_point(v, t)?;
        let k2 = self.k2();
        let mut psi_t = vec![0.0; k2];
        self.temporal.eval_into(t, &mut psi_t);
        for i in 0..self.k1() {
            let phi = self.spectral.value(i, v);
            for (j, p) in psi_t.iter().enumerate() {
                out[i * k2 + j] = phi * p;
            }
        }
        Ok(())
    }

    pub fn features(&self, v: usize, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_features()];
        self.features_into(v, t, &mut out)?;
        Ok(out)
    }

    /// `gamma(v, t; xi)`.
    pub fn evaluate_gamma(&self, xi: &CoefficientMatrix, v: usize, t: f64) -> Result<f64> {
        if xi.k1() != self.k1() || xi.k2() != self.k2() {
            return Err(Error::InvalidInput(format!(
                "coefficients are {}x{} but the basis is {}x{}",
                xi.k1(),
                xi.k2(),
                self.k1(),
                self.k2()
            )));
        }
        self.check_point(v, t)?;
        let psi_t = self.temporal.eval(t);
        let mut sum = 0.0;
        for i in 0..self.k1() {
            let phi = self.spectral.value(i, v);
            for (j, p) in psi_t.iter().enumerate() {
                sum += xi.xi()[(i, j)] * phi * p;
            }
        }
        Ok(sum)
    }
}
