//! From local false discovery rates to decisions.
//!
//! The rejection region is `{lfdr_m <= eta}`. For a candidate `eta` the
//! estimated false discovery proportion is the ratio of
//! `d1(eta) = sum_m lfdr_m 1{lfdr_m <= eta}` and
//! `d0(eta) = sum_m 1{lfdr_m <= eta}`, i.e. the mean lfdr of the rejected
//! set. It only changes at observed lfdr values, so the supremum of the
//! feasible `eta` is attained at the last sorted value (counting ties as a
//! block) whose running mean is still at most `alpha`.

use serde::{Deserialize, Serialize};

use crate::basis::{CoefficientMatrix, JointBasis};
use crate::error::{Error, Result};
use crate::estimation::ObservationSet;
use crate::model::{lfdr, sigmoid, NullDensity};

/// Selected lfdr threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Threshold {
    /// Reject every hypothesis with `lfdr <= eta`.
    Eta(f64),
    /// No `eta` keeps the estimated FDR at or below `alpha`.
    NoneRejected,
}

impl Threshold {
    pub fn eta(&self) -> Option<f64> {
        match self {
            Threshold::Eta(e) => Some(*e),
            Threshold::NoneRejected => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub lfdr_values: Vec<f64>,
    pub threshold: Threshold,
    pub decisions: Vec<u8>,
    /// Per-sample p-value thresholds, when computed.
    pub p_thresholds: Option<Vec<f64>>,
}

impl DetectionResult {
    pub fn rejections(&self) -> usize {
        self.decisions.iter().filter(|&&d| d == 1).count()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// `gamma(v_m, t_m; xi)` for each sample.
pub fn gamma_vector(
    xi: &CoefficientMatrix,
    obs: &ObservationSet,
    basis: &JointBasis,
) -> Result<Vec<f64>> {
    obs.samples()
        .iter()
        .map(|s| basis.evaluate_gamma(xi, s.vertex, s.time))
        .collect()
}

/// lfdr of every sample under the signal `xi`.
pub fn compute_lfdr_vector(
    xi: &CoefficientMatrix,
    obs: &ObservationSet,
    basis: &JointBasis,
    f0: &NullDensity,
) -> Result<Vec<f64>> {
    let gammas = gamma_vector(xi, obs, basis)?;
    obs.samples()
        .iter()
        .zip(&gammas)
        .map(|(s, &g)| lfdr(s.p, g, f0))
        .collect()
}

/// Largest observed lfdr value whose rejection set has mean lfdr `<= alpha`.
pub fn select_eta(lfdr_values: &[f64], alpha: f64) -> Result<Threshold> {
    if lfdr_values.is_empty() {
        return Err(Error::InvalidInput("no lfdr values".into()));
    }
    check_alpha(alpha)?;
    if let Some(i) = lfdr_values.iter().position(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidInput(format!(
            "lfdr value {} at index {i} is outside [0, 1]",
            lfdr_values[i]
        )));
    }
    let mut sorted = lfdr_values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut best = Threshold::NoneRejected;
    let mut running = 0.0;
    for (i, &value) in sorted.iter().enumerate() {
        running += value;
        let block_end = i + 1 == sorted.len() || sorted[i + 1] != value;
        if block_end && running / (i + 1) as f64 <= alpha {
            best = Threshold::Eta(value);
        }
    }
    Ok(best)
}

/// `1{lfdr_m <= eta}`.
pub fn decide(lfdr_values: &[f64], threshold: Threshold) -> Vec<u8> {
    match threshold {
        Threshold::NoneRejected => vec![0; lfdr_values.len()],
        Threshold::Eta(eta) => lfdr_values.iter().map(|&l| u8::from(l <= eta)).collect(),
    }
}

/// Selects the threshold at level `alpha` and applies it.
pub fn detect(lfdr_values: Vec<f64>, alpha: f64) -> Result<DetectionResult> {
    let threshold = select_eta(&lfdr_values, alpha)?;
    let decisions = decide(&lfdr_values, threshold);
    Ok(DetectionResult {
        lfdr_values,
        threshold,
        decisions,
        p_thresholds: None,
    })
}

fn next_up(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

fn next_down(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}

/// Largest `p` in `[0, 1]` with `lfdr(p) <= eta`, searched over the bit
/// patterns of non-negative doubles (which are ordered like the values).
fn largest_p_below(eta: f64, gamma: f64, f0: &NullDensity) -> f64 {
    let holds = |p: f64| p == 0.0 || lfdr(p, gamma, f0).is_ok_and(|l| l <= eta);
    let (mut lo, mut hi) = (0u64, 1.0f64.to_bits());
    if holds(1.0) {
        return 1.0;
    }
    // invariant: holds(lo), !holds(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(f64::from_bits(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    f64::from_bits(lo)
}

/// Per-sample p-value thresholds `s_m` on the level set `lfdr(s_m) = eta`.
///
/// For a uniform null `s_m = eta^(1 / (1 - a_m))`; the closed form is then
/// nudged by a few ulps so that `p <= s_m` holds exactly when
/// `lfdr(p) <= eta` in floating point. Tabulated nulls use bisection.
pub fn p_thresholds(threshold: Threshold, gammas: &[f64], f0: &NullDensity) -> Vec<f64> {
    let eta = match threshold {
        Threshold::NoneRejected => return vec![0.0; gammas.len()],
        Threshold::Eta(eta) => eta,
    };
    gammas
        .iter()
        .map(|&gamma| {
            if eta >= 1.0 {
                return 1.0;
            }
            if !f0.is_uniform() {
                return largest_p_below(eta, gamma, f0);
            }
            let holds = |p: f64| p == 0.0 || lfdr(p, gamma, f0).is_ok_and(|l| l <= eta);
            let b = sigmoid(-gamma);
            let mut s = if eta <= 0.0 {
                0.0
            } else {
                (eta.ln() / b).exp().min(1.0)
            };
            for _ in 0..64 {
                if holds(s) {
                    if s >= 1.0 || !holds(next_up(s)) {
                        return s;
                    }
                    s = next_up(s);
                } else {
                    s = next_down(s);
                }
            }
            largest_p_below(eta, gamma, f0)
        })
        .collect()
}

/// Benjamini-Hochberg step-up: reject the `k*` smallest p-values where
/// `k* = max{k : p_(k) <= k alpha / M}`.
pub fn bh_procedure(p_values: &[f64], alpha: f64) -> Result<Vec<u8>> {
    if p_values.is_empty() {
        return Err(Error::InvalidInput("no p-values".into()));
    }
    check_alpha(alpha)?;
    let m = p_values.len();
    let mut sorted = p_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cutoff = sorted
        .iter()
        .enumerate()
        .rev()
        .find(|(i, &p)| p <= (i + 1) as f64 * alpha / m as f64)
        .map(|(_, &p)| p);
    Ok(match cutoff {
        None => vec![0; m],
        Some(c) => p_values.iter().map(|&p| u8::from(p <= c)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_example() {
        assert_eq!(
            select_eta(&[0.5, 0.01, 0.02], 0.1).unwrap(),
            Threshold::Eta(0.02)
        );
        assert_eq!(
            select_eta(&[0.5, 0.9], 0.1).unwrap(),
            Threshold::NoneRejected
        );
        assert!(select_eta(&[], 0.1).is_err());
        assert!(select_eta(&[0.2], 1.0).is_err());
    }

    #[test]
    fn ties_are_rejected_as_a_block() {
        // means 0, 0.15, 0.2: the tie block {0.3, 0.3} together exceeds 0.15
        assert_eq!(
            select_eta(&[0.0, 0.3, 0.3], 0.15).unwrap(),
            Threshold::Eta(0.0)
        );
        assert_eq!(
            select_eta(&[0.0, 0.3, 0.3], 0.2).unwrap(),
            Threshold::Eta(0.3)
        );
    }

    #[test]
    fn decide_edges() {
        let l = [0.1, 1.0, 0.4];
        assert_eq!(decide(&l, Threshold::Eta(1.0)), vec![1, 1, 1]);
        assert_eq!(decide(&l, Threshold::NoneRejected), vec![0, 0, 0]);
    }

    #[test]
    fn thresholds_closed_form() {
        assert_eq!(
            p_thresholds(
                Threshold::Eta(1.0),
                &[-3.0, 0.0, 4.0],
                &NullDensity::Uniform
            ),
            vec![1.0; 3]
        );
        let s = p_thresholds(Threshold::Eta(0.04), &[0.0], &NullDensity::Uniform);
        assert!((s[0] - 0.0016).abs() < 1e-15);
        assert_eq!(
            p_thresholds(Threshold::NoneRejected, &[0.0, 1.0], &NullDensity::Uniform),
            vec![0.0; 2]
        );
    }

    #[test]
    fn thresholds_saturated_prior() {
        // a == 1 in floating point: lfdr is identically 1
        let s = p_thresholds(Threshold::Eta(0.5), &[60.0], &NullDensity::Uniform);
        assert_eq!(s, vec![0.0]);
    }

    #[test]
    fn bh_example() {
        assert_eq!(
            bh_procedure(&[0.2, 0.01, 0.9, 0.02], 0.1).unwrap(),
            vec![0, 1, 0, 1]
        );
        assert_eq!(bh_procedure(&[1.0; 5], 0.1).unwrap(), vec![0; 5]);
        assert!(bh_procedure(&[], 0.1).is_err());
    }
}
