//! Inhomogeneous two-groups model with the Beta-sigmoid mixture
//!
//! ```text
//! f_mix(p | gamma) = a p^(a - 1),   a = sigmoid(gamma)
//! ```
//!
//! The null prior and alternative density are recovered from the mixture by
//! `pi0 = f_mix(1) / f0(1)` and `f1 = (f_mix - pi0 f0) / (1 - pi0)`. Because
//! `f_mix(1) = a`, the local false discovery rate collapses to
//!
//! ```text
//! lfdr(p) = pi0 f0(p) / f_mix(p) = (a / f0(1)) f0(p) / (a p^(a - 1))
//!         = p^(1 - a) f0(p) / f0(1)
//! ```
//!
//! which is `p^(1 - a)` for a uniform null. `1 - a` is evaluated as
//! `sigmoid(-gamma)` so that it keeps full relative precision when `a` is
//! close to one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logistic function, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln sigmoid(x)` without cancellation for large `|x|`.
#[inline]
pub fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("p-value {p} is outside (0, 1]")));
    }
    Ok(())
}

/// Null density tabulated on a grid and linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    p: Vec<f64>,
    density: Vec<f64>,
    cdf_knots: Vec<f64>,
}

/// Allowed deviation of the tabulated density's integral from one.
pub const TABLE_NORMALIZATION_TOLERANCE: f64 = 1e-6;

impl TabulatedDensity {
    /// Validates the table: the grid must run from 0 to 1 strictly
    /// ascending, densities must be finite, non-negative and non-decreasing,
    /// and the piecewise-linear density must integrate to one.
    pub fn new(p: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if p.len() < 2 || p.len() != density.len() {
            return Err(Error::InvalidInput(format!(
                "null density table needs at least two matching rows, got {} p values and {} densities",
                p.len(),
                density.len()
            )));
        }
        if p[0] != 0.0 || p[p.len() - 1] != 1.0 {
            return Err(Error::InvalidInput(
                "null density grid must start at p = 0 and end at p = 1".into(),
            ));
        }
        for i in 1..p.len() {
            if p[i].partial_cmp(&p[i - 1]) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::InvalidInput(format!(
                    "null density grid not strictly ascending at row {i}"
                )));
            }
        }
        for (i, &d) in density.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "null density at row {i} is {d}"
                )));
            }
            if i > 0 && d < density[i - 1] {
                return Err(Error::InvalidInput(format!(
                    "null density decreases at row {i}; it must be non-decreasing in p"
                )));
            }
        }
        let mut cdf_knots = Vec::with_capacity(p.len());
        cdf_knots.push(0.0);
        for i in 1..p.len() {
            let area = 0.5 * (density[i] + density[i - 1]) * (p[i] - p[i - 1]);
            cdf_knots.push(cdf_knots[i - 1] + area);
        }
        let total = cdf_knots[cdf_knots.len() - 1];
        if (total - 1.0).abs() > TABLE_NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "null density integrates to {total}, not 1"
            )));
        }
        Ok(TabulatedDensity {
            p,
            density,
            cdf_knots,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.p
    }

    pub fn values(&self) -> &[f64] {
        &self.density
    }

    fn segment(&self, p: f64) -> usize {
        // index i with p[i] <= p <= p[i + 1]
        match self.p.binary_search_by(|x| x.total_cmp(&p)) {
            Ok(i) => i.min(self.p.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.p.len() - 2),
        }
    }

    pub fn density(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let i = self.segment(p);
        let w = (p - self.p[i]) / (self.p[i + 1] - self.p[i]);
        self.density[i] + w * (self.density[i + 1] - self.density[i])
    }

    pub fn cdf(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let i = self.segment(p);
        let h = p - self.p[i];
        let slope = (self.density[i + 1] - self.density[i]) / (self.p[i + 1] - self.p[i]);
        let total = self.cdf_knots[self.cdf_knots.len() - 1];
        (self.cdf_knots[i] + self.density[i] * h + 0.5 * slope * h * h) / total
    }
}

/// Known null density of the p-values.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum NullDensity {
    #[default]
    Uniform,
    Tabulated(TabulatedDensity),
}

impl NullDensity {
    pub fn tabulated(p: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        Ok(NullDensity::Tabulated(TabulatedDensity::new(p, density)?))
    }

    pub fn density(&self, p: f64) -> f64 {
        match self {
            NullDensity::Uniform => {
                if (0.0..=1.0).contains(&p) {
                    1.0
                } else {
                    0.0
                }
            }
            NullDensity::Tabulated(t) => t.density(p),
        }
    }

    pub fn cdf(&self, p: f64) -> f64 {
        match self {
            NullDensity::Uniform => p.clamp(0.0, 1.0),
            NullDensity::Tabulated(t) => t.cdf(p),
        }
    }

    /// Quantile function, by bisection for tabulated densities.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        match self {
            NullDensity::Uniform => u.clamp(0.0, 1.0),
            NullDensity::Tabulated(t) => bisect_increasing(|p| t.cdf(p), u, 0.0, 1.0),
        }
    }

    pub fn at_one(&self) -> f64 {
        self.density(1.0)
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, NullDensity::Uniform)
    }
}

impl Serialize for NullDensity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        #[serde(tag = "kind", rename_all = "lowercase")]
        enum Repr<'a> {
            Uniform,
            Tabulated { p: &'a [f64], density: &'a [f64] },
        }
        match self {
            NullDensity::Uniform => Repr::Uniform.serialize(s),
            NullDensity::Tabulated(t) => Repr::Tabulated {
                p: &t.p,
                density: &t.density,
            }
            .serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for NullDensity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(tag = "kind", rename_all = "lowercase")]
        enum Repr {
            Uniform,
            Tabulated { p: Vec<f64>, density: Vec<f64> },
        }
        match Repr::deserialize(d)? {
            Repr::Uniform => Ok(NullDensity::Uniform),
            Repr::Tabulated { p, density } => TabulatedDensity::new(p, density)
                .map(NullDensity::Tabulated)
                .map_err(serde::de::Error::custom),
        }
    }
}

/// Solves `f(x) = target` for increasing `f` on `[lo, hi]`, stopping when the
/// bracket is below `1e-12` relative to its upper end.
pub(crate) fn bisect_increasing(
    f: impl Fn(f64) -> f64,
    target: f64,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-12 * hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Mixture density `a p^(a - 1)` with `a = sigmoid(gamma)`.
pub fn f_mix(p: f64, gamma: f64) -> Result<f64> {
    check_p(p)?;
    let a = sigmoid(gamma);
    Ok(a * (-sigmoid(-gamma) * p.ln()).exp())
}

/// Null prior identified from the mixture at `p = 1`.
pub fn pi0_from_mix(gamma: f64, f0: &NullDensity) -> Result<f64> {
    let at_one = f0.at_one();
    if at_one.is_nan() || at_one <= 0.0 {
        return Err(Error::Identifiability);
    }
    Ok(sigmoid(gamma) / at_one)
}

/// Alternative density identified from the mixture.
pub fn f1_from_mix(p: f64, gamma: f64, f0: &NullDensity) -> Result<f64> {
    check_p(p)?;
    let pi0 = pi0_from_mix(gamma, f0)?;
    let one_minus_pi0 = match f0 {
        NullDensity::Uniform => sigmoid(-gamma),
        NullDensity::Tabulated(_) => 1.0 - pi0,
    };
    if one_minus_pi0 <= 1e-12 {
        return Err(Error::DegenerateMixture { gamma });
    }
    let value = (f_mix(p, gamma)? - pi0 * f0.density(p)) / one_minus_pi0;
    Ok(value.max(0.0))
}

/// Alternative CDF `F1(p) = (p^a - pi0 F0(p)) / (1 - pi0)`.
///
/// For a uniform null this is `(p^a - a p) / (1 - a)`, rewritten as
/// `p (expm1(-(1 - a) ln p) + (1 - a)) / (1 - a)` to avoid cancellation.
pub fn f1_cdf(p: f64, gamma: f64, f0: &NullDensity) -> Result<f64> {
    if p <= 0.0 {
        return Ok(0.0);
    }
    if p >= 1.0 {
        return Ok(1.0);
    }
    let b = sigmoid(-gamma);
    let value = match f0 {
        NullDensity::Uniform => {
            if b <= 1e-12 {
                return Err(Error::DegenerateMixture { gamma });
            }
            p * ((-b * p.ln()).exp_m1() + b) / b
        }
        NullDensity::Tabulated(_) => {
            let pi0 = pi0_from_mix(gamma, f0)?;
            if 1.0 - pi0 <= 1e-12 {
                return Err(Error::DegenerateMixture { gamma });
            }
            let a = sigmoid(gamma);
            ((a * p.ln()).exp() - pi0 * f0.cdf(p)) / (1.0 - pi0)
        }
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Local false discovery rate, computed through the closed form
/// `p^(1 - a) f0(p) / f0(1)`.
pub fn lfdr(p: f64, gamma: f64, f0: &NullDensity) -> Result<f64> {
    check_p(p)?;
    let base = (sigmoid(-gamma) * p.ln()).exp();
    let value = match f0 {
        NullDensity::Uniform => base,
        NullDensity::Tabulated(t) => {
            let at_one = t.density(1.0);
            if at_one.is_nan() || at_one <= 0.0 {
                return Err(Error::Identifiability);
            }
            base * t.density(p) / at_one
        }
    };
    Ok(value.min(1.0))
}

/// Local false discovery rate as the literal ratio `pi0 f0(p) / f_mix(p)`.
pub fn lfdr_ratio(p: f64, gamma: f64, f0: &NullDensity) -> Result<f64> {
    let pi0 = pi0_from_mix(gamma, f0)?;
    Ok(pi0 * f0.density(p) / f_mix(p, gamma)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        let s = sigmoid(500.0);
        assert!(s > 1.0 - 1e-12 && s <= 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        for x in [0.3, 2.0, 17.5, 40.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
        assert!((ln_sigmoid(-50.0) - (-50.0 - (-50.0f64).exp().ln_1p())).abs() < 1e-15);
        assert!((ln_sigmoid(1.3) - sigmoid(1.3).ln()).abs() < 1e-15);
    }

    #[test]
    fn mixture_examples() {
        assert!((f_mix(1.0, 0.7).unwrap() - sigmoid(0.7)).abs() < 1e-15);
        assert!((f_mix(0.25, 0.0).unwrap() - 1.0).abs() < 1e-15);
        for p in [0.1, 0.5, 0.9] {
            assert!((f_mix(p, 30.0).unwrap() - 1.0).abs() < 1e-10);
        }
        assert!(f_mix(0.0, 0.0).is_err());
        assert!(f_mix(1.5, 0.0).is_err());
    }

    #[test]
    fn prior_examples() {
        let u = NullDensity::Uniform;
        assert_eq!(pi0_from_mix(0.0, &u).unwrap(), 0.5);
        assert!(pi0_from_mix(-30.0, &u).unwrap() < 1e-12);
        let tab = NullDensity::tabulated(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        assert!((pi0_from_mix(0.0, &tab).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn alternative_examples() {
        let u = NullDensity::Uniform;
        assert_eq!(f1_from_mix(1.0, 1.3, &u).unwrap(), 0.0);
        assert!((f1_from_mix(0.25, 0.0, &u).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            f1_from_mix(0.5, 40.0, &u),
            Err(Error::DegenerateMixture { .. })
        ));
    }

    #[test]
    fn lfdr_examples() {
        let u = NullDensity::Uniform;
        assert_eq!(lfdr(1.0, -2.0, &u).unwrap(), 1.0);
        assert!((lfdr(0.25, 0.0, &u).unwrap() - 0.5).abs() < 1e-15);
        assert!(lfdr(0.0, 0.0, &u).is_err());
    }

    #[test]
    fn table_validation() {
        assert!(NullDensity::tabulated(vec![0.0, 1.0], vec![1.0, 1.0]).is_ok());
        // decreasing
        assert!(NullDensity::tabulated(vec![0.0, 1.0], vec![2.0, 0.0]).is_err());
        // not normalized
        assert!(NullDensity::tabulated(vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
        // grid must cover [0, 1]
        assert!(NullDensity::tabulated(vec![0.1, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn table_cdf_and_quantile() {
        let tab = NullDensity::tabulated(vec![0.0, 0.5, 1.0], vec![0.5, 1.0, 1.5]).unwrap();
        // integral of 0.5 + p on [0, x] = 0.5 x + x^2 / 2
        for x in [0.1, 0.5, 0.8] {
            assert!((tab.cdf(x) - (0.5 * x + 0.5 * x * x)).abs() < 1e-14);
            assert!((tab.inverse_cdf(tab.cdf(x)) - x).abs() < 1e-10);
        }
    }

    #[test]
    fn null_density_json_round_trip() {
        let tab = NullDensity::tabulated(vec![0.0, 0.5, 1.0], vec![0.5, 1.0, 1.5]).unwrap();
        let s = serde_json::to_string(&tab).unwrap();
        let back: NullDensity = serde_json::from_str(&s).unwrap();
        assert_eq!(back.cdf(0.3), tab.cdf(0.3));
    }
}
