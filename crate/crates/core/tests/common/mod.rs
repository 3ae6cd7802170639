//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code path it is used to check.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Composite Simpson rule on `[a, b]` with `n` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2));
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    sum * h / 3.0
}

/// Temporal basis written out from its definition.
pub fn psi_reference(j: usize, t: f64) -> f64 {
    match j {
        1 => 1.0 / (2.0 * PI).sqrt(),
        j if j % 2 == 0 => ((j / 2) as f64 * t).cos() / PI.sqrt(),
        j => ((j / 2) as f64 * t).sin() / PI.sqrt(),
    }
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Exhaustive threshold scan: for each candidate in `{0} U values`, compute
/// `d1 / d0` from scratch and keep the largest feasible one.
pub fn eta_bruteforce(values: &[f64], alpha: f64) -> Option<f64> {
    let mut candidates: Vec<f64> = values.to_vec();
    candidates.push(0.0);
    let mut best: Option<f64> = None;
    for &eta in &candidates {
        let rejected: Vec<f64> = values.iter().copied().filter(|&l| l <= eta).collect();
        if rejected.is_empty() {
            continue;
        }
        let ratio = rejected.iter().sum::<f64>() / rejected.len() as f64;
        if ratio <= alpha && best.is_none_or(|b| eta > b) {
            best = Some(eta);
        }
    }
    best
}

/// BH by trying every `k` and counting directly, `O(M^2)`.
pub fn bh_bruteforce(p: &[f64], alpha: f64) -> Vec<u8> {
    let m = p.len();
    let mut k_star = 0;
    for k in 1..=m {
        // k-th smallest value
        let kth = p
            .iter()
            .copied()
            .find(|&x| {
                let below = p.iter().filter(|&&y| y < x).count();
                let at_or_below = p.iter().filter(|&&y| y <= x).count();
                below < k && k <= at_or_below
            })
            .unwrap();
        if kth <= k as f64 * alpha / m as f64 {
            k_star = k;
        }
    }
    if k_star == 0 {
        return vec![0; m];
    }
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cutoff = sorted[k_star - 1];
    p.iter().map(|&x| u8::from(x <= cutoff)).collect()
}
