use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_finite(scores: &[f64]) -> Result<()> {
    if scores.iter().all(|s| s.is_finite()) {
        Ok(())
    } else {
        Err(Error::Invalid("scores must be finite".into()))
    }
}

/// Indices sorted by score, ascending.
fn argsort(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx
}

/// 1-based ranks with ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let idx = argsort(values);
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve via the Mann-Whitney statistic with midranks.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Invalid("scores and labels differ in length".into()));
    }
    check_finite(scores)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuroc);
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Non-decreasing step function fitted by pool-adjacent-violators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicModel {
    /// Lowest score of each block, ascending.
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

impl IsotonicModel {
    /// Value of the last block starting at or below `s`; the first block below it.
    pub fn predict(&self, s: f64) -> f64 {
        let k = self.thresholds.partition_point(|&t| t <= s);
        self.values[k.saturating_sub(1)]
    }
}

/// Weighted least-squares isotonic fit of `y` on `x`. Tied scores are pooled first.
pub fn isotonic_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<IsotonicModel> {
    if x.len() != y.len() || weights.is_some_and(|w| w.len() != x.len()) || x.is_empty() {
        return Err(Error::Invalid("isotonic fit needs non-empty aligned inputs".into()));
    }
    check_finite(x)?;
    let idx = argsort(x);
    // (start score, weighted sum, weight)
    let mut blocks: Vec<(f64, f64, f64)> = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let (mut s, mut w) = (0.0, 0.0);
        let mut j = i;
        while j < idx.len() && x[idx[j]] == x[idx[i]] {
            let wk = weights.map_or(1.0, |w| w[idx[j]]);
            s += wk * y[idx[j]];
            w += wk;
            j += 1;
        }
        blocks.push((x[idx[i]], s, w));
        while blocks.len() > 1 {
            let n = blocks.len();
            let (a, b) = (blocks[n - 2], blocks[n - 1]);
            if a.1 / a.2 <= b.1 / b.2 {
                break;
            }
            blocks.truncate(n - 2);
            blocks.push((a.0, a.1 + b.1, a.2 + b.2));
        }
        i = j;
    }
    Ok(IsotonicModel {
        thresholds: blocks.iter().map(|b| b.0).collect(),
        values: blocks.iter().map(|b| b.1 / b.2).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub mean_pred: f64,
    pub frac_pos: f64,
    pub n: usize,
}

/// Linear-interpolation quantile of `xs` at `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Equal-width bins on `[0, upper]` where `upper` is the `winsor_q` quantile of
/// the predictions; larger predictions are clipped to `upper`. Empty bins are omitted.
pub fn calibration_curve(probs: &[f64], labels: &[bool], n_bins: usize, winsor_q: f64) -> Result<Vec<CalibrationBin>> {
    if probs.len() != labels.len() || probs.is_empty() || n_bins == 0 {
        return Err(Error::Invalid("calibration curve needs aligned non-empty inputs and bins".into()));
    }
    check_finite(probs)?;
    let upper = quantile(probs, winsor_q);
    let mut sum_p = alloc::vec![0.0; n_bins];
    let mut pos = alloc::vec![0usize; n_bins];
    let mut n = alloc::vec![0usize; n_bins];
    for (&p, &y) in probs.iter().zip(labels) {
        let p = p.min(upper);
        let k = if upper > 0.0 { ((p / upper * n_bins as f64) as usize).min(n_bins - 1) } else { 0 };
        sum_p[k] += p;
        pos[k] += usize::from(y);
        n[k] += 1;
    }
    Ok((0..n_bins)
        .filter(|&k| n[k] > 0)
        .map(|k| CalibrationBin { mean_pred: sum_p[k] / n[k] as f64, frac_pos: pos[k] as f64 / n[k] as f64, n: n[k] })
        .collect())
}

/// Unweighted mean of `|mean_pred - frac_pos|` over bins.
pub fn mean_abs_calibration_error(bins: &[CalibrationBin]) -> f64 {
    bins.iter().map(|b| (b.mean_pred - b.frac_pos).abs()).sum::<f64>() / bins.len().max(1) as f64
}

/// Exact two-sided paired signed-rank test. Zero differences are dropped and
/// tied magnitudes share midranks; `p = min(1, 2 min(P(W <= w), P(W >= w)))`.
pub fn wilcoxon_paired(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Invalid("paired samples differ in length".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    check_finite(&d)?;
    let n = d.len();
    if n == 0 {
        return Ok(1.0);
    }
    if n > 24 {
        return Err(Error::Invalid("exact signed-rank enumeration is limited to 24 pairs".into()));
    }
    let mags: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks = midranks(&mags);
    let w: f64 = ranks.iter().zip(&d).filter(|(_, &x)| x > 0.0).map(|(r, _)| r).sum();
    let (mut le, mut ge) = (0u64, 0u64);
    let total = 1u64 << n;
    for mask in 0..total {
        let s: f64 = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
        if s <= w + 1e-9 {
            le += 1;
        }
        if s >= w - 1e-9 {
            ge += 1;
        }
    }
    let p = 2.0 * (le.min(ge) as f64) / total as f64;
    Ok(p.min(1.0))
}

/// Mean and standard error `sd / sqrt(n)` with the `n - 1` sample sd.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, libm::sqrt(var / n as f64))
}
