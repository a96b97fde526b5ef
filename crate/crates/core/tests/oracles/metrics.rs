//! Reference metric computations by direct enumeration.

use proptest::prelude::*;

/// Share of positive-negative pairs ranked correctly, ties counting half.
pub fn auroc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut twice, mut pos, mut neg) = (0u64, 0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            pos += 1;
        } else {
            neg += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    (twice as f64 / 2.0) / (pos as f64 * neg as f64)
}

/// Least-squares non-decreasing fit found by trying every split of the
/// distinct scores into consecutive blocks. Returns the fitted value of each input.
pub fn isotonic_exhaustive(x: &[f64], y: &[f64], w: &[f64]) -> Vec<f64> {
    let mut xs: Vec<f64> = x.to_vec();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let m = xs.len();
    assert!(m <= 12, "exhaustive fit is exponential in the number of distinct scores");
    let group = |k: usize| -> Vec<usize> { (0..x.len()).filter(|&i| x[i] == xs[k]).collect() };
    let groups: Vec<Vec<usize>> = (0..m).map(group).collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for cuts in 0u32..(1 << (m.saturating_sub(1))) {
        // bit k set: a block boundary between distinct scores k and k + 1
        let mut blocks: Vec<Vec<usize>> = vec![vec![0]];
        for k in 1..m {
            if cuts >> (k - 1) & 1 == 1 {
                blocks.push(vec![k]);
            } else {
                blocks.last_mut().unwrap().push(k);
            }
        }
        let means: Vec<f64> = blocks
            .iter()
            .map(|b| {
                let idx: Vec<usize> = b.iter().flat_map(|&k| groups[k].iter().copied()).collect();
                let sw: f64 = idx.iter().map(|&i| w[i]).sum();
                idx.iter().map(|&i| w[i] * y[i]).sum::<f64>() / sw
            })
            .collect();
        if means.windows(2).any(|p| p[0] > p[1]) {
            continue;
        }
        let mut level = vec![0.0; m];
        for (b, &v) in blocks.iter().zip(&means) {
            for &k in b {
                level[k] = v;
            }
        }
        let fitted: Vec<f64> = x.iter().map(|xi| level[xs.iter().position(|s| s == xi).unwrap()]).collect();
        let sse: f64 = (0..x.len()).map(|i| w[i] * (y[i] - fitted[i]).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b - 1e-12) {
            best = Some((sse, fitted));
        }
    }
    best.unwrap().1
}

/// Exact two-sided signed-rank p-value from the null distribution of the
/// positive rank sum, built by dynamic programming over doubled ranks.
pub fn wilcoxon_exact(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return 1.0;
    }
    // doubled midranks are integers
    let mut twice_rank = vec![0usize; n];
    for i in 0..n {
        let below = d.iter().filter(|x| x.abs() < d[i].abs()).count();
        let equal = d.iter().filter(|x| x.abs() == d[i].abs()).count();
        twice_rank[i] = 2 * below + equal + 1;
    }
    let max: usize = twice_rank.iter().sum();
    let mut ways = vec![0u64; max + 1];
    ways[0] = 1;
    for &r in &twice_rank {
        for s in (r..=max).rev() {
            ways[s] += ways[s - r];
        }
    }
    let observed: usize = (0..n).filter(|&i| d[i] > 0.0).map(|i| twice_rank[i]).sum();
    let total = (1u64 << n) as f64;
    let le: u64 = ways[..=observed].iter().sum();
    let ge: u64 = ways[observed..].iter().sum();
    (2.0 * le.min(ge) as f64 / total).min(1.0)
}

/// Scores drawn from a small grid so that ties are common, with both classes present.
pub fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..=200)
        .prop_flat_map(|n| (prop::collection::vec(0u32..40, n), prop::collection::vec(any::<bool>(), n)))
        .prop_map(|(s, mut l)| {
            l[0] = true;
            l[1] = false;
            (s.into_iter().map(|k| f64::from(k) / 8.0 - 2.0).collect(), l)
        })
}

pub fn small_fit() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..=8).prop_flat_map(|n| {
        (
            prop::collection::vec((0u32..6).prop_map(f64::from), n),
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(0.1f64..2.0, n),
        )
    })
}

pub fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    let v = || prop::collection::vec((0u32..8).prop_map(|k| f64::from(k) * 0.25), 5);
    (v(), v())
}
