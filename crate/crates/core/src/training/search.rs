use alloc::vec;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::trainer::TrainConfig;
use crate::error::{Error, Result};
use crate::rng::keyed;

/// Sampling distributions of the random hyperparameter search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    /// Learning rate is `exp(U(lo, hi))`.
    pub ln_learning_rate: (f64, f64),
    pub weight_decay: Vec<f64>,
    pub dropout: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub hidden_dim: Vec<usize>,
    /// Inclusive range of GRU layers.
    pub layers: (usize, usize),
    /// Penalty weights below are `10^U(lo, hi)`.
    pub log10_coral_gamma: (f64, f64),
    pub log10_vrex_lambda: (f64, f64),
    pub log10_fishr_lambda: (f64, f64),
    /// Warm-up steps are `round(10^U(lo, hi))`.
    pub log10_warmup: (f64, f64),
    pub log10_mldg_beta: (f64, f64),
    pub mldg_n_meta_test: Vec<usize>,
    pub log10_groupdro_eta: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            ln_learning_rate: (-10.0, -3.0),
            weight_decay: vec![0.0, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            dropout: vec![0.3, 0.4, 0.5, 0.6, 0.7],
            batch_size: vec![128, 256, 512],
            hidden_dim: vec![32, 64, 128],
            layers: (1, 10),
            log10_coral_gamma: (2.0, 4.0),
            log10_vrex_lambda: (2.0, 4.0),
            log10_fishr_lambda: (2.0, 4.0),
            log10_warmup: (0.0, 3.0),
            log10_mldg_beta: (-1.0, 1.0),
            mldg_n_meta_test: vec![1, 2],
            log10_groupdro_eta: (-3.0, -1.0),
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo >= hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn pow10(rng: &mut impl Rng, r: (f64, f64)) -> f64 {
    libm::pow(10.0, uniform(rng, r))
}

fn pick<T: Copy>(rng: &mut impl Rng, xs: &[T]) -> T {
    *xs.choose(rng).expect("validated non-empty")
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.weight_decay.is_empty()
            || self.dropout.is_empty()
            || self.batch_size.is_empty()
            || self.hidden_dim.is_empty()
            || self.mldg_n_meta_test.is_empty()
        {
            return Err(Error::Config("search choices must be non-empty".into()));
        }
        if self.layers.0 == 0 || self.layers.0 > self.layers.1 {
            return Err(Error::Config("search layers must be a non-empty range starting at 1 or more".into()));
        }
        let ranges = [
            self.ln_learning_rate,
            self.log10_coral_gamma,
            self.log10_vrex_lambda,
            self.log10_fishr_lambda,
            self.log10_warmup,
            self.log10_mldg_beta,
            self.log10_groupdro_eta,
        ];
        if ranges.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return Err(Error::Config("search ranges must be finite with lo <= hi".into()));
        }
        Ok(())
    }

    /// One draw; fields outside the space are copied from `base`.
    pub fn draw(&self, base: &TrainConfig, rng: &mut impl Rng) -> TrainConfig {
        let mut c = base.clone();
        c.learning_rate = libm::exp(uniform(rng, self.ln_learning_rate));
        c.weight_decay = pick(rng, &self.weight_decay);
        c.dropout = pick(rng, &self.dropout);
        c.batch_size = pick(rng, &self.batch_size);
        c.hidden_dim = pick(rng, &self.hidden_dim);
        c.layers = rng.random_range(self.layers.0..=self.layers.1);
        let p = &mut c.penalties;
        p.coral_gamma = pow10(rng, self.log10_coral_gamma);
        p.vrex_lambda = pow10(rng, self.log10_vrex_lambda);
        p.vrex_warmup = libm::round(pow10(rng, self.log10_warmup)) as usize;
        p.fishr_lambda = pow10(rng, self.log10_fishr_lambda);
        p.fishr_warmup = libm::round(pow10(rng, self.log10_warmup)) as usize;
        p.mldg_beta = pow10(rng, self.log10_mldg_beta);
        p.mldg_n_meta_test = pick(rng, &self.mldg_n_meta_test);
        p.groupdro_eta = pow10(rng, self.log10_groupdro_eta);
        c
    }
}

/// `n` seeded draws from `space`.
pub fn draw_configs(space: &SearchSpace, base: &TrainConfig, n: usize, seed: u64) -> Result<Vec<TrainConfig>> {
    space.validate()?;
    let mut rng = keyed(&[seed, 0x7365_6172_6368]);
    Ok((0..n).map(|_| space.draw(base, &mut rng)).collect())
}

/// Index of the candidate with the lowest mean validation loss across folds.
/// Candidates with a non-finite mean are skipped; ties keep the earliest.
pub fn select_best(fold_losses: &[Vec<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, ls) in fold_losses.iter().enumerate() {
        if ls.is_empty() {
            continue;
        }
        let m = ls.iter().sum::<f64>() / ls.len() as f64;
        if m.is_finite() && best.is_none_or(|(_, b)| m < b) {
            best = Some((i, m));
        }
    }
    best.map(|b| b.0)
}
