use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{hash_str, keyed};

pub const N_FOLDS: usize = 5;
pub const TEST_FRACTION: f64 = 0.2;

/// Held-out test stays and cross-validation folds of one domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSplit {
    pub test: Vec<String>,
    pub folds: Vec<Vec<String>>,
}

impl DomainSplit {
    pub fn validation(&self, fold: usize) -> &[String] {
        &self.folds[fold]
    }

    pub fn training(&self, fold: usize) -> Vec<String> {
        self.folds.iter().enumerate().filter(|(k, _)| *k != fold).flat_map(|(_, f)| f.iter().cloned()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub domains: BTreeMap<String, DomainSplit>,
}

/// Splits one domain: 20% test, the rest into five folds.
pub fn split_domain(domain: &str, stay_ids: &[String], seed: u64) -> Result<DomainSplit> {
    let mut ids = stay_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let n = ids.len();
    let n_test = libm::round(TEST_FRACTION * n as f64) as usize;
    if n - n_test < N_FOLDS {
        return Err(Error::TooFewStays { domain: domain.into(), n, need: N_FOLDS + 2 });
    }
    let mut rng = keyed(&[seed, hash_str(domain), 0x73706c6974]);
    ids.shuffle(&mut rng);
    let rest = ids.split_off(n_test);
    let m = rest.len();
    let folds = (0..N_FOLDS).map(|k| rest[k * m / N_FOLDS..(k + 1) * m / N_FOLDS].to_vec()).collect();
    Ok(DomainSplit { test: ids, folds })
}

/// Stratified-by-domain split plan.
pub fn make_splits<'a>(
    domains: impl IntoIterator<Item = (&'a str, &'a [String])>,
    seed: u64,
) -> Result<SplitPlan> {
    let mut out = BTreeMap::new();
    for (d, ids) in domains {
        if out.insert(String::from(d), split_domain(d, ids, seed)?).is_some() {
            return Err(Error::DuplicateDomain(d.into()));
        }
    }
    Ok(SplitPlan { seed, domains: out })
}
