use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::metrics::mean_se;
use crate::labels::Task;

/// Training data used for a model in the experiment matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    /// Trained on one domain.
    Single(String),
    /// Trained on every domain except the named test domain.
    PooledNMinus1(String),
    /// Trained on every domain, the test domain included.
    All,
    /// Trained and tested on the named domain.
    Oracle(String),
}

impl Setting {
    pub fn kind(&self) -> &'static str {
        match self {
            Setting::Single(_) => "single",
            Setting::PooledNMinus1(_) => "pooled_n_minus_1",
            Setting::All => "all",
            Setting::Oracle(_) => "oracle",
        }
    }

    /// Domains whose training folds feed the model.
    pub fn train_domains(&self, domains: &[String]) -> Vec<String> {
        match self {
            Setting::Single(d) | Setting::Oracle(d) => alloc::vec![d.clone()],
            Setting::PooledNMinus1(t) => domains.iter().filter(|d| *d != t).cloned().collect(),
            Setting::All => domains.to_vec(),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::Single(d) => write!(f, "single({d})"),
            Setting::PooledNMinus1(d) => write!(f, "pooled_n_minus_1({d})"),
            Setting::All => f.write_str("all"),
            Setting::Oracle(d) => write!(f, "oracle({d})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Single,
    #[serde(rename = "pooled_n_minus_1")]
    PooledNMinus1,
    All,
    Oracle,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Single, Protocol::PooledNMinus1, Protocol::All, Protocol::Oracle];
}

/// A model to train and the domains whose test splits it is scored on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingJob {
    pub setting: Setting,
    pub train_domains: Vec<String>,
    /// `(reported setting, test domain)` pairs scored with this model.
    pub evaluations: Vec<(Setting, String)>,
}

/// Models needed for the requested protocols. The oracle rows reuse the
/// single-domain model of the test domain, so they add no training jobs.
pub fn plan_matrix(domains: &[String], protocols: &[Protocol]) -> Vec<TrainingJob> {
    let has = |p| protocols.contains(&p);
    let mut jobs = Vec::new();
    if has(Protocol::Single) || has(Protocol::Oracle) {
        for d in domains {
            let mut evaluations = Vec::new();
            for t in domains {
                if t == d {
                    if has(Protocol::Single) {
                        evaluations.push((Setting::Single(d.clone()), t.clone()));
                    }
                    if has(Protocol::Oracle) {
                        evaluations.push((Setting::Oracle(d.clone()), t.clone()));
                    }
                } else if has(Protocol::Single) {
                    evaluations.push((Setting::Single(d.clone()), t.clone()));
                }
            }
            jobs.push(TrainingJob {
                setting: Setting::Single(d.clone()),
                train_domains: alloc::vec![d.clone()],
                evaluations,
            });
        }
    }
    if has(Protocol::PooledNMinus1) && domains.len() > 1 {
        for t in domains {
            let s = Setting::PooledNMinus1(t.clone());
            jobs.push(TrainingJob {
                train_domains: s.train_domains(domains),
                evaluations: alloc::vec![(s.clone(), t.clone())],
                setting: s,
            });
        }
    }
    if has(Protocol::All) {
        jobs.push(TrainingJob {
            setting: Setting::All,
            train_domains: domains.to_vec(),
            evaluations: domains.iter().map(|t| (Setting::All, t.clone())).collect(),
        });
    }
    jobs
}

/// Cross-validated AUROC of one matrix cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub setting: Setting,
    pub train_domains: Vec<String>,
    pub test_domain: String,
    pub fold_auroc: Vec<f64>,
    pub mean: f64,
    pub se: f64,
}

impl EvalReport {
    pub fn new(task: Task, setting: Setting, train_domains: Vec<String>, test_domain: String, fold_auroc: Vec<f64>) -> Self {
        let (mean, se) = mean_se(&fold_auroc);
        EvalReport { task, setting, train_domains, test_domain, fold_auroc, mean, se }
    }

    pub fn train_label(&self) -> String {
        self.train_domains.join("+")
    }

    pub fn setting_label(&self) -> String {
        self.setting.to_string()
    }
}
