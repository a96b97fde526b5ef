use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("catalog error: {0}")]
    Catalog(String),

    #[error("event for unknown stay `{0}`")]
    OrphanEvent(String),

    #[error("duplicate stay id `{0}`")]
    DuplicateStay(String),

    #[error("duplicate domain id `{0}`")]
    DuplicateDomain(String),

    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss((usize, usize)),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("non-finite loss at step {step}; domain losses {domain_losses:?}")]
    NonFiniteLoss { step: usize, domain_losses: Vec<f64> },

    #[error("undefined AUROC: labels contain a single class")]
    UndefinedAuroc,

    #[error("too few stays in domain `{domain}`: {n} (need at least {need})")]
    TooFewStays { domain: String, n: usize, need: usize },

    #[error("need at least two training domains to split into meta-train and meta-test, got {0}")]
    TooFewDomains(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}
