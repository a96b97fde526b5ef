//! Core algorithms for multi-site ICU outcome prediction: outcome labelling,
//! cohort selection, feature construction, a small reverse-mode autodiff
//! engine, GRU sequence models, domain-generalisation training objectives
//! and evaluation metrics.
//!
//! The crate is `no_std` and only needs an allocator. File formats, the
//! command-line interface and parallel job scheduling live in the `icudg`
//! companion crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod autodiff;
pub mod cohort;
pub mod concept;
pub mod error;
pub mod eval;
pub mod features;
pub mod labels;
pub mod nn;
pub mod objectives;
pub mod rng;
pub mod stay;
pub mod synth;
pub mod training;

pub use concept::{ConceptCatalog, ConceptEntry, ConceptId, ConceptKind};
pub use error::{Error, Result};
pub use labels::Task;
pub use stay::{assemble_stays, apply_plausibility_filter, Event, EventRecord, Sex, StayStatic, StayTimeline};
