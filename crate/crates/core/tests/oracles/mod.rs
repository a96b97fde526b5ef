//! Independent reference implementations shared by the integration tests
//! and the acceptance runner.
#![allow(dead_code)]

pub mod grad;
pub mod labels;
pub mod metrics;

use proptest::test_runner::{Config, FileFailurePersistence};

pub fn config(cases: u32) -> Config {
    Config { cases, failure_persistence: Some(Box::new(FileFailurePersistence::Off)), ..Config::default() }
}
