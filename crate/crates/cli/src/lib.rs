//! Harness library behind the `radlab` binary: configuration schemas, the
//! weight container, CSV reports, run manifests, the regularizer
//! comparison experiment, and the verification suites.

pub mod config;
pub mod experiment;
pub mod manifest;
pub mod report;
pub mod verify;
pub mod weights;
