//! In-hospital sepsis mortality prediction pipeline.
//!
//! From MIMIC-III-shaped CSV tables to evaluated, explained models:
//! cohort extraction by ICD-9 sepsis codes, per-patient event
//! aggregation, leakage-safe preprocessing (mean imputation, one-hot
//! encoding, z-scaling, SMOTE), five from-scratch classifier families,
//! a bootstrap/CV evaluation harness, and path-dependent TreeSHAP
//! attributions. A seeded synthetic generator stands in for the
//! credential-restricted clinical source.
//!
//! The `sepsis-mortality` binary drives the whole workflow; see the
//! README for the CLI and the emitted report files.

pub mod cohort;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod learners;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod schema;
pub mod shap;
pub mod synth;

pub use config::RunConfig;
pub use error::{Error, Result};
