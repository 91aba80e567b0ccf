//! Distillation lab: policy distillation under group symmetries, with
//! kernel-regression predictions of ensemble behaviour and the matching
//! suboptimality bounds.

pub mod cli;
pub mod data;
pub mod distill;
pub mod ensemble;
pub mod envs;
pub mod error;
pub mod groups;
pub mod nn;
pub mod report;
pub mod teachers;
pub mod theory;

pub use error::{Error, Result};
