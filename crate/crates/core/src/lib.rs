//! Latent-space adversarial examples through an invertible flow, under strict
//! L-infinity budgets, with pixel-space baselines, image-quality metrics and
//! feature-space detectors for evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod autodiff;
pub mod classifier;
pub mod detection;
mod error;
pub mod flow;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
