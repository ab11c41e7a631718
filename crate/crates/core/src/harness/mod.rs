//! Experiment plumbing: configuration, datasets, checkpoints, the attack suite
//! and report files.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod report;
pub mod suite;

pub use checkpoint::{load_classifier, load_flow, save_classifier, save_flow, Checkpoint, CHECKPOINT_VERSION};
pub use config::{parse_list, ExperimentConfig, Method, Mode};
pub use dataset::{ingest_dataset, DatasetSpec};
pub use report::{emit_report, read_pgm, write_pgm};
pub use suite::{prepare_data, run_attack_suite, run_attack_suite_with, train_classifier, train_flow, DataSplit, RunReport};
