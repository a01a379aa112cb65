//! Experiment engine: data ingestion, seeded splits, cross-validated model
//! selection, repeated trials and result tables.

pub mod config;
pub mod cv;
pub mod data;
pub mod experiment;
pub mod report;
pub mod split;

pub use config::{DataSource, ExperimentConfig, KernelGrid, Method, TargetColumn};
pub use cv::{cross_validate, fit_chosen, Chosen, KernelContext, SearchGrid};
pub use data::{load_csv, parse_csv, LabeledTable, Standardizer};
pub use experiment::{run_experiment, run_experiment_with, ExperimentOutput, ResultsTable, SpectrumRecord};
pub use report::{export_spectrum, format_cell, format_table, table_csv, write_outputs};
pub use split::TrialSplit;
