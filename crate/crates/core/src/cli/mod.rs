//! Command-line pipeline: CSV ingestion, covariate expansion, estimation,
//! rho-bounds and simulation subcommands with machine-readable outputs.

mod commands;
mod config;
mod expand;
mod ingest;

pub use commands::{
    build_dataset, cmd_bounds, cmd_estimate, cmd_simulate, version_string, BoundsReportFile,
    EstimateReport, FitSummary, TargetReport,
};
pub use config::{
    AnalysisConfig, BoundsConfig, CatNumericInteractions, ExpandSpec, FitConfig, InputConfig,
    OneOrMany, OutputConfig, Overrides, PenaltyConfig, ScenarioFile, SensitivityConfig,
};
pub use expand::expand_covariates;
pub use ingest::{ingest, DummyColumn, IngestedData};
