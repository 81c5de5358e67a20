//! Experiment harness: scenario configs, suite runner and CLI.

pub mod cli;
pub mod config;
pub mod suite;

pub use cli::{cli_main, cli_main_with};
pub use config::{parse_config, parse_config_str, ConfigError, ScenarioSpec};
pub use suite::{
    run_suite, AgentSelection, ComparisonRow, OutputFormat, RunRecord, SuiteError, SuiteOptions,
    SuiteOutcome, Winner,
};
