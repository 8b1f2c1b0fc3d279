//! Experiment harness around `ddlink-core`: configuration, seeded scenario
//! construction, the four experiment families and CSV output.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{load_config, ScenarioConfig};
pub use experiments::{
    run_ber, run_optimizer, run_sumrate_cfo, run_sumrate_oma, scenario_channels,
};
pub use report::{emit_report, ExperimentReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("simulation: {0}")]
    Sim(#[from] ddlink_core::Error),
}

impl CliError {
    /// Process exit code for each failure category.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Sim(_) => 4,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
