//! Declarative experiments: TOML configs, the ensemble runner, the oracle
//! suite and artifact reports. The `sgdthermo` binary is a thin shell over
//! this module.

pub mod compare;
mod config;
mod oracle;
mod report;
mod run;
pub mod svg;

pub use config::{
    AnalysisSection, Check, DataSection, EngineSection, ExperimentConfig, ExperimentKind, ExperimentSection, Format, InitKind,
    ModelSection, OutputSection, DATA_DIR_ENV,
};
pub use oracle::{derivative_checks, oracle_suite, wor_checks, wr_checks, OracleCheck, OracleOptions, OracleReport, MAX_ORACLE_M};
pub use report::{report_dir, DirReport};
pub use run::{mode_theory, run_config_file, run_experiment, tolerances, ModeTheory, RunOptions, Seeds, Summary};
