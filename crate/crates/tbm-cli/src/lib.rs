//! Scenario runner around `tbm-core`: a small textual format for
//! declaring timelines, causal rules, and evidence, plus an executor
//! that answers the file's queries and checks its expectations.

use thiserror::Error;

use tbm_core::TbmError;

pub mod run;
pub mod scenario;

pub use run::{execute, Mode, QueryReport, Report};
pub use scenario::{parse_config_file, parse_scenario, ConfigPatch, Scenario};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("duplicate name `{name}` at {line}:{col}")]
    DuplicateName { name: String, line: u32, col: u32 },
    #[error("undefined name `{name}` at {line}:{col}")]
    UndefinedName { name: String, line: u32, col: u32 },
    #[error("unknown generator `{name}` at {line}:{col}")]
    UnknownGenerator { name: String, line: u32, col: u32 },
    #[error("step {step} failed: {source}")]
    Step { step: usize, source: TbmError },
    #[error(transparent)]
    Engine(#[from] TbmError),
}
