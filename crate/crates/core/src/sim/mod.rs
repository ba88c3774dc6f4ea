//! Simulator drivers.
//!
//! A [`SimBackend`] compiles, elaborates and runs one testbench per
//! [`SimRequest`] inside the request's private workspace. Two drivers ship:
//! [`MockBackend`] replays a scripted scenario file and
//! [`VerilatorBackend`] shells out to Verilator.

mod classify;
mod mock;
mod verilator;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{classify_failure, log_excerpt, Classification, ExcerptPolicy, TIMEOUT_MARKER};
pub use mock::{
    sha256_hex, MockBackend, MockOutcome, MockRule, MockScenario, RuleMatch, MOCK_ARTIFACT,
};
pub use verilator::{VerilatorBackend, VerilatorConfig};

/// Name of the combined tool log every backend leaves in the workspace.
pub const SIM_LOG: &str = "sim.log";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("simulator backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("workspace I/O failed for {path}: {message}")]
    WorkspaceIO { path: String, message: String },
}

impl SimError {
    pub(crate) fn io(path: &Path, err: impl fmt::Display) -> Self {
        SimError::WorkspaceIO {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SimStatus {
    Success,
    CompileError,
    ElaborationError,
    SimulationError,
    Timeout,
}

impl SimStatus {
    pub const FAILURES: [SimStatus; 4] = [
        SimStatus::CompileError,
        SimStatus::ElaborationError,
        SimStatus::SimulationError,
        SimStatus::Timeout,
    ];

    pub fn is_success(self) -> bool {
        self == SimStatus::Success
    }

    /// Short phase word used in prompts and tables.
    pub fn phase(self) -> &'static str {
        match self {
            SimStatus::Success => "success",
            SimStatus::CompileError => "compilation",
            SimStatus::ElaborationError => "elaboration",
            SimStatus::SimulationError => "simulation",
            SimStatus::Timeout => "timeout",
        }
    }
}

impl fmt::Display for SimStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SimStatus::Success => "Success",
            SimStatus::CompileError => "CompileError",
            SimStatus::ElaborationError => "ElaborationError",
            SimStatus::SimulationError => "SimulationError",
            SimStatus::Timeout => "Timeout",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimRequest {
    pub design_files: Vec<PathBuf>,
    pub testbench_file: PathBuf,
    pub seed: u64,
    pub coverage_enabled: bool,
    /// Must exist and belong to this request alone.
    pub workspace: PathBuf,
    pub wall_timeout_s: u64,
    /// Per-conversation count of simulator runs so far (0-based).
    pub invocation: u64,
    /// Label of the conversation issuing the request, e.g. `conv_0`.
    pub conversation: String,
}

impl SimRequest {
    pub fn new(design_files: Vec<PathBuf>, testbench_file: PathBuf, workspace: PathBuf) -> Self {
        SimRequest {
            design_files,
            testbench_file,
            seed: 0,
            coverage_enabled: true,
            workspace,
            wall_timeout_s: 300,
            invocation: 0,
            conversation: String::new(),
        }
    }

    /// Checks the preconditions shared by all backends.
    pub fn check(&self) -> Result<(), SimError> {
        if !self.workspace.is_dir() {
            return Err(SimError::io(
                &self.workspace,
                "workspace directory does not exist",
            ));
        }
        for f in self
            .design_files
            .iter()
            .chain(std::iter::once(&self.testbench_file))
        {
            if !f.is_file() {
                return Err(SimError::io(f, "input file does not exist"));
            }
        }
        if self.wall_timeout_s == 0 {
            return Err(SimError::io(
                &self.workspace,
                "wall timeout must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub status: SimStatus,
    pub log_excerpt: String,
    pub coverage_artifact: Option<PathBuf>,
    pub runtime_s: f64,
    /// Full tool log inside the workspace.
    pub log_path: Option<PathBuf>,
    /// False when a failure log matched none of the known patterns.
    pub recognized: bool,
}

impl SimOutcome {
    /// Equality ignoring `runtime_s`.
    pub fn same_result(&self, other: &SimOutcome) -> bool {
        self.status == other.status
            && self.log_excerpt == other.log_excerpt
            && self.coverage_artifact == other.coverage_artifact
            && self.log_path == other.log_path
            && self.recognized == other.recognized
    }
}

pub trait SimBackend: Send + Sync {
    fn name(&self) -> &str;
    fn run(&self, request: &SimRequest) -> Result<SimOutcome, SimError>;
}

impl<T: SimBackend + ?Sized> SimBackend for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn run(&self, request: &SimRequest) -> Result<SimOutcome, SimError> {
        (**self).run(request)
    }
}

impl<T: SimBackend + ?Sized> SimBackend for std::sync::Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn run(&self, request: &SimRequest) -> Result<SimOutcome, SimError> {
        (**self).run(request)
    }
}
