//! Running a manifest end to end: load, run, report, clean up.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{run_conversations, EngineContext, StopReason};
use crate::hdl::{load_sources, DesignModel, HdlError};
use crate::llm::{
    default_estimator, HttpBackend, LlmBackend, LlmError, RecordingBackend, ReplayBackend,
};
use crate::prompt::{PromptError, PromptTemplates};
use crate::report::{
    build_report, prepare_output_dir, write_results, BackendNames, LlmBackendKind, Report,
    ReportError, Retention, RunManifest, SimBackendKind, WORK_DIR,
};
use crate::sim::{
    MockBackend, MockScenario, SimBackend, SimError, VerilatorBackend, VerilatorConfig,
};

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Hdl(#[from] HdlError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replace a previous run in the output directory.
    pub overwrite: bool,
    /// Save every LLM exchange to this transcript file.
    pub record_transcript: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    pub output_dir: PathBuf,
}

impl RunOutcome {
    pub fn fatal_conversations(&self) -> usize {
        self.report
            .conversations
            .iter()
            .filter(|c| c.stop_reason == StopReason::FatalError.to_string())
            .count()
    }
}

pub fn load_design(m: &RunManifest) -> Result<DesignModel, AppError> {
    let spec = std::fs::read_to_string(&m.spec_path)
        .map_err(|e| ReportError::Manifest(format!("{}: {e}", m.spec_path.display())))?;
    Ok(load_sources(&m.design_files)?
        .with_top(&m.top)?
        .with_spec(spec))
}

fn sim_backend(m: &RunManifest) -> Result<Box<dyn SimBackend>, AppError> {
    Ok(match m.backend {
        SimBackendKind::Mock => {
            let path = m.mock_scenario.as_deref().expect("checked");
            Box::new(MockBackend::new(MockScenario::load(path)?)?)
        }
        SimBackendKind::External => Box::new(VerilatorBackend::new(VerilatorConfig::from_env())?),
    })
}

fn llm_backend(m: &RunManifest) -> Result<Box<dyn LlmBackend>, AppError> {
    Ok(match m.llm_backend {
        LlmBackendKind::Replay => Box::new(ReplayBackend::load(
            m.transcript.as_deref().expect("checked"),
        )?),
        LlmBackendKind::Remote => Box::new(HttpBackend::from_env()?),
    })
}

fn templates(dir: Option<&Path>) -> Result<PromptTemplates, AppError> {
    Ok(match dir {
        Some(d) => PromptTemplates::from_dir(d)?,
        None => PromptTemplates::default(),
    })
}

/// Runs every conversation of the manifest and writes the results tree.
pub fn run_manifest(m: &RunManifest, opts: &RunOptions) -> Result<RunOutcome, AppError> {
    m.check()?;
    let model = load_design(m)?;
    let templates = templates(m.prompts_dir.as_deref())?;
    let sim = sim_backend(m)?;
    let llm = RecordingBackend::new(llm_backend(m)?);
    prepare_output_dir(&m.output_dir, opts.overwrite)?;
    let workdir = m.output_dir.join(WORK_DIR);
    let ctx = EngineContext {
        model: &model,
        config: &m.config,
        llm: &llm,
        sim: sim.as_ref(),
        templates: &templates,
        estimator: default_estimator(),
        workdir: workdir.clone(),
    };
    let run = run_conversations(&ctx);
    if let Some(path) = &opts.record_transcript {
        llm.transcript()
            .save(path)
            .map_err(|e| ReportError::io(path, e))?;
    }
    let names = BackendNames {
        simulator: sim.name().to_owned(),
        llm: llm.name().to_owned(),
    };
    let report = build_report(&run, &model, &m.config, names)?;
    write_results(&run, &report, &m.output_dir)?;
    if m.retention == Retention::Results && workdir.exists() {
        std::fs::remove_dir_all(&workdir).map_err(|e| ReportError::io(&workdir, e))?;
    }
    Ok(RunOutcome {
        report,
        output_dir: m.output_dir.clone(),
    })
}
