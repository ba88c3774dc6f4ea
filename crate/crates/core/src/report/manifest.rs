//! Run manifests.
//!
//! ```toml
//! design_files = ["rtl/toy_counter.v"]
//! top = "toy_counter"
//! spec_path = "spec.md"
//! backend = "mock"            # or "external"
//! llm_backend = "replay"      # or "remote"
//! output_dir = "out"
//! mock_scenario = "scenario.toml"
//! transcript = "transcript.toml"
//!
//! [config]
//! max_iterations = 20
//! ```
//!
//! Relative paths are taken from the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::engine::RunConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SimBackendKind {
    #[default]
    External,
    Mock,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LlmBackendKind {
    #[default]
    Remote,
    Replay,
}

/// What happens to the engine's scratch workspaces after a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Retention {
    /// Keep the results tree only.
    #[default]
    Results,
    /// Also keep every simulator workspace under `work/`.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub design_files: Vec<PathBuf>,
    pub top: String,
    pub spec_path: PathBuf,
    #[serde(default)]
    pub backend: SimBackendKind,
    #[serde(default)]
    pub llm_backend: LlmBackendKind,
    #[serde(default)]
    pub config: RunConfig,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_scenario: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts_dir: Option<PathBuf>,
    #[serde(default)]
    pub retention: Retention,
}

impl RunManifest {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ReportError> {
        let mut m: RunManifest = toml::from_str(text)
            .map_err(|e| ReportError::Manifest(format!("invalid manifest: {e}")))?;
        m.resolve(base_dir);
        Ok(m)
    }

    /// Reads, resolves and checks a manifest file.
    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ReportError::Manifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let m = Self::from_toml_str(&text, base)?;
        m.check()?;
        Ok(m)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.design_files.iter_mut().for_each(fix);
        fix(&mut self.spec_path);
        fix(&mut self.output_dir);
        self.mock_scenario.as_mut().map(fix);
        self.transcript.as_mut().map(fix);
        self.prompts_dir.as_mut().map(fix);
    }

    /// Input paths exist, the backends have what they need and the config is valid.
    pub fn check(&self) -> Result<(), ReportError> {
        if self.design_files.is_empty() {
            return Err(ReportError::Manifest("design_files is empty".into()));
        }
        let inputs = self
            .design_files
            .iter()
            .chain([&self.spec_path])
            .chain(self.mock_scenario.iter())
            .chain(self.transcript.iter())
            .chain(self.prompts_dir.iter());
        for p in inputs {
            if !p.exists() {
                return Err(ReportError::Manifest(format!(
                    "{} does not exist",
                    p.display()
                )));
            }
        }
        if self.backend == SimBackendKind::Mock && self.mock_scenario.is_none() {
            return Err(ReportError::Manifest(
                "the mock backend needs mock_scenario".into(),
            ));
        }
        if self.llm_backend == LlmBackendKind::Replay && self.transcript.is_none() {
            return Err(ReportError::Manifest(
                "the replay backend needs transcript".into(),
            ));
        }
        self.config
            .validate()
            .map_err(|e| ReportError::Manifest(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}
