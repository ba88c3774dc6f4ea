//! Metrics, the JSON report and the results tree.
//!
//! ```text
//! <output_dir>/
//!   report.json
//!   merged_coverage.xml          union over completed conversations
//!   conv_<i>/
//!     summary.csv
//!     conversation.json          final message history
//!     merged_coverage.xml
//!     testplan.json              when a testplan was generated
//!     testplan/feature_<k>/...   enhanced-testplan testcases
//!     iter_<j>/{testcase.sv, testbench.sv, sim.log, coverage.xml}
//!   work/                        simulator workspaces (retention = all)
//! ```

mod manifest;
mod metrics;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::export_report;
use crate::engine::{
    Artifacts, CandidateStats, ConversationResult, ErrorCounts, FeatureRecord, IterationRecord,
    RunConfig, RunResult,
};
use crate::hdl::{DesignModel, DifficultyLabel};
use crate::prompt::Testplan;

pub use manifest::{LlmBackendKind, Retention, RunManifest, SimBackendKind};
pub use metrics::{
    binomial, geometric_mean, pass_at_k, pass_at_k_ratio, round2, GeoMean, MetricError,
};

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const WORK_DIR: &str = "work";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// k values reported for pass@k, where k ≤ n.
pub const PASS_AT_K: [u64; 3] = [1, 3, 5];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{0}")]
    Manifest(String),
    #[error("{path}: {message}")]
    WorkspaceIO { path: String, message: String },
    #[error("{0} already holds a run; pass --overwrite to replace it")]
    AlreadyExists(PathBuf),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl ReportError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        ReportError::WorkspaceIO {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub top: String,
    pub files: Vec<String>,
    pub total_lines: usize,
    pub hierarchy_depth: usize,
    pub difficulty: DifficultyLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendNames {
    pub simulator: String,
    pub llm: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    pub llm_wall_time_s: f64,
    pub sim_runtime_s: f64,
    pub total_runtime_s: f64,
}

impl Cost {
    fn of(c: &ConversationResult) -> Self {
        Cost {
            prompt_tokens: c.usage.prompt_tokens,
            completion_tokens: c.usage.completion_tokens,
            total_tokens: c.usage.total_tokens(),
            llm_wall_time_s: c.usage.wall_time_s,
            sim_runtime_s: c.sim_runtime_s,
            total_runtime_s: c.usage.wall_time_s + c.sim_runtime_s,
        }
    }

    fn add(&mut self, o: &Cost) {
        self.prompt_tokens += o.prompt_tokens;
        self.completion_tokens += o.completion_tokens;
        self.total_tokens += o.total_tokens;
        self.llm_wall_time_s += o.llm_wall_time_s;
        self.sim_runtime_s += o.sim_runtime_s;
        self.total_runtime_s += o.total_runtime_s;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationSummary {
    pub index: usize,
    pub id: String,
    pub stop_reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fatal_error: Option<String>,
    pub base_seed: u64,
    pub final_percent: f64,
    pub error_totals: ErrorCounts,
    pub phase1_candidates: CandidateStats,
    pub cost: Cost,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub testplan: Option<Testplan>,
    pub features: Vec<FeatureRecord>,
    pub iterations: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub conversations: usize,
    pub completed: usize,
    pub fatal: usize,
    pub mean_final_percent: Option<f64>,
    pub cross_merged_percent: Option<f64>,
    /// Across completed conversations' final coverage.
    pub geometric_mean: Option<GeoMean>,
    pub final_percents: Vec<f64>,
}

/// pass@k over the first batch of initial-testcase candidates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PassAtKSummary {
    pub generated: u64,
    pub succeeded: u64,
    /// All candidates pooled into one population.
    pub pooled: BTreeMap<String, f64>,
    /// Mean of the per-conversation (or per-design) values.
    pub averaged: BTreeMap<String, f64>,
}

fn k_key(k: u64) -> String {
    format!("pass@{k}")
}

impl PassAtKSummary {
    /// `groups` are (generated, succeeded) pairs; empty groups are skipped.
    pub fn from_groups(groups: &[(u64, u64)]) -> Result<Self, MetricError> {
        let groups: Vec<(u64, u64)> = groups.iter().copied().filter(|(n, _)| *n > 0).collect();
        let mut s = PassAtKSummary {
            generated: groups.iter().map(|g| g.0).sum(),
            succeeded: groups.iter().map(|g| g.1).sum(),
            ..Default::default()
        };
        let Some(min_n) = groups.iter().map(|g| g.0).min() else {
            return Ok(s);
        };
        for k in PASS_AT_K.into_iter().filter(|k| *k <= min_n) {
            s.pooled
                .insert(k_key(k), pass_at_k(s.generated, s.succeeded, k)?);
            let mut sum = 0.0;
            for (n, c) in &groups {
                sum += pass_at_k(*n, *c, k)?;
            }
            s.averaged.insert(k_key(k), sum / groups.len() as f64);
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub design: DesignSummary,
    pub backends: BackendNames,
    pub config: RunConfig,
    pub feature_label: String,
    pub one_shot: bool,
    pub aggregate: AggregateSummary,
    pub pass_at_k: PassAtKSummary,
    pub cost: Cost,
    pub conversations: Vec<ConversationSummary>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReportError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| ReportError::io(path, e))
    }
}

pub fn build_report(
    run: &RunResult,
    model: &DesignModel,
    config: &RunConfig,
    backends: BackendNames,
) -> Result<Report, ReportError> {
    let conversations: Vec<ConversationSummary> = run
        .conversations
        .iter()
        .map(|c| ConversationSummary {
            index: c.index,
            id: c.id.clone(),
            stop_reason: c.stop_reason.to_string(),
            fatal_error: c.fatal_error.clone(),
            base_seed: c.base_seed,
            final_percent: c.final_percent(),
            error_totals: c.error_totals(),
            phase1_candidates: c.phase1_candidates,
            cost: Cost::of(c),
            testplan: c.testplan.clone(),
            features: c.features.clone(),
            iterations: c.records.clone(),
        })
        .collect();
    let mut cost = Cost::default();
    conversations.iter().for_each(|c| cost.add(&c.cost));

    let groups: Vec<(u64, u64)> = run
        .conversations
        .iter()
        .map(|c| {
            (
                c.phase1_candidates.generated as u64,
                c.phase1_candidates.succeeded as u64,
            )
        })
        .collect();
    let agg = &run.aggregate;
    let geometric_mean = match geometric_mean(&agg.final_percents) {
        Ok(g) => Some(g),
        Err(MetricError::EmptyInput) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        design: DesignSummary {
            top: model.top.clone(),
            files: model
                .files()
                .iter()
                .map(|f| f.path.display().to_string())
                .collect(),
            total_lines: model.total_lines,
            hierarchy_depth: model.hierarchy_depth,
            difficulty: model.difficulty(),
        },
        backends,
        config: config.clone(),
        feature_label: config.features.label().to_owned(),
        one_shot: config.is_one_shot(),
        aggregate: AggregateSummary {
            conversations: agg.conversations,
            completed: agg.completed,
            fatal: agg.fatal,
            mean_final_percent: agg.mean_final_percent,
            cross_merged_percent: agg.cross_merged_percent,
            geometric_mean,
            final_percents: agg.final_percents.clone(),
        },
        pass_at_k: PassAtKSummary::from_groups(&groups)?,
        cost,
        conversations,
    })
}

fn conv_dirs(dir: &Path) -> Vec<PathBuf> {
    let Ok(rd) = std::fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut v: Vec<PathBuf> = rd
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("conv_") && e.path().is_dir())
        .map(|e| e.path())
        .collect();
    v.sort();
    v
}

/// True when `dir` already holds a results tree.
pub fn holds_run(dir: &Path) -> bool {
    dir.join(REPORT_FILE).exists() || !conv_dirs(dir).is_empty()
}

/// Makes `dir` ready for a new run, clearing a previous one only when `overwrite` is set.
pub fn prepare_output_dir(dir: &Path, overwrite: bool) -> Result<(), ReportError> {
    if holds_run(dir) || dir.join(WORK_DIR).exists() {
        if !overwrite {
            return Err(ReportError::AlreadyExists(dir.to_path_buf()));
        }
        for d in conv_dirs(dir).into_iter().chain([dir.join(WORK_DIR)]) {
            if d.exists() {
                std::fs::remove_dir_all(&d).map_err(|e| ReportError::io(&d, e))?;
            }
        }
        for f in [REPORT_FILE, "merged_coverage.xml"] {
            let p = dir.join(f);
            if p.exists() {
                std::fs::remove_file(&p).map_err(|e| ReportError::io(&p, e))?;
            }
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| ReportError::io(dir, e))?;
    let probe = dir.join(".covclose-write-probe");
    std::fs::write(&probe, b"").map_err(|e| ReportError::io(dir, format!("not writable: {e}")))?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| ReportError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| ReportError::io(path, e))
}

fn write_artifacts(dir: &Path, a: &Artifacts) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(|e| ReportError::io(dir, e))?;
    if let Some(t) = &a.testcase {
        write(&dir.join("testcase.sv"), t)?;
    }
    if let Some(t) = &a.testbench {
        write(&dir.join("testbench.sv"), t)?;
    }
    if let Some(t) = &a.sim_log {
        write(&dir.join("sim.log"), t)?;
    }
    if let Some(m) = &a.coverage {
        write(&dir.join("coverage.xml"), &export_report(m))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    index: usize,
    testcase: &'a str,
    decode_errors: u32,
    compile_errors: u32,
    elaboration_errors: u32,
    simulation_errors: u32,
    timeout_errors: u32,
    achieved_percent: String,
    merged_percent: String,
    tokens: u64,
    runtime_s: String,
}

pub fn summary_csv(records: &[IterationRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        let e = &r.error_counts;
        w.serialize(SummaryRow {
            index: r.index,
            testcase: &r.testcase_name,
            decode_errors: e.decode,
            compile_errors: e.compile,
            elaboration_errors: e.elaboration,
            simulation_errors: e.simulation,
            timeout_errors: e.timeout,
            achieved_percent: format!("{:.2}", r.achieved_percent),
            merged_percent: format!("{:.2}", r.merged_percent),
            tokens: r.tokens_used,
            runtime_s: format!("{:.3}", r.runtime_s),
        })
        .expect("csv row");
    }
    if records.is_empty() {
        w.write_record([
            "index",
            "testcase",
            "decode_errors",
            "compile_errors",
            "elaboration_errors",
            "simulation_errors",
            "timeout_errors",
            "achieved_percent",
            "merged_percent",
            "tokens",
            "runtime_s",
        ])
        .expect("csv header");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8")
}

/// Writes the results tree and report.json; refuses to replace an existing run.
pub fn write_results(
    run: &RunResult,
    report: &Report,
    output_dir: &Path,
) -> Result<(), ReportError> {
    if holds_run(output_dir) {
        return Err(ReportError::AlreadyExists(output_dir.to_path_buf()));
    }
    std::fs::create_dir_all(output_dir).map_err(|e| ReportError::io(output_dir, e))?;
    for c in &run.conversations {
        let dir = output_dir.join(&c.id);
        std::fs::create_dir_all(&dir).map_err(|e| ReportError::io(&dir, e))?;
        for (r, a) in c.records.iter().zip(&c.artifacts) {
            write_artifacts(&dir.join(format!("iter_{}", r.index)), a)?;
        }
        for (f, a) in c.features.iter().zip(&c.feature_artifacts) {
            write_artifacts(
                &dir.join("testplan").join(format!("feature_{}", f.index)),
                a,
            )?;
        }
        if let Some(tp) = &c.testplan {
            write(&dir.join("testplan.json"), &tp.encode_json())?;
        }
        if let Some(m) = &c.final_merged {
            write(&dir.join("merged_coverage.xml"), &export_report(m))?;
        }
        write(&dir.join(SUMMARY_FILE), &summary_csv(&c.records))?;
        let msgs = serde_json::to_string_pretty(&c.messages).expect("messages serialize");
        write(&dir.join("conversation.json"), &msgs)?;
    }
    if let Some(m) = &run.cross_merged {
        write(&output_dir.join("merged_coverage.xml"), &export_report(m))?;
    }
    write(&output_dir.join(REPORT_FILE), &report.to_json())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub top: String,
    pub difficulty: DifficultyLabel,
    pub feature_label: String,
    pub mean_final_percent: Option<f64>,
    pub cross_merged_percent: Option<f64>,
    pub pass_at_k: BTreeMap<String, f64>,
}

/// Several runs (typically one per design) summarized together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDesignSummary {
    pub designs: Vec<DesignRow>,
    /// Over each design's mean final coverage.
    pub geometric_mean: Option<GeoMean>,
    pub pass_at_k: PassAtKSummary,
    pub cost: Cost,
}

pub fn summarize_reports(reports: &[Report]) -> Result<CrossDesignSummary, ReportError> {
    if reports.is_empty() {
        return Err(MetricError::EmptyInput.into());
    }
    let means: Vec<f64> = reports
        .iter()
        .filter_map(|r| r.aggregate.mean_final_percent)
        .collect();
    let geometric_mean = match geometric_mean(&means) {
        Ok(g) => Some(g),
        Err(MetricError::EmptyInput) => None,
        Err(e) => return Err(e.into()),
    };
    // pooled over every conversation; averaged over designs' averaged values
    let mut groups = Vec::new();
    for r in reports {
        for c in &r.conversations {
            groups.push((
                c.phase1_candidates.generated as u64,
                c.phase1_candidates.succeeded as u64,
            ));
        }
    }
    let mut pass = PassAtKSummary::from_groups(&groups)?;
    let mut averaged: BTreeMap<String, f64> = BTreeMap::new();
    for key in pass.pooled.keys() {
        let vals: Vec<f64> = reports
            .iter()
            .filter_map(|r| r.pass_at_k.averaged.get(key).copied())
            .collect();
        if !vals.is_empty() {
            averaged.insert(key.clone(), vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }
    pass.averaged = averaged;
    let mut cost = Cost::default();
    reports.iter().for_each(|r| cost.add(&r.cost));
    Ok(CrossDesignSummary {
        designs: reports
            .iter()
            .map(|r| DesignRow {
                top: r.design.top.clone(),
                difficulty: r.design.difficulty,
                feature_label: r.feature_label.clone(),
                mean_final_percent: r.aggregate.mean_final_percent,
                cross_merged_percent: r.aggregate.cross_merged_percent,
                pass_at_k: r.pass_at_k.averaged.clone(),
            })
            .collect(),
        geometric_mean,
        pass_at_k: pass,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ErrorCounts;

    #[test]
    fn pass_at_k_aggregations() {
        let s = PassAtKSummary::from_groups(&[(5, 5), (5, 0), (0, 0)]).unwrap();
        assert_eq!((s.generated, s.succeeded), (10, 5));
        assert_eq!(s.averaged["pass@1"], 0.5);
        assert_eq!(s.pooled["pass@1"], 0.5);
        assert_eq!(s.averaged["pass@5"], 0.5);
        assert!(s.pooled["pass@5"] > 0.99);
        let one = PassAtKSummary::from_groups(&[(1, 1)]).unwrap();
        assert_eq!(one.pooled.keys().collect::<Vec<_>>(), vec!["pass@1"]);
    }

    #[test]
    fn csv_columns() {
        let r = IterationRecord {
            index: 1,
            testcase_name: "t".into(),
            error_counts: ErrorCounts {
                compile: 2,
                ..Default::default()
            },
            achieved_percent: 60.0,
            merged_percent: 60.0,
            tokens_used: 123,
            runtime_s: 1.5,
            target_module: None,
            selected_candidate: Some(0),
            pruned_messages: 0,
        };
        let text = summary_csv(&[r]);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "index,testcase,decode_errors,compile_errors,elaboration_errors,simulation_errors,timeout_errors,achieved_percent,merged_percent,tokens,runtime_s"
        );
        assert_eq!(lines.next().unwrap(), "1,t,0,2,0,0,0,60.00,60.00,123,1.500");
        assert!(summary_csv(&[]).starts_with("index,"));
    }
}
