//! The generate → simulate → feedback loop.
//!
//! One conversation runs, in order: optional testplan (and, in enhanced
//! mode, one simulated testcase per testplan feature), the initial
//! constrained-random testcase simulated over a set of seeds (iteration 1),
//! then hole-targeted closure iterations 2..=`max_iterations` until the
//! merged coverage reaches 100% or the budget runs out.

mod conversation;
mod prune;
mod run;
mod select;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::CoverageMap;
use crate::llm::{Message, SamplingConfig, UsageStats};
use crate::prompt::Testplan;
use crate::sim::SimStatus;
use crate::tbgen::TemplateOptions;

pub use conversation::{
    run_phase1, run_testplan_phase, ConversationState, EngineError, Phase1Outcome,
};
pub use prune::{prune_context, PruneError, PruneReport, TRUNCATION_MARKER};
pub use run::{aggregate, run_conversations, Aggregate, EngineContext, RunResult};
pub use select::{batched_select, select_target_module, AllCandidatesFailed, NoHoles};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Features {
    pub testplan: bool,
    pub enhanced_testplan: bool,
    pub batched: bool,
    pub pruning: bool,
}

impl Default for Features {
    fn default() -> Self {
        Features {
            testplan: true,
            enhanced_testplan: false,
            batched: true,
            pruning: true,
        }
    }
}

impl Features {
    pub const NONE: Features = Features {
        testplan: false,
        enhanced_testplan: false,
        batched: false,
        pruning: false,
    };

    /// `baseline` with every feature off, `default` for the default set,
    /// `enhanced` with all four on, `custom` otherwise.
    pub fn label(&self) -> &'static str {
        if *self == Features::NONE {
            "baseline"
        } else if *self == Features::default() {
            "default"
        } else if self.testplan && self.enhanced_testplan && self.batched && self.pruning {
            "enhanced"
        } else {
            "custom"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub max_iterations: usize,
    pub num_conversations: usize,
    pub num_random_seeds: usize,
    pub batch_size: usize,
    pub token_budget: usize,
    pub features: Features,
    pub rng_seed: u64,
    /// Fixed first simulation seed; drawn from the conversation stream when unset.
    pub base_seed: Option<u64>,
    pub decode_retries: usize,
    pub fix_attempts: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub sim_timeout_s: u64,
    /// Run conversations on separate threads.
    pub parallel: bool,
    pub template: TemplateOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SamplingConfig::default();
        RunConfig {
            max_iterations: 20,
            num_conversations: 5,
            num_random_seeds: 20,
            batch_size: 5,
            token_budget: 15_000,
            features: Features::default(),
            rng_seed: 0,
            base_seed: None,
            decode_retries: 2,
            fix_attempts: 3,
            temperature: s.temperature,
            top_p: s.top_p,
            sim_timeout_s: 300,
            parallel: true,
            template: TemplateOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid run configuration: {0}")]
pub struct ConfigError(pub String);

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let counts = [
            ("max_iterations", self.max_iterations),
            ("num_conversations", self.num_conversations),
            ("num_random_seeds", self.num_random_seeds),
            ("batch_size", self.batch_size),
            ("token_budget", self.token_budget),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError(format!("{name} must be at least 1")));
        }
        if self.features.enhanced_testplan && !self.features.testplan {
            return Err(ConfigError(
                "enhanced testplan requires the testplan feature".into(),
            ));
        }
        if self.sim_timeout_s == 0 {
            return Err(ConfigError("sim_timeout_s must be at least 1".into()));
        }
        self.sampling(1).validate().map_err(ConfigError)?;
        if self.template.clock_period_units == 0 {
            return Err(ConfigError("clock period must be positive".into()));
        }
        Ok(())
    }

    /// Candidates per generation: `batch_size` when batching, else 1.
    pub fn candidates_per_generation(&self) -> usize {
        if self.features.batched {
            self.batch_size
        } else {
            1
        }
    }

    pub fn sampling(&self, n: usize) -> SamplingConfig {
        SamplingConfig {
            temperature: self.temperature,
            top_p: self.top_p,
            num_candidates: n,
        }
    }

    pub fn is_one_shot(&self) -> bool {
        self.max_iterations == 1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub decode: u32,
    pub compile: u32,
    pub elaboration: u32,
    pub simulation: u32,
    pub timeout: u32,
}

impl ErrorCounts {
    pub fn record(&mut self, status: SimStatus) {
        match status {
            SimStatus::Success => {}
            SimStatus::CompileError => self.compile += 1,
            SimStatus::ElaborationError => self.elaboration += 1,
            SimStatus::SimulationError => self.simulation += 1,
            SimStatus::Timeout => self.timeout += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.decode + self.compile + self.elaboration + self.simulation + self.timeout
    }

    pub fn add(&mut self, o: &ErrorCounts) {
        self.decode += o.decode;
        self.compile += o.compile;
        self.elaboration += o.elaboration;
        self.simulation += o.simulation;
        self.timeout += o.timeout;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub testcase_name: String,
    pub error_counts: ErrorCounts,
    pub achieved_percent: f64,
    pub merged_percent: f64,
    pub tokens_used: u64,
    pub runtime_s: f64,
    pub target_module: Option<String>,
    /// Which of the batch was kept; None when no candidate succeeded.
    pub selected_candidate: Option<usize>,
    /// Messages dropped by context pruning after this iteration.
    pub pruned_messages: usize,
}

/// Files kept for one simulated testcase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    pub testcase: Option<String>,
    pub testbench: Option<String>,
    pub sim_log: Option<String>,
    pub coverage: Option<CoverageMap>,
}

/// One enhanced-testplan feature testcase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub index: usize,
    pub feature: String,
    pub testcase_name: String,
    pub error_counts: ErrorCounts,
    pub achieved_percent: f64,
    pub merged_percent: f64,
    pub tokens_used: u64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    FullCoverage,
    IterationBudget,
    FatalError,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::FullCoverage => "FullCoverage",
            StopReason::IterationBudget => "IterationBudget",
            StopReason::FatalError => "FatalError",
        })
    }
}

/// Success count among the first batch of initial-testcase candidates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateStats {
    pub generated: usize,
    pub succeeded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversationResult {
    pub index: usize,
    pub id: String,
    pub records: Vec<IterationRecord>,
    pub artifacts: Vec<Artifacts>,
    pub final_merged: Option<CoverageMap>,
    pub stop_reason: StopReason,
    pub fatal_error: Option<String>,
    pub testplan: Option<Testplan>,
    pub features: Vec<FeatureRecord>,
    pub feature_artifacts: Vec<Artifacts>,
    pub phase1_candidates: CandidateStats,
    pub usage: UsageStats,
    pub sim_runtime_s: f64,
    pub base_seed: u64,
    pub messages: Vec<Message>,
}

impl ConversationResult {
    pub fn final_percent(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.merged_percent)
    }

    pub fn error_totals(&self) -> ErrorCounts {
        let mut t = ErrorCounts::default();
        for r in &self.records {
            t.add(&r.error_counts);
        }
        for f in &self.features {
            t.add(&f.error_counts);
        }
        t
    }
}

/// Groups hits by module for convenience in reports.
pub fn per_module_scores(map: &CoverageMap) -> BTreeMap<String, (usize, usize)> {
    let mut out: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (k, h) in map.entries() {
        let e = out.entry(k.module.clone()).or_default();
        e.1 += 1;
        if h > 0 {
            e.0 += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(
            (
                c.max_iterations,
                c.num_conversations,
                c.num_random_seeds,
                c.batch_size,
                c.token_budget,
                c.decode_retries
            ),
            (20, 5, 20, 5, 15_000, 2)
        );
        assert_eq!(c.fix_attempts, 3);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn enhanced_requires_testplan() {
        let mut c = RunConfig {
            features: Features {
                testplan: false,
                enhanced_testplan: true,
                ..Features::NONE
            },
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        c.features.testplan = true;
        assert!(c.validate().is_ok());
        c.num_random_seeds = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(Features::NONE.label(), "baseline");
        assert_eq!(Features::default().label(), "default");
        assert_eq!(
            Features {
                testplan: true,
                enhanced_testplan: true,
                batched: true,
                pruning: true
            }
            .label(),
            "enhanced"
        );
        assert_eq!(
            Features {
                batched: true,
                ..Features::NONE
            }
            .label(),
            "custom"
        );
    }

    #[test]
    fn config_toml_round_trip() {
        let c = RunConfig {
            base_seed: Some(3),
            ..RunConfig::default()
        };
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), c);
        let partial: RunConfig =
            toml::from_str("max_iterations = 1\n[features]\nbatched = false\n").unwrap();
        assert_eq!(partial.max_iterations, 1);
        assert!(!partial.features.batched && partial.features.testplan);
    }
}
