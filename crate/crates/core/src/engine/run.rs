//! Running several independent conversations and aggregating them.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::conversation::ConversationState;
use super::{ConversationResult, RunConfig, StopReason};
use crate::coverage::{merge_all, score, CoverageMap};
use crate::hdl::DesignModel;
use crate::llm::{LlmBackend, SharedEstimator};
use crate::prompt::PromptTemplates;
use crate::sim::SimBackend;

/// Everything a conversation needs; shared read-only between conversations.
pub struct EngineContext<'a> {
    pub model: &'a DesignModel,
    pub config: &'a RunConfig,
    pub llm: &'a dyn LlmBackend,
    pub sim: &'a dyn SimBackend,
    pub templates: &'a PromptTemplates,
    pub estimator: SharedEstimator,
    /// Scratch root; conversation `i` works under `conv_i/`.
    pub workdir: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub conversations: usize,
    pub completed: usize,
    pub fatal: usize,
    /// Mean of per-conversation final merged coverage, completed conversations only.
    pub mean_final_percent: Option<f64>,
    /// Coverage of the union of every completed conversation's merged map.
    pub cross_merged_percent: Option<f64>,
    pub final_percents: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub conversations: Vec<ConversationResult>,
    pub aggregate: Aggregate,
    pub cross_merged: Option<CoverageMap>,
}

fn run_one(ctx: &EngineContext<'_>, index: usize) -> ConversationResult {
    match ConversationState::new(ctx, index) {
        Ok(st) => st.run(),
        Err(e) => ConversationResult {
            index,
            id: format!("conv_{index}"),
            records: Vec::new(),
            artifacts: Vec::new(),
            final_merged: None,
            stop_reason: StopReason::FatalError,
            fatal_error: Some(e),
            testplan: None,
            features: Vec::new(),
            feature_artifacts: Vec::new(),
            phase1_candidates: Default::default(),
            usage: Default::default(),
            sim_runtime_s: 0.0,
            base_seed: ctx.config.base_seed.unwrap_or(0),
            messages: Vec::new(),
        },
    }
}

/// Runs `config.num_conversations` conversations; results are in index order.
pub fn run_conversations(ctx: &EngineContext<'_>) -> RunResult {
    let n = ctx.config.num_conversations;
    let conversations: Vec<ConversationResult> = if ctx.config.parallel && n > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..n).map(|i| s.spawn(move || run_one(ctx, i))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("conversation thread panicked"))
                .collect()
        })
    } else {
        (0..n).map(|i| run_one(ctx, i)).collect()
    };
    let (aggregate, cross_merged) = aggregate(&conversations);
    RunResult {
        conversations,
        aggregate,
        cross_merged,
    }
}

pub fn aggregate(results: &[ConversationResult]) -> (Aggregate, Option<CoverageMap>) {
    let done: Vec<&ConversationResult> = results
        .iter()
        .filter(|r| r.stop_reason != StopReason::FatalError)
        .collect();
    let finals: Vec<(usize, usize)> = done
        .iter()
        .filter_map(|r| r.final_merged.as_ref().and_then(|m| score(m).ok()))
        .map(|s| (s.covered, s.total))
        .collect();
    let mean_final_percent = (!finals.is_empty()).then(|| {
        let mean: f64 = finals
            .iter()
            .map(|(c, t)| *c as f64 / *t as f64)
            .sum::<f64>()
            / finals.len() as f64;
        (mean * 10_000.0).round() / 100.0
    });
    let cross = merge_all(done.iter().filter_map(|r| r.final_merged.as_ref()))
        .ok()
        .flatten();
    let agg = Aggregate {
        conversations: results.len(),
        completed: done.len(),
        fatal: results.len() - done.len(),
        mean_final_percent,
        cross_merged_percent: cross
            .as_ref()
            .and_then(|m| score(m).ok())
            .map(|s| s.percent()),
        final_percents: done.iter().map(|r| r.final_percent()).collect(),
    };
    (agg, cross)
}
