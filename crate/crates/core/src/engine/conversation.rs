//! One conversation's state machine.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::prune::{prune_context, PruneError};
use super::run::EngineContext;
use super::select::{batched_select, select_target_module};
use super::{
    Artifacts, CandidateStats, ConversationResult, ErrorCounts, FeatureRecord, IterationRecord,
    StopReason,
};
use crate::coverage::{
    annotate, holes_by_module, merge, parse_artifact, score, CoverageError, CoverageMap,
    CoverageScore,
};
use crate::hdl::{extract_top_ports, module_source, HdlError, PortDecl};
use crate::llm::{Conversation, LlmError, Role, SegmentTag, UsageStats};
use crate::prompt::{decode_testcase, decode_testplan, DecodeResult, Prompt, Testplan};
use crate::sim::{SimError, SimOutcome, SimRequest, SimStatus};
use crate::tbgen::{self, TbGenError, TestbenchTemplate, Testcase, TestcaseOrigin};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Hdl(#[from] HdlError),
    #[error(transparent)]
    Testbench(#[from] TbGenError),
    #[error("{0}")]
    Exhausted(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: std::io::Error) -> EngineError {
    EngineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// A simulated testcase.
#[derive(Debug, Clone)]
struct SimRun {
    outcome: SimOutcome,
    map: Option<CoverageMap>,
    testbench: String,
    log: String,
}

#[derive(Debug, Clone)]
struct Chosen {
    testcase: Testcase,
    candidate: usize,
    run: SimRun,
}

/// Result of one generate → simulate (→ fix) cycle.
#[derive(Debug, Default)]
struct Step {
    chosen: Option<Chosen>,
    last: Artifacts,
    counts: ErrorCounts,
    usage: UsageStats,
    sim_runtime_s: f64,
    first_batch: Option<CandidateStats>,
}

impl Step {
    fn runtime_s(&self) -> f64 {
        self.usage.wall_time_s + self.sim_runtime_s
    }
}

/// The initial constrained-random testcase and its seed-merged coverage.
#[derive(Debug, Clone)]
pub struct Phase1Outcome {
    pub conversation: Conversation,
    pub coverage: CoverageMap,
    pub record: IterationRecord,
}

pub struct ConversationState<'a> {
    ctx: &'a EngineContext<'a>,
    pub index: usize,
    pub conv: Conversation,
    rng: ChaCha8Rng,
    base_seed: u64,
    template: TestbenchTemplate,
    ports: Vec<PortDecl>,
    workdir: PathBuf,
    invocation: u64,
    pub merged: Option<CoverageMap>,
    usage: UsageStats,
    sim_runtime_s: f64,
    records: Vec<IterationRecord>,
    artifacts: Vec<Artifacts>,
    testplan: Option<Testplan>,
    features: Vec<FeatureRecord>,
    feature_artifacts: Vec<Artifacts>,
    phase1_candidates: CandidateStats,
}

impl<'a> ConversationState<'a> {
    pub fn new(ctx: &'a EngineContext<'a>, index: usize) -> Result<Self, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.rng_seed);
        rng.set_stream(index as u64);
        let base_seed = match ctx.config.base_seed {
            Some(s) => s,
            None => rng.random_range(0..1u64 << 31),
        };
        let ports = extract_top_ports(ctx.model).map_err(|e| e.to_string())?;
        let template = tbgen::generate_template(&ports, &ctx.model.top, ctx.config.template)
            .map_err(|e| e.to_string())?;
        let id = format!("conv_{index}");
        let system = ctx.templates.build_system_prompt(None);
        let conv = Conversation::new(id.clone(), &system.text, ctx.estimator.clone());
        Ok(ConversationState {
            ctx,
            index,
            conv,
            rng,
            base_seed,
            template,
            ports,
            workdir: ctx.workdir.join(id),
            invocation: 0,
            merged: None,
            usage: UsageStats::default(),
            sim_runtime_s: 0.0,
            records: Vec::new(),
            artifacts: Vec::new(),
            testplan: None,
            features: Vec::new(),
            feature_artifacts: Vec::new(),
            phase1_candidates: CandidateStats::default(),
        })
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    fn push(&mut self, p: Prompt) {
        self.conv.push(Role::User, p.text, p.tag);
    }

    fn send(&mut self, n: usize, step_usage: &mut UsageStats) -> Result<Vec<String>, EngineError> {
        let out = self
            .ctx
            .llm
            .send(&self.conv, &self.ctx.config.sampling(n))?;
        *step_usage += out.usage;
        self.usage += out.usage;
        Ok(out.candidates)
    }

    fn merged_score(&self) -> Option<CoverageScore> {
        self.merged.as_ref().and_then(|m| score(m).ok())
    }

    fn merged_percent(&self) -> f64 {
        self.merged_score().map_or(0.0, |s| s.percent())
    }

    fn absorb(&mut self, map: &CoverageMap) -> Result<(), EngineError> {
        self.merged = Some(match &self.merged {
            None => map.clone(),
            Some(m) => merge(m, map)?,
        });
        Ok(())
    }

    fn simulate(
        &mut self,
        stage: &str,
        label: &str,
        tc: &Testcase,
        seed: u64,
    ) -> Result<SimRun, EngineError> {
        let ws = self.workdir.join(stage).join(label);
        std::fs::create_dir_all(&ws).map_err(|e| io_err(&ws, e))?;
        let testbench = tbgen::splice(&self.template, tc)?;
        let tb_path = ws.join("tb.sv");
        std::fs::write(&tb_path, &testbench).map_err(|e| io_err(&tb_path, e))?;
        let model = self.ctx.model;
        let req = SimRequest {
            design_files: model.files().iter().map(|f| f.path.clone()).collect(),
            testbench_file: tb_path,
            seed,
            coverage_enabled: true,
            workspace: ws,
            wall_timeout_s: self.ctx.config.sim_timeout_s,
            invocation: self.invocation,
            conversation: self.conv.id().to_owned(),
        };
        self.invocation += 1;
        let outcome = self.ctx.sim.run(&req)?;
        self.sim_runtime_s += outcome.runtime_s;
        let log = outcome
            .log_path
            .as_ref()
            .and_then(|p| std::fs::read_to_string(p).ok())
            .unwrap_or_else(|| outcome.log_excerpt.clone());
        let map = match (&outcome.status, &outcome.coverage_artifact) {
            (SimStatus::Success, Some(path)) => Some(parse_artifact(path, model)?),
            _ => None,
        };
        if !outcome.recognized {
            log::warn!(
                "{}: unrecognized simulator failure in {stage}/{label}",
                self.conv.id()
            );
        }
        Ok(SimRun {
            outcome,
            map,
            testbench,
            log,
        })
    }

    /// Asks for a testcase, simulates the candidates and runs the fix loop.
    fn generate(
        &mut self,
        tag: SegmentTag,
        stage: &str,
        origin: TestcaseOrigin,
        index: usize,
    ) -> Result<Step, EngineError> {
        let cfg = self.ctx.config;
        let n = cfg.candidates_per_generation();
        let seed = self.base_seed;
        let mut step = Step::default();
        for fix in 0..=cfg.fix_attempts {
            let mut decoded: Vec<(usize, String, Testcase)> = Vec::new();
            let mut round = 0;
            loop {
                let mut u = UsageStats::default();
                let raws = self.send(n, &mut u)?;
                step.usage += u;
                let mut reason = None;
                for (i, raw) in raws.iter().enumerate() {
                    match decode_testcase(raw) {
                        DecodeResult::Ok(mut tc) => {
                            tc.origin = origin;
                            tc.iteration_index = index;
                            decoded.push((i, raw.clone(), tc));
                        }
                        DecodeResult::DecodeError(r) => {
                            step.counts.decode += 1;
                            reason.get_or_insert(r);
                        }
                    }
                }
                if fix == 0 && round == 0 && decoded.is_empty() {
                    step.first_batch = Some(CandidateStats {
                        generated: n,
                        succeeded: 0,
                    });
                }
                if !decoded.is_empty() {
                    break;
                }
                if round == cfg.decode_retries {
                    step.last.testcase = raws.first().cloned();
                    return Ok(step);
                }
                self.conv
                    .push(Role::Assistant, raws[0].clone(), SegmentTag::ErrorFix);
                let reminder = self
                    .ctx
                    .templates
                    .build_format_reminder(reason.as_deref().unwrap_or("unknown"));
                self.push(reminder);
                round += 1;
            }

            let mut scores: Vec<Option<CoverageScore>> = vec![None; n];
            let mut runs: Vec<Option<SimRun>> = vec![None; n];
            for (i, _, tc) in &decoded {
                let run = self.simulate(stage, &format!("a{fix}_c{i}"), tc, seed)?;
                step.counts.record(run.outcome.status);
                step.sim_runtime_s += run.outcome.runtime_s;
                if let Some(m) = &run.map {
                    scores[*i] = Some(score(m)?);
                }
                runs[*i] = Some(run);
            }
            if step.first_batch.is_none() {
                let succeeded = scores.iter().filter(|s| s.is_some()).count();
                step.first_batch = Some(CandidateStats {
                    generated: n,
                    succeeded,
                });
            }

            match batched_select(&scores) {
                Ok(i) => {
                    let (_, raw, tc) = decoded
                        .into_iter()
                        .find(|(j, _, _)| *j == i)
                        .expect("selected decoded");
                    let run = runs[i].take().expect("simulated");
                    self.conv.push(Role::Assistant, raw, tag);
                    step.last = artifacts(&tc, &run);
                    step.chosen = Some(Chosen {
                        testcase: tc,
                        candidate: i,
                        run,
                    });
                    return Ok(step);
                }
                Err(_) => {
                    let (i, raw, tc) = decoded.into_iter().next().expect("nonempty");
                    let run = runs[i].take().expect("simulated");
                    step.last = artifacts(&tc, &run);
                    if fix == cfg.fix_attempts {
                        return Ok(step);
                    }
                    self.conv.push(Role::Assistant, raw, SegmentTag::ErrorFix);
                    let p = self
                        .ctx
                        .templates
                        .build_error_prompt(run.outcome.status, &run.outcome.log_excerpt);
                    self.push(p);
                }
            }
        }
        unreachable!("fix loop returns")
    }

    /// Testplan generation and, in enhanced mode, the per-feature testcases.
    pub fn testplan_phase(&mut self) -> Result<(), EngineError> {
        let ctx = self.ctx;
        let p =
            ctx.templates
                .build_testplan_prompt(&ctx.model.spec_text, &ctx.model.top, &self.ports);
        self.push(p);
        let mut decode_errors = 0u32;
        let mut plan = None;
        for round in 0..=ctx.config.decode_retries {
            let mut u = UsageStats::default();
            let raw = self.send(1, &mut u)?.remove(0);
            match decode_testplan(&raw) {
                Ok(tp) => {
                    self.conv.push(Role::Assistant, raw, SegmentTag::Testplan);
                    plan = Some(tp);
                    break;
                }
                Err(reason) => {
                    decode_errors += 1;
                    if round == ctx.config.decode_retries {
                        return Err(EngineError::Exhausted(format!(
                            "testplan could not be decoded after {decode_errors} attempts: {reason}"
                        )));
                    }
                    self.conv.push(Role::Assistant, raw, SegmentTag::ErrorFix);
                    let p = ctx.templates.build_testplan_reminder(&reason);
                    self.push(p);
                }
            }
        }
        let plan = plan.expect("decoded");
        self.testplan = Some(plan.clone());
        if decode_errors > 0 {
            log::info!(
                "{}: testplan decoded after {decode_errors} decode errors",
                self.conv.id()
            );
        }
        if !ctx.config.features.enhanced_testplan {
            return Ok(());
        }
        for (k, item) in plan.items.iter().enumerate() {
            let p = ctx.templates.build_feature_prompt(k + 1, item);
            self.push(p);
            let step = self.generate(
                SegmentTag::Testplan,
                &format!("testplan/feature_{}", k + 1),
                TestcaseOrigin::TestplanFeature,
                k + 1,
            )?;
            let mut achieved = 0.0;
            let mut name = String::new();
            if let Some(c) = &step.chosen {
                let map = c.run.map.as_ref().expect("success carries coverage");
                achieved = score(map)?.percent();
                name = c.testcase.name.clone();
                self.absorb(map)?;
            }
            self.features.push(FeatureRecord {
                index: k + 1,
                feature: item.feature.clone(),
                testcase_name: name,
                error_counts: step.counts,
                achieved_percent: achieved,
                merged_percent: self.merged_percent(),
                tokens_used: step.usage.total_tokens(),
                runtime_s: step.runtime_s(),
            });
            self.feature_artifacts.push(step.last);
        }
        Ok(())
    }

    /// Iteration 1: the initial testcase simulated over every seed.
    pub fn phase1(&mut self) -> Result<IterationRecord, EngineError> {
        let ctx = self.ctx;
        let p =
            ctx.templates
                .build_initial_prompt(&ctx.model.spec_text, &ctx.model.top, &self.ports);
        self.push(p);
        let mut step =
            self.generate(SegmentTag::Core, "iter_1", TestcaseOrigin::InitialRandom, 1)?;
        self.phase1_candidates = step.first_batch.unwrap_or_default();
        let Some(chosen) = step.chosen.take() else {
            return Err(EngineError::Exhausted(format!(
                "no usable initial testcase after retries ({} decode, {} simulator errors)",
                step.counts.decode,
                step.counts.total() - step.counts.decode
            )));
        };

        let mut seed_map = chosen.run.map.clone().expect("success carries coverage");
        let mut log = format!("== seed {} ==\n{}", self.base_seed, chosen.run.log);
        for i in 1..ctx.config.num_random_seeds {
            let seed = self.base_seed + i as u64;
            let run = self.simulate("iter_1", &format!("seed_{i}"), &chosen.testcase, seed)?;
            step.counts.record(run.outcome.status);
            step.sim_runtime_s += run.outcome.runtime_s;
            log.push_str(&format!("== seed {seed} ==\n{}", run.log));
            if let Some(m) = &run.map {
                seed_map = merge(&seed_map, m)?;
            }
        }
        self.absorb(&seed_map)?;
        let record = IterationRecord {
            index: 1,
            testcase_name: chosen.testcase.name.clone(),
            error_counts: step.counts,
            achieved_percent: score(&seed_map)?.percent(),
            merged_percent: self.merged_percent(),
            tokens_used: step.usage.total_tokens(),
            runtime_s: step.runtime_s(),
            target_module: None,
            selected_candidate: Some(chosen.candidate),
            pruned_messages: 0,
        };
        self.records.push(record.clone());
        self.artifacts.push(Artifacts {
            testcase: Some(chosen.testcase.body.clone()),
            testbench: Some(chosen.run.testbench.clone()),
            sim_log: Some(log),
            coverage: Some(seed_map),
        });
        Ok(record)
    }

    /// One closure iteration targeting a randomly chosen module with holes.
    pub fn closure_iteration(&mut self, index: usize) -> Result<IterationRecord, EngineError> {
        let ctx = self.ctx;
        let merged = self.merged.clone().expect("phase 1 produced coverage");
        let holes = holes_by_module(&merged, ctx.model);
        let target = select_target_module(&holes, &mut self.rng)
            .map_err(|e| EngineError::Exhausted(format!("iteration {index}: {e}")))?;
        let source = module_source(ctx.model, &target)?;
        let annotated = annotate(&source, &holes[&target])?;
        let p =
            ctx.templates
                .build_closure_prompt(&target, &annotated.to_string(), &score(&merged)?);
        self.push(p);

        let stage = format!("iter_{index}");
        let step = self.generate(
            SegmentTag::CoverageFeedback,
            &stage,
            TestcaseOrigin::ClosureIteration,
            index,
        )?;
        let (name, achieved, selected) = match &step.chosen {
            Some(c) => {
                let map = c.run.map.as_ref().expect("success carries coverage");
                self.absorb(map)?;
                (
                    c.testcase.name.clone(),
                    score(map)?.percent(),
                    Some(c.candidate),
                )
            }
            None => (String::new(), 0.0, None),
        };

        let mut pruned = 0;
        if ctx.config.features.pruning {
            match prune_context(&mut self.conv, ctx.config.token_budget) {
                Ok(r) => pruned = r.removed_turns.len(),
                Err(e @ PruneError::BudgetInfeasible { .. }) => {
                    log::warn!("{}: {e}; continuing unpruned", self.conv.id())
                }
            }
        }
        let record = IterationRecord {
            index,
            testcase_name: name,
            error_counts: step.counts,
            achieved_percent: achieved,
            merged_percent: self.merged_percent(),
            tokens_used: step.usage.total_tokens(),
            runtime_s: step.runtime_s(),
            target_module: Some(target),
            selected_candidate: selected,
            pruned_messages: pruned,
        };
        self.records.push(record.clone());
        self.artifacts.push(step.last);
        Ok(record)
    }

    fn is_full(&self) -> bool {
        self.merged_score().is_some_and(|s| s.is_full())
    }

    fn drive(&mut self) -> Result<StopReason, EngineError> {
        let cfg = self.ctx.config;
        if cfg.features.testplan {
            self.testplan_phase()?;
        }
        self.phase1()?;
        if self.is_full() {
            return Ok(StopReason::FullCoverage);
        }
        for j in 2..=cfg.max_iterations {
            if j == 2 {
                let system = self
                    .ctx
                    .templates
                    .build_system_prompt(Some(&self.ctx.model.design_code()));
                self.conv.replace_system_prompt(system.text);
            }
            self.closure_iteration(j)?;
            if self.is_full() {
                return Ok(StopReason::FullCoverage);
            }
        }
        Ok(StopReason::IterationBudget)
    }

    /// Runs to a stop condition and packages the result.
    pub fn run(mut self) -> ConversationResult {
        let (stop_reason, fatal_error) = match self.drive() {
            Ok(r) => (r, None),
            Err(e) => {
                log::error!("{}: {e}", self.conv.id());
                (StopReason::FatalError, Some(e.to_string()))
            }
        };
        ConversationResult {
            index: self.index,
            id: self.conv.id().to_owned(),
            records: self.records,
            artifacts: self.artifacts,
            final_merged: self.merged,
            stop_reason,
            fatal_error,
            testplan: self.testplan,
            features: self.features,
            feature_artifacts: self.feature_artifacts,
            phase1_candidates: self.phase1_candidates,
            usage: self.usage,
            sim_runtime_s: self.sim_runtime_s,
            base_seed: self.base_seed,
            messages: self.conv.messages().to_vec(),
        }
    }
}

fn artifacts(tc: &Testcase, run: &SimRun) -> Artifacts {
    Artifacts {
        testcase: Some(tc.body.clone()),
        testbench: Some(run.testbench.clone()),
        sim_log: Some(run.log.clone()),
        coverage: run.map.clone(),
    }
}

/// Phase 1 alone (preceded by the testplan phase when enabled) for conversation `index`.
pub fn run_phase1(ctx: &EngineContext<'_>, index: usize) -> Result<Phase1Outcome, String> {
    let mut st = ConversationState::new(ctx, index)?;
    if ctx.config.features.testplan {
        st.testplan_phase().map_err(|e| e.to_string())?;
    }
    let record = st.phase1().map_err(|e| e.to_string())?;
    Ok(Phase1Outcome {
        conversation: st.conv.clone(),
        coverage: st.merged.clone().expect("phase 1 coverage"),
        record,
    })
}

/// The testplan phase alone; returns the plan and the coverage of any feature testcases.
pub fn run_testplan_phase(
    ctx: &EngineContext<'_>,
    index: usize,
) -> Result<(Testplan, Option<CoverageMap>, Vec<FeatureRecord>), String> {
    let mut st = ConversationState::new(ctx, index)?;
    st.testplan_phase().map_err(|e| e.to_string())?;
    Ok((
        st.testplan.clone().expect("plan"),
        st.merged.clone(),
        st.features.clone(),
    ))
}
