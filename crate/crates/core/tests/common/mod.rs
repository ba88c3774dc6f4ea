#![allow(dead_code)]

use std::path::{Path, PathBuf};

use covclose::coverage::{merge, score};
use covclose::engine::{
    run_conversations, EngineContext, Features, RunConfig, RunResult, StopReason,
};
use covclose::hdl::{load_sources, DesignModel};
use covclose::llm::{
    conversation_key, default_estimator, Completion, Conversation, Exchange, LlmBackend, LlmError,
    ReplayBackend, SamplingConfig, Transcript, UsageStats,
};
use covclose::prompt::PromptTemplates;
use covclose::sim::{MockBackend, MockOutcome, MockScenario, RuleMatch, SimStatus};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn design_dir(name: &str) -> PathBuf {
    repo_root().join("designs").join(name)
}

pub fn load_design(name: &str, top: &str) -> DesignModel {
    let dir = design_dir(name);
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "v" || x == "sv"))
        .collect();
    files.sort();
    let spec = std::fs::read_to_string(dir.join("spec.md")).unwrap();
    load_sources(&files)
        .unwrap()
        .with_top(top)
        .unwrap()
        .with_spec(spec)
}

pub fn toy() -> DesignModel {
    load_design("toy_counter", "toy_counter")
}

pub const TOY_LINES: [usize; 5] = [9, 11, 12, 13, 14];

/// A completion in the required output format.
pub fn tc(name: &str, code: &str) -> String {
    serde_json::json!({ "name": name, "code": code }).to_string()
}

pub fn answer(contains: &str, candidates: Vec<String>) -> Exchange {
    Exchange {
        contains: Some(contains.into()),
        wall_time_s: Some(1.0),
        ..Exchange::answering(candidates)
    }
}

pub fn same(n: usize, c: &str) -> Vec<String> {
    vec![c.to_owned(); n]
}

pub fn hit_rule(marker: &str, module: &str, lines: &[usize]) -> (RuleMatch, MockOutcome) {
    let mut o = MockOutcome::success([(module, lines.to_vec())]);
    o.runtime_s = 0.5;
    (
        RuleMatch {
            contains: Some(marker.into()),
            ..Default::default()
        },
        o,
    )
}

pub fn fail_rule(marker: &str, status: SimStatus, log: &str) -> (RuleMatch, MockOutcome) {
    let mut o = MockOutcome::failure(status, log);
    o.runtime_s = 0.5;
    (
        RuleMatch {
            contains: Some(marker.into()),
            ..Default::default()
        },
        o,
    )
}

pub fn scenario(
    module: &str,
    lines: &[usize],
    rules: Vec<(RuleMatch, MockOutcome)>,
) -> MockScenario {
    let mut s = MockScenario::new([(module, lines.to_vec())]);
    for (w, t) in rules {
        s = s.rule(w, t);
    }
    s
}

pub const INITIAL: &str = "constrained-random testcase";

pub fn closure_at(percent: &str) -> String {
    format!("Current line coverage: {percent}%")
}

/// Toy-counter scenario reaching 100% at iteration 3.
pub fn scenario_a(n: usize) -> (MockScenario, Transcript) {
    let sim = scenario(
        "toy_counter",
        &TOY_LINES,
        vec![
            hit_rule("// init", "toy_counter", &[9, 11, 12]),
            hit_rule("// enable", "toy_counter", &[13]),
            hit_rule("// wrap", "toy_counter", &[14]),
        ],
    );
    let llm = Transcript {
        exchanges: vec![
            answer(INITIAL, same(n, &tc("reset_run", "// init\nrst_n = 0;"))),
            answer(
                &closure_at("60.00"),
                same(n, &tc("enable_run", "// enable\nen = 1;")),
            ),
            answer(
                &closure_at("80.00"),
                same(n, &tc("wrap_run", "// wrap\nrepeat (16) @(posedge clk);")),
            ),
        ],
    };
    (sim, llm)
}

pub fn base_config(features: Features) -> RunConfig {
    RunConfig {
        features,
        num_conversations: 1,
        num_random_seeds: 3,
        base_seed: Some(1),
        parallel: false,
        ..RunConfig::default()
    }
}

pub fn run(
    model: &DesignModel,
    config: &RunConfig,
    sim: MockScenario,
    llm: Transcript,
    workdir: &Path,
) -> RunResult {
    let sim = MockBackend::new(sim).unwrap();
    let llm = ReplayBackend::new(llm);
    let templates = PromptTemplates::default();
    let ctx = EngineContext {
        model,
        config,
        llm: &llm,
        sim: &sim,
        templates: &templates,
        estimator: default_estimator(),
        workdir: workdir.to_path_buf(),
    };
    run_conversations(&ctx)
}

pub fn scenario_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/scenarios")
        .join(name)
}

/// Loads a bundled scenario manifest with its output redirected to `out`.
pub fn manifest(name: &str, out: &Path) -> covclose::report::RunManifest {
    let path = scenario_dir(name).join("manifest.toml");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut m =
        covclose::report::RunManifest::from_toml_str(&text, path.parent().unwrap()).unwrap();
    m.output_dir = out.to_path_buf();
    m
}

pub fn run_scenario(m: &covclose::report::RunManifest) -> covclose::app::RunOutcome {
    covclose::app::run_manifest(m, &covclose::app::RunOptions::default()).unwrap()
}

/// Answers with testcases drawn from a fixed pool; the draw depends only on
/// the conversation contents, so answers do not depend on thread timing.
pub struct PoolBackend {
    pub pool: Vec<String>,
    pub salt: u64,
}

impl LlmBackend for PoolBackend {
    fn name(&self) -> &str {
        "pool"
    }

    fn send(&self, conv: &Conversation, sampling: &SamplingConfig) -> Result<Completion, LlmError> {
        let digest = Sha256::digest(format!(
            "{}:{}:{}",
            self.salt,
            conv.id(),
            conversation_key(conv.messages())
        ));
        let mut rng = ChaCha8Rng::from_seed(digest.into());
        let candidates: Vec<String> = (0..sampling.num_candidates)
            .map(|_| self.pool[rng.random_range(0..self.pool.len())].clone())
            .collect();
        let est = conv.estimator();
        let usage = UsageStats {
            prompt_tokens: conv.cumulative_tokens() as u64,
            completion_tokens: candidates.iter().map(|c| est.count(c) as u64).sum(),
            wall_time_s: 0.5,
        };
        Ok(Completion { candidates, usage })
    }
}

pub fn random_setup(rng: &mut ChaCha8Rng) -> (MockScenario, PoolBackend) {
    let markers = rng.random_range(2..8);
    let mut sim = MockScenario::new([("toy_counter", TOY_LINES.to_vec())]);
    let mut pool = Vec::new();
    for k in 0..markers {
        let marker = format!("// m{k}\n");
        let outcome = match rng.random_range(0..10) {
            0 => MockOutcome::failure(SimStatus::CompileError, "%Error: tb.sv:3:1: syntax error"),
            1 => MockOutcome::failure(SimStatus::SimulationError, "%Error: assertion failed"),
            _ => {
                let lines: Vec<usize> = TOY_LINES
                    .iter()
                    .copied()
                    .filter(|_| rng.random_bool(0.35))
                    .collect();
                MockOutcome::success([("toy_counter", lines)])
            }
        };
        sim = sim.rule(
            RuleMatch {
                contains: Some(marker.clone()),
                ..Default::default()
            },
            outcome,
        );
        pool.push(tc(&format!("t{k}"), &format!("{marker}#10;")));
    }
    if rng.random_bool(0.5) {
        pool.push("no testcase here".into());
    }
    (
        sim,
        PoolBackend {
            pool,
            salt: rng.random(),
        },
    )
}

pub fn run_pool(
    model: &DesignModel,
    config: &RunConfig,
    sim: MockScenario,
    llm: &PoolBackend,
    dir: &Path,
) -> RunResult {
    let sim = MockBackend::new(sim).unwrap();
    let templates = PromptTemplates::default();
    let ctx = EngineContext {
        model,
        config,
        llm,
        sim: &sim,
        templates: &templates,
        estimator: default_estimator(),
        workdir: dir.to_path_buf(),
    };
    run_conversations(&ctx)
}

/// Panics unless merged coverage is nondecreasing in every completed conversation.
pub fn check_monotone(res: &RunResult) {
    for c in &res.conversations {
        if c.stop_reason == StopReason::FatalError {
            continue;
        }
        let mut prev = 0.0;
        let mut merged = None;
        for (r, a) in c.records.iter().zip(&c.artifacts) {
            assert!(
                r.merged_percent >= prev,
                "merged coverage dropped: {} -> {}",
                prev,
                r.merged_percent
            );
            assert!(r.merged_percent >= r.achieved_percent);
            prev = r.merged_percent;
            if let Some(cov) = &a.coverage {
                merged = Some(match merged {
                    None => cov.clone(),
                    Some(m) => merge(&m, cov).unwrap(),
                });
            }
        }
        let fin = c.final_merged.as_ref().unwrap();
        assert_eq!(score(fin).unwrap().percent(), c.final_percent());
        if let Some(m) = merged {
            assert!(m.covered_lines().is_subset(&fin.covered_lines()));
        }
        if c.stop_reason == StopReason::FullCoverage {
            assert_eq!(c.final_percent(), 100.0);
        } else {
            assert_eq!(c.records.len(), 20);
        }
    }
}
