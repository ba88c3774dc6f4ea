mod common;

use common::*;
use covclose::engine::{Features, StopReason};
use covclose::llm::{Role, SegmentTag, Transcript};
use covclose::sim::SimStatus;

#[test]
fn closes_toy_counter_at_iteration_three() {
    let model = toy();
    let (sim, llm) = scenario_a(1);
    let cfg = base_config(Features::NONE);
    let dir = tempfile::tempdir().unwrap();
    let res = run(&model, &cfg, sim, llm, dir.path());
    let c = &res.conversations[0];
    assert_eq!(
        c.stop_reason,
        StopReason::FullCoverage,
        "{:?}",
        c.fatal_error
    );
    let merged: Vec<f64> = c.records.iter().map(|r| r.merged_percent).collect();
    assert_eq!(merged, vec![60.0, 80.0, 100.0]);
    assert_eq!(c.records[1].target_module.as_deref(), Some("toy_counter"));
    assert_eq!(c.artifacts.len(), 3);
    assert!(c.artifacts[0]
        .sim_log
        .as_ref()
        .unwrap()
        .contains("== seed 3 =="));
    assert_eq!(res.aggregate.mean_final_percent, Some(100.0));
    // closure prompts come after the system prompt swap
    assert!(c.messages[0].content.contains("toy_counter"));
}

#[test]
fn stops_on_iteration_budget() {
    let model = toy();
    let (sim, mut llm) = scenario_a(1);
    llm.exchanges.truncate(2);
    llm.exchanges.push(answer(
        &closure_at("80.00"),
        same(1, &tc("idle", "// nothing")),
    ));
    let sim = sim.with_default(covclose::sim::MockOutcome::success([(
        "toy_counter",
        vec![],
    )]));
    let cfg = base_config(Features::NONE);
    let dir = tempfile::tempdir().unwrap();
    let c = &run(&model, &cfg, sim, llm, dir.path()).conversations[0];
    assert_eq!(c.stop_reason, StopReason::IterationBudget);
    assert_eq!(c.records.len(), 20);
    assert_eq!(c.final_percent(), 80.0);
    for w in c.records.windows(2) {
        assert!(w[1].merged_percent >= w[0].merged_percent);
    }
}

#[test]
fn decode_and_compile_errors_are_fixed_then_best_candidate_wins() {
    let model = toy();
    let n = 5;
    let sim = scenario(
        "toy_counter",
        &TOY_LINES,
        vec![
            fail_rule(
                "// broken",
                SimStatus::CompileError,
                "%Error: tb.sv:40:3: syntax error, unexpected ')'",
            ),
            hit_rule("// small", "toy_counter", &[9]),
            hit_rule("// big", "toy_counter", &[9, 11, 12, 13]),
            hit_rule("// mid", "toy_counter", &[9, 11]),
            hit_rule("// wrap", "toy_counter", &[14]),
        ],
    );
    let llm = Transcript {
        exchanges: vec![
            answer(INITIAL, same(n, "I think we should start with a reset.")),
            answer(
                "could not be decoded",
                same(n, &tc("broken", "// broken\nfoo(;")),
            ),
            answer(
                "compilation error",
                vec![
                    tc("c0", "// small"),
                    tc("c1", "// mid"),
                    tc("c2", "// big"),
                    "not json".into(),
                    tc("c4", "// broken"),
                ],
            ),
            answer(&closure_at("80.00"), same(n, &tc("wrap", "// wrap"))),
        ],
    };
    let cfg = base_config(Features {
        batched: true,
        ..Features::NONE
    });
    let dir = tempfile::tempdir().unwrap();
    let c = &run(&model, &cfg, sim, llm, dir.path()).conversations[0];
    assert_eq!(
        c.stop_reason,
        StopReason::FullCoverage,
        "{:?}",
        c.fatal_error
    );
    let r1 = &c.records[0];
    assert_eq!(r1.selected_candidate, Some(2));
    assert_eq!(r1.testcase_name, "c2");
    assert_eq!(r1.error_counts.decode, 6);
    assert_eq!(r1.error_counts.compile, 6);
    assert_eq!(c.phase1_candidates.succeeded, 0);
    let fix: Vec<_> = c
        .messages
        .iter()
        .filter(|m| m.segment_tag == SegmentTag::ErrorFix)
        .collect();
    assert_eq!(fix.len(), 4);
    assert!(fix
        .iter()
        .any(|m| m.role == Role::User && m.content.contains("syntax error")));
}

#[test]
fn phase1_exhaustion_is_fatal_and_recorded() {
    let model = toy();
    let sim = scenario("toy_counter", &TOY_LINES, vec![]);
    let llm = Transcript {
        exchanges: vec![answer("", same(1, "no code here"))],
    };
    let cfg = base_config(Features::NONE);
    let dir = tempfile::tempdir().unwrap();
    let res = run(&model, &cfg, sim, llm, dir.path());
    let c = &res.conversations[0];
    assert_eq!(c.stop_reason, StopReason::FatalError);
    assert!(c.fatal_error.as_ref().unwrap().contains("3 decode"));
    assert_eq!(res.aggregate.fatal, 1);
    assert_eq!(res.aggregate.mean_final_percent, None);
}

#[test]
fn one_shot_runs_a_single_iteration() {
    let model = toy();
    let (sim, llm) = scenario_a(1);
    let cfg = covclose::engine::RunConfig {
        max_iterations: 1,
        ..base_config(Features::NONE)
    };
    let dir = tempfile::tempdir().unwrap();
    let c = &run(&model, &cfg, sim, llm, dir.path()).conversations[0];
    assert_eq!(c.records.len(), 1);
    assert_eq!(c.stop_reason, StopReason::IterationBudget);
    assert_eq!(c.final_percent(), 60.0);
}
