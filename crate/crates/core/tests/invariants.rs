mod common;

use std::collections::BTreeMap;

use common::*;
use covclose::coverage::{CoverageHole, CoverageScore};
use covclose::engine::{batched_select, select_target_module, Features, RunConfig, StopReason};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn merged_coverage_never_decreases() {
    let model = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut full = 0;
    for _ in 0..100 {
        let (sim, llm) = random_setup(&mut rng);
        let features = Features {
            batched: rng.random_bool(0.5),
            pruning: rng.random_bool(0.5),
            ..Features::NONE
        };
        let cfg = RunConfig {
            features,
            num_conversations: 2,
            num_random_seeds: 2,
            rng_seed: rng.random(),
            parallel: false,
            ..RunConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let res = run_pool(&model, &cfg, sim, &llm, dir.path());
        check_monotone(&res);
        full += res
            .conversations
            .iter()
            .filter(|c| c.stop_reason == StopReason::FullCoverage)
            .count();
    }
    assert!(full > 0);
}

#[test]
fn concurrent_conversations_match_serial() {
    let model = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let (sim, llm) = random_setup(&mut rng);
        let mut cfg = RunConfig {
            features: Features {
                testplan: false,
                ..Features::default()
            },
            num_conversations: 5,
            num_random_seeds: 3,
            rng_seed: rng.random(),
            parallel: false,
            ..RunConfig::default()
        };
        let a = tempfile::tempdir().unwrap();
        let serial = run_pool(&model, &cfg, sim.clone(), &llm, a.path());
        cfg.parallel = true;
        let b = tempfile::tempdir().unwrap();
        let parallel = run_pool(&model, &cfg, sim, &llm, b.path());
        assert_eq!(serial.aggregate, parallel.aggregate);
        for (s, p) in serial.conversations.iter().zip(&parallel.conversations) {
            assert_eq!(s.records, p.records);
            assert_eq!(s.messages, p.messages);
            assert_eq!(s.final_merged, p.final_merged);
            assert_eq!(s.base_seed, p.base_seed);
        }
    }
}

#[test]
fn target_module_draw_is_uniform() {
    let holes: BTreeMap<String, CoverageHole> = ["alpha", "beta", "gamma", "delta"]
        .iter()
        .map(|m| {
            (
                m.to_string(),
                CoverageHole {
                    module: m.to_string(),
                    lines: vec![1],
                    snippets: vec![String::new()],
                },
            )
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 10_000;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..draws {
        *counts
            .entry(select_target_module(&holes, &mut rng).unwrap())
            .or_default() += 1;
    }
    assert_eq!(counts.len(), 4);
    for (m, c) in counts {
        let share = c as f64 / draws as f64;
        assert!((share - 0.25).abs() <= 0.02, "{m}: {share}");
    }
}

#[test]
fn batched_select_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2000 {
        let n = rng.random_range(1..8);
        let scores: Vec<Option<CoverageScore>> = (0..n)
            .map(|_| {
                rng.random_bool(0.7).then(|| {
                    let total = rng.random_range(1..12);
                    CoverageScore::new(rng.random_range(0..=total), total).unwrap()
                })
            })
            .collect();
        let best = scores
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| (i, s.covered as f64 / s.total as f64)))
            .fold(None::<(usize, f64)>, |acc, (i, f)| match acc {
                Some((_, g)) if g >= f - 1e-12 => acc,
                _ => Some((i, f)),
            });
        match best {
            Some((i, _)) => assert_eq!(batched_select(&scores), Ok(i)),
            None => assert!(batched_select(&scores).is_err()),
        }
    }
}
