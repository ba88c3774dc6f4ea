//! Scripted simulator.
//!
//! A scenario is a TOML file:
//!
//! ```toml
//! [instrumented]
//! toy_counter = [9, 11, 12, 13, 14]
//!
//! [default]                 # optional; used when no rule matches
//! status = "Success"
//!
//! [[rule]]
//! when = { contains = "burst", seed = 3 }
//! then = { status = "Success", hits = { toy_counter = [9, 12] } }
//!
//! [[rule]]
//! when = { invocation = 0 }
//! then = { status = "CompileError", log = "%Error: tb.sv:40: syntax error" }
//! ```
//!
//! Rules are tried in order and the first whose `when` fields all match wins.
//! `when` keys: `tb_sha256` (hex digest of the testbench file), `invocation`,
//! `seed`, `contains` (substring of the testbench) and `conversation`.
//! Every listed hit adds one to that line's count.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::classify::{classify_failure, log_excerpt, ExcerptPolicy};
use super::{SimBackend, SimError, SimOutcome, SimRequest, SimStatus, SIM_LOG};
use crate::coverage::{write_mock_artifact, CoverageMap, LineKey};

pub const MOCK_ARTIFACT: &str = "coverage.dat";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tb_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invocation: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversation: Option<String>,
}

impl RuleMatch {
    fn matches(&self, req: &SimRequest, tb_text: &str, tb_hash: &str) -> bool {
        self.tb_sha256
            .as_deref()
            .is_none_or(|h| h.eq_ignore_ascii_case(tb_hash))
            && self.invocation.is_none_or(|i| i == req.invocation)
            && self.seed.is_none_or(|s| s == req.seed)
            && self.contains.as_deref().is_none_or(|c| tb_text.contains(c))
            && self
                .conversation
                .as_deref()
                .is_none_or(|c| c == req.conversation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockOutcome {
    #[serde(default = "success")]
    pub status: SimStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<String>,
    #[serde(default)]
    pub hits: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    pub runtime_s: f64,
}

fn success() -> SimStatus {
    SimStatus::Success
}

impl MockOutcome {
    pub fn success<I, S>(hits: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<usize>)>,
        S: Into<String>,
    {
        MockOutcome {
            status: SimStatus::Success,
            log: None,
            hits: hits.into_iter().map(|(m, l)| (m.into(), l)).collect(),
            runtime_s: 0.0,
        }
    }

    pub fn failure(status: SimStatus, log: impl Into<String>) -> Self {
        MockOutcome {
            status,
            log: Some(log.into()),
            hits: BTreeMap::new(),
            runtime_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default)]
    pub when: RuleMatch,
    pub then: MockOutcome,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScenario {
    pub instrumented: BTreeMap<String, Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<MockOutcome>,
    #[serde(default, rename = "rule")]
    pub rules: Vec<MockRule>,
}

impl MockScenario {
    pub fn new<I, S>(instrumented: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<usize>)>,
        S: Into<String>,
    {
        MockScenario {
            instrumented: instrumented
                .into_iter()
                .map(|(m, l)| (m.into(), l))
                .collect(),
            default: None,
            rules: Vec::new(),
        }
    }

    pub fn rule(mut self, when: RuleMatch, then: MockOutcome) -> Self {
        self.rules.push(MockRule { when, then });
        self
    }

    pub fn with_default(mut self, then: MockOutcome) -> Self {
        self.default = Some(then);
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let s: MockScenario = toml::from_str(text)
            .map_err(|e| SimError::BackendUnavailable(format!("invalid mock scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            SimError::BackendUnavailable(m) => {
                SimError::BackendUnavailable(format!("{}: {m}", path.display()))
            }
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| {
            Err(SimError::BackendUnavailable(format!(
                "invalid mock scenario: {m}"
            )))
        };
        if self.instrumented.values().all(Vec::is_empty) {
            return bad("no instrumented lines".into());
        }
        let inst = self.coverage_template();
        let outcomes = self
            .rules
            .iter()
            .map(|r| &r.then)
            .chain(self.default.as_ref());
        for o in outcomes {
            for (m, lines) in &o.hits {
                if let Some(l) = lines
                    .iter()
                    .find(|l| inst.hits(&LineKey::new(m.clone(), **l)).is_none())
                {
                    return bad(format!("hit on {m}:{l} which is not instrumented"));
                }
            }
            if o.runtime_s < 0.0 || !o.runtime_s.is_finite() {
                return bad("runtime_s must be a nonnegative number".into());
            }
        }
        Ok(())
    }

    /// All instrumented lines with zero hits.
    pub fn coverage_template(&self) -> CoverageMap {
        CoverageMap::instrumented(
            self.instrumented
                .iter()
                .flat_map(|(m, ls)| ls.iter().map(move |l| LineKey::new(m.clone(), *l))),
        )
    }

    fn select(&self, req: &SimRequest, tb_text: &str, tb_hash: &str) -> Option<&MockOutcome> {
        self.rules
            .iter()
            .find(|r| r.when.matches(req, tb_text, tb_hash))
            .map(|r| &r.then)
            .or(self.default.as_ref())
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    scenario: MockScenario,
    policy: ExcerptPolicy,
}

impl MockBackend {
    pub fn new(scenario: MockScenario) -> Result<Self, SimError> {
        scenario.validate()?;
        Ok(MockBackend {
            scenario,
            policy: ExcerptPolicy::default(),
        })
    }

    pub fn with_excerpt_policy(mut self, policy: ExcerptPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn scenario(&self) -> &MockScenario {
        &self.scenario
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl SimBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn run(&self, req: &SimRequest) -> Result<SimOutcome, SimError> {
        req.check()?;
        let tb_text = std::fs::read_to_string(&req.testbench_file)
            .map_err(|e| SimError::io(&req.testbench_file, e))?;
        let tb_hash = sha256_hex(tb_text.as_bytes());

        let fallback;
        let outcome = match self.scenario.select(req, &tb_text, &tb_hash) {
            Some(o) => o,
            None => {
                fallback = MockOutcome::failure(
                    SimStatus::SimulationError,
                    format!(
                        "mock: no scenario rule matched (conversation `{}`, invocation {}, seed {}, tb sha256 {})",
                        req.conversation, req.invocation, req.seed, tb_hash
                    ),
                );
                &fallback
            }
        };

        let log = match (&outcome.log, outcome.status) {
            (Some(l), _) if !l.is_empty() => l.clone(),
            (_, SimStatus::Success) => "mock: simulation finished\n".to_owned(),
            (_, s) => format!("mock: scripted {s}\n"),
        };
        let log_path = req.workspace.join(SIM_LOG);
        std::fs::write(&log_path, &log).map_err(|e| SimError::io(&log_path, e))?;

        let mut coverage_artifact = None;
        if outcome.status.is_success() && req.coverage_enabled {
            let mut map = self.scenario.coverage_template();
            for (m, lines) in &outcome.hits {
                for l in lines {
                    map.add_hits(&LineKey::new(m.clone(), *l), 1);
                }
            }
            let path = req.workspace.join(MOCK_ARTIFACT);
            std::fs::write(&path, write_mock_artifact(&map)).map_err(|e| SimError::io(&path, e))?;
            coverage_artifact = Some(path);
        }

        let first_error = if outcome.status.is_success() {
            None
        } else {
            classify_failure(&log).first_error_line
        };
        Ok(SimOutcome {
            status: outcome.status,
            log_excerpt: log_excerpt(&log, first_error.as_deref(), self.policy),
            coverage_artifact,
            runtime_s: outcome.runtime_s,
            log_path: Some(log_path),
            recognized: true,
        })
    }
}
