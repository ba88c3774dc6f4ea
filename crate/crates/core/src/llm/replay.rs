//! Record/replay backends.
//!
//! A transcript is a TOML file of exchanges:
//!
//! ```toml
//! [[exchange]]
//! conversation = "conv_0"   # optional, conversation id
//! turn = 1                  # optional, turn index of the last message
//! key = "9f2c..."           # optional, see `conversation_key`
//! contains = "coverage"     # optional, substring of the last message
//! wall_time_s = 1.2         # optional, reported in usage
//! candidates = ['''{"name": "t1", "code": "..."}''']
//! ```
//!
//! The first exchange whose given fields all match answers the request.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    conversation_key, estimated_usage, Completion, Conversation, LlmBackend, LlmError,
    SamplingConfig,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exchange {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub candidates: Vec<String>,
}

impl Exchange {
    pub fn answering<S: Into<String>>(candidates: impl IntoIterator<Item = S>) -> Self {
        Exchange {
            candidates: candidates.into_iter().map(Into::into).collect(),
            ..Default::default()
        }
    }

    fn matches(&self, conv: &Conversation, key: &str) -> bool {
        let last = conv.last().expect("nonempty");
        self.conversation.as_deref().is_none_or(|c| c == conv.id())
            && self.turn.is_none_or(|t| t == last.turn_index)
            && self
                .key
                .as_deref()
                .is_none_or(|k| k.eq_ignore_ascii_case(key))
            && self
                .contains
                .as_deref()
                .is_none_or(|s| last.content.contains(s))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transcript {
    #[serde(default, rename = "exchange")]
    pub exchanges: Vec<Exchange>,
}

impl Transcript {
    pub fn from_toml_str(text: &str) -> Result<Self, LlmError> {
        toml::from_str(text).map_err(|e| LlmError::Config(format!("invalid transcript: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("transcript serializes")
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_toml_string())
    }
}

/// Answers from a transcript; never touches the network.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    transcript: Transcript,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript) -> Self {
        ReplayBackend { transcript }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(Transcript::load(path)?))
    }
}

impl LlmBackend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn send(&self, conv: &Conversation, sampling: &SamplingConfig) -> Result<Completion, LlmError> {
        if conv.is_empty() {
            return Err(LlmError::EmptyConversation);
        }
        let key = conversation_key(conv.messages());
        let last = conv.last().expect("nonempty");
        let Some(ex) = self
            .transcript
            .exchanges
            .iter()
            .find(|e| e.matches(conv, &key))
        else {
            return Err(LlmError::NoRecording(format!(
                "conversation `{}`, turn {}, key {key}",
                conv.id(),
                last.turn_index
            )));
        };
        let n = sampling.num_candidates;
        if ex.candidates.len() < n {
            return Err(LlmError::NoRecording(format!(
                "conversation `{}`, turn {}: {} candidates recorded, {n} requested",
                conv.id(),
                last.turn_index,
                ex.candidates.len()
            )));
        }
        let candidates = ex.candidates[..n].to_vec();
        let usage = estimated_usage(conv, &candidates, ex.wall_time_s.unwrap_or(0.0));
        Ok(Completion { candidates, usage })
    }
}

/// Forwards to `inner` and keeps every answered exchange for [`Transcript::save`].
pub struct RecordingBackend<B> {
    inner: B,
    recorded: Mutex<Vec<Exchange>>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            recorded: Mutex::new(Vec::new()),
        }
    }

    pub fn transcript(&self) -> Transcript {
        Transcript {
            exchanges: self.recorded.lock().expect("recorder lock").clone(),
        }
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn send(&self, conv: &Conversation, sampling: &SamplingConfig) -> Result<Completion, LlmError> {
        let out = self.inner.send(conv, sampling)?;
        let ex = Exchange {
            conversation: Some(conv.id().to_owned()),
            turn: conv.last().map(|m| m.turn_index),
            key: Some(conversation_key(conv.messages())),
            contains: None,
            wall_time_s: Some(out.usage.wall_time_s),
            candidates: out.candidates.clone(),
        };
        self.recorded.lock().expect("recorder lock").push(ex);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{default_estimator, Role, SegmentTag};

    fn conv() -> Conversation {
        let mut c = Conversation::new("conv_0", "sys", default_estimator());
        c.push(Role::User, "please write a testcase", SegmentTag::Core);
        c
    }

    #[test]
    fn returns_exactly_n_candidates() {
        let b = ReplayBackend::new(Transcript {
            exchanges: vec![Exchange::answering(["a", "b", "c", "d", "e", "f"])],
        });
        let out = b.send(&conv(), &SamplingConfig::default()).unwrap();
        assert_eq!(out.candidates, vec!["a", "b", "c", "d", "e"]);
        let err = b
            .send(&conv(), &SamplingConfig::default().with_candidates(7))
            .unwrap_err();
        assert!(matches!(err, LlmError::NoRecording(_)));
    }

    #[test]
    fn empty_conversation_rejected() {
        let b = ReplayBackend::new(Transcript {
            exchanges: vec![Exchange::answering(["a"])],
        });
        let c = Conversation::empty("x", default_estimator());
        assert_eq!(
            b.send(&c, &SamplingConfig::default()),
            Err(LlmError::EmptyConversation)
        );
    }

    #[test]
    fn keyed_replay_is_byte_identical() {
        let c = conv();
        let key = conversation_key(c.messages());
        let t = Transcript {
            exchanges: vec![
                Exchange {
                    key: Some("00".into()),
                    ..Exchange::answering(["wrong"])
                },
                Exchange {
                    key: Some(key),
                    ..Exchange::answering(["right ünïcode\n"])
                },
            ],
        };
        let b = ReplayBackend::new(Transcript::from_toml_str(&t.to_toml_string()).unwrap());
        let s = SamplingConfig::default().with_candidates(1);
        let first = b.send(&c, &s).unwrap();
        for _ in 0..100 {
            assert_eq!(b.send(&c, &s).unwrap(), first);
        }
        assert_eq!(first.candidates[0], "right ünïcode\n");
    }

    #[test]
    fn predicates_select_in_order() {
        let t = Transcript::from_toml_str(
            r#"
            [[exchange]]
            conversation = "conv_1"
            candidates = ["other"]
            [[exchange]]
            turn = 1
            contains = "testcase"
            candidates = ["hit"]
            "#,
        )
        .unwrap();
        let b = ReplayBackend::new(t);
        let s = SamplingConfig::default().with_candidates(1);
        assert_eq!(b.send(&conv(), &s).unwrap().candidates, vec!["hit"]);
        let mut c = conv();
        c.push(Role::User, "more", SegmentTag::Core);
        assert!(matches!(b.send(&c, &s), Err(LlmError::NoRecording(_))));
    }

    #[test]
    fn recording_round_trip() {
        let inner = ReplayBackend::new(Transcript {
            exchanges: vec![Exchange::answering(["x", "y"])],
        });
        let rec = RecordingBackend::new(inner);
        let s = SamplingConfig::default().with_candidates(2);
        let live = rec.send(&conv(), &s).unwrap();
        let replay = ReplayBackend::new(rec.transcript());
        assert_eq!(replay.send(&conv(), &s).unwrap(), live);
    }
}
