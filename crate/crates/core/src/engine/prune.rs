//! Context pruning.
//!
//! Protected: the system prompt, the initial prompt (first core-tagged user
//! message) and the latest coverage-feedback prompt with its answer.
//! Removal order once over budget: error-fix messages in pairs oldest-first,
//! then superseded coverage-feedback turns oldest-first; as a last resort the
//! oldest unprotected messages are truncated.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{Conversation, Role, SegmentTag};

pub const TRUNCATION_MARKER: &str = "\n[... truncated ...]";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PruneError {
    #[error("protected messages alone use {protected_tokens} tokens, over the budget of {budget}")]
    BudgetInfeasible {
        protected_tokens: usize,
        budget: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneReport {
    pub tokens_before: usize,
    pub tokens_after: usize,
    /// Turn indices of removed messages, in removal order.
    pub removed_turns: Vec<usize>,
    pub truncated_turns: Vec<usize>,
}

/// Positions of protected messages.
pub fn protected_positions(conv: &Conversation) -> BTreeSet<usize> {
    let msgs = conv.messages();
    let mut p = BTreeSet::new();
    if msgs.first().is_some_and(|m| m.role == Role::System) {
        p.insert(0);
    }
    if let Some(i) = msgs
        .iter()
        .position(|m| m.role == Role::User && m.segment_tag == SegmentTag::Core)
    {
        p.insert(i);
    }
    if let Some(l) = latest_feedback(conv) {
        p.insert(l);
        if let Some(a) = answer_to(conv, l) {
            p.insert(a);
        }
    }
    p
}

fn latest_feedback(conv: &Conversation) -> Option<usize> {
    conv.messages()
        .iter()
        .rposition(|m| m.role == Role::User && m.segment_tag == SegmentTag::CoverageFeedback)
}

/// The coverage-feedback answer following the prompt at `at`, before the next prompt of that kind.
fn answer_to(conv: &Conversation, at: usize) -> Option<usize> {
    let msgs = conv.messages();
    for (i, m) in msgs.iter().enumerate().skip(at + 1) {
        if m.segment_tag != SegmentTag::CoverageFeedback {
            continue;
        }
        return (m.role == Role::Assistant).then_some(i);
    }
    None
}

pub fn prune_context(conv: &mut Conversation, budget: usize) -> Result<PruneReport, PruneError> {
    let before = conv.cumulative_tokens();
    let protected = protected_positions(conv);
    let protected_tokens: usize = protected
        .iter()
        .map(|&i| conv.messages()[i].token_count)
        .sum();
    if protected_tokens > budget {
        return Err(PruneError::BudgetInfeasible {
            protected_tokens,
            budget,
        });
    }
    let mut report = PruneReport {
        tokens_before: before,
        tokens_after: before,
        ..Default::default()
    };
    if before <= budget {
        return Ok(report);
    }

    let msgs = conv.messages();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let fix: Vec<usize> = (0..msgs.len())
        .filter(|i| msgs[*i].segment_tag == SegmentTag::ErrorFix && !protected.contains(i))
        .collect();
    groups.extend(fix.chunks(2).map(<[usize]>::to_vec));
    let latest = latest_feedback(conv);
    for (i, m) in msgs.iter().enumerate() {
        if Some(i) == latest || latest.is_none_or(|l| i > l) {
            break;
        }
        if m.role == Role::User && m.segment_tag == SegmentTag::CoverageFeedback {
            let mut g = vec![i];
            g.extend(answer_to(conv, i));
            groups.push(g);
        }
    }

    let mut total = before;
    let mut removed: Vec<usize> = Vec::new();
    for g in groups {
        if total <= budget {
            break;
        }
        for i in g {
            total -= msgs[i].token_count;
            removed.push(i);
            report.removed_turns.push(msgs[i].turn_index);
        }
    }
    let kept_protected: BTreeSet<usize> = protected.iter().map(|&i| msgs[i].turn_index).collect();
    conv.remove_indices(&removed);

    let mut i = 0;
    while conv.cumulative_tokens() > budget && i < conv.len() {
        let m = &conv.messages()[i];
        if !kept_protected.contains(&m.turn_index) && m.token_count > 0 {
            let excess = conv.cumulative_tokens() - budget;
            let target = m.token_count.saturating_sub(excess);
            let turn = m.turn_index;
            let text = truncate_to(conv, &m.content, target);
            conv.set_content(i, text);
            report.truncated_turns.push(turn);
        }
        i += 1;
    }
    report.tokens_after = conv.cumulative_tokens();
    Ok(report)
}

/// Longest prefix of `content` plus the marker that fits `target` tokens, or "".
fn truncate_to(conv: &Conversation, content: &str, target: usize) -> String {
    let est = conv.estimator();
    let chars: Vec<(usize, char)> = content.char_indices().collect();
    let with_prefix = |n: usize| {
        let end = chars.get(n).map_or(content.len(), |(b, _)| *b);
        format!("{}{TRUNCATION_MARKER}", &content[..end])
    };
    if est.count(&with_prefix(0)) > target {
        return String::new();
    }
    let (mut lo, mut hi) = (0usize, chars.len());
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if est.count(&with_prefix(mid)) <= target {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    with_prefix(lo)
}
