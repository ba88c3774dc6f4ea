//! Completion decoders.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::sim::sha256_hex;
use crate::tbgen::{Testcase, TestcaseOrigin};

pub const NAME_FIELD: &str = "name";
pub const CODE_FIELD: &str = "code";

/// Start positions tried before giving up on the JSON scan.
const MAX_SCAN_STARTS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeResult {
    Ok(Testcase),
    DecodeError(String),
}

impl DecodeResult {
    pub fn ok(self) -> Option<Testcase> {
        match self {
            DecodeResult::Ok(t) => Some(t),
            DecodeResult::DecodeError(_) => None,
        }
    }
}

/// First JSON object carrying a string `code` field; else the first fenced
/// code block, named `tc_<hash>`. Never panics.
pub fn decode_testcase(completion: &str) -> DecodeResult {
    if let Some(obj) = first_json(completion, '{', |v| {
        v.get(CODE_FIELD).is_some_and(Value::is_string)
    }) {
        let code = obj[CODE_FIELD].as_str().unwrap_or_default().to_owned();
        if code.trim().is_empty() {
            return DecodeResult::DecodeError(format!("the \"{CODE_FIELD}\" field is empty"));
        }
        let name = obj
            .get(NAME_FIELD)
            .and_then(Value::as_str)
            .map(sanitize_identifier);
        let name = name
            .filter(|n| !n.is_empty())
            .unwrap_or_else(|| generated_name(&code));
        return DecodeResult::Ok(testcase(name, code));
    }
    if let Some(body) = first_fenced_block(completion) {
        if body.trim().is_empty() {
            return DecodeResult::DecodeError("the fenced code block is empty".into());
        }
        return DecodeResult::Ok(testcase(generated_name(&body), body));
    }
    DecodeResult::DecodeError(format!(
        "no JSON object with a \"{CODE_FIELD}\" string field and no fenced code block found"
    ))
}

fn testcase(name: String, body: String) -> Testcase {
    Testcase {
        name,
        body,
        origin: TestcaseOrigin::ClosureIteration,
        iteration_index: 0,
    }
}

fn generated_name(body: &str) -> String {
    format!("tc_{}", &sha256_hex(body.as_bytes())[..8])
}

/// Maps arbitrary text onto a Verilog identifier (may return empty).
pub fn sanitize_identifier(raw: &str) -> String {
    let mut s: String = raw
        .trim()
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .take(64)
        .collect();
    if s.chars().all(|c| c == '_') {
        return String::new();
    }
    if s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert_str(0, "t_");
    }
    s
}

/// First value starting at an `open` delimiter that parses as JSON and passes `accept`.
fn first_json(text: &str, open: char, accept: impl Fn(&Value) -> bool) -> Option<Value> {
    for (i, _) in text.match_indices(open).take(MAX_SCAN_STARTS) {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(v)) = stream.next() {
            if accept(&v) {
                return Some(v);
            }
        }
    }
    None
}

fn first_fenced_block(text: &str) -> Option<String> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(
        body[..end]
            .trim_end_matches([' ', '\t'])
            .trim_end_matches('\n')
            .to_owned(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestplanItem {
    pub feature: String,
    #[serde(default)]
    pub intent: String,
    #[serde(default, alias = "stimulus")]
    pub stimulus_sketch: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Testplan {
    pub items: Vec<TestplanItem>,
}

impl Testplan {
    /// Nonempty, with unique nonblank feature names.
    pub fn new(items: Vec<TestplanItem>) -> Result<Self, String> {
        if items.is_empty() {
            return Err("testplan has no items".into());
        }
        let mut seen = BTreeSet::new();
        for it in &items {
            if it.feature.trim().is_empty() {
                return Err("testplan item without a feature name".into());
            }
            if !seen.insert(it.feature.as_str()) {
                return Err(format!("duplicate testplan feature `{}`", it.feature));
            }
        }
        Ok(Testplan { items })
    }

    pub fn encode_json(&self) -> String {
        serde_json::to_string_pretty(&self.items).expect("testplan serializes")
    }

    pub fn encode_numbered(&self) -> String {
        let mut s = String::new();
        for (i, it) in self.items.iter().enumerate() {
            let _ = writeln!(s, "{}. {}", i + 1, it.feature);
            let _ = writeln!(s, "   intent: {}", it.intent);
            let _ = writeln!(s, "   stimulus: {}", it.stimulus_sketch);
        }
        s
    }
}

/// A JSON array of `{feature, intent, stimulus_sketch}` objects, or a numbered list.
pub fn decode_testplan(completion: &str) -> Result<Testplan, String> {
    let is_plan = |v: &Value| {
        v.as_array().is_some_and(|a| {
            a.iter()
                .all(|e| e.get("feature").is_some_and(Value::is_string))
        })
    };
    if let Some(v) = first_json(completion, '[', is_plan) {
        let items: Vec<TestplanItem> =
            serde_json::from_value(v).map_err(|e| format!("malformed testplan item: {e}"))?;
        return Testplan::new(items);
    }
    let items = parse_numbered(completion);
    if items.is_empty() {
        return Err("no JSON array of features and no numbered list found".into());
    }
    Testplan::new(items)
}

fn numbered_head(line: &str) -> Option<&str> {
    let t = line.trim_start();
    let digits = t.len() - t.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    let rest = &t[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    rest.starts_with([' ', '\t']).then(|| rest.trim())
}

fn labelled<'a>(line: &'a str, labels: &[&str]) -> Option<&'a str> {
    let t = line.trim().trim_start_matches(['-', '*']).trim_start();
    let lower = t.to_ascii_lowercase();
    labels
        .iter()
        .find_map(|l| lower.starts_with(l).then(|| t[l.len()..].trim()))
}

fn parse_numbered(text: &str) -> Vec<TestplanItem> {
    let mut items: Vec<TestplanItem> = Vec::new();
    for line in text.lines() {
        if let Some(head) = numbered_head(line) {
            let feature = head.trim_matches('*').trim().to_owned();
            items.push(TestplanItem {
                feature,
                intent: String::new(),
                stimulus_sketch: String::new(),
            });
            continue;
        }
        let Some(cur) = items.last_mut() else {
            continue;
        };
        if let Some(v) = labelled(line, &["intent:"]) {
            cur.intent = v.to_owned();
        } else if let Some(v) =
            labelled(line, &["stimulus_sketch:", "stimulus sketch:", "stimulus:"])
        {
            cur.stimulus_sketch = v.to_owned();
        } else if !line.trim().is_empty() {
            let target = if cur.intent.is_empty() {
                &mut cur.intent
            } else {
                &mut cur.stimulus_sketch
            };
            if !target.is_empty() {
                target.push(' ');
            }
            target.push_str(line.trim());
        }
    }
    items
}
