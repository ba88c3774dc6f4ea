//! Prompt rendering and completion decoding.
//!
//! Prompt texts live in `prompts/*.txt` next to the crate manifest and are
//! compiled in; [`PromptTemplates::from_dir`] swaps any of them for files of
//! the same name at run time. Placeholders are written `{{name}}` and are
//! substituted in a single pass, so inserted text is never re-expanded.

mod decode;

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::coverage::{CoverageScore, HOLE_MARKER};
use crate::hdl::PortDecl;
use crate::llm::SegmentTag;
use crate::sim::SimStatus;

pub use decode::{
    decode_testcase, decode_testplan, DecodeResult, Testplan, TestplanItem, CODE_FIELD, NAME_FIELD,
};

/// The reply format stated to the model. [`decode_testcase`] accepts exactly
/// this shape as its primary format.
pub const FORMAT_CONTRACT: &str = r#"Output format: reply with exactly one JSON object and nothing else:
{"name": "<testcase name>", "code": "<Verilog testcase code>"}
"name" must be a valid Verilog identifier. "code" is the complete testcase as a JSON string, so escape newlines as \n and double quotes as \".
Example:
{"name": "smoke_test", "code": "initial begin\n  repeat (10) @(posedge clk);\n  $finish;\nend"}"#;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("{file}: {message}")]
    Template { file: String, message: String },
}

/// Rendered prompt text plus the segment tag its message carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub tag: SegmentTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub system: String,
    pub initial: String,
    pub closure: String,
    pub error: String,
    pub format_reminder: String,
    pub testplan: String,
    pub testplan_reminder: String,
    pub feature: String,
}

const SLOTS: &[(&str, &[&str])] = &[
    ("system", &["format_contract", "design_section"]),
    ("initial", &["spec", "top", "ports"]),
    (
        "closure",
        &[
            "percent",
            "covered",
            "total",
            "module",
            "marker",
            "annotated",
        ],
    ),
    ("error", &["failure", "excerpt"]),
    ("format_reminder", &["reason", "format_contract"]),
    ("testplan", &["spec", "top", "ports"]),
    ("testplan_reminder", &["reason"]),
    ("feature", &["index", "feature", "intent", "stimulus"]),
];

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            system: include_str!("../../prompts/system.txt").to_owned(),
            initial: include_str!("../../prompts/initial.txt").to_owned(),
            closure: include_str!("../../prompts/closure.txt").to_owned(),
            error: include_str!("../../prompts/error.txt").to_owned(),
            format_reminder: include_str!("../../prompts/format_reminder.txt").to_owned(),
            testplan: include_str!("../../prompts/testplan.txt").to_owned(),
            testplan_reminder: include_str!("../../prompts/testplan_reminder.txt").to_owned(),
            feature: include_str!("../../prompts/feature.txt").to_owned(),
        }
    }
}

impl PromptTemplates {
    /// Defaults, with `<dir>/<name>.txt` replacing any template present there.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut t = PromptTemplates::default();
        for (name, _) in SLOTS {
            let path = dir.join(format!("{name}.txt"));
            if !path.is_file() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| PromptError::Template {
                file: path.display().to_string(),
                message: e.to_string(),
            })?;
            *t.slot_mut(name) = text;
        }
        t.validate()?;
        Ok(t)
    }

    fn slot(&self, name: &str) -> &str {
        match name {
            "system" => &self.system,
            "initial" => &self.initial,
            "closure" => &self.closure,
            "error" => &self.error,
            "format_reminder" => &self.format_reminder,
            "testplan" => &self.testplan,
            "testplan_reminder" => &self.testplan_reminder,
            "feature" => &self.feature,
            _ => unreachable!("unknown template slot {name}"),
        }
    }

    fn slot_mut(&mut self, name: &str) -> &mut String {
        match name {
            "system" => &mut self.system,
            "initial" => &mut self.initial,
            "closure" => &mut self.closure,
            "error" => &mut self.error,
            "format_reminder" => &mut self.format_reminder,
            "testplan" => &mut self.testplan,
            "testplan_reminder" => &mut self.testplan_reminder,
            "feature" => &mut self.feature,
            _ => unreachable!("unknown template slot {name}"),
        }
    }

    /// Every placeholder must be one the builder fills.
    pub fn validate(&self) -> Result<(), PromptError> {
        for (name, allowed) in SLOTS {
            for ph in placeholders(self.slot(name)) {
                if !allowed.contains(&ph.as_str()) {
                    return Err(PromptError::Template {
                        file: format!("{name}.txt"),
                        message: format!(
                            "unknown placeholder {{{{{ph}}}}}; expected one of {allowed:?}"
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn build_system_prompt(&self, design_code: Option<&str>) -> Prompt {
        let design_section = match design_code {
            Some(code) => format!("\nComplete design code:\n-----\n{code}\n-----\n"),
            None => String::new(),
        };
        Prompt {
            text: render(
                &self.system,
                &[
                    ("format_contract", FORMAT_CONTRACT),
                    ("design_section", &design_section),
                ],
            ),
            tag: SegmentTag::Core,
        }
    }

    pub fn build_initial_prompt(&self, spec_text: &str, top: &str, ports: &[PortDecl]) -> Prompt {
        Prompt {
            text: render(
                &self.initial,
                &[
                    ("spec", spec_text.trim_end()),
                    ("top", top),
                    ("ports", &port_block(ports)),
                ],
            ),
            tag: SegmentTag::Core,
        }
    }

    /// `annotated_module` is the numbered, hole-annotated module excerpt.
    pub fn build_closure_prompt(
        &self,
        module: &str,
        annotated_module: &str,
        score: &CoverageScore,
    ) -> Prompt {
        let percent = format!("{:.2}", score.percent());
        Prompt {
            text: render(
                &self.closure,
                &[
                    ("percent", &percent),
                    ("covered", &score.covered.to_string()),
                    ("total", &score.total.to_string()),
                    ("module", module),
                    ("marker", HOLE_MARKER.trim()),
                    ("annotated", annotated_module.trim_end()),
                ],
            ),
            tag: SegmentTag::CoverageFeedback,
        }
    }

    pub fn build_error_prompt(&self, kind: SimStatus, log_excerpt: &str) -> Prompt {
        Prompt {
            text: render(
                &self.error,
                &[
                    ("failure", failure_description(kind)),
                    ("excerpt", log_excerpt.trim_end()),
                ],
            ),
            tag: SegmentTag::ErrorFix,
        }
    }

    /// Re-prompt after a completion that did not decode.
    pub fn build_format_reminder(&self, reason: &str) -> Prompt {
        Prompt {
            text: render(
                &self.format_reminder,
                &[("reason", reason), ("format_contract", FORMAT_CONTRACT)],
            ),
            tag: SegmentTag::ErrorFix,
        }
    }

    pub fn build_testplan_prompt(&self, spec_text: &str, top: &str, ports: &[PortDecl]) -> Prompt {
        Prompt {
            text: render(
                &self.testplan,
                &[
                    ("spec", spec_text.trim_end()),
                    ("top", top),
                    ("ports", &port_block(ports)),
                ],
            ),
            tag: SegmentTag::Testplan,
        }
    }

    pub fn build_testplan_reminder(&self, reason: &str) -> Prompt {
        Prompt {
            text: render(&self.testplan_reminder, &[("reason", reason)]),
            tag: SegmentTag::ErrorFix,
        }
    }

    /// `index` is 1-based.
    pub fn build_feature_prompt(&self, index: usize, item: &TestplanItem) -> Prompt {
        Prompt {
            text: render(
                &self.feature,
                &[
                    ("index", &index.to_string()),
                    ("feature", &item.feature),
                    ("intent", &item.intent),
                    ("stimulus", &item.stimulus_sketch),
                ],
            ),
            tag: SegmentTag::Testplan,
        }
    }
}

/// Phase wording for each failure kind.
pub fn failure_description(kind: SimStatus) -> &'static str {
    match kind {
        SimStatus::CompileError => "compilation error",
        SimStatus::ElaborationError => {
            "elaboration error (the design hierarchy or port connections could not be resolved)"
        }
        SimStatus::SimulationError => "simulation error at run time",
        SimStatus::Timeout => "timeout (the simulation did not finish within its time limit)",
        SimStatus::Success => "no error",
    }
}

/// One declaration line per port, e.g. `  input  [3:0] count`.
pub fn port_block(ports: &[PortDecl]) -> String {
    let mut s = String::new();
    for p in ports {
        let _ = writeln!(
            s,
            "  {:<6} {}{}",
            p.direction.to_string(),
            p.range_text(),
            p.name
        );
    }
    s.truncate(s.trim_end().len());
    s
}

fn placeholders(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(i) = rest.find("{{") {
        let after = &rest[i + 2..];
        match after.find("}}") {
            Some(j) if is_slot_name(&after[..j]) => {
                out.push(after[..j].to_owned());
                rest = &after[j + 2..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_slot_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Single-pass `{{name}}` substitution; unknown names are left as written.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find("{{") {
        out.push_str(&rest[..i]);
        let after = &rest[i + 2..];
        match after.find("}}").map(|j| (j, &after[..j])) {
            Some((j, name)) if is_slot_name(name) => {
                match values.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => {
                        out.push_str(v);
                        rest = &after[j + 2..];
                    }
                    None => {
                        out.push_str("{{");
                        rest = after;
                    }
                }
            }
            _ => {
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdl::Direction;
    use crate::llm::count_tokens;

    fn ports() -> Vec<PortDecl> {
        vec![
            PortDecl::new("clk", Direction::Input, None),
            PortDecl::new("rst_n", Direction::Input, None),
            PortDecl::new("en", Direction::Input, None),
            PortDecl::new("count", Direction::Output, Some((3, 0))),
            PortDecl::new("wrap", Direction::Output, None),
        ]
    }

    #[test]
    fn defaults_validate() {
        PromptTemplates::default().validate().unwrap();
    }

    #[test]
    fn system_prompt_with_and_without_code() {
        let t = PromptTemplates::default();
        let bare = t.build_system_prompt(None);
        assert!(bare.text.contains("verification engineer"));
        assert!(bare.text.contains(FORMAT_CONTRACT));
        assert!(!bare.text.contains("Complete design code"));
        let code = "module m;\n  assign x = {a, b}; // {{not_a_slot}}\nendmodule";
        let full = t.build_system_prompt(Some(code));
        assert!(full.text.contains(code));
        assert!(full.text.contains(FORMAT_CONTRACT));
    }

    #[test]
    fn contract_example_decodes() {
        let example = FORMAT_CONTRACT.lines().last().unwrap();
        match decode_testcase(example) {
            DecodeResult::Ok(tc) => {
                assert_eq!(tc.name, "smoke_test");
                assert!(tc.body.contains("$finish;"));
            }
            DecodeResult::DecodeError(r) => panic!("{r}"),
        }
        assert!(FORMAT_CONTRACT.contains(&format!("\"{NAME_FIELD}\"")));
        assert!(FORMAT_CONTRACT.contains(&format!("\"{CODE_FIELD}\"")));
    }

    #[test]
    fn initial_prompt_lists_each_port_once() {
        let spec = "The counter increments when en is high.\nIt wraps at 15.";
        let p = PromptTemplates::default().build_initial_prompt(spec, "toy_counter", &ports());
        assert!(p.text.contains(spec));
        let block = port_block(&ports());
        assert!(p.text.contains(&block));
        for port in ports() {
            let n = block
                .lines()
                .filter(|l| l.split_whitespace().last() == Some(port.name.as_str()))
                .count();
            assert_eq!(n, 1, "{}", port.name);
        }
        assert!(block.contains("output [3:0] count"));
        assert_eq!(count_tokens(&p.text), p.text.chars().count().div_ceil(4));
    }

    #[test]
    fn closure_prompt_embeds_annotation_and_score() {
        let annotated = "   11 |     if (!rst_n) // <<< COVERAGE HOLE: never executed";
        let s = CoverageScore::new(5, 6).unwrap();
        let p = PromptTemplates::default().build_closure_prompt("toy_counter", annotated, &s);
        assert!(p.text.contains(annotated));
        assert!(p.text.contains("83.33%"));
        assert!(p.text.contains("`toy_counter`"));
        assert_eq!(p.tag, SegmentTag::CoverageFeedback);
    }

    #[test]
    fn error_prompt_per_kind() {
        let t = PromptTemplates::default();
        let words = [
            (SimStatus::CompileError, "compilation"),
            (SimStatus::ElaborationError, "elaboration"),
            (SimStatus::SimulationError, "simulation error"),
            (SimStatus::Timeout, "timeout"),
        ];
        for (kind, word) in words {
            let p = t.build_error_prompt(kind, "%Error: tb.sv:3: syntax error");
            assert!(p.text.contains(word), "{kind}");
            assert!(p.text.contains("%Error: tb.sv:3: syntax error"));
            assert_eq!(p.tag, SegmentTag::ErrorFix);
        }
        assert_eq!(
            t.build_format_reminder("no JSON object").tag,
            SegmentTag::ErrorFix
        );
    }

    #[test]
    fn render_is_single_pass() {
        assert_eq!(
            render("a {{x}} b {{y}} {{ z }}", &[("x", "{{y}}"), ("y", "Y")]),
            "a {{y}} b Y {{ z }}"
        );
        assert_eq!(render("{{", &[]), "{{");
        assert_eq!(render("{{missing}}", &[]), "{{missing}}");
    }

    #[test]
    fn directory_override() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("error.txt"), "ERR {{failure}}: {{excerpt}}").unwrap();
        let t = PromptTemplates::from_dir(dir.path()).unwrap();
        assert_eq!(
            t.build_error_prompt(SimStatus::Timeout, "x").text,
            format!("ERR {}: x", failure_description(SimStatus::Timeout))
        );
        assert_eq!(t.system, PromptTemplates::default().system);

        std::fs::write(dir.path().join("closure.txt"), "{{bogus}}").unwrap();
        assert!(PromptTemplates::from_dir(dir.path()).is_err());
    }
}
