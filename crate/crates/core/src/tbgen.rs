//! Testbench template synthesis and testcase splicing.
//!
//! The generated testbench declares one variable per DUT input and one net
//! per output, instantiates the DUT by name, toggles every clock-role input,
//! holds reset-role inputs asserted for a couple of clock periods and arms a
//! simulated-time watchdog. The testcase body is spliced verbatim between
//! the header and the footer.
//!
//! Seed plumbing: the simulator passes `+seed=<n>`; the template reads it
//! into `tb_seed` and seeds `$urandom` from it at time zero, so stimulus
//! calling `$urandom`/`$urandom_range` varies per seed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hdl::{self, Direction, PortDecl, PortRole};

pub const PLACEHOLDER: &str = "/*@@COVCLOSE_TESTCASE_BODY@@*/";
const BODY_BEGIN: &str = "  // ---- testcase begin ----\n";
const BODY_END: &str = "\n  // ---- testcase end ----\n";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TbGenError {
    #[error("port widths could not be resolved: {0}")]
    WidthUnresolved(String),
    #[error("template does not contain the placeholder exactly once (found {0})")]
    MissingPlaceholder(usize),
    #[error("testcase body contains the template placeholder token")]
    PlaceholderCollision,
    #[error("clock period must be positive")]
    InvalidPeriod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateOptions {
    pub clock_period_units: u64,
    /// Simulated-time cap before the watchdog calls `$finish`.
    pub watchdog_units: u64,
    /// Reset-role inputs stay asserted for this many clock periods.
    pub reset_cycles: u64,
}

impl Default for TemplateOptions {
    fn default() -> Self {
        TemplateOptions {
            clock_period_units: 10,
            watchdog_units: 1_000_000,
            reset_cycles: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestbenchTemplate {
    pub header_text: String,
    pub placeholder_marker: String,
    pub footer_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestcaseOrigin {
    InitialRandom,
    ClosureIteration,
    TestplanFeature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Testcase {
    pub name: String,
    pub body: String,
    pub origin: TestcaseOrigin,
    pub iteration_index: usize,
}

impl TestbenchTemplate {
    /// Rebuilds a template from rendered text containing the placeholder once.
    pub fn from_text(text: &str) -> Result<Self, TbGenError> {
        let count = text.matches(PLACEHOLDER).count();
        if count != 1 {
            return Err(TbGenError::MissingPlaceholder(count));
        }
        let (header, footer) = text.split_once(PLACEHOLDER).expect("counted");
        Ok(TestbenchTemplate {
            header_text: header.to_owned(),
            placeholder_marker: PLACEHOLDER.to_owned(),
            footer_text: footer.to_owned(),
        })
    }

    /// The template with the placeholder still in place.
    pub fn text(&self) -> String {
        format!(
            "{}{}{}",
            self.header_text, self.placeholder_marker, self.footer_text
        )
    }

    /// Recovers the spliced body from a full testbench built from this template.
    pub fn extract_body<'a>(&self, testbench: &'a str) -> Option<&'a str> {
        testbench
            .strip_prefix(self.header_text.as_str())?
            .strip_suffix(self.footer_text.as_str())
    }
}

/// Builds the template for the design's top module.
pub fn template_for_design(
    model: &hdl::DesignModel,
    opts: TemplateOptions,
) -> Result<TestbenchTemplate, TbGenError> {
    let ports =
        hdl::extract_top_ports(model).map_err(|e| TbGenError::WidthUnresolved(e.to_string()))?;
    generate_template(&ports, &model.top, opts)
}

pub fn generate_template(
    ports: &[PortDecl],
    top: &str,
    opts: TemplateOptions,
) -> Result<TestbenchTemplate, TbGenError> {
    if opts.clock_period_units == 0 {
        return Err(TbGenError::InvalidPeriod);
    }
    if let Some(p) = ports.iter().find(|p| p.width_bits == 0) {
        return Err(TbGenError::WidthUnresolved(p.name.clone()));
    }

    let mut h = String::new();
    let _ = writeln!(h, "// Auto-generated testbench for `{top}`.");
    h.push_str("`timescale 1ns/1ps\n");
    h.push_str("module tb;\n");
    let _ = writeln!(h, "  localparam CLK_PERIOD = {};", opts.clock_period_units);
    let _ = writeln!(h, "  localparam RESET_CYCLES = {};", opts.reset_cycles);
    let _ = writeln!(h, "  localparam WATCHDOG_LIMIT = {};", opts.watchdog_units);
    h.push('\n');

    let range_col = ports
        .iter()
        .map(|p| p.range_text().len())
        .max()
        .unwrap_or(0);
    for p in ports {
        let range = format!("{:<range_col$}", p.range_text());
        match p.direction {
            Direction::Input => {
                let init = match p.role_hint {
                    PortRole::Reset => reset_asserted(p),
                    _ => "0".to_owned(),
                };
                let _ = writeln!(h, "  reg  {range}{} = {init};", p.name);
            }
            Direction::Output | Direction::Inout => {
                let _ = writeln!(h, "  wire {range}{};", p.name);
            }
        }
    }
    h.push_str("  integer tb_seed;\n  integer tb_seed_init;\n\n");

    if ports.is_empty() {
        let _ = writeln!(h, "  {top} dut ();");
    } else {
        let _ = writeln!(h, "  {top} dut (");
        for (i, p) in ports.iter().enumerate() {
            let sep = if i + 1 == ports.len() { "" } else { "," };
            let _ = writeln!(h, "    .{0}({0}){sep}", p.name);
        }
        h.push_str("  );\n");
    }
    h.push('\n');

    for p in ports
        .iter()
        .filter(|p| p.direction == Direction::Input && p.role_hint == PortRole::Clock)
    {
        let _ = writeln!(h, "  always #(CLK_PERIOD / 2.0) {0} = ~{0};", p.name);
    }

    h.push_str("  initial begin\n");
    h.push_str("    if (!$value$plusargs(\"seed=%d\", tb_seed)) tb_seed = 0;\n");
    h.push_str("    tb_seed_init = $urandom(tb_seed);\n");
    h.push_str("  end\n");

    let resets: Vec<&PortDecl> = ports
        .iter()
        .filter(|p| p.direction == Direction::Input && p.role_hint == PortRole::Reset)
        .collect();
    if !resets.is_empty() {
        h.push_str("  initial begin\n    #(RESET_CYCLES * CLK_PERIOD);\n");
        for p in resets {
            let _ = writeln!(h, "    {} = {};", p.name, reset_released(p));
        }
        h.push_str("  end\n");
    }
    h.push('\n');
    h.push_str(BODY_BEGIN);

    let mut f = String::from(BODY_END);
    f.push('\n');
    f.push_str("  initial begin\n");
    f.push_str("    #(WATCHDOG_LIMIT);\n");
    f.push_str("    $display(\"TB_WATCHDOG: simulated time limit reached\");\n");
    f.push_str("    $finish;\n");
    f.push_str("  end\n");
    f.push_str("endmodule\n");

    Ok(TestbenchTemplate {
        header_text: h,
        placeholder_marker: PLACEHOLDER.to_owned(),
        footer_text: f,
    })
}

fn reset_asserted(p: &PortDecl) -> String {
    if hdl::is_active_low(&p.name) {
        "0"
    } else {
        "1"
    }
    .to_owned()
}

fn reset_released(p: &PortDecl) -> String {
    if hdl::is_active_low(&p.name) {
        "1"
    } else {
        "0"
    }
    .to_owned()
}

/// header + body + footer. The body is inserted untouched.
pub fn splice(template: &TestbenchTemplate, testcase: &Testcase) -> Result<String, TbGenError> {
    splice_body(template, &testcase.body)
}

pub fn splice_body(template: &TestbenchTemplate, body: &str) -> Result<String, TbGenError> {
    if template.placeholder_marker.is_empty()
        || template.header_text.contains(&template.placeholder_marker)
        || template.footer_text.contains(&template.placeholder_marker)
    {
        return Err(TbGenError::MissingPlaceholder(0));
    }
    if body.contains(&template.placeholder_marker) {
        return Err(TbGenError::PlaceholderCollision);
    }
    let mut out =
        String::with_capacity(template.header_text.len() + body.len() + template.footer_text.len());
    out.push_str(&template.header_text);
    out.push_str(body);
    out.push_str(&template.footer_text);
    Ok(out)
}
