//! Failure classification and log excerpts.
//!
//! Patterns are checked per line, case-insensitively, in table order. The
//! tables cover Verilator and Icarus wording plus the markers our own
//! drivers and testbench template print.

use super::SimStatus;

/// Printed by drivers when the wall-clock limit kills a tool.
pub const TIMEOUT_MARKER: &str = "COVCLOSE: wall timeout";
/// Printed by drivers when a build step exits nonzero.
pub(crate) const BUILD_FAILED_MARKER: &str = "COVCLOSE: build failed";
/// Printed by drivers when the simulation binary exits nonzero.
pub(crate) const RUN_FAILED_MARKER: &str = "COVCLOSE: run failed";

const PATTERNS: &[(&str, SimStatus)] = &[
    ("covclose: wall timeout", SimStatus::Timeout),
    ("tb_watchdog", SimStatus::Timeout),
    // unresolved hierarchy / port binding
    (
        "cannot find file containing module",
        SimStatus::ElaborationError,
    ),
    (
        "can't resolve module reference",
        SimStatus::ElaborationError,
    ),
    ("unknown module type", SimStatus::ElaborationError),
    ("unresolved module", SimStatus::ElaborationError),
    ("module not found", SimStatus::ElaborationError),
    ("pin not found", SimStatus::ElaborationError),
    ("port not found", SimStatus::ElaborationError),
    ("is not a port of", SimStatus::ElaborationError),
    ("elaboration", SimStatus::ElaborationError),
    // front end
    ("syntax error", SimStatus::CompileError),
    ("parse error", SimStatus::CompileError),
    ("can't find definition of", SimStatus::CompileError),
    ("unable to bind", SimStatus::CompileError),
    ("undeclared", SimStatus::CompileError),
    ("define or directive not defined", SimStatus::CompileError),
    ("unsupported:", SimStatus::CompileError),
    ("covclose: build failed", SimStatus::CompileError),
    // run time
    ("$fatal", SimStatus::SimulationError),
    ("assertion failed", SimStatus::SimulationError),
    ("verilog $stop", SimStatus::SimulationError),
    ("segmentation fault", SimStatus::SimulationError),
    ("runtime error", SimStatus::SimulationError),
    ("covclose: run failed", SimStatus::SimulationError),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub status: SimStatus,
    /// False when nothing in the log matched; status is then SimulationError.
    pub recognized: bool,
    pub first_error_line: Option<String>,
}

/// Maps a failed tool log onto a failure kind. Never returns `Success`.
pub fn classify_failure(raw_log: &str) -> Classification {
    // table order decides, not log order
    let lowered: Vec<(String, &str)> = raw_log.lines().map(|l| (l.to_lowercase(), l)).collect();
    let mut best: Option<(usize, &str)> = None;
    for (low, orig) in &lowered {
        for (rank, (needle, _)) in PATTERNS.iter().enumerate() {
            if low.contains(needle) {
                if best.is_none_or(|(r, _)| rank < r) {
                    best = Some((rank, orig));
                }
                break;
            }
        }
    }
    match best {
        Some((rank, line)) => Classification {
            status: PATTERNS[rank].1,
            recognized: true,
            first_error_line: Some(line.trim().to_owned()),
        },
        None => Classification {
            status: SimStatus::SimulationError,
            recognized: false,
            first_error_line: raw_log
                .lines()
                .find(|l| is_error_like(l))
                .map(|l| l.trim().to_owned()),
        },
    }
}

fn is_error_like(line: &str) -> bool {
    let l = line.to_lowercase();
    l.contains("error") || l.contains("fatal")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExcerptPolicy {
    pub tail_chars: usize,
    pub headline_chars: usize,
}

impl Default for ExcerptPolicy {
    fn default() -> Self {
        ExcerptPolicy {
            tail_chars: 4000,
            headline_chars: 400,
        }
    }
}

const HEADLINE_PREFIX: &str = "first error: ";
const ELISION: &str = "\n[...]\n";

impl ExcerptPolicy {
    /// Upper bound on the length (in chars) of any excerpt.
    pub fn max_chars(&self) -> usize {
        HEADLINE_PREFIX.len() + self.headline_chars + ELISION.len() + self.tail_chars
    }
}

/// The last `tail_chars` characters of the log, preceded by the first error
/// line when that line was cut off.
pub fn log_excerpt(raw_log: &str, first_error_line: Option<&str>, policy: ExcerptPolicy) -> String {
    let total = raw_log.chars().count();
    if total <= policy.tail_chars {
        return raw_log.to_owned();
    }
    let tail_start = raw_log
        .char_indices()
        .nth(total - policy.tail_chars)
        .map(|(i, _)| i)
        .unwrap_or(0);
    let tail = &raw_log[tail_start..];
    let mut out = String::new();
    if let Some(line) = first_error_line {
        if !tail.contains(line) {
            out.push_str(HEADLINE_PREFIX);
            out.extend(line.chars().take(policy.headline_chars));
        }
    }
    out.push_str(ELISION);
    out.push_str(tail);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_markers() {
        let c = classify_failure("%Error: tb.sv:12:5: syntax error, unexpected IDENTIFIER\n%Error: Exiting due to 1 error(s)");
        assert_eq!(c.status, SimStatus::CompileError);
        assert!(c.recognized);
        assert!(c.first_error_line.unwrap().contains("syntax error"));

        let c = classify_failure("%Error: tb.sv:30:3: Cannot find file containing module: 'fooo'");
        assert_eq!(c.status, SimStatus::ElaborationError);

        let c = classify_failure("tb.sv:4: error: Unknown module type: fooo");
        assert_eq!(c.status, SimStatus::ElaborationError);

        let c = classify_failure("[0] %Error: tb.sv:40: Assertion failed in tb.dut\n");
        assert_eq!(c.status, SimStatus::SimulationError);

        let c = classify_failure(&format!("partial output\n{TIMEOUT_MARKER} after 5 s\n"));
        assert_eq!(c.status, SimStatus::Timeout);
        let c = classify_failure(
            "TB_WATCHDOG: simulated time limit reached\nCOVCLOSE: run failed (exit 1)",
        );
        assert_eq!(c.status, SimStatus::Timeout);
    }

    #[test]
    fn unknown_log_is_flagged() {
        let c = classify_failure("something odd happened\nerror 42");
        assert_eq!(c.status, SimStatus::SimulationError);
        assert!(!c.recognized);
        assert_eq!(c.first_error_line.as_deref(), Some("error 42"));
        assert!(!classify_failure("").recognized);
    }

    #[test]
    fn classification_is_deterministic() {
        let log = "x\n%Error: Unsupported: foo\nCOVCLOSE: build failed (exit 1)";
        assert_eq!(classify_failure(log), classify_failure(log));
        assert_eq!(classify_failure(log).status, SimStatus::CompileError);
    }

    #[test]
    fn excerpt_short_log_verbatim() {
        assert_eq!(
            log_excerpt("abc", Some("abc"), ExcerptPolicy::default()),
            "abc"
        );
    }

    #[test]
    fn excerpt_keeps_headline_and_tail() {
        let mut log = String::from("%Error: syntax error near foo\n");
        log.push_str(&"padding line\n".repeat(1000));
        let p = ExcerptPolicy::default();
        let ex = log_excerpt(&log, Some("%Error: syntax error near foo"), p);
        assert!(ex.starts_with("first error: %Error: syntax error near foo"));
        assert!(ex.ends_with("padding line\n"));
        assert!(ex.chars().count() <= p.max_chars());
    }

    #[test]
    fn excerpt_respects_char_boundaries() {
        let log = "é".repeat(5000);
        let p = ExcerptPolicy {
            tail_chars: 10,
            headline_chars: 3,
        };
        let ex = log_excerpt(&log, Some(&"ü".repeat(50)), p);
        assert!(ex.ends_with(&"é".repeat(10)));
        assert!(ex.chars().count() <= p.max_chars());
    }
}
