//! Line-coverage model.
//!
//! A [`CoverageMap`] is keyed by `(module, absolute line)` where the line
//! number is the line in the module's source file. The set of instrumented
//! lines comes from the simulator artifact and is fixed for a design, so two
//! maps of the same design can always be merged.

mod annotate;
mod artifact;
mod xml;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hdl::DesignModel;

pub use annotate::{annotate, strip_annotations, HOLE_MARKER};
pub use artifact::{
    parse_artifact, parse_artifact_text, write_mock_artifact, MOCK_ARTIFACT_HEADER,
};
pub use xml::{export_report, import_report, REPORT_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("unrecognized coverage artifact format: {0}")]
    UnknownArtifactFormat(String),
    #[error("cannot map coverage data onto the design: {0}")]
    LineMappingFailure(String),
    #[error("coverage maps have different instrumented line sets")]
    InstrumentationMismatch,
    #[error("no instrumented lines")]
    EmptyInstrumentation,
    #[error("line {line} is outside the source span {first}..={last}")]
    LineOutOfRange {
        line: usize,
        first: usize,
        last: usize,
    },
    #[error("coverage report violates the schema: {0}")]
    SchemaViolation(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineKey {
    pub module: String,
    pub line: usize,
}

impl LineKey {
    pub fn new(module: impl Into<String>, line: usize) -> Self {
        LineKey {
            module: module.into(),
            line,
        }
    }
}

impl fmt::Display for LineKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.module, self.line)
    }
}

/// Hit counts for every instrumented line (uncovered lines carry zero).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageMap {
    entries: BTreeMap<LineKey, u64>,
}

impl CoverageMap {
    /// All given lines instrumented, none hit.
    pub fn instrumented<I: IntoIterator<Item = LineKey>>(lines: I) -> Self {
        CoverageMap {
            entries: lines.into_iter().map(|k| (k, 0)).collect(),
        }
    }

    /// Builds a map from `(line, hits)` pairs; repeated keys accumulate.
    pub fn from_hits<I: IntoIterator<Item = (LineKey, u64)>>(hits: I) -> Self {
        let mut entries = BTreeMap::new();
        for (k, h) in hits {
            *entries.entry(k).or_insert(0u64) += h;
        }
        CoverageMap { entries }
    }

    /// Adds hits to an instrumented line. Returns false if the line is not instrumented.
    pub fn add_hits(&mut self, key: &LineKey, hits: u64) -> bool {
        match self.entries.get_mut(key) {
            Some(h) => {
                *h = h.saturating_add(hits);
                true
            }
            None => false,
        }
    }

    pub fn hits(&self, key: &LineKey) -> Option<u64> {
        self.entries.get(key).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&LineKey, u64)> {
        self.entries.iter().map(|(k, h)| (k, *h))
    }

    pub fn instrumented_lines(&self) -> impl Iterator<Item = &LineKey> {
        self.entries.keys()
    }

    pub fn covered_lines(&self) -> BTreeSet<LineKey> {
        self.entries
            .iter()
            .filter(|(_, h)| **h > 0)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn uncovered_lines(&self) -> impl Iterator<Item = &LineKey> {
        self.entries
            .iter()
            .filter(|(_, h)| **h == 0)
            .map(|(k, _)| k)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Same instrumented lines, all hit counts reset to zero.
    pub fn cleared(&self) -> Self {
        CoverageMap::instrumented(self.entries.keys().cloned())
    }

    pub fn same_instrumentation(&self, other: &CoverageMap) -> bool {
        self.entries.len() == other.entries.len() && self.entries.keys().eq(other.entries.keys())
    }

    pub fn modules(&self) -> BTreeSet<&str> {
        self.entries.keys().map(|k| k.module.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageScore {
    pub covered: usize,
    pub total: usize,
}

impl CoverageScore {
    pub fn new(covered: usize, total: usize) -> Result<Self, CoverageError> {
        if total == 0 {
            return Err(CoverageError::EmptyInstrumentation);
        }
        assert!(covered <= total, "covered lines exceed instrumented lines");
        Ok(CoverageScore { covered, total })
    }

    /// Unrounded percentage.
    pub fn percent_exact(&self) -> f64 {
        100.0 * self.covered as f64 / self.total as f64
    }

    /// Percentage rounded half-up to two decimals, computed in integers.
    pub fn percent(&self) -> f64 {
        round_half_up_2dp(self.covered as u128, self.total as u128)
    }

    pub fn is_full(&self) -> bool {
        self.covered == self.total
    }
}

/// `100 * num / den` rounded half-up to two decimals.
pub fn round_half_up_2dp(num: u128, den: u128) -> f64 {
    let hundredths = (num * 10_000 * 2 + den) / (2 * den);
    hundredths as f64 / 100.0
}

impl fmt::Display for CoverageScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.2}% ({}/{} lines)",
            self.percent(),
            self.covered,
            self.total
        )
    }
}

pub fn score(map: &CoverageMap) -> Result<CoverageScore, CoverageError> {
    let covered = map.entries.values().filter(|h| **h > 0).count();
    CoverageScore::new(covered, map.entries.len())
}

/// Per-line hit counts summed; both maps must share instrumentation.
pub fn merge(a: &CoverageMap, b: &CoverageMap) -> Result<CoverageMap, CoverageError> {
    if !a.same_instrumentation(b) {
        return Err(CoverageError::InstrumentationMismatch);
    }
    let entries = a
        .entries
        .iter()
        .zip(b.entries.values())
        .map(|((k, ha), hb)| (k.clone(), ha.saturating_add(*hb)))
        .collect();
    Ok(CoverageMap { entries })
}

/// Folds a non-empty sequence of maps with [`merge`].
pub fn merge_all<'a, I: IntoIterator<Item = &'a CoverageMap>>(
    maps: I,
) -> Result<Option<CoverageMap>, CoverageError> {
    let mut acc: Option<CoverageMap> = None;
    for m in maps {
        acc = Some(match acc {
            None => m.clone(),
            Some(a) => merge(&a, m)?,
        });
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageHole {
    pub module: String,
    pub lines: Vec<usize>,
    pub snippets: Vec<String>,
}

/// Zero-hit instrumented lines grouped by module. Modules without holes are absent.
pub fn holes_by_module(map: &CoverageMap, model: &DesignModel) -> BTreeMap<String, CoverageHole> {
    let mut out: BTreeMap<String, CoverageHole> = BTreeMap::new();
    for key in map.uncovered_lines() {
        let snippet = source_line(model, &key.module, key.line).unwrap_or_default();
        let hole = out
            .entry(key.module.clone())
            .or_insert_with(|| CoverageHole {
                module: key.module.clone(),
                lines: Vec::new(),
                snippets: Vec::new(),
            });
        hole.lines.push(key.line);
        hole.snippets.push(snippet);
    }
    out
}

fn source_line(model: &DesignModel, module: &str, line: usize) -> Option<String> {
    let info = model.modules.get(module)?;
    let idx = model.file_index(&info.source_span.file)?;
    model.files()[idx]
        .text
        .lines()
        .nth(line.checked_sub(1)?)
        .map(|l| l.trim().to_owned())
}
