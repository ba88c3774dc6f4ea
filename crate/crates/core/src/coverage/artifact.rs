//! Backend-specific coverage artifact readers.
//!
//! Two formats are recognized by their first line:
//! * the mock backend's plain listing (`# covclose-mock-coverage v1`, then
//!   `<module> <line> <hits>` per instrumented line), and
//! * LCOV tracefiles (`TN:`/`SF:`/`DA:` records) as written by
//!   `verilator_coverage --write-info`.
//!
//! The XML interchange report is accepted as well.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{CoverageError, CoverageMap, LineKey};
use crate::hdl::DesignModel;

pub const MOCK_ARTIFACT_HEADER: &str = "# covclose-mock-coverage v1";

pub fn parse_artifact(path: &Path, model: &DesignModel) -> Result<CoverageMap, CoverageError> {
    let text = std::fs::read_to_string(path).map_err(|e| CoverageError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_artifact_text(&text, path.parent(), model)
}

/// `base_dir` resolves relative `SF:` paths in LCOV input.
pub fn parse_artifact_text(
    text: &str,
    base_dir: Option<&Path>,
    model: &DesignModel,
) -> Result<CoverageMap, CoverageError> {
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    let map = if first == MOCK_ARTIFACT_HEADER {
        parse_mock(text)?
    } else if first.starts_with("TN:") || first.starts_with("SF:") {
        parse_lcov(text, base_dir, model)?
    } else if first.starts_with("<?xml") || first.starts_with("<coverage") {
        super::import_report(text)?
    } else {
        let shown: String = first.chars().take(60).collect();
        return Err(CoverageError::UnknownArtifactFormat(shown));
    };
    if map.is_empty() {
        return Err(CoverageError::LineMappingFailure(
            "artifact has no instrumented lines".into(),
        ));
    }
    for key in map.instrumented_lines() {
        let Some(info) = model.modules.get(&key.module) else {
            return Err(CoverageError::LineMappingFailure(format!(
                "unknown module `{}`",
                key.module
            )));
        };
        let span = &info.source_span;
        if !(span.start_line..=span.end_line).contains(&key.line) {
            return Err(CoverageError::LineMappingFailure(format!(
                "line {} lies outside module `{}` ({}..={})",
                key.line, key.module, span.start_line, span.end_line
            )));
        }
    }
    Ok(map)
}

fn parse_mock(text: &str) -> Result<CoverageMap, CoverageError> {
    let mut hits = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || {
            CoverageError::UnknownArtifactFormat(format!("mock artifact line {}: `{line}`", n + 1))
        };
        let mut it = line.split_whitespace();
        let (Some(module), Some(l), Some(h), None) = (it.next(), it.next(), it.next(), it.next())
        else {
            return Err(bad());
        };
        let l: usize = l.parse().map_err(|_| bad())?;
        let h: u64 = h.parse().map_err(|_| bad())?;
        hits.push((LineKey::new(module, l), h));
    }
    Ok(CoverageMap::from_hits(hits))
}

fn parse_lcov(
    text: &str,
    base_dir: Option<&Path>,
    model: &DesignModel,
) -> Result<CoverageMap, CoverageError> {
    let mut hits: BTreeMap<LineKey, u64> = BTreeMap::new();
    let mut current: Option<usize> = None;
    for raw in text.lines() {
        let line = raw.trim();
        if let Some(sf) = line.strip_prefix("SF:") {
            current = resolve_file(sf, base_dir, model);
        } else if line == "end_of_record" {
            current = None;
        } else if let Some(da) = line.strip_prefix("DA:") {
            let Some(file_idx) = current else { continue };
            let mut parts = da.split(',');
            let (Some(l), Some(h)) = (parts.next(), parts.next()) else {
                return Err(CoverageError::UnknownArtifactFormat(format!(
                    "bad DA record `{line}`"
                )));
            };
            let l: usize = l
                .trim()
                .parse()
                .map_err(|_| CoverageError::UnknownArtifactFormat(line.to_owned()))?;
            // negative counts occasionally appear from counter wraparound
            let h: i64 = h
                .trim()
                .parse()
                .map_err(|_| CoverageError::UnknownArtifactFormat(line.to_owned()))?;
            let path = &model.files()[file_idx].path;
            let module = model.module_at(path, l).ok_or_else(|| {
                CoverageError::LineMappingFailure(format!(
                    "{}:{l} is not inside any module",
                    path.display()
                ))
            })?;
            *hits
                .entry(LineKey::new(module.name.clone(), l))
                .or_insert(0) += h.max(0) as u64;
        }
    }
    Ok(CoverageMap::from_hits(hits))
}

/// Maps an `SF:` path onto a design file: exact, canonical, then unique file name.
fn resolve_file(sf: &str, base_dir: Option<&Path>, model: &DesignModel) -> Option<usize> {
    let mut p = PathBuf::from(sf);
    if p.is_relative() {
        if let Some(base) = base_dir {
            p = base.join(p);
        }
    }
    if let Some(i) = model
        .file_index(Path::new(sf))
        .or_else(|| model.file_index(&p))
    {
        return Some(i);
    }
    let name = Path::new(sf).file_name()?;
    let mut candidates = model
        .files()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.path.file_name() == Some(name));
    match (candidates.next(), candidates.next()) {
        (Some((i, _)), None) => Some(i),
        _ => None,
    }
}

/// Serializes a map in the mock backend's artifact format.
pub fn write_mock_artifact(map: &CoverageMap) -> String {
    let mut out = String::from(MOCK_ARTIFACT_HEADER);
    out.push('\n');
    for (k, h) in map.entries() {
        let _ = writeln!(out, "{} {} {}", k.module, k.line, h);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::score;
    use crate::hdl::parse_sources;

    fn model() -> DesignModel {
        parse_sources(vec![(
            PathBuf::from("/d/m.v"),
            "module m(input a, output b);\n  assign b = a;\n  wire c;\nendmodule\n".into(),
        )])
        .unwrap()
    }

    #[test]
    fn mock_listing() {
        let text = format!("{MOCK_ARTIFACT_HEADER}\nm 1 3\nm 2 0\n");
        let map = parse_artifact_text(&text, None, &model()).unwrap();
        let s = score(&map).unwrap();
        assert_eq!((s.covered, s.total), (1, 2));
    }

    #[test]
    fn empty_artifact_is_a_mapping_failure() {
        let text = format!("{MOCK_ARTIFACT_HEADER}\n");
        assert!(matches!(
            parse_artifact_text(&text, None, &model()),
            Err(CoverageError::LineMappingFailure(_))
        ));
    }

    #[test]
    fn unknown_format() {
        assert!(matches!(
            parse_artifact_text("hello", None, &model()),
            Err(CoverageError::UnknownArtifactFormat(_))
        ));
    }

    #[test]
    fn lines_outside_modules_fail_mapping() {
        let text = format!("{MOCK_ARTIFACT_HEADER}\nm 9 1\n");
        assert!(matches!(
            parse_artifact_text(&text, None, &model()),
            Err(CoverageError::LineMappingFailure(_))
        ));
        let text = format!("{MOCK_ARTIFACT_HEADER}\nzz 1 1\n");
        assert!(matches!(
            parse_artifact_text(&text, None, &model()),
            Err(CoverageError::LineMappingFailure(_))
        ));
    }

    #[test]
    fn lcov_maps_design_lines_and_skips_testbench() {
        let text = "TN:\nSF:/work/tb.sv\nDA:3,1\nend_of_record\nSF:/d/m.v\nDA:2,5\nDA:3,0\nLF:2\nLH:1\nend_of_record\n";
        let map = parse_artifact_text(text, None, &model()).unwrap();
        assert_eq!(map.hits(&LineKey::new("m", 2)), Some(5));
        assert_eq!(map.hits(&LineKey::new("m", 3)), Some(0));
        assert_eq!(map.len(), 2);
    }

    #[test]
    fn lcov_matches_by_unique_file_name() {
        let text = "SF:/elsewhere/m.v\nDA:2,1\nend_of_record\n";
        let map = parse_artifact_text(text, None, &model()).unwrap();
        assert_eq!(map.len(), 1);
    }

    #[test]
    fn mock_writer_round_trips() {
        let map = CoverageMap::from_hits([(LineKey::new("m", 1), 2), (LineKey::new("m", 3), 0)]);
        let text = write_mock_artifact(&map);
        assert_eq!(parse_artifact_text(&text, None, &model()).unwrap(), map);
    }
}
