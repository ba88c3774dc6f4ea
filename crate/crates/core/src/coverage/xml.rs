//! Versioned XML interchange for coverage maps (`schemas/coverage-report.xsd`).
//!
//! ```xml
//! <coverage version="1" covered="1" total="2" percent="50.00">
//!   <module name="m" covered="1" total="2">
//!     <line number="4" hits="3"/>
//!     <line number="5" hits="0"/>
//!   </module>
//! </coverage>
//! ```
//!
//! The summary attributes are informational; on import they are checked
//! against the line elements when present.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{score, CoverageError, CoverageMap, CoverageScore, LineKey};

pub const REPORT_VERSION: &str = "1";

pub fn export_report(map: &CoverageMap) -> String {
    let mut by_module: BTreeMap<&str, Vec<(usize, u64)>> = BTreeMap::new();
    for (k, h) in map.entries() {
        by_module
            .entry(k.module.as_str())
            .or_default()
            .push((k.line, h));
    }
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    match score(map) {
        Ok(s) => {
            let _ = writeln!(
                out,
                "<coverage version=\"{REPORT_VERSION}\" covered=\"{}\" total=\"{}\" percent=\"{:.2}\">",
                s.covered,
                s.total,
                s.percent()
            );
        }
        Err(_) => {
            let _ = writeln!(
                out,
                "<coverage version=\"{REPORT_VERSION}\" covered=\"0\" total=\"0\">"
            );
        }
    }
    for (module, lines) in by_module {
        let covered = lines.iter().filter(|(_, h)| *h > 0).count();
        let _ = writeln!(
            out,
            "  <module name=\"{}\" covered=\"{covered}\" total=\"{}\">",
            escape(module),
            lines.len()
        );
        for (line, hits) in lines {
            let _ = writeln!(out, "    <line number=\"{line}\" hits=\"{hits}\"/>");
        }
        out.push_str("  </module>\n");
    }
    out.push_str("</coverage>\n");
    out
}

type OpenModule = (String, Option<(usize, usize)>, usize, usize);

pub fn import_report(document: &str) -> Result<CoverageMap, CoverageError> {
    let violation = |m: String| CoverageError::SchemaViolation(m);
    let mut reader = Reader::from_str(document);
    reader.config_mut().trim_text(true);

    let mut hits: Vec<(LineKey, u64)> = Vec::new();
    let mut seen = HashSet::new();
    // name, declared (covered, total), lines seen, covered lines seen
    let mut module: Option<OpenModule> = None;
    let mut root_summary: Option<(Option<usize>, Option<usize>)> = None;
    let mut root_closed = false;

    loop {
        let event = reader
            .read_event()
            .map_err(|e| violation(format!("malformed XML: {e}")))?;
        match event {
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Start(e) if root_summary.is_none() => root_summary = Some(read_root(&e)?),
            Event::Empty(e) if root_summary.is_none() => {
                root_summary = Some(read_root(&e)?);
                root_closed = true;
            }
            Event::Start(_) | Event::Empty(_) if root_closed => {
                return Err(violation("content after the root element".into()));
            }
            Event::Start(e) if e.name().as_ref() == b"module" => {
                if module.is_some() {
                    return Err(violation("nested <module>".into()));
                }
                let attrs = attributes(&e)?;
                let name = attrs
                    .get("name")
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| violation("module without name".into()))?;
                let summary = match (opt_count(&attrs, "covered")?, opt_count(&attrs, "total")?) {
                    (Some(c), Some(t)) => Some((c, t)),
                    _ => None,
                };
                module = Some((name.clone(), summary, 0, 0));
            }
            Event::Empty(e) if e.name().as_ref() == b"module" => {
                return Err(violation("module without lines".into()));
            }
            Event::Empty(e) | Event::Start(e) if e.name().as_ref() == b"line" => {
                let Some((ref name, _, ref mut covered, ref mut total)) = module else {
                    return Err(violation("<line> outside <module>".into()));
                };
                let attrs = attributes(&e)?;
                let number: usize = parse_count(&attrs, "number")?;
                if number == 0 {
                    return Err(violation("line numbers start at 1".into()));
                }
                let h: u64 = parse_count(&attrs, "hits")?;
                let key = LineKey::new(name.clone(), number);
                if !seen.insert(key.clone()) {
                    return Err(violation(format!("duplicate line {key}")));
                }
                *total += 1;
                if h > 0 {
                    *covered += 1;
                }
                hits.push((key, h));
            }
            Event::End(e) if e.name().as_ref() == b"line" => {}
            Event::End(e) if e.name().as_ref() == b"module" => {
                let (name, summary, covered, total) = module
                    .take()
                    .ok_or_else(|| violation("stray </module>".into()))?;
                if total == 0 {
                    return Err(violation(format!("module `{name}` has no lines")));
                }
                if let Some(s) = summary {
                    if s != (covered, total) {
                        return Err(violation(format!(
                            "module `{name}` summary does not match its lines"
                        )));
                    }
                }
            }
            Event::End(e) if e.name().as_ref() == b"coverage" => root_closed = true,
            Event::Eof => break,
            Event::Text(t) => {
                return Err(violation(format!(
                    "unexpected text `{}`",
                    String::from_utf8_lossy(&t)
                )));
            }
            Event::Start(e) | Event::Empty(e) => {
                return Err(violation(format!(
                    "unexpected element <{}>",
                    String::from_utf8_lossy(e.name().as_ref())
                )));
            }
            other => return Err(violation(format!("unexpected content {other:?}"))),
        }
    }
    let Some((covered, total)) = root_summary else {
        return Err(violation("missing <coverage> root".into()));
    };
    if !root_closed || module.is_some() {
        return Err(violation("unterminated document".into()));
    }
    let map = CoverageMap::from_hits(hits);
    if let (Some(c), Some(t)) = (covered, total) {
        let actual = score(&map).map_or((0, 0), |s: CoverageScore| (s.covered, s.total));
        if (c, t) != actual {
            return Err(violation(
                "document summary does not match its lines".into(),
            ));
        }
    }
    Ok(map)
}

fn read_root(e: &BytesStart<'_>) -> Result<(Option<usize>, Option<usize>), CoverageError> {
    if e.name().as_ref() != b"coverage" {
        return Err(CoverageError::SchemaViolation(
            "root element must be <coverage>".into(),
        ));
    }
    let attrs = attributes(e)?;
    match attrs.get("version").map(String::as_str) {
        Some(REPORT_VERSION) => {}
        Some(v) => {
            return Err(CoverageError::SchemaViolation(format!(
                "unsupported version `{v}`"
            )))
        }
        None => {
            return Err(CoverageError::SchemaViolation(
                "missing version attribute".into(),
            ))
        }
    }
    Ok((opt_count(&attrs, "covered")?, opt_count(&attrs, "total")?))
}

fn attributes(e: &BytesStart<'_>) -> Result<BTreeMap<String, String>, CoverageError> {
    let mut out = BTreeMap::new();
    for a in e.attributes() {
        let a = a.map_err(|err| CoverageError::SchemaViolation(format!("bad attribute: {err}")))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a
            .unescape_value()
            .map_err(|err| CoverageError::SchemaViolation(format!("bad attribute value: {err}")))?
            .into_owned();
        out.insert(key, value);
    }
    Ok(out)
}

fn parse_count<T: std::str::FromStr>(
    attrs: &BTreeMap<String, String>,
    key: &str,
) -> Result<T, CoverageError> {
    let raw = attrs
        .get(key)
        .ok_or_else(|| CoverageError::SchemaViolation(format!("missing `{key}` attribute")))?;
    if !raw.bytes().all(|b| b.is_ascii_digit()) || raw.is_empty() {
        return Err(CoverageError::SchemaViolation(format!(
            "`{key}` must be a non-negative integer, got `{raw}`"
        )));
    }
    raw.parse()
        .map_err(|_| CoverageError::SchemaViolation(format!("`{key}` out of range: `{raw}`")))
}

fn opt_count(attrs: &BTreeMap<String, String>, key: &str) -> Result<Option<usize>, CoverageError> {
    attrs
        .contains_key(key)
        .then(|| parse_count(attrs, key))
        .transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exports_expected_document() {
        let map = CoverageMap::from_hits([(LineKey::new("m", 4), 3), (LineKey::new("m", 5), 0)]);
        let doc = export_report(&map);
        assert!(
            doc.contains("<coverage version=\"1\" covered=\"1\" total=\"2\" percent=\"50.00\">")
        );
        assert!(doc.contains("<line number=\"4\" hits=\"3\"/>"));
        assert_eq!(import_report(&doc).unwrap(), map);
    }

    #[test]
    fn negative_hits_violate_schema() {
        let doc = r#"<coverage version="1"><module name="m"><line number="1" hits="-2"/></module></coverage>"#;
        assert!(matches!(
            import_report(doc),
            Err(CoverageError::SchemaViolation(_))
        ));
    }

    #[test]
    fn structural_violations() {
        for doc in [
            r#"<coverage><module name="m"><line number="1" hits="1"/></module></coverage>"#,
            r#"<coverage version="2"></coverage>"#,
            r#"<report version="1"></report>"#,
            r#"<coverage version="1"><line number="1" hits="1"/></coverage>"#,
            r#"<coverage version="1"><module name="m"><line number="1" hits="1"/><line number="1" hits="0"/></module></coverage>"#,
            r#"<coverage version="1"><module name="m"><line number="0" hits="1"/></module></coverage>"#,
            r#"<coverage version="1"><module name="m"></module></coverage>"#,
            r#"<coverage version="1" covered="2" total="2"><module name="m"><line number="1" hits="1"/><line number="2" hits="0"/></module></coverage>"#,
            r#"<coverage version="1"><module name="m"><line number="1" hits="1"/></module>"#,
            r#"<coverage version="1"><module name="m"><line number="1" hits="1"/><bogus/></module></coverage>"#,
        ] {
            assert!(
                matches!(import_report(doc), Err(CoverageError::SchemaViolation(_))),
                "{doc}"
            );
        }
    }

    fn arb_map() -> impl Strategy<Value = CoverageMap> {
        prop::collection::btree_map(("[a-z][a-z0-9_]{0,6}", 1usize..500), 0u64..1000, 0..40)
            .prop_map(|m| {
                CoverageMap::from_hits(m.into_iter().map(|((md, l), h)| (LineKey::new(md, l), h)))
            })
    }

    proptest! {
        #[test]
        fn round_trip(map in arb_map()) {
            prop_assert_eq!(import_report(&export_report(&map)).unwrap(), map);
        }
    }
}
