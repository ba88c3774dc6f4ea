use std::collections::BTreeSet;

use super::{CoverageError, CoverageHole};
use crate::hdl::NumberedSource;

/// Appended to every uncovered line shown to the model.
pub const HOLE_MARKER: &str = " // <<< COVERAGE HOLE: never executed";

/// Marks each hole line; every other line is left byte-identical.
pub fn annotate(
    source: &NumberedSource,
    hole: &CoverageHole,
) -> Result<NumberedSource, CoverageError> {
    let first = source.first_line;
    let last = source.last_line();
    if let Some(&line) = hole.lines.iter().find(|l| !(first..=last).contains(*l)) {
        return Err(CoverageError::LineOutOfRange { line, first, last });
    }
    let marked: BTreeSet<usize> = hole.lines.iter().copied().collect();
    let mut out = String::with_capacity(source.text.len() + marked.len() * HOLE_MARKER.len());
    for (i, raw) in source.text.split_inclusive('\n').enumerate() {
        if marked.contains(&(first + i)) {
            let body = raw.trim_end_matches(['\n', '\r']);
            out.push_str(body);
            out.push_str(HOLE_MARKER);
            out.push_str(&raw[body.len()..]);
        } else {
            out.push_str(raw);
        }
    }
    Ok(NumberedSource {
        file: source.file.clone(),
        first_line: first,
        text: out,
    })
}

/// Inverse of [`annotate`].
pub fn strip_annotations(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for raw in text.split_inclusive('\n') {
        let body = raw.trim_end_matches(['\n', '\r']);
        match body.strip_suffix(HOLE_MARKER) {
            Some(orig) => {
                out.push_str(orig);
                out.push_str(&raw[body.len()..]);
            }
            None => out.push_str(raw),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn src() -> NumberedSource {
        NumberedSource::new(
            "m.v",
            3,
            "module m;\n  wire a;\n\n  assign a = 1;\nendmodule\n",
        )
    }

    fn hole(lines: &[usize]) -> CoverageHole {
        CoverageHole {
            module: "m".into(),
            lines: lines.to_vec(),
            snippets: vec![String::new(); lines.len()],
        }
    }

    #[test]
    fn marks_only_hole_lines() {
        let a = annotate(&src(), &hole(&[6])).unwrap();
        let orig: Vec<String> = src().text.lines().map(String::from).collect();
        let got: Vec<&str> = a.text.lines().collect();
        assert_eq!(got.len(), orig.len());
        for (i, (g, o)) in got.iter().zip(&orig).enumerate() {
            if i + 3 == 6 {
                assert_eq!(*g, format!("{o}{HOLE_MARKER}"));
            } else {
                assert_eq!(*g, o.as_str());
            }
        }
    }

    #[test]
    fn out_of_range_is_rejected() {
        assert_eq!(
            annotate(&src(), &hole(&[2])),
            Err(CoverageError::LineOutOfRange {
                line: 2,
                first: 3,
                last: 7
            })
        );
        assert!(annotate(&src(), &hole(&[8])).is_err());
    }

    #[test]
    fn handles_missing_trailing_newline_and_crlf() {
        let s = NumberedSource::new("x.v", 1, "a\r\nb");
        let a = annotate(&s, &hole(&[1, 2])).unwrap();
        assert_eq!(a.text, format!("a{HOLE_MARKER}\r\nb{HOLE_MARKER}"));
        assert_eq!(strip_annotations(&a.text), s.text);
    }

    proptest! {
        #[test]
        fn strip_inverts_annotate(lines in prop::collection::vec("[ -~]{0,40}", 1..30), pick in prop::collection::vec(any::<prop::sample::Index>(), 1..10)) {
            let text = lines.iter().map(|l| format!("{l}\n")).collect::<String>();
            let s = NumberedSource::new("p.v", 10, text.clone());
            let chosen: Vec<usize> = pick.iter().map(|i| 10 + i.index(lines.len())).collect();
            let a = annotate(&s, &hole(&chosen)).unwrap();
            prop_assert_eq!(a.text.lines().count(), lines.len());
            prop_assert_eq!(strip_annotations(&a.text), text);
        }
    }
}
