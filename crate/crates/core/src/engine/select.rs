//! Target-module choice and best-of-batch selection.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::coverage::{CoverageHole, CoverageScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no module has coverage holes")]
pub struct NoHoles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("every candidate failed")]
pub struct AllCandidatesFailed;

/// Uniform draw over the modules that still have holes.
pub fn select_target_module<R: Rng + ?Sized>(
    holes: &BTreeMap<String, CoverageHole>,
    rng: &mut R,
) -> Result<String, NoHoles> {
    if holes.is_empty() {
        return Err(NoHoles);
    }
    let i = rng.random_range(0..holes.len());
    Ok(holes.keys().nth(i).expect("index in range").clone())
}

/// Index of the successful candidate with the highest achieved coverage,
/// lowest index on ties. `None` entries are failed candidates.
pub fn batched_select(scores: &[Option<CoverageScore>]) -> Result<usize, AllCandidatesFailed> {
    let mut best: Option<(usize, &CoverageScore)> = None;
    for (i, s) in scores.iter().enumerate() {
        let Some(s) = s else { continue };
        if best.is_none_or(|(_, b)| compare(s, b) == Ordering::Greater) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i).ok_or(AllCandidatesFailed)
}

/// Exact comparison of covered/total fractions.
fn compare(a: &CoverageScore, b: &CoverageScore) -> Ordering {
    let lhs = a.covered as u128 * b.total as u128;
    let rhs = b.covered as u128 * a.total as u128;
    lhs.cmp(&rhs)
}
