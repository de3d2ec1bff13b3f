//! Scoring against an expanded label space of ID classes plus candidate
//! OOD labels.

use std::collections::HashSet;

use super::concept::row_max;
use super::{ScoreMethod, ScoreParams, ScoreVector, SimilarityMatrix, Temperature};
use crate::bundle::fold_name;
use crate::error::{Error, Result};

/// Softmax mass assigned to the first `k_id` columns when normalizing over
/// all `K + L` columns. Exactly 1 when there are no candidate columns.
pub fn candidate_label_scores(
    sims_expanded: &SimilarityMatrix,
    k_id: usize,
    tau: Temperature,
) -> Result<ScoreVector> {
    if k_id == 0 || k_id > sims_expanded.cols() {
        return Err(Error::InvalidArgument(format!(
            "k_id={k_id} must be in 1..={}",
            sims_expanded.cols()
        )));
    }
    let t = tau.value();
    let values = sims_expanded
        .iter_rows()
        .map(|row| {
            let max = row_max(row);
            let term = |s: &f64| ((s - max) / t).exp();
            let id_mass: f64 = row[..k_id].iter().map(term).sum();
            let candidate_mass: f64 = row[k_id..].iter().map(term).sum();
            id_mass / (id_mass + candidate_mass)
        })
        .collect();
    ScoreVector::new(
        ScoreMethod::CandidateLabel,
        values,
        ScoreParams {
            tau: Some(t),
            k_id: Some(k_id),
            ridge: None,
        },
    )
}

/// String-based filtering of generated candidate labels: drops every
/// candidate that matches an ID class name (case-insensitive, trimmed) and
/// every repeat of an earlier surviving candidate. Order is preserved.
pub fn filter_candidate_labels<C, I>(candidates: &[C], id_names: &[I]) -> Vec<String>
where
    C: AsRef<str>,
    I: AsRef<str>,
{
    let id: HashSet<String> = id_names.iter().map(|n| fold_name(n.as_ref())).collect();
    let mut seen = HashSet::new();
    candidates
        .iter()
        .map(AsRef::as_ref)
        .filter(|c| {
            let folded = fold_name(c);
            !id.contains(&folded) && seen.insert(folded)
        })
        .map(str::to_string)
        .collect()
}
