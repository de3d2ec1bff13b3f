//! Threshold calibration, detector decisions and evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::bundle::LabelVector;
use crate::error::{Error, Result};
use crate::scoring::{ScoreMethod, ScoreVector};

pub const DEFAULT_TARGET_TPR: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub lambda: f64,
    pub target_tpr: f64,
    pub method: ScoreMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fpr_at_tpr: f64,
    pub auroc: f64,
    pub id_accuracy: Option<f64>,
    pub threshold: Threshold,
    pub n_id: usize,
    pub n_ood: usize,
}

fn check_tpr(target_tpr: f64) -> Result<()> {
    if target_tpr > 0.0 && target_tpr <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidTpr(target_tpr))
    }
}

fn non_empty(scores: &[f64], what: &str) -> Result<()> {
    if scores.is_empty() {
        Err(Error::Empty(format!("{what} scores")))
    } else {
        Ok(())
    }
}

/// Threshold on raw values: the ascending order statistic at index
/// `floor((1 - tpr) * N)`, stepped down if floating-point rounding would
/// leave fewer than `tpr * N` scores at or above it.
pub fn threshold_value(scores: &[f64], target_tpr: f64) -> Result<f64> {
    check_tpr(target_tpr)?;
    non_empty(scores, "calibration")?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut idx = (((1.0 - target_tpr) * n as f64).floor() as usize).min(n - 1);
    while idx > 0 && ((n - idx) as f64) < target_tpr * n as f64 {
        idx -= 1;
    }
    Ok(sorted[idx])
}

pub fn calibrate_threshold(id_scores: &ScoreVector, target_tpr: f64) -> Result<Threshold> {
    Ok(Threshold {
        lambda: threshold_value(&id_scores.values, target_tpr)?,
        target_tpr,
        method: id_scores.method,
    })
}

/// `score >= lambda` is in-distribution.
pub fn detect(score: f64, threshold: &Threshold) -> Decision {
    if score >= threshold.lambda {
        Decision::In
    } else {
        Decision::Out
    }
}

/// Fraction of `scores` at or above `lambda`.
pub fn fraction_at_or_above(scores: &[f64], lambda: f64) -> f64 {
    scores.iter().filter(|&&s| s >= lambda).count() as f64 / scores.len() as f64
}

pub fn fpr_at_tpr_values(id: &[f64], ood: &[f64], target_tpr: f64) -> Result<f64> {
    non_empty(ood, "OOD")?;
    let lambda = threshold_value(id, target_tpr)?;
    Ok(fraction_at_or_above(ood, lambda))
}

/// False positive rate on OOD scores at the threshold calibrated on ID
/// scores (FPR95 for the default target).
pub fn fpr_at_tpr(
    id_scores: &ScoreVector,
    ood_scores: &ScoreVector,
    target_tpr: f64,
) -> Result<f64> {
    fpr_at_tpr_values(&id_scores.values, &ood_scores.values, target_tpr)
}

/// Rank-based AUROC: `P(id > ood) + 0.5 * P(id == ood)`.
///
/// Computed from a single merge over the sorted inputs. The numerator is
/// accumulated as an integer count of half-pairs, so the result is the
/// same floating-point value a pairwise double loop produces.
pub fn auroc_values(id: &[f64], ood: &[f64]) -> Result<f64> {
    non_empty(id, "ID")?;
    non_empty(ood, "OOD")?;
    let mut id_sorted = id.to_vec();
    let mut ood_sorted = ood.to_vec();
    id_sorted.sort_by(f64::total_cmp);
    ood_sorted.sort_by(f64::total_cmp);

    // For each ID score: count OOD strictly below (2 half-credits) and
    // equal (1 half-credit).
    let mut half_pairs: u128 = 0;
    let (mut below, mut at_or_below) = (0usize, 0usize);
    for &s in &id_sorted {
        while below < ood_sorted.len() && ood_sorted[below] < s {
            below += 1;
        }
        at_or_below = at_or_below.max(below);
        while at_or_below < ood_sorted.len() && ood_sorted[at_or_below] <= s {
            at_or_below += 1;
        }
        half_pairs += 2 * below as u128 + (at_or_below - below) as u128;
    }
    let pairs = id.len() as f64 * ood.len() as f64;
    Ok((half_pairs as f64 / 2.0) / pairs)
}

pub fn auroc(id_scores: &ScoreVector, ood_scores: &ScoreVector) -> Result<f64> {
    auroc_values(&id_scores.values, &ood_scores.values)
}

pub fn id_accuracy(predictions: &LabelVector, truth: &LabelVector) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Empty("labels".into()));
    }
    let hits = predictions
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Calibrates on ID scores and evaluates FPR and AUROC in one pass.
pub fn evaluate(
    id_scores: &ScoreVector,
    ood_scores: &ScoreVector,
    target_tpr: f64,
    id_accuracy: Option<f64>,
) -> Result<EvalReport> {
    let threshold = calibrate_threshold(id_scores, target_tpr)?;
    non_empty(&ood_scores.values, "OOD")?;
    Ok(EvalReport {
        fpr_at_tpr: fraction_at_or_above(&ood_scores.values, threshold.lambda),
        auroc: auroc(id_scores, ood_scores)?,
        id_accuracy,
        threshold,
        n_id: id_scores.len(),
        n_ood: ood_scores.len(),
    })
}

/// Formats a fraction as a percentage with two decimals, rounding half to
/// even on the scaled value.
pub fn format_percent(fraction: f64) -> String {
    let hundredths = (fraction * 10_000.0).round_ties_even();
    format!("{:.2}", hundredths / 100.0)
}
