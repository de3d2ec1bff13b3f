//! Empirical check of when softmax scaling provably lowers the false
//! positive rate relative to the raw maximum cosine similarity.
//!
//! For OOD inputs the cosine similarities are close to uniform across the
//! ID concepts. If the average gap between the second-largest similarity
//! and the remaining non-maximal ones is below `delta` for every OOD input,
//! then for any temperature above
//!
//! ```text
//! T = lambda * (K - 1) * (lambda_wo + delta - s2) / (K * lambda - 1)
//! ```
//!
//! the MCM detector at threshold `lambda` has an FPR no larger than the
//! max-cosine detector at `lambda_wo`. Here `s2` is the second-largest OOD
//! similarity, treated as a scalar.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{auroc_values, fraction_at_or_above, threshold_value};
use crate::scoring::{max_cosine_scores, mcm_scores, SimilarityMatrix, Temperature};

/// Margin added to the empirical supremum so the assumption holds strictly.
pub const DELTA_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub k: usize,
    pub lambda: f64,
    pub lambda_wo: f64,
    pub delta: f64,
    pub s_hat_y2: f64,
    /// `None` when the bound is undefined (`K * lambda <= 1`).
    pub t: Option<f64>,
    pub tau: f64,
}

/// Mean, minimum and maximum of the per-row second-largest OOD similarity,
/// with the bound each choice of scalar produces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondSimilaritySensitivity {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub t_at_mean: Option<f64>,
    /// Largest bound: uses the smallest per-row second similarity, so
    /// `tau` above it guarantees the conclusion on this OOD set.
    pub t_at_min: Option<f64>,
    pub t_at_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub constants: TheoremConstants,
    pub fpr_softmax: f64,
    pub fpr_wo: f64,
    /// `tau > T` with `T` computed from the mean second similarity.
    pub bound_satisfied: bool,
    /// `tau > T` with `T` computed from the minimum second similarity.
    pub bound_satisfied_conservative: bool,
    pub conclusion_holds: bool,
    pub s_hat_y2_sensitivity: SecondSimilaritySensitivity,
    /// Non-fatal conditions that make the comparison degenerate or vacuous.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    /// `None` for the max-cosine (no softmax) entry.
    pub tau: Option<f64>,
    pub fpr: f64,
    pub auroc: f64,
}

fn require_two_concepts(sims: &SimilarityMatrix) -> Result<()> {
    if sims.cols() < 2 {
        return Err(Error::TooFewConcepts {
            method: "theorem check",
            needed: 2,
            got: sims.cols(),
        });
    }
    Ok(())
}

/// Indices of the largest and second-largest entries (lowest index on ties).
fn top_two_indices(row: &[f64]) -> (usize, usize) {
    let mut first = 0;
    for i in 1..row.len() {
        if row[i] > row[first] {
            first = i;
        }
    }
    let mut second = if first == 0 { 1 } else { 0 };
    for i in 0..row.len() {
        if i != first && row[i] > row[second] {
            second = i;
        }
    }
    (first, second)
}

/// `(1/(K-1)) * sum_{i != top} (s_second - s_i)` for one row.
pub fn assumption_gap(row: &[f64]) -> f64 {
    let (top, second) = top_two_indices(row);
    let s2 = row[second];
    let sum: f64 = row
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, s)| s2 - s)
        .sum();
    sum / (row.len() - 1) as f64
}

pub fn second_largest(row: &[f64]) -> f64 {
    let (_, second) = top_two_indices(row);
    row[second]
}

/// Smallest `delta` for which every OOD row's assumption gap is strictly
/// below it: the empirical supremum plus [`DELTA_MARGIN`].
pub fn estimate_delta(ood_sims: &SimilarityMatrix) -> Result<f64> {
    require_two_concepts(ood_sims)?;
    let sup = ood_sims
        .iter_rows()
        .map(assumption_gap)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(sup.max(0.0) + DELTA_MARGIN)
}

/// Closed-form temperature bound. Fails when `K * lambda - 1 <= 0`.
pub fn compute_bound_t(
    k: usize,
    lambda: f64,
    lambda_wo: f64,
    delta: f64,
    s_hat_y2: f64,
) -> Result<f64> {
    let k = k as f64;
    let denominator = k * lambda - 1.0;
    if denominator.is_nan() || denominator <= 0.0 {
        return Err(Error::BoundDenominator { denominator });
    }
    Ok(lambda * (k - 1.0) * (lambda_wo + delta - s_hat_y2) / denominator)
}

impl TheoremConstants {
    pub fn bound(&self) -> Result<f64> {
        compute_bound_t(
            self.k,
            self.lambda,
            self.lambda_wo,
            self.delta,
            self.s_hat_y2,
        )
    }
}

fn check_pair(id_sims: &SimilarityMatrix, ood_sims: &SimilarityMatrix) -> Result<()> {
    require_two_concepts(id_sims)?;
    if id_sims.cols() != ood_sims.cols() {
        return Err(Error::DimensionMismatch(format!(
            "ID similarities have K={} but OOD have K={}",
            id_sims.cols(),
            ood_sims.cols()
        )));
    }
    Ok(())
}

/// Calibrates both detectors on the ID set at `target_tpr`, measures their
/// FPRs on the OOD set, estimates the constants and reports whether `tau`
/// exceeds the bound and whether the FPR comparison holds.
pub fn verify_theorem(
    id_sims: &SimilarityMatrix,
    ood_sims: &SimilarityMatrix,
    tau: Temperature,
    target_tpr: f64,
) -> Result<TheoremReport> {
    check_pair(id_sims, ood_sims)?;
    let k = id_sims.cols();
    let mut notes = Vec::new();

    let id_mcm = mcm_scores(id_sims, tau)?;
    let ood_mcm = mcm_scores(ood_sims, tau)?;
    let id_wo = max_cosine_scores(id_sims)?;
    let ood_wo = max_cosine_scores(ood_sims)?;

    let lambda = threshold_value(&id_mcm.values, target_tpr)?;
    let lambda_wo = threshold_value(&id_wo.values, target_tpr)?;
    let fpr_softmax = fraction_at_or_above(&ood_mcm.values, lambda);
    let fpr_wo = fraction_at_or_above(&ood_wo.values, lambda_wo);

    let delta = estimate_delta(ood_sims)?;
    let seconds: Vec<f64> = ood_sims.iter_rows().map(second_largest).collect();
    let mean = seconds.iter().sum::<f64>() / seconds.len() as f64;
    let min = seconds.iter().copied().fold(f64::INFINITY, f64::min);
    let max = seconds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bound_with = |s2: f64| compute_bound_t(k, lambda, lambda_wo, delta, s2).ok();
    let sensitivity = SecondSimilaritySensitivity {
        mean,
        min,
        max,
        t_at_mean: bound_with(mean),
        t_at_min: bound_with(min),
        t_at_max: bound_with(max),
    };

    if k == 2 {
        notes.push("K = 2: every assumption gap is 0, so delta is vacuous".to_string());
    }
    let uniform = 1.0 / k as f64;
    if lambda <= uniform {
        notes.push(format!(
            "MCM threshold {lambda} <= 1/K = {uniform}: calibration is degenerate and the bound is undefined"
        ));
    }
    if id_wo.values.iter().all(|&v| v == id_wo.values[0]) {
        notes.push("max-cosine ID scores are constant: calibration is degenerate".to_string());
    }

    let t = sensitivity.t_at_mean;
    let tau_value = tau.value();
    Ok(TheoremReport {
        constants: TheoremConstants {
            k,
            lambda,
            lambda_wo,
            delta,
            s_hat_y2: mean,
            t,
            tau: tau_value,
        },
        fpr_softmax,
        fpr_wo,
        bound_satisfied: t.is_some_and(|t| tau_value > t),
        bound_satisfied_conservative: sensitivity.t_at_min.is_some_and(|t| tau_value > t),
        conclusion_holds: fpr_softmax <= fpr_wo,
        s_hat_y2_sensitivity: sensitivity,
        notes,
    })
}

/// MCM FPR and AUROC at each temperature, followed by one entry for the
/// max-cosine score.
pub fn temperature_sweep(
    id_sims: &SimilarityMatrix,
    ood_sims: &SimilarityMatrix,
    taus: &[Temperature],
    target_tpr: f64,
) -> Result<Vec<SweepEntry>> {
    if taus.is_empty() {
        return Err(Error::Empty("temperature list".into()));
    }
    if id_sims.cols() != ood_sims.cols() {
        return Err(Error::DimensionMismatch(format!(
            "ID similarities have K={} but OOD have K={}",
            id_sims.cols(),
            ood_sims.cols()
        )));
    }
    let entry = |tau: Option<f64>, id: &[f64], ood: &[f64]| -> Result<SweepEntry> {
        let lambda = threshold_value(id, target_tpr)?;
        Ok(SweepEntry {
            tau,
            fpr: fraction_at_or_above(ood, lambda),
            auroc: auroc_values(id, ood)?,
        })
    };
    let mut out = Vec::with_capacity(taus.len() + 1);
    for &tau in taus {
        let id = mcm_scores(id_sims, tau)?;
        let ood = mcm_scores(ood_sims, tau)?;
        out.push(entry(Some(tau.value()), &id.values, &ood.values)?);
    }
    let id = max_cosine_scores(id_sims)?;
    let ood = max_cosine_scores(ood_sims)?;
    out.push(entry(None, &id.values, &ood.values)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sims(rows: &[&[f64]]) -> SimilarityMatrix {
        SimilarityMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn delta_examples() {
        assert_eq!(
            estimate_delta(&sims(&[&[0.2, 0.2, 0.2]])).unwrap(),
            DELTA_MARGIN
        );
        let d = estimate_delta(&sims(&[&[0.3, 0.2, 0.1]])).unwrap();
        assert!((d - 0.05).abs() < 1e-8);
        let d = estimate_delta(&sims(&[&[0.9, 0.1], &[-0.3, 0.4]])).unwrap();
        assert_eq!(d, DELTA_MARGIN);
        assert!(estimate_delta(&sims(&[&[0.9]])).is_err());
    }

    #[test]
    fn gap_uses_second_largest_with_ties() {
        // Top is index 1 (first of the tied maxima); second is the other 0.5.
        assert_eq!(top_two_indices(&[0.1, 0.5, 0.5]), (1, 2));
        assert_eq!(top_two_indices(&[0.9, 0.1, 0.4]), (0, 2));
        assert!((assumption_gap(&[0.1, 0.5, 0.5]) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn bound_examples() {
        let t = compute_bound_t(100, 0.011, 0.26, 0.03, 0.23).unwrap();
        assert!((t - 0.6534).abs() < 1e-9);
        assert_eq!(
            compute_bound_t(100, 0.011, 0.25, 0.125, 0.375).unwrap(),
            0.0
        );
        assert!(matches!(
            compute_bound_t(100, 0.01, 0.26, 0.03, 0.23),
            Err(Error::BoundDenominator { .. })
        ));
        let near = compute_bound_t(100, 0.01 + 1e-12, 0.26, 0.03, 0.23).unwrap();
        assert!(near > 1e6);
    }

    #[test]
    fn separable_sets() {
        let mut id_rows = Vec::new();
        for c in 0..4 {
            let mut r = vec![0.1; 4];
            r[c] = 0.9;
            id_rows.push(r);
        }
        let id = SimilarityMatrix::from_rows(&id_rows).unwrap();
        let ood = sims(&[&[0.2; 4], &[0.2; 4]]);
        let rep = verify_theorem(&id, &ood, Temperature::default(), 0.95).unwrap();
        assert_eq!(rep.fpr_softmax, 0.0);
        assert_eq!(rep.fpr_wo, 0.0);
        assert!(rep.conclusion_holds);
        assert_eq!(rep.constants.k, 4);
    }

    #[test]
    fn k_two_is_noted() {
        let id = sims(&[&[0.9, 0.1], &[0.2, 0.7]]);
        let ood = sims(&[&[0.3, 0.35]]);
        let rep = verify_theorem(&id, &ood, Temperature::default(), 0.95).unwrap();
        assert_eq!(rep.constants.delta, DELTA_MARGIN);
        assert!(rep.notes.iter().any(|n| n.contains("K = 2")));
    }

    #[test]
    fn constant_id_rows_are_degenerate_not_fatal() {
        let id = sims(&[&[0.3, 0.3, 0.3]]);
        let ood = sims(&[&[0.3, 0.1, 0.2]]);
        let rep = verify_theorem(&id, &ood, Temperature::default(), 0.95).unwrap();
        assert!(rep.constants.t.is_none());
        assert!(!rep.bound_satisfied);
        assert!(rep.notes.iter().any(|n| n.contains("undefined")));
    }

    #[test]
    fn sweep_layout() {
        let id = sims(&[&[0.9, 0.1, 0.0], &[0.1, 0.8, 0.2]]);
        let ood = sims(&[&[0.3, 0.3, 0.2]]);
        let taus: Vec<Temperature> = [0.01, 0.1, 1.0, 10.0, 100.0]
            .iter()
            .map(|&t| Temperature::new(t).unwrap())
            .collect();
        let sweep = temperature_sweep(&id, &ood, &taus, 0.95).unwrap();
        assert_eq!(sweep.len(), 6);
        assert_eq!(sweep[5].tau, None);
        assert!(temperature_sweep(&id, &ood, &[], 0.95).is_err());
    }
}
