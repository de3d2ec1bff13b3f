use super::{ScoreMethod, ScoreParams, ScoreVector, SimilarityMatrix, Temperature};
use crate::bundle::LabelVector;
use crate::error::{Error, Result};

pub(crate) fn row_max(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Largest and second-largest entries (the second may equal the first).
pub(crate) fn top_two(row: &[f64]) -> (f64, f64) {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in row {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    (first, second)
}

/// Softmax denominator relative to the row maximum:
/// `sum_j exp((s_j - max) / tau)`. Always in `[1, K]`.
pub(crate) fn shifted_partition(row: &[f64], max: f64, tau: f64) -> f64 {
    row.iter().map(|&s| ((s - max) / tau).exp()).sum()
}

/// Maximum softmax probability of one row. The winning term is `exp(0) = 1`,
/// so the probability is the reciprocal of the shifted partition function.
pub(crate) fn max_softmax(row: &[f64], tau: f64) -> f64 {
    1.0 / shifted_partition(row, row_max(row), tau)
}

fn map_rows(
    sims: &SimilarityMatrix,
    method: ScoreMethod,
    params: ScoreParams,
    f: impl Fn(&[f64]) -> f64,
) -> Result<ScoreVector> {
    ScoreVector::new(method, sims.iter_rows().map(f).collect(), params)
}

fn tau_params(tau: Temperature) -> ScoreParams {
    ScoreParams {
        tau: Some(tau.value()),
        ..ScoreParams::default()
    }
}

fn require_concepts(method: &'static str, sims: &SimilarityMatrix, needed: usize) -> Result<()> {
    if sims.cols() < needed {
        return Err(Error::TooFewConcepts {
            method,
            needed,
            got: sims.cols(),
        });
    }
    Ok(())
}

/// Maximum concept matching: the largest softmax probability over the
/// temperature-scaled similarities. Lies in `[1/K, 1]`.
pub fn mcm_scores(sims: &SimilarityMatrix, tau: Temperature) -> Result<ScoreVector> {
    let t = tau.value();
    map_rows(sims, ScoreMethod::Mcm, tau_params(tau), |row| {
        max_softmax(row, t)
    })
}

/// Highest raw cosine similarity, without softmax scaling.
pub fn max_cosine_scores(sims: &SimilarityMatrix) -> Result<ScoreVector> {
    map_rows(
        sims,
        ScoreMethod::MaxCosine,
        ScoreParams::default(),
        row_max,
    )
}

/// Negative Shannon entropy (natural log) of the softmax distribution.
pub fn entropy_scores(sims: &SimilarityMatrix, tau: Temperature) -> Result<ScoreVector> {
    let t = tau.value();
    map_rows(sims, ScoreMethod::Entropy, tau_params(tau), |row| {
        let max = row_max(row);
        let z = shifted_partition(row, max, t);
        let log_z = z.ln();
        // log p_i = (s_i - max)/tau - log z keeps underflowed p_i finite.
        row.iter()
            .map(|&s| {
                let log_p = (s - max) / t - log_z;
                log_p.exp() * log_p
            })
            .sum()
    })
}

/// Population variance (divide by K) of each row.
pub fn variance_scores(sims: &SimilarityMatrix) -> Result<ScoreVector> {
    require_concepts("variance", sims, 2)?;
    map_rows(
        sims,
        ScoreMethod::Variance,
        ScoreParams::default(),
        population_variance,
    )
}

/// Two-pass population variance of deviations from the first entry, so a
/// constant row is exactly 0.
pub(crate) fn population_variance(row: &[f64]) -> f64 {
    let k = row.len() as f64;
    let origin = row[0];
    let mean = row.iter().map(|s| s - origin).sum::<f64>() / k;
    row.iter()
        .map(|s| {
            let d = s - origin - mean;
            d * d
        })
        .sum::<f64>()
        / k
}

/// `exp(largest - second largest)`; at least 1.
pub fn scaled_diff_scores(sims: &SimilarityMatrix) -> Result<ScoreVector> {
    require_concepts("scaled_diff", sims, 2)?;
    map_rows(
        sims,
        ScoreMethod::ScaledDiff,
        ScoreParams::default(),
        |row| {
            let (first, second) = top_two(row);
            (first - second).exp()
        },
    )
}

/// Zero-shot class prediction: index of the closest concept, lowest index
/// on ties.
pub fn predict_classes(sims: &SimilarityMatrix) -> LabelVector {
    LabelVector::new(sims.iter_rows().map(argmax).collect())
}
