//! Generic confidence scores over externally supplied logits.

use super::concept::{max_softmax, row_max, shifted_partition};
use super::{ScoreMethod, ScoreParams, ScoreVector, Temperature};
use crate::bundle::EmbeddingMatrix;
use crate::error::Result;

fn params(tau: Temperature) -> ScoreParams {
    ScoreParams {
        tau: Some(tau.value()),
        ..ScoreParams::default()
    }
}

/// Maximum softmax probability of each logit row (same formula as MCM,
/// without any bound on the logits).
pub fn softmax_confidence_scores(
    logits: &EmbeddingMatrix,
    tau: Temperature,
) -> Result<ScoreVector> {
    let t = tau.value();
    let values = logits.iter_rows().map(|row| max_softmax(row, t)).collect();
    ScoreVector::new(ScoreMethod::Msp, values, params(tau))
}

/// Negative free energy `tau * log sum_i exp(l_i / tau)`.
pub fn energy_scores(logits: &EmbeddingMatrix, tau: Temperature) -> Result<ScoreVector> {
    let t = tau.value();
    let values = logits
        .iter_rows()
        .map(|row| {
            let max = row_max(row);
            max + t * shifted_partition(row, max, t).ln()
        })
        .collect();
    ScoreVector::new(ScoreMethod::Energy, values, params(tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{mcm_scores, SimilarityMatrix};

    fn logits(rows: &[&[f64]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn msp_examples() {
        let t = Temperature::default();
        let s = softmax_confidence_scores(&logits(&[&[4.0, 4.0, 4.0, 4.0]]), t).unwrap();
        assert_eq!(s.values[0], 0.25);
        let s = softmax_confidence_scores(&logits(&[&[10.0, 0.0]]), t).unwrap();
        assert!((s.values[0] - 0.999_954_602_131_297_6).abs() < 1e-12);
        // Large logits must not overflow.
        let s = softmax_confidence_scores(&logits(&[&[1000.0, 999.0]]), t).unwrap();
        assert!((s.values[0] - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn msp_equals_mcm_on_bounded_logits() {
        let rows: &[&[f64]] = &[&[0.3, -0.8, 0.99], &[-1.0, 1.0, 0.0]];
        let t = Temperature::new(0.5).unwrap();
        let a = softmax_confidence_scores(&logits(rows), t).unwrap();
        let b = mcm_scores(&SimilarityMatrix::from_rows(rows).unwrap(), t).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn energy_examples() {
        let t = Temperature::default();
        let s = energy_scores(&logits(&[&[2.5]]), t).unwrap();
        assert_eq!(s.values[0], 2.5);

        let t2 = Temperature::new(2.0).unwrap();
        let s = energy_scores(&logits(&[&[0.7; 5]]), t2).unwrap();
        assert!((s.values[0] - (0.7 + 2.0 * 5f64.ln())).abs() < 1e-14);

        let s = energy_scores(&logits(&[&[0.3, 0.2, 0.1]]), t).unwrap();
        assert!((s.values[0] - 1.301_942_848_229_244).abs() < 1e-12);

        let s = energy_scores(&logits(&[&[800.0, 800.0]]), t).unwrap();
        assert!((s.values[0] - (800.0 + 2f64.ln())).abs() < 1e-10);
    }
}
