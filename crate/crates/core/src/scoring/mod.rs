//! Per-input detection scores.
//!
//! Every score is oriented so that a higher value means "more
//! in-distribution"; a detector accepts an input when its score is at or
//! above a calibrated threshold.

mod candidates;
mod concept;
mod ensemble;
mod logits;
mod mahalanobis;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{dot, l2_normalize_rows, ConceptBank, EmbeddingMatrix};
use crate::error::{Error, Result};

pub use candidates::{candidate_label_scores, filter_candidate_labels};
pub use concept::{
    entropy_scores, max_cosine_scores, mcm_scores, predict_classes, scaled_diff_scores,
    variance_scores,
};
pub(crate) use concept::{population_variance, top_two};
pub use ensemble::ensemble_concept_banks;
pub use logits::{energy_scores, softmax_confidence_scores};
pub use mahalanobis::{fit_mahalanobis, mahalanobis_scores, MahalanobisModel};

/// Softmax temperature. Always positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 {
            Ok(Self(tau))
        } else {
            Err(Error::InvalidTemperature(tau))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Self(1.0)
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;

    fn try_from(tau: f64) -> Result<Self> {
        Self::new(tau)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

/// Scoring method identifiers, as used in reports and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    #[value(name = "mcm")]
    Mcm,
    #[value(name = "max_cosine")]
    MaxCosine,
    #[value(name = "entropy")]
    Entropy,
    #[value(name = "variance")]
    Variance,
    #[value(name = "scaled_diff")]
    ScaledDiff,
    #[value(name = "msp")]
    Msp,
    #[value(name = "energy")]
    Energy,
    #[value(name = "mahalanobis")]
    Mahalanobis,
    #[value(name = "candidate_label")]
    CandidateLabel,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 9] = [
        ScoreMethod::Mcm,
        ScoreMethod::MaxCosine,
        ScoreMethod::Entropy,
        ScoreMethod::Variance,
        ScoreMethod::ScaledDiff,
        ScoreMethod::Msp,
        ScoreMethod::Energy,
        ScoreMethod::Mahalanobis,
        ScoreMethod::CandidateLabel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMethod::Mcm => "mcm",
            ScoreMethod::MaxCosine => "max_cosine",
            ScoreMethod::Entropy => "entropy",
            ScoreMethod::Variance => "variance",
            ScoreMethod::ScaledDiff => "scaled_diff",
            ScoreMethod::Msp => "msp",
            ScoreMethod::Energy => "energy",
            ScoreMethod::Mahalanobis => "mahalanobis",
            ScoreMethod::CandidateLabel => "candidate_label",
        }
    }
}

impl std::fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Method-specific settings recorded alongside a score vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub method: ScoreMethod,
    pub values: Vec<f64>,
    pub params: ScoreParams,
}

impl ScoreVector {
    pub fn new(method: ScoreMethod, values: Vec<f64>, params: ScoreParams) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            method,
            values,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `index,score` CSV with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,score\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }
}

/// `N x K` cosine similarities between inputs and concepts.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "similarity matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} similarity matrix",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape("ragged similarity rows".into()));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.cols)
    }
}

fn unit_rows(m: &EmbeddingMatrix) -> Result<std::borrow::Cow<'_, EmbeddingMatrix>> {
    if m.is_normalized() {
        Ok(std::borrow::Cow::Borrowed(m))
    } else {
        Ok(std::borrow::Cow::Owned(l2_normalize_rows(m)?))
    }
}

/// Cosine similarity of every input row against every concept row.
///
/// Inputs not flagged as normalized are normalized first.
pub fn cosine_similarities(
    images: &EmbeddingMatrix,
    concepts: &ConceptBank,
) -> Result<SimilarityMatrix> {
    if images.cols() != concepts.dim() {
        return Err(Error::DimensionMismatch(format!(
            "inputs have d={} but concepts have d={}",
            images.cols(),
            concepts.dim()
        )));
    }
    let images = unit_rows(images)?;
    let concepts = unit_rows(concepts.matrix())?;
    let k = concepts.rows();
    let mut values = vec![0.0; images.rows() * k];
    values
        .par_chunks_mut(k)
        .zip(images.data().par_chunks(images.cols()))
        .for_each(|(out, x)| {
            for (o, c) in out.iter_mut().zip(concepts.iter_rows()) {
                *o = dot(x, c);
            }
        });
    SimilarityMatrix::new(images.rows(), k, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank(rows: &[[f64; 2]]) -> ConceptBank {
        let m = EmbeddingMatrix::from_rows(rows).unwrap();
        let names = (0..rows.len()).map(|i| format!("c{i}")).collect();
        ConceptBank::new(m, names, vec![]).unwrap()
    }

    #[test]
    fn axis_aligned_similarities() {
        let img = EmbeddingMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let s = cosine_similarities(&img, &bank(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])).unwrap();
        assert_eq!(s.row(0), &[1.0, 0.0, -1.0]);
    }

    #[test]
    fn self_similarity_is_one() {
        let img = EmbeddingMatrix::from_rows(&[[0.3, -1.7]]).unwrap();
        let s = cosine_similarities(&img, &bank(&[[0.3, -1.7]])).unwrap();
        assert!((s.row(0)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_is_zero_and_unnormalized_inputs_are_normalized() {
        let img = EmbeddingMatrix::from_rows(&[[5.0, 0.0]]).unwrap();
        let s = cosine_similarities(&img, &bank(&[[0.0, 2.0], [3.0, 3.0]])).unwrap();
        assert_eq!(s.row(0)[0], 0.0);
        assert!((s.row(0)[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let img = EmbeddingMatrix::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            cosine_similarities(&img, &bank(&[[1.0, 0.0]])),
            Err(Error::DimensionMismatch(_))
        ));
        let zero = EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            cosine_similarities(&zero, &bank(&[[1.0, 0.0]])),
            Err(Error::ZeroRow { row: 1 })
        ));
        assert!(matches!(
            SimilarityMatrix::from_rows(&[[0.1, f64::INFINITY]]),
            Err(Error::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn temperature_validation() {
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
        assert_eq!(Temperature::default().value(), 1.0);
    }

    #[test]
    fn score_csv() {
        let v =
            ScoreVector::new(ScoreMethod::Mcm, vec![0.5, 0.25], ScoreParams::default()).unwrap();
        assert_eq!(v.to_csv(), "index,score\n0,0.5\n1,0.25\n");
        assert_eq!(serde_json::to_string(&v.method).unwrap(), "\"mcm\"");
    }
}
