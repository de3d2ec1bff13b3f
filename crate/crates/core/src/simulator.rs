//! Synthetic embedding tasks on the unit hypersphere.
//!
//! Concepts and OOD inputs are uniform on the sphere; ID inputs of class
//! `k` are `normalize(kappa * concept_k + g)` with `g` standard normal.
//!
//! Randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64(seed)`; independent components draw from separate ChaCha
//! streams selected with `set_stream(stream_id)`. Normal deviates use
//! `rand_distr::StandardNormal`. Stream assignment for a task:
//!
//! | stream  | component                      |
//! |---------|--------------------------------|
//! | 0       | concept prototypes             |
//! | 1       | OOD inputs                     |
//! | 2 + k   | ID inputs of class `k`         |

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bundle::{l2_norm, ConceptBank, EmbeddingMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::scoring::{population_variance, top_two, SimilarityMatrix};
use crate::theory::assumption_gap;

pub const CONCEPT_STREAM: u64 = 0;
pub const OOD_STREAM: u64 = 1;
pub const ID_STREAM_BASE: u64 = 2;

pub const DEFAULT_KAPPA: f64 = 10.0;

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub n_id_per_class: usize,
    pub n_ood: usize,
    pub kappa: f64,
    pub seed: u64,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        Self {
            num_classes: 100,
            dim: 512,
            n_id_per_class: 20,
            n_ood: 2000,
            kappa: DEFAULT_KAPPA,
            seed: 0,
        }
    }
}

impl SyntheticTaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        if self.dim < 2 {
            return Err(Error::InvalidArgument(
                "dimension must be at least 2".into(),
            ));
        }
        if self.n_id_per_class == 0 || self.n_ood == 0 {
            return Err(Error::InvalidArgument(
                "sample counts must be positive".into(),
            ));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kappa must be finite and >= 0, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub concepts: ConceptBank,
    pub id_features: EmbeddingMatrix,
    pub id_labels: LabelVector,
    pub ood_features: EmbeddingMatrix,
    pub config: SyntheticTaskConfig,
}

fn normalized_row(out: &mut Vec<f64>, raw: &[f64]) {
    let norm = l2_norm(raw);
    out.extend(raw.iter().map(|v| v / norm));
}

fn uniform_rows(rng: &mut ChaCha20Rng, n: usize, d: usize) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(n * d);
    let mut raw = vec![0.0; d];
    for _ in 0..n {
        // A standard normal vector in d >= 2 is zero with probability 0.
        loop {
            raw.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
            if l2_norm(&raw) > 0.0 {
                break;
            }
        }
        normalized_row(&mut data, &raw);
    }
    EmbeddingMatrix::from_f64(n, d, data)?.with_normalized_flag(true)
}

fn concentrated_rows(
    rng: &mut ChaCha20Rng,
    prototype: &[f64],
    kappa: f64,
    n: usize,
) -> Result<EmbeddingMatrix> {
    let d = prototype.len();
    let mut data = Vec::with_capacity(n * d);
    let mut raw = vec![0.0; d];
    for _ in 0..n {
        loop {
            for (v, &mu) in raw.iter_mut().zip(prototype) {
                let g: f64 = StandardNormal.sample(rng);
                *v = kappa * mu + g;
            }
            if l2_norm(&raw) > 0.0 {
                break;
            }
        }
        normalized_row(&mut data, &raw);
    }
    EmbeddingMatrix::from_f64(n, d, data)?.with_normalized_flag(true)
}

/// `n` independent points uniform on the unit sphere in `d` dimensions.
pub fn sample_uniform_sphere(n: usize, d: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if n == 0 || d < 2 {
        return Err(Error::InvalidArgument(format!(
            "need n >= 1 and d >= 2, got n={n}, d={d}"
        )));
    }
    uniform_rows(&mut stream_rng(seed, 0), n, d)
}

/// `n` points `normalize(kappa * prototype + g)`. With `kappa = 0` this is
/// the same draw as [`sample_uniform_sphere`] for the same seed.
pub fn sample_concentrated(
    prototype: &[f64],
    kappa: f64,
    n: usize,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    let norm = l2_norm(prototype);
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "prototype must be unit-norm, got norm {norm}"
        )));
    }
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kappa must be >= 0, got {kappa}"
        )));
    }
    if n == 0 || prototype.len() < 2 {
        return Err(Error::InvalidArgument("need n >= 1 and d >= 2".into()));
    }
    concentrated_rows(&mut stream_rng(seed, 0), prototype, kappa, n)
}

pub fn make_synthetic_task(config: SyntheticTaskConfig) -> Result<SyntheticTask> {
    config.validate()?;
    let (k, d) = (config.num_classes, config.dim);

    let concept_matrix = uniform_rows(&mut stream_rng(config.seed, CONCEPT_STREAM), k, d)?;
    let class_names = (0..k).map(|i| format!("class_{i}")).collect();
    let concepts = ConceptBank::new(concept_matrix, class_names, Vec::new())?;

    let ood_features = uniform_rows(&mut stream_rng(config.seed, OOD_STREAM), config.n_ood, d)?;

    let n_id = k * config.n_id_per_class;
    let mut id_data = Vec::with_capacity(n_id * d);
    let mut labels = Vec::with_capacity(n_id);
    for class in 0..k {
        let mut rng = stream_rng(config.seed, ID_STREAM_BASE + class as u64);
        let rows = concentrated_rows(
            &mut rng,
            concepts.matrix().row(class),
            config.kappa,
            config.n_id_per_class,
        )?;
        id_data.extend(rows.into_data());
        labels.extend(std::iter::repeat_n(class, config.n_id_per_class));
    }
    let id_features = EmbeddingMatrix::from_f64(n_id, d, id_data)?.with_normalized_flag(true)?;

    Ok(SyntheticTask {
        concepts,
        id_features,
        id_labels: LabelVector::with_classes(labels, k)?,
        ood_features,
        config,
    })
}

/// Summary statistics of how uniform a set of similarity rows is across
/// concepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    /// Population standard deviation of each row.
    pub row_std: Vec<f64>,
    /// Largest minus second-largest similarity of each row.
    pub top_gap: Vec<f64>,
    /// Per-row average gap between the second-largest and each
    /// non-maximal similarity.
    pub assumption_gap: Vec<f64>,
    pub mean_row_std: f64,
    pub mean_top_gap: f64,
    pub mean_assumption_gap: f64,
    pub max_assumption_gap: f64,
}

pub fn uniformity_report(sims: &SimilarityMatrix) -> Result<UniformityReport> {
    if sims.cols() < 2 {
        return Err(Error::TooFewConcepts {
            method: "uniformity report",
            needed: 2,
            got: sims.cols(),
        });
    }
    let mut row_std = Vec::with_capacity(sims.rows());
    let mut top_gap = Vec::with_capacity(sims.rows());
    let mut gaps = Vec::with_capacity(sims.rows());
    for row in sims.iter_rows() {
        row_std.push(population_variance(row).sqrt());
        let (first, second) = top_two(row);
        top_gap.push(first - second);
        gaps.push(assumption_gap(row));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(UniformityReport {
        mean_row_std: mean(&row_std),
        mean_top_gap: mean(&top_gap),
        mean_assumption_gap: mean(&gaps),
        max_assumption_gap: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        row_std,
        top_gap,
        assumption_gap: gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::dot;
    use crate::metrics::id_accuracy;
    use crate::scoring::{cosine_similarities, predict_classes};

    #[test]
    fn uniform_rows_are_unit_and_deterministic() {
        let a = sample_uniform_sphere(50, 16, 3).unwrap();
        for r in a.iter_rows() {
            assert!((l2_norm(r) - 1.0).abs() < 1e-6);
        }
        assert_eq!(a, sample_uniform_sphere(50, 16, 3).unwrap());
        assert_ne!(a, sample_uniform_sphere(50, 16, 4).unwrap());
        assert!(sample_uniform_sphere(0, 16, 3).is_err());
        assert!(sample_uniform_sphere(5, 1, 3).is_err());
    }

    #[test]
    fn kappa_zero_reduces_to_uniform() {
        let mut proto = vec![0.0; 8];
        proto[0] = 1.0;
        let a = sample_concentrated(&proto, 0.0, 20, 11).unwrap();
        let b = sample_uniform_sphere(20, 8, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn huge_kappa_collapses_onto_prototype() {
        let proto = sample_uniform_sphere(1, 32, 5).unwrap();
        let rows = sample_concentrated(proto.row(0), 1e6, 100, 6).unwrap();
        for r in rows.iter_rows() {
            assert!(dot(r, proto.row(0)) > 0.999);
        }
    }

    #[test]
    fn concentrated_rejects_non_unit_prototype() {
        assert!(sample_concentrated(&[1.0, 1.0], 1.0, 3, 0).is_err());
    }

    #[test]
    fn task_shape_and_determinism() {
        let cfg = SyntheticTaskConfig {
            num_classes: 5,
            dim: 16,
            n_id_per_class: 4,
            n_ood: 7,
            kappa: 3.0,
            seed: 9,
        };
        let t = make_synthetic_task(cfg).unwrap();
        assert_eq!(t.concepts.num_classes(), 5);
        assert_eq!(t.concepts.class_names()[4], "class_4");
        assert_eq!(t.id_features.rows(), 20);
        assert_eq!(t.ood_features.rows(), 7);
        assert_eq!(t.id_labels.as_slice()[..5], [0, 0, 0, 0, 1]);
        assert!(t.id_features.is_normalized() && t.ood_features.is_normalized());
        assert_eq!(t, make_synthetic_task(cfg).unwrap());
    }

    #[test]
    fn huge_kappa_gives_perfect_accuracy() {
        let cfg = SyntheticTaskConfig {
            num_classes: 2,
            dim: 8,
            n_id_per_class: 50,
            n_ood: 1,
            kappa: 1e6,
            seed: 1,
        };
        let t = make_synthetic_task(cfg).unwrap();
        let sims = cosine_similarities(&t.id_features, &t.concepts).unwrap();
        assert_eq!(
            id_accuracy(&predict_classes(&sims), &t.id_labels).unwrap(),
            1.0
        );
    }

    #[test]
    fn invalid_configs() {
        let base = SyntheticTaskConfig::default();
        for cfg in [
            SyntheticTaskConfig {
                num_classes: 1,
                ..base
            },
            SyntheticTaskConfig { dim: 1, ..base },
            SyntheticTaskConfig { n_ood: 0, ..base },
            SyntheticTaskConfig {
                kappa: -1.0,
                ..base
            },
        ] {
            assert!(make_synthetic_task(cfg).is_err());
        }
    }

    #[test]
    fn uniformity_of_constant_rows() {
        let sims = SimilarityMatrix::from_rows(&[[0.2; 5], [0.7; 5]]).unwrap();
        let rep = uniformity_report(&sims).unwrap();
        assert_eq!(rep.row_std, vec![0.0, 0.0]);
        assert_eq!(rep.mean_top_gap, 0.0);
        assert_eq!(rep.max_assumption_gap, 0.0);
    }
}
