//! Independent reference implementations used by the integration tests.
//!
//! Everything here is written the obvious way (textbook formulas, dense
//! loops, no shared helpers from the library) so agreement with the
//! library is meaningful.

#![allow(dead_code)]

use oodkit::bundle::EmbeddingMatrix;
use oodkit::scoring::SimilarityMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Textbook softmax `exp(s_i / tau) / sum_j exp(s_j / tau)` without any
/// max subtraction.
pub fn softmax(row: &[f64], tau: f64) -> Vec<f64> {
    let e: Vec<f64> = row.iter().map(|s| (s / tau).exp()).collect();
    let z = compensated_sum(e.iter().copied());
    e.iter().map(|v| v / z).collect()
}

pub fn mcm(row: &[f64], tau: f64) -> f64 {
    softmax(row, tau)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn neg_entropy(row: &[f64], tau: f64) -> f64 {
    compensated_sum(
        softmax(row, tau)
            .into_iter()
            .map(|p| if p > 0.0 { p * p.ln() } else { 0.0 }),
    )
}

pub fn variance(row: &[f64]) -> f64 {
    let k = row.len() as f64;
    let mean = compensated_sum(row.iter().copied()) / k;
    compensated_sum(row.iter().map(|s| (s - mean).powi(2))) / k
}

pub fn scaled_diff(row: &[f64]) -> f64 {
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    (sorted[0] - sorted[1]).exp()
}

pub fn energy(row: &[f64], tau: f64) -> f64 {
    tau * compensated_sum(row.iter().map(|s| (s / tau).exp())).ln()
}

/// Softmax mass on the first `k_id` columns.
pub fn id_mass(row: &[f64], k_id: usize, tau: f64) -> f64 {
    compensated_sum(softmax(row, tau)[..k_id].iter().copied())
}

/// `P(id > ood) + 0.5 * P(id == ood)` by looping over every pair.
pub fn pairwise_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut credit = 0.0f64;
    for &a in id {
        for &b in ood {
            if a > b {
                credit += 1.0;
            } else if a == b {
                credit += 0.5;
            }
        }
    }
    credit / (id.len() as f64 * ood.len() as f64)
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in &mut m[col] {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    let pivot_row = m[col].clone();
                    for (v, p) in m[r].iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Reference class-conditional Gaussian fit: per-class means and the
/// pooled covariance (divide by N) plus `ridge` on the diagonal.
pub fn gaussian_fit(
    rows: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    ridge: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = rows[0].len();
    let mut means = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (x, &y) in rows.iter().zip(labels) {
        counts[y] += 1;
        for j in 0..d {
            means[y][j] += x[j];
        }
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        for v in m.iter_mut() {
            *v /= c as f64;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for (x, &y) in rows.iter().zip(labels) {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (x[a] - means[y][a]) * (x[b] - means[y][b]);
            }
        }
    }
    for (a, row) in cov.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v /= rows.len() as f64;
        }
        row[a] += ridge;
    }
    (means, cov)
}

/// `-min_k (x - mu_k)^T P (x - mu_k)` by explicit double loop.
pub fn quadratic_form_score(x: &[f64], means: &[Vec<f64>], precision: &[Vec<f64>]) -> f64 {
    let d = x.len();
    let mut best = f64::INFINITY;
    for mu in means {
        let mut q = 0.0;
        for a in 0..d {
            for b in 0..d {
                q += (x[a] - mu[a]) * precision[a][b] * (x[b] - mu[b]);
            }
        }
        best = best.min(q);
    }
    -best
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random similarity-like matrix with entries in `[-1, 1]`.
pub fn random_sims(rng: &mut impl Rng, rows: usize, cols: usize) -> SimilarityMatrix {
    let values = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    SimilarityMatrix::new(rows, cols, values).unwrap()
}

/// Random unnormalized f64 matrix whose entries span many magnitudes.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> EmbeddingMatrix {
    let data = (0..rows * cols)
        .map(|_| {
            let mantissa: f64 = rng.random_range(-1.0..1.0);
            let exponent: i32 = rng.random_range(-30..30);
            mantissa * 2f64.powi(exponent)
        })
        .collect();
    EmbeddingMatrix::from_f64(rows, cols, data).unwrap()
}

/// Raw bytes of the payload, for bitwise comparisons.
pub fn bits(m: &EmbeddingMatrix) -> Vec<u64> {
    m.data().iter().map(|v| v.to_bits()).collect()
}

/// Draws `n` Gaussian points around `center` with independent per-axis
/// scales via Box-Muller.
pub fn gaussian_points(
    rng: &mut impl Rng,
    center: &[f64],
    scales: &[f64],
    n: usize,
) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            center
                .iter()
                .zip(scales)
                .map(|(&c, &s)| {
                    let u1: f64 = 1.0 - rng.random::<f64>();
                    let u2: f64 = rng.random();
                    c + s * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                })
                .collect()
        })
        .collect()
}

pub fn approx_rel(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}
