mod common;

use oodkit::bundle::{EmbeddingMatrix, LabelVector};
use oodkit::scoring::{fit_mahalanobis, mahalanobis_scores, MahalanobisModel};
use proptest::prelude::*;
use rand::Rng;

struct Fixture {
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    k: usize,
}

impl Fixture {
    fn features(&self) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&self.rows).unwrap()
    }

    fn label_vector(&self) -> LabelVector {
        LabelVector::new(self.labels.clone())
    }
}

fn gaussian_fixture(seed: u64, k: usize, d: usize, per_class: usize) -> Fixture {
    let mut rng = common::rng(seed);
    let scales: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..2.0)).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..k {
        let center: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        rows.extend(common::gaussian_points(
            &mut rng, &center, &scales, per_class,
        ));
        labels.extend(std::iter::repeat_n(class, per_class));
    }
    Fixture { rows, labels, k }
}

fn check_against_oracle(fx: &Fixture, model: &MahalanobisModel, rel: f64) {
    let d = fx.rows[0].len();
    let (means, cov) = common::gaussian_fit(&fx.rows, &fx.labels, fx.k, model.ridge);
    let precision = common::gauss_jordan_inverse(&cov);

    for (k, mean) in means.iter().enumerate() {
        for (a, b) in model.mean(k).iter().zip(mean) {
            assert!((a - b).abs() <= rel * (1.0 + b.abs()), "mean {a} vs {b}");
        }
    }
    for i in 0..d {
        for j in 0..d {
            let (a, b) = (model.precision[i * d + j], precision[i][j]);
            let scale = precision[i][i].abs().max(precision[j][j].abs());
            assert!(
                (a - b).abs() <= rel * scale,
                "precision[{i}][{j}] {a} vs {b}"
            );
        }
    }

    let scores = mahalanobis_scores(&fx.features(), model).unwrap();
    for (x, &s) in fx.rows.iter().zip(&scores.values) {
        let expected = common::quadratic_form_score(x, &means, &precision);
        assert!(
            common::approx_rel(s, expected, rel) || (s - expected).abs() < 1e-12,
            "{s} vs {expected}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn small_fixtures_match_dense_oracle(seed in any::<u64>(), k in 1usize..4, d in 1usize..=3, per_class in 3usize..30) {
        let fx = gaussian_fixture(seed, k, d, per_class);
        let model = fit_mahalanobis(&fx.features(), &fx.label_vector(), k, None).unwrap();
        check_against_oracle(&fx, &model, 1e-6);
    }

    #[test]
    fn class_means_score_exactly_zero(seed in any::<u64>(), k in 1usize..4, d in 1usize..=3) {
        let fx = gaussian_fixture(seed, k, d, 10);
        let model = fit_mahalanobis(&fx.features(), &fx.label_vector(), k, None).unwrap();
        let means: Vec<&[f64]> = (0..k).map(|c| model.mean(c)).collect();
        let at_means = mahalanobis_scores(&EmbeddingMatrix::from_rows(&means).unwrap(), &model).unwrap();
        prop_assert!(at_means.values.iter().all(|&s| s == 0.0));
        let all = mahalanobis_scores(&fx.features(), &model).unwrap();
        prop_assert!(all.values.iter().all(|&s| s <= 0.0));
    }
}

#[test]
fn large_two_dimensional_fixture() {
    let fx = gaussian_fixture(2024, 3, 2, 1000);
    let model = fit_mahalanobis(&fx.features(), &fx.label_vector(), 3, None).unwrap();
    check_against_oracle(&fx, &model, 1e-6);
    assert!(!model.is_underdetermined());
}

#[test]
fn explicit_ridge_is_used_verbatim() {
    let fx = gaussian_fixture(5, 2, 3, 8);
    let model = fit_mahalanobis(&fx.features(), &fx.label_vector(), 2, Some(0.5)).unwrap();
    assert_eq!(model.ridge, 0.5);
    check_against_oracle(&fx, &model, 1e-9);
}

#[test]
fn underdetermined_fit_is_flagged_but_usable() {
    let fx = gaussian_fixture(9, 2, 3, 1);
    let model = fit_mahalanobis(&fx.features(), &fx.label_vector(), 2, Some(1e-3)).unwrap();
    assert!(model.is_underdetermined());
    let scores = mahalanobis_scores(&fx.features(), &model).unwrap();
    assert!(scores.values.iter().all(|&s| s == 0.0));
}

#[test]
fn model_survives_a_json_report_bitwise() {
    let fx = gaussian_fixture(21, 3, 3, 20);
    let model = fit_mahalanobis(&fx.features(), &fx.label_vector(), 3, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    oodkit::report::write_report(&path, "maha-fit", &model).unwrap();
    let back: MahalanobisModel = oodkit::report::read_report(&path).unwrap().payload;
    assert_eq!(back, model);
}
