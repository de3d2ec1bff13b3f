use crate::bundle::{fold_name, l2_normalize_rows, ConceptBank, EmbeddingMatrix};
use crate::error::{Error, Result};

/// Prompt ensembling: averages the per-template concept vectors of each
/// class, optionally rescaling the mean back to unit length.
///
/// All banks must list the same classes in the same order and share a
/// dimension. The result keeps the first bank's class names and the
/// concatenation of every bank's templates.
pub fn ensemble_concept_banks(banks: &[ConceptBank], renormalize: bool) -> Result<ConceptBank> {
    let first = banks
        .first()
        .ok_or_else(|| Error::Empty("no concept banks to ensemble".into()))?;
    let (k, d) = (first.num_classes(), first.dim());

    for bank in &banks[1..] {
        if bank.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "concept banks have d={d} and d={}",
                bank.dim()
            )));
        }
        if bank.num_classes() != k {
            return Err(Error::Shape(format!(
                "concept banks have {k} and {} classes",
                bank.num_classes()
            )));
        }
        for (index, (a, b)) in first
            .class_names()
            .iter()
            .zip(bank.class_names())
            .enumerate()
        {
            if fold_name(a) != fold_name(b) {
                return Err(Error::ClassNameMismatch {
                    index,
                    left: a.clone(),
                    right: b.clone(),
                });
            }
        }
    }

    let mut sum = vec![0.0; k * d];
    for bank in banks {
        for (acc, v) in sum.iter_mut().zip(bank.matrix().data()) {
            *acc += v;
        }
    }
    let n = banks.len() as f64;
    let mean = EmbeddingMatrix::from_f64(k, d, sum.into_iter().map(|v| v / n).collect())?;
    let matrix = if renormalize {
        l2_normalize_rows(&mean)?
    } else {
        mean
    };
    let templates = banks
        .iter()
        .flat_map(|b| b.templates().iter().cloned())
        .collect();
    ConceptBank::new(matrix, first.class_names().to_vec(), templates)
}
