//! Embedding matrices, concept banks and their on-disk representation.
//!
//! A bundle is a directory holding `manifest.json`, `embeddings.embf` and,
//! depending on its role, `labels.json`, `classnames.json` and
//! `templates.json`. The binary layout lives in [`embf`], the directory
//! layout in [`dir`].

pub mod dir;
pub mod embf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dir::{
    load_bundle, load_concept_bank, write_bundle, write_concept_bank, Bundle, BundleManifest, Role,
};
pub use embf::{decode_matrix, encode_matrix, read_matrix, write_matrix};

/// Tolerance on row norms for matrices carrying the `normalized` flag.
pub const STORED_NORM_TOLERANCE: f64 = 1e-4;

/// Rows with a norm below this cannot be normalized.
pub const ZERO_NORM_THRESHOLD: f64 = 1e-12;

/// Element type of the stored payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Dense row-major `rows x cols` matrix of finite reals.
///
/// Values are held as `f64` in memory. A matrix with dtype [`Dtype::F32`]
/// only ever holds values that are exactly representable as `f32`, so
/// writing and re-reading it is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    dtype: Dtype,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn from_f64(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let m = Self {
            rows,
            cols,
            data,
            dtype: Dtype::F64,
            normalized: false,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_f32(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        let m = Self {
            rows,
            cols,
            data: data.into_iter().map(f64::from).collect(),
            dtype: Dtype::F32,
            normalized: false,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds an `f64` matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_f64(rows.len(), cols, data)
    }

    /// Marks (or unmarks) the matrix as having unit-norm rows. Setting the
    /// flag checks every row norm against [`STORED_NORM_TOLERANCE`].
    pub fn with_normalized_flag(mut self, normalized: bool) -> Result<Self> {
        self.normalized = normalized;
        if normalized {
            self.check_row_norms()?;
        }
        Ok(self)
    }

    /// Converts to another storage dtype. Narrowing to `f32` rounds every
    /// value to the nearest `f32`; the normalized flag is re-checked.
    pub fn to_dtype(mut self, dtype: Dtype) -> Result<Self> {
        if dtype == Dtype::F32 && self.dtype == Dtype::F64 {
            for v in &mut self.data {
                let narrowed = *v as f32;
                if !narrowed.is_finite() {
                    return Err(Error::InvalidArgument(format!("value {v} overflows f32")));
                }
                *v = f64::from(narrowed);
            }
        }
        self.dtype = dtype;
        if self.normalized {
            self.check_row_norms()?;
        }
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Shape(format!(
                "matrix must be at least 1x1, got {}x{}",
                self.rows, self.cols
            )));
        }
        let expected = self
            .rows
            .checked_mul(self.cols)
            .ok_or_else(|| Error::Shape("rows * cols overflows".into()))?;
        if self.data.len() != expected {
            return Err(Error::Shape(format!(
                "data length {} does not match {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        if let Some(index) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if self.dtype == Dtype::F32 {
            if let Some(index) = self.data.iter().position(|&v| f64::from(v as f32) != v) {
                return Err(Error::InvalidArgument(format!(
                    "value at flat index {index} is not representable as f32"
                )));
            }
        }
        if self.normalized {
            self.check_row_norms()?;
        }
        Ok(())
    }

    fn check_row_norms(&self) -> Result<()> {
        for (row, r) in self.iter_rows().enumerate() {
            let norm = l2_norm(r);
            if (norm - 1.0).abs() > STORED_NORM_TOLERANCE {
                return Err(Error::NotNormalized { row, norm });
            }
        }
        Ok(())
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    let sum_sq: f64 = v.iter().map(|x| x * x).sum();
    if sum_sq.is_finite() && sum_sq > f64::MIN_POSITIVE {
        return sum_sq.sqrt();
    }
    // Squares overflowed or underflowed: rescale by the largest magnitude.
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Divides every row by its L2 norm.
///
/// The result is always stored as `f64` and flagged normalized; narrow it
/// with [`EmbeddingMatrix::to_dtype`] before writing if `f32` is wanted.
pub fn l2_normalize_rows(matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(matrix.data.len());
    for (row, r) in matrix.iter_rows().enumerate() {
        let norm = l2_norm(r);
        if norm < ZERO_NORM_THRESHOLD {
            return Err(Error::ZeroRow { row });
        }
        data.extend(r.iter().map(|v| v / norm));
    }
    Ok(EmbeddingMatrix {
        rows: matrix.rows,
        cols: matrix.cols,
        data,
        dtype: Dtype::F64,
        normalized: true,
    })
}

/// Case-folded, whitespace-trimmed form used for every class-name comparison.
pub fn fold_name(name: &str) -> String {
    name.trim().to_lowercase()
}

/// `K x d` concept prototypes with their class names and the prompt
/// templates that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptBank {
    matrix: EmbeddingMatrix,
    class_names: Vec<String>,
    templates: Vec<String>,
}

impl ConceptBank {
    pub fn new(
        matrix: EmbeddingMatrix,
        class_names: Vec<String>,
        templates: Vec<String>,
    ) -> Result<Self> {
        if class_names.len() != matrix.rows() {
            return Err(Error::Shape(format!(
                "{} class names for {} concept rows",
                class_names.len(),
                matrix.rows()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(class_names.len());
        for name in &class_names {
            if !seen.insert(fold_name(name)) {
                return Err(Error::DuplicateClassName(name.clone()));
            }
        }
        Ok(Self {
            matrix,
            class_names,
            templates,
        })
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.matrix
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn templates(&self) -> &[String] {
        &self.templates
    }

    pub fn num_classes(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

/// Ground-truth class indices for a set of inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector {
    labels: Vec<usize>,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    /// Builds a label vector and checks every label is below `num_classes`.
    pub fn with_classes(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let v = Self { labels };
        v.check_range(num_classes)?;
        Ok(v)
    }

    pub fn check_range(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().position(|&l| l >= num_classes) {
            Some(index) => Err(Error::LabelOutOfRange {
                index,
                label: self.labels[index],
                num_classes,
            }),
            None => Ok(()),
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
