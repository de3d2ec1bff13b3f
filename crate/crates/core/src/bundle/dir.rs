use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::embf::{read_matrix, write_matrix};
use super::{ConceptBank, Dtype, EmbeddingMatrix, LabelVector};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.embf";
pub const LABELS_FILE: &str = "labels.json";
pub const CLASSNAMES_FILE: &str = "classnames.json";
pub const TEMPLATES_FILE: &str = "templates.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    IdTrain,
    IdTest,
    OodTest,
    Concepts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub schema_version: u32,
    pub role: Role,
    pub dim: usize,
    pub count: usize,
    pub dtype: Dtype,
    pub normalized: bool,
    pub labels_present: bool,
    pub source: String,
    /// Size of the label space, when known. Labels are range-checked
    /// against it on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

impl BundleManifest {
    pub fn describe(matrix: &EmbeddingMatrix, role: Role, source: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            role,
            dim: matrix.cols(),
            count: matrix.rows(),
            dtype: matrix.dtype(),
            normalized: matrix.is_normalized(),
            labels_present: false,
            source: source.into(),
            num_classes: None,
        }
    }

    fn check_against(&self, matrix: &EmbeddingMatrix) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::ManifestMismatch(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        let mut problems = Vec::new();
        if self.dim != matrix.cols() {
            problems.push(format!(
                "dim={} but payload cols={}",
                self.dim,
                matrix.cols()
            ));
        }
        if self.count != matrix.rows() {
            problems.push(format!(
                "count={} but payload rows={}",
                self.count,
                matrix.rows()
            ));
        }
        if self.dtype != matrix.dtype() {
            problems.push(format!(
                "dtype={:?} but payload dtype={:?}",
                self.dtype,
                matrix.dtype()
            ));
        }
        if self.normalized != matrix.is_normalized() {
            problems.push(format!(
                "normalized={} but payload flag={}",
                self.normalized,
                matrix.is_normalized()
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::ManifestMismatch(problems.join("; ")))
        }
    }
}

/// A loaded and cross-validated bundle directory.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub matrix: EmbeddingMatrix,
    pub labels: Option<LabelVector>,
    pub manifest: BundleManifest,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Bundle> {
    let dir = dir.as_ref();
    let manifest: BundleManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let matrix = read_matrix(dir.join(EMBEDDINGS_FILE))?;
    manifest.check_against(&matrix)?;

    let labels_path = dir.join(LABELS_FILE);
    let labels = match (manifest.labels_present, labels_path.exists()) {
        (true, _) => {
            let labels = LabelVector::new(read_json(&labels_path)?);
            if labels.len() != matrix.rows() {
                return Err(Error::ManifestMismatch(format!(
                    "{} labels for {} rows",
                    labels.len(),
                    matrix.rows()
                )));
            }
            if let Some(k) = manifest.num_classes {
                labels.check_range(k)?;
            }
            Some(labels)
        }
        (false, true) => {
            return Err(Error::ManifestMismatch(format!(
                "{} exists but labels_present=false",
                labels_path.display()
            )))
        }
        (false, false) => None,
    };

    Ok(Bundle {
        matrix,
        labels,
        manifest,
    })
}

/// Writes a bundle directory (created if missing) and returns its manifest.
pub fn write_bundle(
    dir: impl AsRef<Path>,
    matrix: &EmbeddingMatrix,
    labels: Option<(&LabelVector, usize)>,
    role: Role,
    source: &str,
) -> Result<BundleManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = BundleManifest::describe(matrix, role, source);
    if let Some((labels, num_classes)) = labels {
        if labels.len() != matrix.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                matrix.rows()
            )));
        }
        labels.check_range(num_classes)?;
        manifest.labels_present = true;
        manifest.num_classes = Some(num_classes);
        write_json(&dir.join(LABELS_FILE), labels)?;
    }
    write_matrix(matrix, dir.join(EMBEDDINGS_FILE))?;
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load_concept_bank(dir: impl AsRef<Path>) -> Result<ConceptBank> {
    let dir = dir.as_ref();
    let bundle = load_bundle(dir)?;
    if bundle.manifest.role != Role::Concepts {
        return Err(Error::ManifestMismatch(format!(
            "{} has role {:?}, expected concepts",
            dir.display(),
            bundle.manifest.role
        )));
    }
    let class_names: Vec<String> = read_json(&dir.join(CLASSNAMES_FILE))?;
    let templates_path: PathBuf = dir.join(TEMPLATES_FILE);
    let templates: Vec<String> = if templates_path.exists() {
        read_json(&templates_path)?
    } else {
        Vec::new()
    };
    ConceptBank::new(bundle.matrix, class_names, templates)
}

pub fn write_concept_bank(
    dir: impl AsRef<Path>,
    bank: &ConceptBank,
    source: &str,
) -> Result<BundleManifest> {
    let dir = dir.as_ref();
    let mut manifest = write_bundle(dir, bank.matrix(), None, Role::Concepts, source)?;
    write_json(&dir.join(CLASSNAMES_FILE), bank.class_names())?;
    write_json(&dir.join(TEMPLATES_FILE), bank.templates())?;
    manifest.num_classes = Some(bank.num_classes());
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
