//! Directory format for datasets whose samples are not displayable images
//! (synthetic features, transformed coefficients).
//!
//! A tensor dataset directory holds
//!
//! * `dataset.json` — the [`DatasetHeader`],
//! * `samples.f64` — all samples, little-endian `f64`, sample-major, each
//!   sample in [`ImageTensor`] layout,
//! * `targets.f64` — the `N × m` target matrix, little-endian `f64`, row-major.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{load_image_dir, GroundTruth, ImageTensor, LabeledDataset, Split, TaskKind};
use crate::error::{Error, Result};

pub const FORMAT: &str = "repscore-tensor-v1";
pub const HEADER_FILE: &str = "dataset.json";
pub const SAMPLES_FILE: &str = "samples.f64";
pub const TARGETS_FILE: &str = "targets.f64";
pub const MANIFEST_FILE: &str = "manifest.csv";

/// Which representation produced the stored samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationRecord {
    pub kind: String,
    /// Sample height and width before the representation was applied.
    pub original_height: usize,
    pub original_width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
    /// File (relative to the dataset directory) holding fitted parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub n_features: usize,
    pub m_outputs: usize,
    pub noise_sigma: f64,
    /// `m × n`, row-major.
    pub true_weights: Vec<f64>,
    /// `n × n`, row-major.
    pub covariance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub name: String,
    pub task_kind: TaskKind,
    #[serde(default)]
    pub class_labels: Vec<String>,
    pub sample_count: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub target_dim: usize,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representation: Option<RepresentationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthRecord>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl From<&GroundTruth> for GroundTruthRecord {
    fn from(g: &GroundTruth) -> Self {
        GroundTruthRecord {
            n_features: g.covariance.nrows(),
            m_outputs: g.true_weights.nrows(),
            noise_sigma: g.noise_sigma,
            true_weights: row_major(&g.true_weights),
            covariance: row_major(&g.covariance),
        }
    }
}

impl GroundTruthRecord {
    fn to_ground_truth(&self) -> Result<GroundTruth> {
        let (n, m) = (self.n_features, self.m_outputs);
        if self.true_weights.len() != m * n || self.covariance.len() != n * n {
            return Err(Error::InvalidTensor("ground truth arrays do not match their shapes".into()));
        }
        Ok(GroundTruth {
            true_weights: DMatrix::from_row_slice(m, n, &self.true_weights),
            covariance: DMatrix::from_row_slice(n, n, &self.covariance),
            noise_sigma: self.noise_sigma,
        })
    }
}

fn write_f64s(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(f64::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidTensor(format!("{} is not a whole number of f64 values", path.display())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Writes `ds` as a tensor dataset directory.
pub fn save(ds: &LabeledDataset, dir: &Path, representation: Option<RepresentationRecord>) -> Result<()> {
    let (height, width, channels) = ds
        .sample_shape()
        .ok_or(Error::TooFew { what: "samples to store", needed: 1, found: 0 })?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = DatasetHeader {
        format: FORMAT.to_string(),
        name: ds.name().to_string(),
        task_kind: ds.task_kind(),
        class_labels: ds.class_labels().to_vec(),
        sample_count: ds.len(),
        height,
        width,
        channels,
        target_dim: ds.target_dim(),
        split: ds.split().clone(),
        representation,
        ground_truth: ds.ground_truth().map(GroundTruthRecord::from),
    };
    let path = dir.join(HEADER_FILE);
    fs::write(&path, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&path, e))?;
    write_f64s(
        &dir.join(SAMPLES_FILE),
        ds.samples().iter().flat_map(|s| s.data().iter().copied()),
    )?;
    write_f64s(&dir.join(TARGETS_FILE), row_major(ds.targets()).into_iter())
}

pub fn read_header(dir: &Path) -> Result<DatasetHeader> {
    let path = dir.join(HEADER_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let header: DatasetHeader = serde_json::from_str(&text)?;
    if header.format != FORMAT {
        return Err(Error::InvalidConfig(format!(
            "{}: unsupported format {:?}",
            path.display(),
            header.format
        )));
    }
    Ok(header)
}

/// Reads a tensor dataset directory.
pub fn load(dir: &Path) -> Result<(LabeledDataset, DatasetHeader)> {
    let header = read_header(dir)?;
    let per_sample = header.height * header.width * header.channels;
    let values = read_f64s(&dir.join(SAMPLES_FILE))?;
    if values.len() != per_sample * header.sample_count {
        return Err(Error::InvalidTensor(format!(
            "{} holds {} values, header implies {}",
            SAMPLES_FILE,
            values.len(),
            per_sample * header.sample_count
        )));
    }
    let samples = values
        .chunks_exact(per_sample.max(1))
        .map(|c| ImageTensor::new(header.height, header.width, header.channels, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let targets = read_f64s(&dir.join(TARGETS_FILE))?;
    if targets.len() != header.sample_count * header.target_dim {
        return Err(Error::InvalidTensor(format!("{TARGETS_FILE} does not match the header")));
    }
    let targets = DMatrix::from_row_slice(header.sample_count, header.target_dim, &targets);
    let mut ds = LabeledDataset::new(
        header.name.clone(),
        samples,
        targets,
        header.task_kind,
        header.class_labels.clone(),
    )?
    .with_split(header.split.clone())?;
    if let Some(g) = &header.ground_truth {
        ds = ds.with_ground_truth(g.to_ground_truth()?);
    }
    Ok((ds, header))
}

/// Loads either a tensor dataset directory or an image directory with a
/// `manifest.csv`. The header is `None` for image directories.
pub fn load_any(dir: &Path, task_kind: TaskKind) -> Result<(LabeledDataset, Option<DatasetHeader>)> {
    if dir.join(HEADER_FILE).is_file() {
        let (ds, header) = load(dir)?;
        Ok((ds, Some(header)))
    } else if dir.join(MANIFEST_FILE).is_file() {
        Ok((load_image_dir(dir, &dir.join(MANIFEST_FILE), task_kind)?, None))
    } else {
        Err(Error::InvalidConfig(format!(
            "{} has neither {HEADER_FILE} nor {MANIFEST_FILE}",
            dir.display()
        )))
    }
}
