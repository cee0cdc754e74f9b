//! Samples, labeled datasets and their sources.
//!
//! Every sample is an [`ImageTensor`]. Synthetic regression tasks store their
//! feature vectors as degenerate `1 × n × 1` images so the rest of the crate
//! only ever sees one input type.

mod image;
mod manifest;
mod split;
pub mod store;
mod synthetic;
mod textures;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::image::ImageTensor;
pub use manifest::load_image_dir;
pub use split::split_dataset;
pub use synthetic::{
    ar1_covariance, make_quadratic_task, make_synthetic_regression, GroundTruth, SyntheticSpec,
};
pub use textures::{make_texture_classification, write_image_dataset, TextureSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

/// Disjoint index sets into a dataset's samples.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Every sample in the training set.
    pub fn all_train(n: usize) -> Self {
        Split {
            train: (0..n).collect(),
            val: Vec::new(),
            test: Vec::new(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidConfig(format!(
                    "split index {i} is out of range or repeated"
                )));
            }
        }
        Ok(())
    }
}

/// A uniform-shape collection of samples with an `N × m` target matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    name: String,
    samples: Vec<ImageTensor>,
    targets: DMatrix<f64>,
    task_kind: TaskKind,
    class_labels: Vec<String>,
    split: Split,
    ground_truth: Option<GroundTruth>,
}

impl LabeledDataset {
    /// Builds a dataset whose split puts every sample in `train`.
    pub fn new(
        name: impl Into<String>,
        samples: Vec<ImageTensor>,
        targets: DMatrix<f64>,
        task_kind: TaskKind,
        class_labels: Vec<String>,
    ) -> Result<Self> {
        if samples.len() != targets.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples but {} target rows",
                samples.len(),
                targets.nrows()
            )));
        }
        if let Some(first) = samples.first() {
            if let Some(bad) = samples.iter().position(|s| s.shape() != first.shape()) {
                return Err(Error::DimensionMismatch(format!(
                    "sample {bad} has shape {:?}, sample 0 has {:?}",
                    samples[bad].shape(),
                    first.shape()
                )));
            }
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor("targets contain non-finite values".into()));
        }
        if task_kind == TaskKind::Classification {
            if class_labels.len() != targets.ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "{} class labels for {} target columns",
                    class_labels.len(),
                    targets.ncols()
                )));
            }
            for (r, row) in targets.row_iter().enumerate() {
                let ones = row.iter().filter(|&&v| v == 1.0).count();
                let zeros = row.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || ones + zeros != row.len() {
                    return Err(Error::InvalidTensor(format!("target row {r} is not one-hot")));
                }
            }
        }
        let split = Split::all_train(samples.len());
        Ok(LabeledDataset {
            name: name.into(),
            samples,
            targets,
            task_kind,
            class_labels,
            split,
            ground_truth: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn samples(&self) -> &[ImageTensor] {
        &self.samples
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    /// Number of classes; zero for regression tasks.
    pub fn class_count(&self) -> usize {
        self.class_labels.len()
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        split.validate(self.len())?;
        self.split = split;
        Ok(self)
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    pub fn with_ground_truth(mut self, truth: GroundTruth) -> Self {
        self.ground_truth = Some(truth);
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.ncols()
    }

    /// `(height, width, channels)` of every sample, `None` when empty.
    pub fn sample_shape(&self) -> Option<(usize, usize, usize)> {
        self.samples.first().map(ImageTensor::shape)
    }

    /// A new dataset holding only `indices`, in that order, with an all-train split.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidConfig(format!("subset index {bad} out of range")));
        }
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let targets = self.targets.select_rows(indices);
        let mut out = LabeledDataset::new(
            self.name.clone(),
            samples,
            targets,
            self.task_kind,
            self.class_labels.clone(),
        )?;
        out.ground_truth = self.ground_truth.clone();
        Ok(out)
    }

    /// The training split as its own dataset.
    pub fn train_subset(&self) -> Result<Self> {
        self.subset(&self.split.train)
    }

    /// Same targets and metadata, samples replaced (shapes may change).
    pub fn with_samples(&self, samples: Vec<ImageTensor>) -> Result<Self> {
        let mut out = LabeledDataset::new(
            self.name.clone(),
            samples,
            self.targets.clone(),
            self.task_kind,
            self.class_labels.clone(),
        )?;
        out.split = self.split.clone();
        out.ground_truth = self.ground_truth.clone();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        let samples = (0..4)
            .map(|i| ImageTensor::new(1, 2, 1, vec![i as f64, 0.5]).unwrap())
            .collect();
        let targets = DMatrix::from_row_slice(4, 2, &[1., 0., 0., 1., 1., 0., 0., 1.]);
        LabeledDataset::new("t", samples, targets, TaskKind::Classification, vec!["a".into(), "b".into()])
            .unwrap()
    }

    #[test]
    fn rejects_non_one_hot() {
        let samples = vec![ImageTensor::zeros(1, 1, 1)];
        let targets = DMatrix::from_row_slice(1, 2, &[0.5, 0.5]);
        let err = LabeledDataset::new("t", samples, targets, TaskKind::Classification, vec!["a".into(), "b".into()]);
        assert!(err.is_err());
    }

    #[test]
    fn subset_keeps_rows_aligned() {
        let ds = tiny();
        let sub = ds.subset(&[3, 0]).unwrap();
        assert_eq!(sub.samples()[0].data()[0], 3.0);
        assert_eq!(sub.targets().row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert_eq!(sub.split().train, vec![0, 1]);
    }

    #[test]
    fn split_must_be_disjoint() {
        let split = Split {
            train: vec![0, 1],
            val: vec![1],
            test: vec![],
        };
        assert!(tiny().with_split(split).is_err());
    }
}
