//! Design matrices from represented datasets.
//!
//! Dense mode flattens each sample into one row, standing in for a fully
//! connected network. Conv-tile mode cuts each sample into `tile × tile`
//! patches at a fixed stride and makes every patch its own row sharing the
//! sample's target, standing in for one convolution kernel applied everywhere.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

pub const DEFAULT_TILE: usize = 7;
pub const DEFAULT_STRIDE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Dense,
    ConvTile,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 2] = [FeatureMode::Dense, FeatureMode::ConvTile];

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Dense => "dense",
            FeatureMode::ConvTile => "conv_tile",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dense" | "lin" | "linear" => Ok(FeatureMode::Dense),
            "conv" | "conv_tile" | "conv-tile" => Ok(FeatureMode::ConvTile),
            other => Err(Error::InvalidConfig(format!(
                "unknown feature mode {other:?} (expected dense or conv)"
            ))),
        }
    }
}

/// `N_rows × D` features with aligned targets. Rows of one source sample are
/// contiguous and ordered by sample index.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
    targets: DMatrix<f64>,
    mode: FeatureMode,
    source_sample_index: Vec<usize>,
    /// `sample_offsets[s]..sample_offsets[s + 1]` are the rows of sample `s`.
    sample_offsets: Vec<usize>,
}

impl FeatureMatrix {
    /// Builds a feature matrix from per-sample row blocks.
    fn from_blocks(blocks: Vec<Vec<Vec<f64>>>, dim: usize, targets: &DMatrix<f64>, mode: FeatureMode) -> Self {
        let rows: usize = blocks.iter().map(Vec::len).sum();
        let mut flat = Vec::with_capacity(rows * dim);
        let mut source = Vec::with_capacity(rows);
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        offsets.push(0);
        for (s, block) in blocks.into_iter().enumerate() {
            for row in block {
                flat.extend(row);
                source.push(s);
            }
            offsets.push(source.len());
        }
        let data = DMatrix::from_row_slice(rows, dim, &flat);
        let targets = targets.select_rows(&source);
        FeatureMatrix {
            data,
            targets,
            mode,
            source_sample_index: source,
            sample_offsets: offsets,
        }
    }

    /// Wraps an existing design matrix, one row per sample.
    pub fn from_matrix(data: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != targets.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows, {} target rows",
                data.nrows(),
                targets.nrows()
            )));
        }
        let n = data.nrows();
        Ok(FeatureMatrix {
            data,
            targets,
            mode: FeatureMode::Dense,
            source_sample_index: (0..n).collect(),
            sample_offsets: (0..=n).collect(),
        })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn source_sample_index(&self) -> &[usize] {
        &self.source_sample_index
    }

    pub fn feature_dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn sample_count(&self) -> usize {
        self.sample_offsets.len() - 1
    }

    pub fn rows_of_sample(&self, sample: usize) -> std::ops::Range<usize> {
        self.sample_offsets[sample]..self.sample_offsets[sample + 1]
    }

    /// Row indices belonging to the given source samples, in the given order.
    pub fn rows_of_samples(&self, samples: &[usize]) -> Vec<usize> {
        samples.iter().flat_map(|&s| self.rows_of_sample(s)).collect()
    }
}

/// One row per sample, each sample flattened in its native row-major layout.
pub fn vectorize(ds: &LabeledDataset) -> Result<FeatureMatrix> {
    let (h, w, c) = ds.sample_shape().ok_or(Error::TooFew {
        what: "samples to vectorize",
        needed: 1,
        found: 0,
    })?;
    let blocks = ds.samples().iter().map(|s| vec![s.data().to_vec()]).collect();
    Ok(FeatureMatrix::from_blocks(blocks, h * w * c, ds.targets(), FeatureMode::Dense))
}

/// Placements per axis for a valid (no padding) sliding window.
pub fn placements(len: usize, tile: usize, stride: usize) -> usize {
    if len < tile {
        0
    } else {
        (len - tile) / stride + 1
    }
}

/// Every `tile × tile × C` patch at offsets `(i·stride, j·stride)` that fits
/// inside the sample, one row each, ordered by (sample, tile row, tile column).
pub fn tile_features(ds: &LabeledDataset, tile: usize, stride: usize) -> Result<FeatureMatrix> {
    if tile == 0 || stride == 0 {
        return Err(Error::InvalidConfig("tile and stride must be positive".into()));
    }
    let (h, w, c) = ds.sample_shape().ok_or(Error::TooFew {
        what: "samples to tile",
        needed: 1,
        found: 0,
    })?;
    if h < tile || w < tile {
        return Err(Error::ImageSmallerThanTile { height: h, width: w, tile });
    }
    let (ni, nj) = (placements(h, tile, stride), placements(w, tile, stride));
    let blocks = ds
        .samples()
        .par_iter()
        .map(|img| {
            let mut rows = Vec::with_capacity(ni * nj);
            for i in 0..ni {
                for j in 0..nj {
                    let (r0, c0) = (i * stride, j * stride);
                    let mut row = Vec::with_capacity(tile * tile * c);
                    for r in r0..r0 + tile {
                        let start = img.index(r, c0, 0);
                        row.extend_from_slice(&img.data()[start..start + tile * c]);
                    }
                    rows.push(row);
                }
            }
            rows
        })
        .collect();
    Ok(FeatureMatrix::from_blocks(blocks, tile * tile * c, ds.targets(), FeatureMode::ConvTile))
}

/// Dispatches on `mode`.
pub fn extract(ds: &LabeledDataset, mode: FeatureMode, tile: usize, stride: usize) -> Result<FeatureMatrix> {
    match mode {
        FeatureMode::Dense => vectorize(ds),
        FeatureMode::ConvTile => tile_features(ds, tile, stride),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dataset::{ImageTensor, TaskKind};

    fn dataset(h: usize, w: usize, c: usize, n: usize) -> LabeledDataset {
        let samples = (0..n)
            .map(|s| ImageTensor::from_fn(h, w, c, |r, col, ch| (s * 10_000 + r * 100 + col * 3 + ch) as f64))
            .collect();
        let targets = DMatrix::from_fn(n, 2, |r, k| (r * 2 + k) as f64);
        LabeledDataset::new("f", samples, targets, TaskKind::Regression, vec![]).unwrap()
    }

    #[test]
    fn vectorize_layout() {
        let img = ImageTensor::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let ds = LabeledDataset::new("v", vec![img], DMatrix::zeros(1, 1), TaskKind::Regression, vec![]).unwrap();
        let f = vectorize(&ds).unwrap();
        assert_eq!(f.data().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 4.0]);
        let f = vectorize(&dataset(3, 4, 3, 5)).unwrap();
        assert_eq!((f.rows(), f.feature_dim(), f.mode()), (5, 36, FeatureMode::Dense));
    }

    #[test]
    fn tile_counts() {
        assert_eq!(tile_features(&dataset(7, 7, 1, 1), 7, 2).unwrap().data().shape(), (1, 49));
        assert_eq!(tile_features(&dataset(9, 9, 1, 1), 7, 2).unwrap().rows(), 4);
        let f = tile_features(&dataset(11, 9, 3, 2), 7, 2).unwrap();
        assert_eq!((f.rows(), f.feature_dim()), (12, 147));
        assert_eq!(f.rows_of_sample(1), 6..12);
        for r in 6..12 {
            assert_eq!(f.targets().row(r), f.targets().row(6));
            assert_eq!(f.targets()[(r, 0)], 2.0);
        }
    }

    #[test]
    fn too_small_for_tile() {
        let err = tile_features(&dataset(6, 9, 1, 1), 7, 2).unwrap_err();
        assert!(matches!(err, Error::ImageSmallerThanTile { .. }));
    }

    proptest! {
        #[test]
        fn tiles_match_exhaustive_enumeration(h in 1usize..14, w in 1usize..14, c in 1usize..4, tile in 1usize..6, stride in 1usize..4) {
            prop_assume!(h >= tile && w >= tile);
            let ds = dataset(h, w, c, 2);
            let f = tile_features(&ds, tile, stride).unwrap();
            // enumerate every offset and keep those whose patch fits
            let mut expected = Vec::new();
            for (s, img) in ds.samples().iter().enumerate() {
                for r0 in 0..h {
                    for c0 in 0..w {
                        if r0 % stride != 0 || c0 % stride != 0 || r0 + tile > h || c0 + tile > w {
                            continue;
                        }
                        let mut row = Vec::new();
                        for r in 0..tile { for cc in 0..tile { for ch in 0..c {
                            row.push(img.get(r0 + r, c0 + cc, ch));
                        }}}
                        expected.push((s, row));
                    }
                }
            }
            prop_assert_eq!(f.rows(), expected.len());
            for (i, (s, row)) in expected.iter().enumerate() {
                prop_assert_eq!(f.source_sample_index()[i], *s);
                prop_assert_eq!(f.data().row(i).iter().copied().collect::<Vec<_>>(), row.clone());
            }
        }
    }
}
