//! The five invertible representations as one dispatchable type.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::{self, PrecTransform};
use crate::dataset::{ImageTensor, LabeledDataset};
use crate::error::{Error, Result};
use crate::spectral::{self, BlockDct};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepresentationKind {
    Rgb,
    Ycbcr,
    Prec,
    Dct,
    Blockdct,
}

impl RepresentationKind {
    pub const ALL: [RepresentationKind; 5] = [
        RepresentationKind::Rgb,
        RepresentationKind::Ycbcr,
        RepresentationKind::Prec,
        RepresentationKind::Dct,
        RepresentationKind::Blockdct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RepresentationKind::Rgb => "rgb",
            RepresentationKind::Ycbcr => "ycbcr",
            RepresentationKind::Prec => "prec",
            RepresentationKind::Dct => "dct",
            RepresentationKind::Blockdct => "blockdct",
        }
    }

    /// YCbCr and PREC act on color channels and are not used on grayscale data.
    pub fn needs_color(self) -> bool {
        matches!(self, RepresentationKind::Ycbcr | RepresentationKind::Prec)
    }

    pub fn check_channels(self, channels: usize) -> Result<()> {
        if self.needs_color() && channels < 3 {
            return Err(Error::UnsupportedPairing {
                representation: self.name().to_string(),
                channels,
            });
        }
        Ok(())
    }
}

impl fmt::Display for RepresentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RepresentationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RepresentationKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown representation {s:?} (expected rgb, ycbcr, prec, dct or blockdct)"
                ))
            })
    }
}

/// A representation ready to apply; PREC carries its fitted transform.
#[derive(Clone, Debug, PartialEq)]
pub enum FittedRepresentation {
    Identity,
    Ycbcr,
    Prec(PrecTransform),
    Dct,
    BlockDct { block: usize },
}

impl FittedRepresentation {
    /// Fits `kind` on `train`. Only PREC looks at the data.
    pub fn fit(kind: RepresentationKind, train: &LabeledDataset, prec_epsilon: f64, block: usize) -> Result<Self> {
        if let Some((_, _, c)) = train.sample_shape() {
            kind.check_channels(c)?;
        }
        Ok(match kind {
            RepresentationKind::Rgb => FittedRepresentation::Identity,
            RepresentationKind::Ycbcr => FittedRepresentation::Ycbcr,
            RepresentationKind::Prec => FittedRepresentation::Prec(colorspace::fit_prec(train, prec_epsilon)?),
            RepresentationKind::Dct => FittedRepresentation::Dct,
            RepresentationKind::Blockdct => {
                if block < 1 {
                    return Err(Error::InvalidBlock);
                }
                FittedRepresentation::BlockDct { block }
            }
        })
    }

    pub fn kind(&self) -> RepresentationKind {
        match self {
            FittedRepresentation::Identity => RepresentationKind::Rgb,
            FittedRepresentation::Ycbcr => RepresentationKind::Ycbcr,
            FittedRepresentation::Prec(_) => RepresentationKind::Prec,
            FittedRepresentation::Dct => RepresentationKind::Dct,
            FittedRepresentation::BlockDct { .. } => RepresentationKind::Blockdct,
        }
    }

    pub fn forward(&self, img: &ImageTensor) -> Result<ImageTensor> {
        match self {
            FittedRepresentation::Identity => Ok(img.clone()),
            FittedRepresentation::Ycbcr => colorspace::rgb_to_ycbcr(img),
            FittedRepresentation::Prec(t) => colorspace::apply_prec(t, img),
            FittedRepresentation::Dct => Ok(spectral::dct2(img)),
            FittedRepresentation::BlockDct { block } => Ok(spectral::block_dct(img, *block)?.coefficients),
        }
    }

    /// Inverts [`forward`](Self::forward). `original` is the sample height and
    /// width before the forward map, needed to crop block-DCT padding.
    pub fn inverse(&self, img: &ImageTensor, original: (usize, usize)) -> Result<ImageTensor> {
        match self {
            FittedRepresentation::Identity => Ok(img.clone()),
            FittedRepresentation::Ycbcr => colorspace::ycbcr_to_rgb(img),
            FittedRepresentation::Prec(t) => colorspace::invert_prec(t, img),
            FittedRepresentation::Dct => Ok(spectral::idct2(img)),
            FittedRepresentation::BlockDct { block } => spectral::block_idct(
                &BlockDct {
                    coefficients: img.clone(),
                    original_height: original.0,
                    original_width: original.1,
                    block: *block,
                },
                *block,
            ),
        }
    }

    /// Applies the representation to every sample, keeping targets and split.
    pub fn apply(&self, ds: &LabeledDataset) -> Result<LabeledDataset> {
        let samples = ds
            .samples()
            .par_iter()
            .map(|s| self.forward(s))
            .collect::<Result<Vec<_>>>()?;
        ds.with_samples(samples)
    }

    pub fn invert(&self, ds: &LabeledDataset, original: (usize, usize)) -> Result<LabeledDataset> {
        let samples = ds
            .samples()
            .par_iter()
            .map(|s| self.inverse(s, original))
            .collect::<Result<Vec<_>>>()?;
        ds.with_samples(samples)
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;
    use rand::Rng;

    use super::*;
    use crate::dataset::TaskKind;
    use crate::rng;

    #[test]
    fn names_round_trip() {
        for k in RepresentationKind::ALL {
            assert_eq!(k.name().parse::<RepresentationKind>().unwrap(), k);
        }
        assert!("hsv".parse::<RepresentationKind>().is_err());
    }

    #[test]
    fn gray_rejects_color_representations() {
        let samples = vec![ImageTensor::zeros(4, 4, 1); 2];
        let ds = LabeledDataset::new("g", samples, DMatrix::zeros(2, 1), TaskKind::Regression, vec![]).unwrap();
        for k in RepresentationKind::ALL {
            let fitted = FittedRepresentation::fit(k, &ds, 1e-8, 8);
            assert_eq!(fitted.is_err(), k.needs_color(), "{k}");
        }
    }

    #[test]
    fn every_representation_inverts() {
        let mut r = rng::rng(2);
        let samples: Vec<_> = (0..3)
            .map(|_| ImageTensor::from_fn(11, 13, 3, |_, _, _| r.random::<f64>()))
            .collect();
        let ds = LabeledDataset::new("c", samples, DMatrix::zeros(3, 1), TaskKind::Regression, vec![]).unwrap();
        for k in RepresentationKind::ALL {
            let f = FittedRepresentation::fit(k, &ds, 1e-8, 8).unwrap();
            let back = f.invert(&f.apply(&ds).unwrap(), (11, 13)).unwrap();
            for (a, b) in back.samples().iter().zip(ds.samples()) {
                assert!(a.max_abs_diff(b) < 1e-9, "{k}");
            }
        }
    }
}
