//! Scoring of data representations by how well they suit a linear model.
//!
//! A representation is an invertible map applied to raw samples. It carries the
//! same information as the raw data but changes how much a linear model has to
//! encode in its weights. This crate measures that effect with three numbers per
//! (dataset, representation, feature mode) cell:
//!
//! * the mean training loss of batched ridge regression,
//! * the information in the weights, estimated from the variance of ridge
//!   weights across independently drawn batches,
//! * the Gaussian coding length of the features, `½ log det(2πeΣ)`.
//!
//! The task complexity score (TCS) combines the first two: it is the inverse of
//! the information in the weights, gated on the training loss being below a
//! threshold. Representations are then ranked by TCS.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`dataset`] | image tensors, labeled datasets, manifests, synthetic generators |
//! | [`colorspace`] | YCbCr and the PREC channel-preconditioning transform |
//! | [`spectral`] | orthonormal full-frame and block DCT |
//! | [`features`] | dense and convolution-tile design matrices |
//! | [`regression`] | ridge regression and cross-run weight statistics |
//! | [`complexity`] | entropy, information in weights, TCS, ranking, consistency check |
//! | [`pipeline`] | representation grids and report artifacts |
//! | [`verify`] | the self-check suite behind `repscore verify` |

pub mod colorspace;
pub mod complexity;
pub mod dataset;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod regression;
pub mod representation;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod verify;

pub use colorspace::{fit_prec, rgb_to_ycbcr, ycbcr_to_rgb, PrecTransform};
pub use complexity::{
    gaussian_entropy, info_in_weights, lemma2_check, rank_representations, tcs, ComplexityReport,
    EntropyEstimate, RankedReport, TcsScore,
};
pub use dataset::{ImageTensor, LabeledDataset, Split, SyntheticSpec, TaskKind};
pub use error::{Error, Result};
pub use features::{tile_features, vectorize, FeatureMatrix, FeatureMode};
pub use pipeline::{run_grid, GridResult, GridSpec, ThresholdRule};
pub use regression::{batched_ridge_runs, ridge_fit, RidgeConfig, WeightStats};
pub use representation::{FittedRepresentation, RepresentationKind};
pub use spectral::{block_dct, block_idct, dct2, idct2, BlockDct};
