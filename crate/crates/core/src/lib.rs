//! Texture classification of grayscale surface patches.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`imgio`] decodes PNG / binary PGM files, converts to grayscale and
//!    crops square patches.
//! 2. [`filters`] builds Gabor kernels and banks, and provides the
//!    same-size convolution and windowed standard-deviation filters.
//! 3. [`features`] pools filter responses into fixed-length vectors and
//!    reads/writes the feature CSV format.
//! 4. [`classify`] matches vectors under the L1 distance with a k-NN vote,
//!    and [`eval`] repeats stratified random splits to report accuracy
//!    against training-set size.
//!
//! [`synth`] generates labeled synthetic corpora and the brute-force
//! oracles used to verify the fast paths.

pub mod classify;
pub mod error;
pub mod eval;
pub mod features;
pub mod filters;
mod fsutil;
pub mod imgio;
pub mod rng;
pub mod synth;

pub use classify::{classify_batch, l1_distance, write_predictions, KnnModel, Prediction};
pub use error::{Error, Result};
pub use eval::{
    evaluate, evaluate_features, load_manifest, split, EvalConfig, EvalReport, Manifest, SplitSpec,
    TrainSize,
};
pub use features::{
    gabor_features, stddev_features, FeatureConfig, FeatureSet, FeatureVector, LabeledFeature,
    Method,
};
pub use filters::{
    convolve_same, make_gabor_bank, make_gabor_kernel, stddev_filter, BankConfig, GaborParams,
    Kernel, Padding, WindowSpec,
};
pub use imgio::{
    crop_patch, load_image, to_grayscale, GrayImage, Image, MapView, RealMap, RgbImage,
};
pub use rng::SplitMix64;
