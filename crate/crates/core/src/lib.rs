//! Gamma/hadron separation trigger built on pseudo-Zernike image features.
//!
//! The crate covers the full decision chain of a software-modelled trigger:
//!
//! * [`camera`] — hexagonal camera geometry, synthetic events, tail-cut
//!   cleaning and the Hillas baseline parameters;
//! * [`pzernike`] — pseudo-Zernike basis tables, moment extraction, feature
//!   magnitudes and image reconstruction;
//! * [`svm`] — a Gaussian-kernel SVM trained with sequential minimal
//!   optimization, plus a small brute-force QP oracle;
//! * [`modelsel`] — z-score normalization, stratified k-fold CV, adaptive
//!   exponential grid search and evaluation metrics;
//! * [`fixedpoint`] — Q-format arithmetic, quantized trigger tables and a
//!   bit-exact fixed-point decision pipeline mirroring an FPGA datapath.

// Index-form loops keep the fixed accumulation order the bit-exactness
// contract pins down; validations use negated comparisons so NaN fails them.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod error;
pub mod fixedpoint;
pub mod modelsel;
pub mod pzernike;
pub mod rng;
pub mod svm;

pub use camera::{
    CameraGeometry, CherenkovImage, DiskMapping, GeneratorParams, HillasParams, ParticleClass,
};
pub use error::{Error, Result};
pub use pzernike::{BasisTable, FeatureVector, MomentSet};
pub use svm::{LabeledDataset, SvmModel};
