//! Laguerre-Gauss preprocessing.
//!
//! An n×n grayscale image is moved to the Fourier domain, multiplied by the
//! spectrum of a Laguerre-Gauss spatial filter, shifted so the zero frequency
//! sits in the middle, and reduced to the magnitudes along the central row and
//! column. The resulting 2n values are the features fed to small classifiers
//! (kNN and a four-layer MLP).
//!
//! Modules:
//!
//! - [`imagecore`]: images, PGM and raster I/O, resizing, augmentation, datasets
//! - [`spectral`]: complex matrices, 2D DFT, `fftshift`, spectral products
//! - [`lgfilter`]: the Laguerre-Gauss spatial filter and its cached spectrum
//! - [`features`]: line profiles, the preprocessing pipeline and its ablations
//! - [`learners`]: kNN, MLP with RMSProp, model files
//! - [`metrics`]: accuracy, F1, confusion matrix, ROC/AUC
//! - [`synth`]: synthetic geometric-shapes corpus
//! - [`cli`]: the `lgprep` command line

pub mod cli;
pub mod error;
pub mod features;
pub mod imagecore;
pub mod learners;
pub mod lgfilter;
pub mod metrics;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use features::{FeatureKind, FeatureVector, PipelineMode};
pub use imagecore::{GrayImage, LabeledDataset, RgbImage, Split};
pub use spectral::ComplexMatrix;
