//! Spot-pattern biometrics: two-thread active-contour segmentation of scale
//! photographs, spot-centroid registration (ICP, Procrustes) for
//! identification, and the segmentation and biometric metric battery.

pub mod error;
pub mod evaluation;
pub mod gallery;
pub mod imaging;
pub mod labeling;
pub mod matching;
pub mod registration;
pub mod segmentation;
pub mod synthetic;

pub use error::{Error, Result};
