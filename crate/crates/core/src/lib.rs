//! Fingerprint verification systems (minutiae and Gabor ridge features), an
//! image quality assessor, a synthetic real/fake corpus generator, and the
//! direct-attack evaluation protocol with Beta-Binomial confidence intervals.

pub mod error;
pub mod imgcore;
pub mod minutiae;
pub mod pipeline;
pub mod protocol;
pub mod quality;
pub mod ridgefeat;
pub mod seed;
pub mod stats;
pub mod synthdb;

pub use error::{Error, Result};
pub use imgcore::{FingerprintImage, ForegroundMask, OrientationField};
