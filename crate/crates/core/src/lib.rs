pub mod calibration;
pub mod distributions;
pub mod ept;
pub mod exotics;
pub mod error;
pub mod gammapp;
pub mod mc;
pub mod multivariate;
pub mod path;
pub mod pricing;
pub mod stats;
pub mod vgpp;

pub use error::{Error, Result};
