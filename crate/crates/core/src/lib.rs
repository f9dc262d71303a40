//! Unrolled proximal gradient reconstruction of undersampled k-space data
//! with a learned total deep variation regularizer, and epistemic
//! uncertainty estimates obtained by sampling the regularizer weights from
//! a learned block-diagonal Gaussian.

pub mod eigen;
pub mod error;
pub mod field;
pub mod gaussian;
pub mod io;
pub mod kspace;
pub mod metrics;
pub mod prox;
pub mod recon;
pub mod regularizer;
pub mod tdv;
pub mod train;

pub use error::{Error, Result};
pub use field::{ComplexField, Domain, Image};
