//! Spectral super-resolution: recovering hyperspectral cubes from
//! multispectral images given the sensor response functions.
//!
//! - [`spectral`]: cubes, SRFs, the degradation operator Φ and band grouping
//! - [`hqs`]: the classical half-quadratic-splitting solver
//! - [`net`]: the unrolled network and its parameters
//! - [`autodiff`]: the reverse-mode tape the network trains on
//! - [`train`]: losses, Adam, patches and augmentation, metrics, training
//! - [`io`]: cube, SRF, checkpoint and run-config files

pub mod autodiff;
pub mod error;
pub mod gradcheck;
pub mod hqs;
pub mod io;
pub mod net;
pub mod presets;
pub mod spectral;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use spectral::{DegradationOperator, SpectralCube, Srf};
pub use tensor::Tensor;
