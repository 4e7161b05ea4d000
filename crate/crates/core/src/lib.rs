pub mod enhancement;
pub mod experiments;
pub mod error;
mod fft;
pub mod io;
pub mod littlewood_paley;
pub mod noise;
pub mod paraproduct;
pub mod pde;
pub mod product;
pub mod scalar;
pub mod stats;
pub mod torus;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use torus::{Grid, Mode, SpectralField};

/// Double-precision field.
pub type Field = SpectralField<f64>;
/// Double-precision enhanced pair.
pub type Pair = enhancement::EnhancedPair<f64>;
/// Double-precision trajectory.
pub type Trajectory = pde::Trajectory<f64>;
