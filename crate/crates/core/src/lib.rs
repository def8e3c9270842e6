//! Fractional multiphase perimeters of grid partitions: surface-tension
//! matrices and their metric relaxation, grid partitions with a truncated
//! exterior, singular-kernel pair energies, max-flow chamber replacement,
//! and local energy minimization.
//!
//! Everything numeric is generic over [`Real`] (f32 or f64); the aliases
//! below fix f64 as the default working precision.

pub mod error;
pub mod flowcut;
pub mod grid;
pub mod kernel;
pub mod minimize;
pub mod scalar;
pub mod tensions;

pub use error::{Error, Result};
pub use scalar::Real;

/// f64 surface-tension matrix.
pub type Tensions = tensions::SurfaceTensionMatrix<f64>;
/// f64 grid geometry.
pub type Grid = grid::GridSpec<f64>;
/// f64 grid partition.
pub type Partition = grid::GridPartition<f64>;
/// f64 kernel engine.
pub type Engine = kernel::KernelEngine<f64>;
/// f64 kernel configuration.
pub type Config = kernel::KernelConfig<f64>;
