pub mod baselines;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod noise;
pub mod ode;
pub mod qmath;
pub mod readout;
pub mod reservoir;
pub mod scalar;
pub mod tasks;

pub use error::{Error, Result};
pub use scalar::Real;

pub type DensityOperator64 = qmath::DensityOperator<f64>;
pub type Reservoir64 = reservoir::Reservoir<f64>;
pub type ReservoirConfig64 = reservoir::ReservoirConfig<f64>;
pub type NoiseConfig64 = noise::NoiseConfig<f64>;
pub type ReadoutModel64 = readout::ReadoutModel<f64>;
pub type Esn64 = baselines::Esn<f64>;
pub type LrpoConfig64 = tasks::LrpoConfig<f64>;
