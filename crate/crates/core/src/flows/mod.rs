//! Coupling-layer normalizing flows: affine RealNVP for density estimation and
//! the volume-preserving GIN variant for tempered input sampling.

mod coupling;
mod gin;
mod realnvp;

pub use coupling::CouplingLayer;
pub use gin::{gin_fit, GinModel};
pub use realnvp::{fit_flow, DensityModel, FitConfig, FlowConfig, RealNvpFlow};
