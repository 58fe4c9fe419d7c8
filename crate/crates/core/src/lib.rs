//! Ferronematic energies at the particle scale and in the homogenized limit.

pub mod corrector;
pub mod effective;
pub mod energy;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod magnetics;
pub mod quadrature;

pub use effective::{EffectiveCoefficients, EffectiveMagnetization, MatrixField};
pub use energy::{EnergyBreakdown, Functional, VectorField};
pub use ensemble::{ParticleEnsemble, RotationField, ScalingParams};
pub use error::{Error, Result};
pub use experiments::{ExperimentKind, RunConfig, RunSummary};
pub use geometry::{Mat3, Rotation, Spheroid, Vec3};
pub use grid::{Domain, Grid};
