//! Discrete microscale and homogenized energies, their minimizer, the
//! extension operator, and numerical checks of the supporting estimates.

mod extend;
mod field;
mod functional;
mod lemmas;
mod minimize;
mod studies;
mod surface;

pub use extend::{extend, h1_norm_sq, laplace_fill, Extension};
pub use field::{NodeKind, VectorField};
pub use functional::{EnergyBreakdown, Functional, MicroOptions};
pub use lemmas::{lemma1_check, lemma2_constant, Lemma1Outcome, PolynomialField, SmoothField};
pub use minimize::{minimize, MinimizeOptions, Minimized};
pub use studies::{uniform_bound_study, UniformBoundRow, UniformBoundOptions};
pub use surface::SurfaceOperator;
