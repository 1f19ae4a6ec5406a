//! Goal-oriented adaptive finite elements for 2D semilinear elliptic problems.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`);
//! the aliases below fix it to `f64`, with `*32` variants for `f32`.

// `!(x > 0.0)` is used on purpose to reject NaN alongside bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// element loops index several parallel local arrays
#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod drive;
pub mod error;
pub mod estimate;
pub mod export;
pub mod mark;
pub mod mesh;
pub mod quadrature;
pub mod real;
pub mod space;
pub mod sparse;
pub mod system;
pub mod verify;

pub use drive::{run, ConvergenceRecord, ConvergenceRow, RunConfig};
pub use error::{Error, Result};
pub use mark::Strategy;
pub use real::Real;
pub use space::Degree;

pub type Mesh = mesh::Mesh<f64>;
pub type FESpace = space::FESpace<f64>;
pub type DiscreteField = space::DiscreteField<f64>;
pub type ProblemSpec = system::ProblemSpec<f64>;
pub type IndicatorField = estimate::IndicatorField<f64>;
pub type MarkSet = mark::MarkSet<f64>;
pub type RunOutcome = drive::RunOutcome<f64>;
pub type ReferencePair = verify::ReferencePair<f64>;

pub type Mesh32 = mesh::Mesh<f32>;
pub type FESpace32 = space::FESpace<f32>;
pub type DiscreteField32 = space::DiscreteField<f32>;
pub type ProblemSpec32 = system::ProblemSpec<f32>;
pub type IndicatorField32 = estimate::IndicatorField<f32>;
pub type MarkSet32 = mark::MarkSet<f32>;
pub type RunOutcome32 = drive::RunOutcome<f32>;
