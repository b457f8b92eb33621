//! Triangular transport maps, recentering maps and numerical checks of
//! transport and variance inequalities for log-concave densities.
//!
//! Everything is generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the `*64` aliases below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod costs;
pub mod density;
mod error;
pub mod families;
pub mod functions;
pub mod inequality;
pub mod knothe;
pub mod recentering;
pub mod report;
mod scalar;
pub mod transport_1d;
pub mod variance;

pub use error::{Error, Result};
pub use scalar::{pairwise_sum, Real};

pub use families::ConvexBody2d;
pub use functions::{TestFunction, TestFunctionFamily};
pub use density::{BoxDomain, GridDensity, Law1D, Measure, Potential, SampleSet, Smoothness};
pub use knothe::KnotheMap;
pub use recentering::{ConditionalMoments, RecenteringPair};
pub use report::{Status, VerificationReport};
pub use transport_1d::MonotoneMap1D;
pub use variance::Decomposition;

pub type GridDensity64 = GridDensity<f64>;
pub type GridDensity32 = GridDensity<f32>;
pub type Potential64 = Potential<f64>;
pub type Law1D64 = Law1D<f64>;
pub type SampleSet64 = SampleSet<f64>;
pub type Measure64 = Measure<f64>;
pub type KnotheMap64 = KnotheMap<f64>;
pub type RecenteringPair64 = RecenteringPair<f64>;
pub type TestFunctionFamily64 = TestFunctionFamily<f64>;
