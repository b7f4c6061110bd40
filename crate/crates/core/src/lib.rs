//! Foliated Randers geometry: matrix invariants, Minkowski kernels, shape operators,
//! curvature and integral-formula verification on periodic charts.

pub mod chart;
pub mod curvature;
pub mod error;
pub mod foliated_geometry;
pub mod expr;
pub mod linalg;
pub mod real;
pub mod matrix;
pub mod matrix_invariants;
pub mod minkowski;
pub mod scalar;
pub mod verifier;

pub use chart::{ChartDef, FoliatedChart};
pub use error::{Error, Result};
pub use foliated_geometry::{LeafFrame, ShapePath};
pub use minkowski::RandersPoint;
pub use matrix::SquareMatrix;
pub use matrix_invariants::{MultiIndex, MultiPolynomial};
pub use scalar::{Rational, Scalar};
pub use verifier::{FormulaId, Job, Measure, ResidualReport, Verdict};
