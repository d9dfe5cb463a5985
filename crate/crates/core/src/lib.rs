//! Likelihood regimes and limit laws for the linear stochastic delay equation
//! `dX(t) = θ ∫ X(t+u) a(du) dt + dW(t)`.

pub mod cli;
pub mod error;
pub mod fundamental;
pub mod harness;
pub mod inference;
pub mod limits;
pub mod measure;
pub mod noise;
pub mod quad;
pub mod sim;
pub mod spectrum;

pub use error::{Error, Result};
pub use measure::{Atom, DensityPiece, MeasureDescriptor, SignedMeasure};
