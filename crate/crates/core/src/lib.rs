//! Solver and simulator for a multi-species generalized random energy model
//! with a perceptron-type field over finite alphabets, where every nonempty
//! subset of species carries its own disorder.
//!
//! The limiting free energy is computed three ways: the chain-wise Parisi
//! functional ([`parisi`]), the entropy-constrained Gibbs principle
//! ([`variational`]) and exhaustive finite-volume enumeration ([`sim`]).
//! [`report`] ties them together.

pub mod chains;
pub mod entropy;
pub mod error;
pub mod expr;
pub mod gibbs;
pub mod isotonic;
pub mod model;
pub mod parisi;
pub mod report;
pub mod sim;
pub mod variational;

pub use chains::Chain;
pub use error::{GremError, Result};
pub use model::{CoordinateSet, JointMeasure, ModelSpec, SubsetId};
