//! Penalized comparison to overfitting (PCO) in the sub-Gaussian sequence
//! model `Y_λ = θ_λ + ε ξ_λ`, with dyadic model collections, Besov signal
//! generators, Monte Carlo risk harnesses and a Haar wavelet regression
//! front end.

// `!(x >= a)` is the domain-check idiom: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod besov;
pub mod concentration;
pub mod error;
pub mod io;
pub mod penalty;
pub mod regression;
pub mod risk;
pub mod rng;
pub mod selection;
pub mod sequence;
pub mod stats;

pub use error::{PcoError, Result};
pub use penalty::{NoiseMoments, PenaltySpec, Strategy};
pub use selection::{argmin_overall, SelectionResult};
pub use sequence::{DyadicIndex, Model, NoiseKind, NoiseSpec, ObservationSet, SignalSequence, WeightScheme};
