//! Exact finite-N and limiting statistics of the micro-canonical occupancy
//! ensemble: `N` indistinguishable particles over `m` energy levels with
//! `Gᵢ` boxes each, total energy capped at `E·N`.
//!
//! * [`instance`]: problem instances, lattice points and degeneracy schedules.
//! * [`entropy`]: exact entropy, Stirling series, limiting entropies `s_l`.
//! * [`ensemble`]: enumeration, partition function, moments, energy layers.
//! * [`maxent`]: the limiting constrained maximum and its multipliers.
//! * [`fluctuations`]: Gaussian and boundary-layer fluctuation laws.
//! * [`sampler`]: inverse-CDF and Metropolis sampling.

// `!(x < tol)` rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod entropy;
pub mod error;
pub mod fluctuations;
pub mod instance;
pub mod maxent;
pub mod numeric;
pub mod sampler;

pub use ensemble::{build_distribution, ExactDistribution, LayerDecomposition};
pub use entropy::EntropyModel;
pub use error::{Error, Result};
pub use fluctuations::FluctuationPrediction;
pub use instance::{
    degeneracies_for, parse_rational, threshold_energy, validate_spec, DegeneracyAssignment, EnsembleSpec,
    FractionVector, Occupancy, Rational, RawSpec, Regime, Schedule,
};
pub use maxent::{classify_maximum, solve, MaxEntSolution, MaximumKind};
pub use sampler::ChainConfig;

pub use nalgebra::{DMatrix, DVector};
