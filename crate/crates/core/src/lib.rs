//! Sharing a joint reward among peers from their subjective opinions.
//!
//! Every agent grades each peer on a `1..=M` scale and predicts how the whole
//! population will grade that peer. The mechanism splits a reward `V` so that
//! well-graded agents get more, and adds a truth-telling bonus computed with
//! an epsilon-smoothed Bayesian Truth Serum so that honest reporting is the
//! best response when everyone else is honest.
//!
//! Modules, bottom-up:
//!
//! * [`profile`]: parameters, opinion containers and validation.
//! * [`scoring`]: consensus statistics and pairwise BTS results.
//! * [`mechanism`]: shares, alpha bounds, dominance analysis.
//! * [`simulation`]: seeded profile generation and parameter sweeps.
//! * [`equilibrium`]: Monte-Carlo best-response checks under a Dirichlet prior.

pub mod equilibrium;
pub mod example;
pub mod mechanism;
pub mod profile;
pub mod scoring;
pub mod simulation;

pub use mechanism::{compute_shares, ShareReport};
pub use profile::{validate_profile, MechanismParams, OpinionProfile, RawProfile, ValidationError};
pub use scoring::{score_matrix, ScoreMatrix};
