//! Neuro-symbolic mental-fatigue classification from eye-tracking and fNIRS.
//!
//! The pipeline runs raw sessions through windowing and feature extraction
//! ([`features`]), participant-aware normalization ([`normalize`]), a concept
//! bottleneck with a differentiable fuzzy rule layer ([`model`]), gradient
//! training ([`train`]) and leave-one-subject-out evaluation ([`eval`]).

pub mod cli;
pub mod dataio;
pub mod eval;
pub mod features;
pub mod model;
pub mod normalize;
pub mod train;
