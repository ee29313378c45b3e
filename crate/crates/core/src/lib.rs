//! Neuro-symbolic activity reasoning.
//!
//! Activity primitives (body-part states, objects) arrive as detection
//! probabilities. Logic rules `P_a ∧ P_b → A` are rewritten to
//! `¬P_a ∨ ¬P_b ∨ A` and evaluated with learned `NOT`/`OR` operators over
//! event vectors; a discriminator reads out the truth probability. A rule
//! base grows by harvesting and generating candidate rules and keeping the
//! ones with lower classification loss.
//!
//! The numerical core is generic over [`numcore::Real`]; the aliases below
//! fix the scalar to `f64`, which is what the rest of the crate and the CLI
//! use.

pub mod cli;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod events;
pub mod logic;
pub mod numcore;
pub mod rulebase;
pub mod search;

pub use error::{Error, Result};

pub type Matrix = numcore::Matrix<f64>;
pub type ParamSet = numcore::ParamSet<f64>;
pub type Tape = numcore::Tape<f64>;
pub type Optimizer = numcore::Optimizer<f64>;
