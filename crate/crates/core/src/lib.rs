//! Safety-modulated policy optimization for constrained MDPs.
//!
//! The crate is organised bottom-up:
//!
//! - [`cmdp`]: the constrained-MDP contract, built-in environments, rollouts and
//!   an exact trajectory enumerator for tiny tabular instances.
//! - [`approx`]: multilayer perceptrons with hand-written backpropagation, policy
//!   heads, an Adam optimizer and a flat checkpoint format.
//! - [`critic`]: the Q-cost safety critic, its expected-SARSA targets and an
//!   exact dynamic-programming evaluator.
//! - [`modulation`]: the cost-aware weighting function and the modulated reward.
//! - [`smpo`]: threshold schedule, the two-term policy gradient and the training loop.
//! - [`baselines`]: unconstrained and Lagrangian policy gradient trainers.
//! - [`harness`]: configuration, multi-seed experiments, CSV metrics and
//!   verification suites.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod baselines;
pub mod cmdp;
pub mod critic;
pub mod error;
pub mod harness;
pub mod modulation;
pub mod seeding;
pub mod smpo;

pub use error::{Error, Result};
