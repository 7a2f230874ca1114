//! Priors elicited from a next-token log-probability oracle, composed with
//! small data-driven learners.
//!
//! Three pipelines share one backend abstraction ([`lm`]) and one set of
//! prompt templates ([`prompts`]):
//!
//! * [`featselect`] scores variables by the log-odds of a "keep" answer and
//!   filters a dataset at a threshold, with a corruption harness built on
//!   the linear classifiers in [`learners`].
//! * [`causal`] combines a regression-error direction coefficient with the
//!   log-ratio of the two direction answers.
//! * [`rlshape`] turns judgment distributions into per-distance reward
//!   bonuses and trains a tabular Q-learning agent on a gridworld.

pub mod causal;
pub mod cli;
pub mod featselect;
pub mod learners;
pub mod lm;
pub mod prompts;
pub mod rlshape;
pub mod seed;
mod util;

pub use lm::{BackendConfig, BackendKind, LmClient, LmError, Prompt, TokenLogProbs, TokenScoreRequest};
