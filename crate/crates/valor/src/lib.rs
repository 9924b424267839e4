//! Oracle-based PAC reinforcement learning for layered decision processes
//! with hidden states and rich observations.
//!
//! The crate provides:
//!
//! - [`cdp`]: the generative environment model, exact dynamic-programming
//!   ground truth, and named environment builders;
//! - [`classes`]: finite and tabular value-function / policy classes with
//!   realizability and completeness checkers;
//! - [`oracles`]: the four optimization primitives (cost-sensitive
//!   classification, linear programs, least squares, multi-dataset
//!   classification) with call accounting;
//! - [`local_values`]: the local-value learning algorithm built from those
//!   oracles (depth-first exploration with a consensus state-identity test,
//!   unconstrained and constrained policy fitting, and the
//!   exploration-on-demand meta loop);
//! - [`alt`]: two alternative learners that avoid stored local values, one
//!   with a two-sample state-identity test, one with a global policy;
//! - [`hardness`]: an enumeration-based optimistic eliminator over
//!   (value, policy) pairs, the 3-SAT gadget showing its per-round program
//!   is intractable, and three small constructions where natural decoupled
//!   learning rules fail;
//! - [`bench`]: a seeded multi-trial experiment harness with JSON and CSV
//!   output, used by the `valor` command-line tool.

pub mod bench;
pub mod cdp;
pub mod classes;
pub mod error;
pub mod hardness;
pub mod local_values;
pub mod oracles;
pub mod rng;

pub mod alt;

pub use error::{Error, Result};
