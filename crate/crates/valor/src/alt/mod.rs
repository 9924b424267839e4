//! Learners that avoid stored local values: a two-sample state-identity
//! test driven by class-restricted mean discrepancies, and a global-policy
//! learner whose identity test combines a value upper bound with
//! Monte-Carlo roll-outs of the current policy.

pub mod global;
pub mod mmd;
