//! Computational barriers at desk scale: the optimistic joint eliminator
//! over (value, policy) pairs, its 3-SAT reduction gadget, and three small
//! constructions where natural decoupled learning rules fail.

pub mod barriers;
pub mod olive;
pub mod sat;
