//! Finite-element solver for stacks of elastic layers in frictional contact.
//!
//! The layers rest on a normal-compliance foundation and touch each other
//! through unilateral interfaces with Coulomb-type friction. The friction bound
//! depends on the unknown stress, so the discrete problem is solved as a fixed
//! point of convex subproblems in which the bound is frozen.

// `!(x > 0.0)` is used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod cli;
pub mod config;
pub mod constitutive;
pub mod mesh;
pub mod output;
pub mod problems;
pub mod solver;
pub mod sparse;
pub mod verification;
