//! Near-commuting two-local QSAT: instances, rounding to commuting families,
//! commuting-algebra structure, tensor-network witnesses and exact oracles.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod algebra;
pub mod error;
pub mod graph;
pub mod instance;
pub mod linalg;
mod nearest;
pub mod operators;
pub mod optim;
pub mod oracle;
pub mod rounding;
pub mod seed;
pub mod witness;
mod small;

pub use error::{Error, Result};
