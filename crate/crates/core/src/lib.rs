#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod error;
pub mod linalg;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod model;
pub mod observable;
pub mod linear_flow;
pub mod bismut;
pub mod regularization;
pub mod sde;
pub mod io;
pub mod scenario;
