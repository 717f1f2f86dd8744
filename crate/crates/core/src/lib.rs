//! Energy-based image reconstruction.
//!
//! Reconstructions are terminal states of a discretized gradient flow on
//! `E(x) = D(Ax, z, ξ) + R(x, θ)`, where `D` is a learned data fidelity term
//! and `R` a total deep variation network. Control parameters are trained by
//! backpropagating through the unrolled flow, either against ground truth or
//! against patch statistics through an entropic optimal transport loss.

// Kernels index several buffers in lockstep, and `!(x > 0.0)` checks are
// meant to reject NaN as well.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod datafid;
pub mod error;
pub mod flow;
pub mod imaging;
pub mod learn;
pub mod rng;
pub mod tdv;
pub mod transport;

pub use error::{Error, Result};
pub use imaging::{Image, Shape};
