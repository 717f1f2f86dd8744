//! Total deep variation regularizer `R(x, θ) = Σᵢ (w 𝒩(Kx))ᵢ`.
//!
//! `K` is a zero-mean 3×3 convolution (applied with mirror padding so that
//! `R(x + c) = R(x)`), `𝒩` a chain of three-scale U-Nets built from residual
//! units `h + K₂ φ(K₁ h)` with `φ(x) = ½ log(1 + x²)`, and `w` a 1×1
//! convolution to one channel.

mod network;
mod params;
mod tensor;

pub use network::TdvTape;
pub use params::{ParamTensor, TdvConfig, TdvParams, RESIDUALS_PER_BLOCK, SCALES};
pub use tensor::Tensor;

/// `order`-th derivative of the log-Student-t activation `φ(x) = ½ log(1 + x²)`.
#[inline]
pub fn phi(x: f64, order: u8) -> f64 {
    let s = 1.0 + x * x;
    match order {
        0 => 0.5 * s.ln(),
        1 => x / s,
        2 => (1.0 - x * x) / (s * s),
        _ => 2.0 * x * (x * x - 3.0) / (s * s * s),
    }
}
