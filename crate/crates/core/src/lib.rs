//! Multicolor anisotropic image denoising with relaxed diffusivity tensors.
//!
//! The filter evolves an image `u` together with a per-pixel symmetric
//! fourth-order diffusivity `H`:
//!
//! ```text
//! ∂ₜu = div(H∇u),     τ∂ₜH + H = F(∇_σ u),     (H∇u)·n = 0 on the border
//! ```
//!
//! [`integrator::run`] advances the pair with an exact exponential update for
//! `H` and a backward-Euler diffusion step for `u`. [`baselines`] provides the
//! `τ = 0` (Catté-type) and scalar Perona–Malik references.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod grid;
pub mod init;
pub mod integrator;
pub mod mollifier;
pub mod response;
pub mod solver;
mod stencil;
pub mod tensor;

pub use error::{Error, Result};
pub use grid::{GradientField, GridSpec, ImageField, Tensor4Field};
pub use integrator::{FilterParams, FilterState, TraceRecord};
pub use response::{ResponseKind, ResponseParams};
pub use tensor::{ColorMatrix, SpectralBound, Tensor4};
