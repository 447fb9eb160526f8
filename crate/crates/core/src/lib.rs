//! Integral signatures of activation functions under Gaussian inputs.
//!
//! The library computes, for an activation `phi` and input scale `sigma`, the
//! nine-dimensional signature
//! `(m1, g1, g2, m2, eta, alpha_plus, alpha_minus, TV(phi'), C(phi))`
//! by Gauss–Hermite quadrature with adaptive fallback, and builds the
//! downstream certificates that depend on it: mean-field variance fixed
//! points and criticality scans, bias-drift bounds, Lyapunov contraction
//! certificates, and kernel mixed-Hessian curvature bounds — each
//! cross-checked by seeded Monte Carlo.
//!
//! Everything numeric is generic over the scalar type through [`Real`]
//! (implemented for `f64` and `f32`); the aliases below fix `f64`, the
//! precision the documented tolerances refer to.

pub mod activations;
pub mod error;
pub mod kernel;
pub mod lyapunov;
pub mod montecarlo;
pub mod propagation;
pub mod quadrature;
pub mod render;
pub mod rng;
pub mod scalar;
pub mod signature;
pub mod tails;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Activation64 = activations::Activation<f64>;
pub type Activation32 = activations::Activation<f32>;
pub type QuadratureRule64 = quadrature::QuadratureRule<f64>;
pub type QuadratureRule32 = quadrature::QuadratureRule<f32>;
pub type GaussianComponents64 = signature::GaussianComponents<f64>;
pub type Signature64 = signature::Signature<f64>;
pub type Signature32 = signature::Signature<f32>;
pub type AffineParams64 = activations::AffineParams<f64>;
