//! Dependence between two responses at the quantile level.
//!
//! Each response is first fitted by linear quantile regression. The signs of
//! the two residual vectors are cross-classified into a four-level
//! concordance label, whose distribution is modelled by multinomial logistic
//! regression. Predicted cell probabilities give a covariate-dependent
//! φ correlation between the residual-sign indicators, with bootstrap
//! inference over the whole two-step procedure.

pub mod basis;
pub mod cli;
pub mod concordance;
pub mod data;
pub mod error;
pub mod inference;
mod linalg;
pub mod multinomial;
pub mod pipeline;
pub mod qr;
pub mod quadrature;
pub mod synthetic;

pub use error::{Error, Result};
