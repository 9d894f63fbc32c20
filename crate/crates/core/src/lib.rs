//! Block-diagonal Hessian-free optimisation for small neural networks:
//! reverse- and forward-mode differentiation with exact Gauss–Newton and
//! Hessian products, truncated conjugate gradient, and the block-wise
//! second-order trainer built on them.

pub mod autodiff;
pub mod cg;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod models;
pub mod optimizer;
pub mod rng;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
