//! Sparse dictionary learning with amortized inference.
//!
//! Codes are inferred per mini-batch with FISTA on an l1-penalized
//! reconstruction energy, optionally with a variance hinge that keeps latent
//! components from collapsing and a pull toward a LISTA encoder's prediction.
//! The decoder (linear dictionary or one-hidden-layer MLP) and encoder are then
//! updated with Adam against the inferred codes.

pub mod data;
pub mod error;
pub mod eval;
pub mod inference;
pub mod models;
pub mod numerics;
pub mod optim;
pub mod spck;
pub mod training;

pub use error::{Error, Result};
