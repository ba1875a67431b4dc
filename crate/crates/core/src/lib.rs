//! Physics-informed surrogate models for line-integral plasma diagnostics.
//!
//! The crate covers the whole pipeline: chord geometry and contribution
//! matrices ([`geometry`]), synthetic phantom datasets ([`phantom`]),
//! persistence and dataset quality ([`datastore`]), the convolutional
//! surrogates ([`network`], built on [`nn`]), the physics-informed loss and
//! evaluation metrics ([`objective`]) and the training loop ([`trainer`]).

pub mod datastore;
pub mod error;
pub mod geometry;
pub mod network;
pub mod nn;
pub mod objective;
pub mod phantom;
pub mod trainer;

pub use error::{Error, Result};
