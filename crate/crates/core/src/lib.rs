//! Adaptive symmetric FEM-BEM coupling for the Laplace transmission problem in 2D.

pub mod adaptive;
pub mod bem;
pub mod benchmark;
pub mod cli;
pub mod config;
pub mod coupling;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod invest;
pub mod mesh;
pub mod output;
pub mod quadrature;
pub mod sparse;

pub use error::{Error, Result};
