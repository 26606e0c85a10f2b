//! Estimation of network structure from aggregated relational data (ARD).
//!
//! ARD are survey counts of the form "how many of your links have trait k?".
//! This crate fits a latent hypersphere formation model to such counts,
//! draws graphs from the fitted posterior, and computes node- and
//! graph-level network statistics from those draws, so that network
//! quantities of interest can be estimated without observing any links.
//!
//! The pipeline is: [`model::ArdDataset`] -> [`sampler::run_chain`] ->
//! [`graphs::draw_posterior_graphs`] -> [`stats`]. The [`simlab`] module
//! contains the synthetic data generating process and the evaluation
//! experiments; [`io`] owns the on-disk CSV formats used by the CLI.

pub mod graphs;
pub mod impute;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod par;
pub mod regress;
pub mod sampler;
pub mod simlab;
pub mod sphere;
pub mod stats;

use thiserror::Error;

/// Crate-wide error type. The CLI maps variants onto exit codes:
/// validation errors -> 1, numerical failures -> 2, I/O errors -> 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
