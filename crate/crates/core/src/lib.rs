//! Particle Gibbs with ancestor sampling and joint `(phi, sigma)` updates for
//! univariate and multivariate stochastic volatility models.
//!
//! The crate is organized bottom-up:
//!
//! * [`rng`]: seeded streams and primitive draws;
//! * [`model`]: parameter sets and model log-densities;
//! * [`simulate`]: synthetic data;
//! * [`particle`]: bootstrap filter, CPF and CPF-AS;
//! * [`conditionals`]: conjugate parameter draws and adaptive random-walk Metropolis;
//! * [`engine`]: complete Gibbs chains;
//! * [`diagnostics`]: autocorrelations, inefficiency factors and summaries;
//! * [`io`] and [`cli`]: CSV/config handling and the command-line front end.

pub mod cli;
pub mod conditionals;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod io;
pub mod model;
pub mod particle;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
