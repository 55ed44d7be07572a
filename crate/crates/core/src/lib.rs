//! Deep Poisson–gamma dynamical systems for multivariate count and binary
//! sequences: generative model, Gibbs and stochastic-gradient MCMC
//! inference, forecasting and evaluation utilities.

pub mod config;
pub mod data;
pub mod distributions;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod model;
pub mod rng;
pub mod sgmcmc;

pub use error::{Error, Result};
pub use model::{CountMatrix, DataKind, GlobalParams, HyperParams, LatentState};
pub use rng::RngStream;
