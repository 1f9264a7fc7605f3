//! Opinion dynamics on directed social networks.
//!
//! Users hold latent opinions that relax toward a baseline and jump when
//! the users they follow post sentiment messages. Posting times follow
//! Poisson or Hawkes intensities with exponential kernels. The crate covers
//! exact simulation, maximum-likelihood estimation from event logs,
//! analytic and Monte-Carlo forecasting, and steady-state analysis.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod eval;
pub mod events;
pub mod forecast;
pub mod io;
pub mod netgen;
pub mod network;
pub mod params;
pub mod sentiment;
pub mod simulate;
pub mod state;

pub use error::{Error, Result};
pub use estimate::{estimate_all, EstimateConfig, IntensityModel};
pub use events::{Event, EventLog};
pub use forecast::{ForecastMethod, ForecastResult, ForecastState};
pub use network::Network;
pub use params::{ModelParams, SparseMatrix};
pub use sentiment::SentimentModel;
pub use simulate::{simulate, SimConfig, Simulator};
pub use state::MarkovState;
