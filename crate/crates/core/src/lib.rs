//! Wright-Fisher inference on variant-frequency time series.
//!
//! The crate fits the effective population size `N` and selection strength
//! `s` of a two-variant Wright-Fisher model to observed frequencies using the
//! Beta-with-Spikes transition approximation, tests selection against pure
//! drift with a parametric bootstrap, and locates times at which `(N, s)`
//! change.

pub mod analysis;
pub mod bws;
pub mod changepoint;
pub mod corpus;
pub mod error;
pub mod inference;
pub mod optimize;
pub mod quadrature;
pub mod rng;
pub mod series;
pub mod special;
pub mod wf;

pub use error::{Error, Result};
pub use series::{Observation, TimeSeries};
pub use wf::WfParams;
