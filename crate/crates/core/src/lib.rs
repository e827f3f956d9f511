//! Multi-series monthly load forecasting with an exponential-smoothing
//! front end and a residual dilated LSTM trained jointly by reverse-mode
//! differentiation.
//!
//! Every numerical component is generic over [`Real`] so models can run in
//! `f32` or `f64`; the aliases at the crate root fix the scalar to `f64`.

pub mod autodiff;
pub mod baselines;
pub mod checkpoint;
pub mod dataset;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod ets;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod scalar;
pub mod seed;
pub mod trainer;
pub mod windowing;

pub use error::{Error, Result};
pub use scalar::Real;

/// Months per seasonal cycle.
pub const SEASON: usize = 12;
/// Months forecast at once.
pub const HORIZON: usize = 12;

pub type Tape64 = autodiff::Tape<f64>;
pub type Series = dataset::MonthlySeries<f64>;
pub type Collection = dataset::SeriesCollection<f64>;
pub type Network = network::NetworkParams<f64>;
pub type Model = trainer::TrainedModel<f64>;
