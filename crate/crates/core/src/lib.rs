//! Monte Carlo noise injection (MCNI) for neural-network uncertainty.
//!
//! Gaussian noise scaled by `alpha * sigma_l` is injected into the weights of
//! every noisy dense layer during both training and inference. Running `T`
//! stochastic forward passes at test time yields a predictive mean and
//! variance. The crate also ships an MC-dropout baseline, the evaluation
//! metrics used to compare the two (PICP, MPIW, RMSE, NLL, MSLL, ECE, Brier,
//! risk-coverage), and an empirical check of the wide-network / Gaussian
//! process correspondence.
//!
//! Module map:
//!
//! - [`tensor`], [`rng`]: numeric substrate and seeded random streams
//! - [`nn`]: dense networks, exact backward pass, losses
//! - [`stochastic`]: weight-noise layers and dropout
//! - [`optim`]: Adam, SGD with momentum, `fit`, grid search
//! - [`mc`]: T-pass Monte Carlo inference and predictive summaries
//! - [`metrics`]: evaluation math
//! - [`data`]: toy generator, CSV ingestion, standardization, splits
//! - [`gp`]: kernel Monte Carlo and wide-network covariance checks
//! - [`cli`]: the experiment commands behind the `mcni` binary

pub mod cli;
pub mod data;
pub mod error;
pub mod gp;
pub mod mc;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod stochastic;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::RandomStream;
pub use tensor::Tensor;
