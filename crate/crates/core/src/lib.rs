//! Streaming WAIC for MCMC.
//!
//! Computes the Watanabe-Akaike information criterion and its components
//! (lppd, p_WAIC) online, one posterior sample at a time, in memory
//! proportional to the number of data partition elements rather than the
//! number of MCMC samples. Supports conditional and marginal predictive
//! densities (the latter via an inner Monte Carlo loop over latent nodes),
//! arbitrary data partitions, checkpoint/resume, and an offline oracle for
//! cross-checking. Ships samplers and simulation-study harnesses for six
//! reference models (H, F, S on hierarchical data; P, Z, I on stochastic
//! volatility series).

pub mod accum;
pub mod engine;
pub mod error;
pub mod graph;
pub mod mcmc;
pub mod models;
pub mod oracle;
pub mod partition;
pub mod predictive;
pub mod stream;
pub mod study;
pub mod tol;
pub mod util;

pub use error::{Error, Result};
