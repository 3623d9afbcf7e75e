//! Position-bias estimation from swap-randomized search logs, and the
//! applications that consume the estimates: debiased rate features,
//! inverse-propensity ranker evaluation, and rank-change forecasts.

pub mod coec;
pub mod estimator;
pub mod exec;
pub mod hash;
pub mod ips;
pub mod log;
pub mod power;
pub mod randpair;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod types;

#[cfg(test)]
mod testutil;

pub use exec::Exec;
pub use types::*;
