//! Frequency regulation of battery-backed power grids by model predictive control.

pub mod config;
pub mod conventional;
pub mod grid;
pub mod linalg;
pub mod metrics;
pub mod mpc;
pub mod qp;
pub mod sim;
