//! Stratified splitting for unbiased Monte Carlo estimation of `E_f[phi(X)]`.
//!
//! The [`engine`] runs the splitting algorithm over any [`engine::Model`];
//! [`kernels`] supplies the Markov moves, [`models`] the three built-in
//! applications, [`bounds`] the sample-size planners and [`oracles`] exact or
//! brute-force reference values.

pub mod engine;
pub mod kernels;
pub mod rng;
pub mod stats;
pub mod bounds;
pub mod models;
pub mod oracles;
