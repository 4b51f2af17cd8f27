//! Generative optimization of connecting-nodes planar antennas.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: the 20-parameter node/trapezoid layout and its checker.
//! * [`simulator`]: the black-box evaluator contract and a deterministic
//!   surrogate producing `|S11|` sweeps.
//! * [`criteria`]: performance metrics to binary labels, band targets,
//!   percentile thresholds.
//! * [`neuralnet`]: dense networks with analytic gradients.
//! * [`generative`]: discriminator and generator training, candidate sampling.
//! * [`svc`]: SMO-trained support vector classifier used as a second filter.
//! * [`evolution`]: the evolutionary criterion loop.
//! * [`baselines`] and [`bench`]: classical derivative-free optimizers and
//!   the comparison harness.

pub mod baselines;
pub mod bench;
pub mod criteria;
pub mod evolution;
pub mod generative;
pub mod geometry;
pub mod goal;
pub mod neuralnet;
pub mod seeds;
pub mod simulator;
pub mod svc;
