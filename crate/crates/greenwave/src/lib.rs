//! greenwave: a self-contained lab for reinforcement-learning traffic
//! signal control.
//!
//! The crate bundles:
//!
//! - [`sim`] — a deterministic discrete-time microscopic simulator of
//!   vehicles on signalized lane networks, driven by scenario files;
//! - [`obs`] — three environment state representations (per-lane vehicle
//!   counts, per-lane average waits, and an image-like grid of per-vehicle
//!   presence/speed/wait channels);
//! - [`metrics`] — the queue-based reward and the four evaluation metrics
//!   (average travel time, waiting time, delay, queue length);
//! - [`nn`] — a dense Q-network with hand-derived gradients, adaptive-moment
//!   updates, prune masks, and flat binary checkpoints;
//! - [`dqn`] — a DQN agent (replay buffer, target network, epsilon-greedy
//!   control) with one independent agent per intersection;
//! - [`prune`] — global magnitude pruning and sparsity sweeps;
//! - [`harness`] — scenario templates, grid search, multi-seed training,
//!   baseline controllers, and CSV reporting, all reproducible from seeds.
//!
//! Start with the runnable examples (`cargo run --release --example
//! simulate`) or the `greenwave` CLI.

pub mod dqn;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod obs;
pub mod prune;
pub mod sim;
pub mod util;
