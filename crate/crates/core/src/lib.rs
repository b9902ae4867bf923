//! Discrete-time high-order multi-agent consensus and deadbeat consensus
//! prediction from a single agent's output window.

pub mod bench;
pub mod config;
pub mod dynamics;
pub mod graph;
pub mod linalg;
pub mod polyalg;
pub mod predictor;
