pub mod collectives;
pub mod config;
pub mod engine;
pub mod report;
pub mod fabric;
pub mod sim;
pub mod topology;
pub mod transport;
pub mod units;
pub mod workload;

pub use sim::{Application, SimConfig, SimError, Simulator};
