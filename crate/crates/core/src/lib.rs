//! District heating toolkit: a finite-volume plant simulator, GRU and
//! topology-wired GRU identification, and an economic NMPC that runs on the
//! identified models.

pub mod config;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nmpc;
pub mod pirnn;
pub mod rnn;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
