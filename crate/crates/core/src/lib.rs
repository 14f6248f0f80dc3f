//! Discrete-event simulator for multiband CSMA/CA with RTS/CTS.
//!
//! RTS frames travel on one or a few of `N` orthogonal bands, so an access
//! point can decode several simultaneous requests as long as they land on
//! different bands. CTS, DATA and ACK use the whole channel.

pub mod cli;
pub mod error;
pub mod mac;
pub mod metrics;
pub mod phy;
pub mod scenarios;
pub mod sim;

pub use error::{Error, Result};
pub use mac::Network;
pub use metrics::RunMetrics;
pub use scenarios::ScenarioConfig;
