//! Simulation and analysis of request cloning over clusters of
//! processor-sharing servers.

pub mod analyze;
pub mod dispatch;
pub mod dist;
pub mod error;
pub mod kernel;
pub mod oracle;
pub mod ps;
pub mod rng;
pub mod runner;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod theory;
pub mod verify;

pub use dispatch::{CancelScope, Chooser, DelayConfig, Strategy};
pub use dist::{min_of, Distribution};
pub use error::{Error, Result};
pub use sim::{simulate, ServerSpec, SimConfig, SimOptions, SimOutput};
