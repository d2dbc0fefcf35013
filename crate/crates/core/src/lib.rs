//! Drone base-station grid for post-disaster coverage: channel and energy
//! models, minimum-energy power allocation, placement search, and a
//! block-by-block simulator with in-flight recharging.

pub mod allocation;
pub mod assign_power;
pub mod channel;
pub mod energy;
pub mod error;
pub mod orchestrator;
pub mod placement;
pub mod scenario_io;

pub use error::{Error, Result, ValidationErrors};
