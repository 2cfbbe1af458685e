//! Virtual hardware-in-the-loop co-simulation of a grid-connected EV charger.

pub mod aimd;
pub mod charger;
pub mod converter;
pub mod current_control;
pub mod error;
pub mod grid;
pub mod measurement;
pub mod outer;
pub mod scenario;
pub mod tf;

pub use error::{Error, Result};
