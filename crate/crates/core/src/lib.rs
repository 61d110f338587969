pub mod error;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
pub mod channel;
pub mod data;
pub mod harness;
pub mod pairing;
pub mod protocol;
pub mod schedule;
