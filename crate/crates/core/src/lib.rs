//! IEEE 802.15.4 coexistence simulator with fingerprint-based interference
//! identification and link adaptation.

pub mod adapt;
pub mod cli;
pub mod config;
pub mod corruption;
pub mod engine;
pub mod error;
pub mod fim;
pub mod rng;
pub mod spectrum;
pub mod suite;
pub mod trace;
pub mod traffic;

pub use error::{Error, Result};
