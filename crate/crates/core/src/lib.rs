//! Probabilistic-robust constructive-interference precoding for multiuser
//! MISO downlink with PSK signalling and imperfect channel knowledge.

pub mod error;
pub mod eval;
pub mod model;
pub mod par;
pub mod precoder;
pub mod prob;
pub mod selftest;
pub mod socp;

pub use error::{Error, Result};
