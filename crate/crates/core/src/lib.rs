//! Simulation and analysis toolkit for mode-pairing measurement-device-independent QKD.
//!
//! The crate covers the whole chain from pulse emission to a finite-size key
//! rate: a Monte Carlo photonic layer ([`channel`]), click pairing
//! ([`pairing`]), phase-reference estimation ([`phase`]), basis sifting and
//! key mapping ([`sift`]), decoy-state bounds ([`decoy`]) and file and
//! pipeline plumbing ([`io`]).

pub mod channel;
pub mod decoy;
pub mod error;
pub mod io;
pub mod pairing;
pub mod phase;
pub mod pipeline;
pub mod protocol;
pub mod sift;

pub use error::{Error, Result};
