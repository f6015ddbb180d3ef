//! Entanglement-aware topology tools for quantum repeater networks.
//!
//! The crate models an overlay of entangled links, embeds it into a
//! `k`-dimensional lattice, filters unreliable links by per-level
//! thresholds, routes greedily over what remains and assigns stored
//! entangled states to competing user demands. The [`harness`] module runs
//! seeded scenarios end to end.

pub mod adaption;
pub mod assignment;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod overlay;
pub mod routing;

pub use error::{Error, Result};
