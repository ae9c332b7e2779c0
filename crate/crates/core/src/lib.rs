//! Simulator and verifier suite for the non-equilibrium steady state of the
//! reaction-diffusion exclusion process on the discrete torus.

pub mod config;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod fields;
pub mod flows;
pub mod lattice;
pub mod localeq;
pub mod pde;
pub mod simulate;
pub mod spde;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
