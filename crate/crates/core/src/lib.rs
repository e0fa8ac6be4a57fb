//! Simulation and analysis of an optically levitated, anisotropic nanoparticle:
//! translation, spin, nutation and light-induced precession.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod estimates;
pub mod integrator;
pub mod model;
pub mod report;
pub mod spectral;
pub mod sweep;

pub use error::{Error, Result};
