//! Simulation of a pulsed four-beam photon-pair source with gated,
//! heralded detection electronics.
//!
//! The crate is organized in layers: [`fock`] holds the sparse multimode
//! bosonic state representation, [`elements`] the optical elements that act
//! on it, [`source`] the pump and pair-emission model, [`detection`] the
//! gated detectors and trigger chain, [`layouts`] the named bench layouts,
//! and [`experiments`] the measurement protocols built on top of all of
//! them. [`config`] ties the layers to a declarative run configuration for
//! the command-line binary.

pub mod config;
pub mod detection;
pub mod elements;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod layouts;
pub mod source;
