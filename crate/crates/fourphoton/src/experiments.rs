//! Measurement protocols built on the optical engine.
//!
//! Each protocol pairs an analytic computation (exact within the pair
//! truncation) with a Monte Carlo run drawing from the same tables, so
//! simulated counts and closed-form expectations agree by construction
//! and differ only by sampling noise.

pub mod bell;
pub mod compensate;
pub mod conditioned;
pub mod delay;
pub mod fourfold;
pub mod g2;
pub mod hom;
pub mod rates;
pub mod scan;
