//! Numerical core for the linear collision operator of a dissipative hard-sphere
//! test particle in a Maxwellian background: closed-form gain kernel and collision
//! frequency, brute-force defining-integral oracles, velocity-space discretization,
//! spectral analysis of the symmetrized operator, relaxation dynamics with entropy
//! monitors, and a slab transport demo.
//!
//! The crate is `no_std` + `alloc`; the `std` feature (default) only unlocks
//! thread-chunked execution helpers. All floating-point paths are deterministic:
//! scalar math goes through `libm`, random streams are counter-seeded ChaCha8,
//! and reductions use fixed association order.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod checksum;
pub mod error;
pub mod evolution;
pub mod gas;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod math;
pub mod operator;
pub mod oracle;
pub mod rng;
pub mod spectral;
pub mod transport;

pub use error::{CoreError, Result};
