//! Allocation-only core of the citysim smart-city simulator.
//!
//! Everything here is a pure function of its inputs or a single-owner state
//! machine: the SME observation codec, the in-memory sensor observation
//! service and air-quality index, group topology and throughput models,
//! random-waypoint mobility, tag-based content dissemination, the social
//! workload generator and the discrete-event engine that ties them together.
//! File formats, the CLI and anything touching the OS live in the `citysim`
//! crate.

#![no_std]
extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod dissemination;
pub mod group_net;
pub mod mobility;
pub mod rng;
pub mod sensor_service;
pub mod sim;
pub mod sme;
pub mod time;
pub mod workload;
