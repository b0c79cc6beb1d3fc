//! Discrete-event simulator for scheduling FaaS requests on a cluster where
//! function environments have setup times.
//!
//! The crate bundles the data model, the list-scheduling engine with its
//! policy variants, an OpenWhisk-style baseline, a synthetic workload
//! generator, schedule metrics with a brute-force oracle for tiny instances,
//! and a parallel sweep harness.

pub mod engine;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod policies;
pub mod workload;

pub use engine::{simulate, SimError, SimResult};
pub use model::{ClusterConfig, Instance, PolicyConfig, TuplePolicy};
pub use policies::ow_simulate;
