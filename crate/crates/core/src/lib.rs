//! Discrete-event simulator and closed-form model of network-coded
//! cooperative ARQ (NCC-ARQ) over a source/destination/relay topology,
//! together with the plain cooperative ARQ baseline it is compared against.
//!
//! * [`model`]: parameters, frames, airtime arithmetic
//! * [`netcode`]: XOR coding and the overheard-packet store
//! * [`analytic`]: closed-form delay and throughput
//! * [`channel`]: per-link error model (scripted or seeded Bernoulli)
//! * [`protocol`]: per-node transition functions
//! * [`engine`]: event-driven simulator and run statistics
//! * [`scenario`]: scenario configuration files
//! * [`report`]: comparison tables, CSV/JSON output and tolerance checks

pub mod analytic;
pub mod channel;
pub mod engine;
pub mod model;
pub mod netcode;
pub mod protocol;
pub mod report;
pub mod scenario;

pub use model::{Duration, SystemParameters};
pub use protocol::ProtocolVariant;
