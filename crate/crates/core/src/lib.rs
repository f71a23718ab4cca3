//! OLSR and predictive OLSR (P-OLSR) link-quality routing for flying ad hoc
//! networks, with a deterministic discrete-event simulator to compare them.
//!
//! The protocol pieces ([`wire`], [`linkmetrics`], [`routing`]) are usable on
//! their own; [`engine`] wires them to [`mobility`] and [`channel`] models and
//! [`analysis`] turns run results into outage, goodput and fitted-curve data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod engine;
pub mod geo;
pub mod linkmetrics;
pub mod mobility;
pub mod output;
pub mod rng;
pub mod routing;
pub mod scenario;
pub mod wire;

pub use engine::{run, run_campaign, CampaignResult, RunResult};
pub use scenario::{preset, Protocol, Scenario};

/// Version string embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
