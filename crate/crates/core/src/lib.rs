//! Agent-based simulation of multi-topic true/false information spread on a
//! community-structured follower graph, together with a check-worthiness
//! fact-checking pipeline and a counterfactual experiment harness.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`] loads, synthesizes and samples follower graphs and computes
//!   prestige and betweenness centrality.
//! * [`world`] holds topics, claims, per-node state and scenario parameters.
//! * [`engine`] advances the world one step at a time and records every
//!   utterance and read in a [`engine::SimLog`].
//! * [`features`] turns a log into per-claim feature rows.
//! * [`gbdt`] and [`checkworthy`] build training sets and the two regressors.
//! * [`intervention`] applies fact-checking during the post-period.
//! * [`metrics`] and [`experiment`] compute treatment effects and drive the
//!   full counterfactual grid.

pub mod checkworthy;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod features;
pub mod gbdt;
pub mod graph;
pub mod intervention;
pub mod metrics;
pub mod replay;
pub mod rng;
pub mod world;

pub use error::{Error, Result};
