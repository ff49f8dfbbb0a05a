//! Agent-based SEIR epidemics on contact networks, with agents that decide
//! each week whether to wear a mask.
//!
//! Agents value masking through an instance-based learning model: they keep
//! a memory of past situations and the utility each choice earned, estimate
//! the value of masking or not by similarity-weighted blending of those
//! memories, and choose with a Boltzmann policy. The utility combines mask
//! discomfort, conformity with neighbors and perceived risk reduction.
//!
//! Modules, bottom up:
//!
//! - [`graph`]: contact networks (generators, edge-list I/O, cluster
//!   sampling with degree-preserving stub rewiring)
//! - [`calibration`]: uniform edge-weight scaling to a target R0, plus a
//!   Monte-Carlo check
//! - [`epidemic`]: daily SEIR transmission and progression
//! - [`cogibl`]: declarative memory, retrieval, blending and learning
//! - [`behavior`]: observations, reward and decision epochs
//! - [`metrics`]: daily records, wave peaks, prevalence and assortativity
//! - [`config`] and [`runner`]: scenario files and orchestration
//!
//! ```
//! use cogmask::config::preset;
//! use cogmask::runner::{prepare_network, simulate_replicate, summarize};
//!
//! let mut cfg = preset("fig3_base").unwrap();
//! cfg.network.n = Some(300);
//! cfg.network.edges = Some(3300);
//! cfg.schedule.horizon_days = 60;
//! let net = prepare_network(&cfg).unwrap();
//! let run = simulate_replicate(&cfg, &net.graph, 0).unwrap();
//! assert_eq!(run.records.len(), 61);
//! let summary = summarize(&cfg, &net.graph, &run);
//! assert!(summary.cumulative_infections > 0);
//! ```

pub mod behavior;
pub mod calibration;
pub mod cogibl;
pub mod config;
pub mod epidemic;
pub mod graph;
pub mod metrics;
pub mod rng;
pub mod runner;
