//! Simulation and model checking of knowledge in distributed ledger protocols.
//!
//! The crate is organized around a small ontology of *runs* (time-indexed
//! global states with per-agent histories) collected into finite
//! *interpreted systems*. On top of that it provides:
//!
//! - [`sim`]: a deterministic generator of such systems from declarative
//!   scenario files, running an abstract settled-prefix broadcast protocol
//!   under a configurable adversarial environment (message delay, churn,
//!   corruption, and deliberately faulty protocol variants);
//! - [`properties`]: per-run checkers for ledger consistency, growth,
//!   acceptability, liveness, and chain-growth bounds, each returning a
//!   re-checkable witness on failure;
//! - [`logic`]: a formula language with temporal, knowledge, and indexical
//!   common-knowledge operators, a parser, a point-wise evaluator, and the
//!   equivalence suites connecting run-level properties to formula validity;
//! - [`prob`]: cells, exact rational measures, epsilon-acceptability, and the
//!   probabilistic equivalence suite;
//! - [`game`]: a two-player contract-signing game over generated systems with
//!   brute-force unilateral-deviation analysis;
//! - [`trace`]: a line-oriented trace format for exporting and re-importing
//!   generated runs.

pub mod game;
pub mod logic;
pub mod model;
pub mod prob;
pub mod properties;
pub mod sim;
#[doc(hidden)]
pub mod testutil;
pub mod trace;

pub use model::{
    indistinguishable, is_prefix, is_t_prefix, knowledge_set, AgentId, Cell, Event, GlobalState,
    IndexicalSet, InterpretedSystem, Interpretation, Ledger, LocalState, ModelError, Point, Run,
    Time, Transaction,
};
