//! Runtime engine for declarative agent blueprints.
//!
//! An agent is specified as a data artifact (a blueprint in YAML or JSON) and
//! executed as a governed control loop over a pluggable token generator:
//!
//! - [`blueprint`] — strict parsing, validation, and serialization of agent
//!   blueprints, plus input/output contract enforcement at the agent boundary.
//! - [`kernel`] — the reason-then-act episode loop, reward composition, and
//!   trajectory accounting.
//! - [`guard`] — safety enforcement by policy projection and token-level
//!   masking, and the token-budget controller that modulates reasoning effort.
//! - [`memory`] — bounded event stream, consolidation into long-term stores,
//!   and embedding-based retrieval.
//! - [`executor`] — plan DAG construction, critical-path analysis, parallel
//!   and speculative execution under a virtual or real clock, and
//!   attention-guided context pruning.
//! - [`toolnet`] — a framed wire protocol for tool servers, in-process
//!   simulated servers, and whitelist enforcement at the connection boundary.
//! - [`evolution`] — lesson reflection, verifier-filtered fine-tuning, and
//!   advantage-weighted policy-gradient updates over a toy policy.
//! - [`harness`] — the command-line entry point tying the modules together.

pub mod blueprint;
pub mod evolution;
pub mod executor;
pub mod guard;
pub mod harness;
pub mod kernel;
pub mod memory;
pub mod seed;
pub mod toolnet;
