//! Tool server connectivity: a framed wire protocol, in-process simulated
//! servers with configurable latency and failure, and whitelist
//! enforcement at the connection boundary.

mod client;
mod frame;
mod server;

pub use client::{connect, ServerHandle, ServerRegistry, TransportKind, DEFAULT_DEADLINE_MS};
pub use frame::{decode_frame, decode_frames, encode_frame};
pub use server::{SimServer, ToolBehavior, PROTOCOL_VERSION};

use crate::blueprint::{SchemaNode, ValidationReport};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use thiserror::Error;

/// What a server advertises about one tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    /// Schema the arguments must conform to.
    pub input_schema: SchemaNode,
    /// Output paths the speculation matcher may ignore (dotted).
    pub ignorable_fields: Vec<String>,
    pub idempotent: bool,
}

impl ToolDescriptor {
    /// Descriptor accepting any object argument.
    pub fn open(name: &str) -> ToolDescriptor {
        ToolDescriptor {
            name: name.to_string(),
            input_schema: SchemaNode::object([]),
            ignorable_fields: Vec::new(),
            idempotent: name.starts_with("get_") || name.starts_with("fetch_"),
        }
    }
}

/// Frame kind on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Request,
    Response,
    Error,
}

/// One wire frame: UTF-8 JSON line, LF-terminated. Every response or
/// error echoes the id of exactly one prior request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub id: u64,
    pub kind: FrameKind,
    pub method: String,
    pub body: Value,
}

/// Simulated server behavior knobs. The failure schedule is a pure
/// function of (seed, tool, arguments), so an identical call is
/// reproducible regardless of scheduling order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimServerConfig {
    /// Per-tool latency; tools not listed use `default_latency_ms`.
    #[serde(default)]
    pub latency_ms: BTreeMap<String, u64>,
    #[serde(default = "default_latency")]
    pub default_latency_ms: u64,
    /// Probability in [0, 1] that a call faults.
    #[serde(default)]
    pub failure_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_latency() -> u64 {
    10
}

impl Default for SimServerConfig {
    fn default() -> Self {
        SimServerConfig {
            latency_ms: BTreeMap::new(),
            default_latency_ms: default_latency(),
            failure_rate: 0.0,
            seed: 0,
        }
    }
}

/// A successful tool response plus the latency the server charged.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolResponse {
    pub body: Value,
    pub latency_ms: u64,
}

/// Tool connectivity errors.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ToolError {
    #[error("cannot connect to `{url}`: {reason}")]
    Connect { url: String, reason: String },
    #[error("protocol version mismatch: client {client}, server {server}")]
    Handshake { client: String, server: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("tool `{tool}` is not exposed on this connection")]
    Permission { tool: String },
    #[error("arguments rejected by the tool's input schema")]
    Schema(ValidationReport),
    #[error("deadline of {deadline_ms} ms elapsed before the tool responded")]
    Timeout { deadline_ms: u64 },
    #[error("tool fault: {message}")]
    Fault { message: String },
}
