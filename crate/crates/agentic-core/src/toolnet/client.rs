//! Connection handles: whitelist intersection at connect, a second check
//! at call time, and deadline enforcement on the clock.

use super::frame::{decode_frame, encode_frame};
use super::server::{SimServer, PROTOCOL_VERSION};
use super::{FrameKind, ToolDescriptor, ToolError, ToolResponse, WireFrame};
use crate::blueprint::{validate_payload, ToolServerBinding};
use crate::executor::Clock;
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

/// Default per-call deadline (30 s real, 30,000 virtual ms).
pub const DEFAULT_DEADLINE_MS: u64 = 30_000;

/// How frames travel between handle and server. Both transports carry the
/// exact same frames; the byte stream additionally encodes and decodes
/// them through their wire form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    ByteStream,
}

/// Registry of reachable servers, keyed by url.
#[derive(Default)]
pub struct ServerRegistry {
    servers: BTreeMap<String, Arc<Mutex<SimServer>>>,
}

impl ServerRegistry {
    pub fn new() -> ServerRegistry {
        ServerRegistry::default()
    }

    /// Register a simulated server and return its address.
    pub fn spawn_sim_server(&mut self, url: &str, server: SimServer) -> String {
        self.servers
            .insert(url.to_string(), Arc::new(Mutex::new(server)));
        url.to_string()
    }

    pub fn server(&self, url: &str) -> Option<Arc<Mutex<SimServer>>> {
        self.servers.get(url).cloned()
    }
}

/// A live connection exposing `allow_tools ∩ advertised`.
pub struct ServerHandle {
    pub alias: String,
    server: Arc<Mutex<SimServer>>,
    exposed: BTreeMap<String, ToolDescriptor>,
    next_id: AtomicU64,
    transport: TransportKind,
    connected: bool,
}

impl std::fmt::Debug for ServerHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerHandle")
            .field("alias", &self.alias)
            .field("exposed", &self.exposed.keys().collect::<Vec<_>>())
            .field("transport", &self.transport)
            .field("connected", &self.connected)
            .finish()
    }
}

/// Connect a blueprint binding against the registry: handshake versions,
/// list the server's tools, and restrict the handle to the binding's
/// whitelist.
pub fn connect(
    binding: &ToolServerBinding,
    registry: &ServerRegistry,
    transport: TransportKind,
) -> Result<ServerHandle, ToolError> {
    let server = registry
        .server(&binding.url)
        .ok_or_else(|| ToolError::Connect {
            url: binding.url.clone(),
            reason: "no server at this address".into(),
        })?;

    let mut handle = ServerHandle {
        alias: binding.alias.clone(),
        server,
        exposed: BTreeMap::new(),
        next_id: AtomicU64::new(1),
        transport,
        connected: true,
    };

    let init = handle.roundtrip("initialize", json!({ "version": PROTOCOL_VERSION }))?;
    let server_version = init
        .body
        .get("version")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    if server_version != PROTOCOL_VERSION {
        return Err(ToolError::Handshake {
            client: PROTOCOL_VERSION.to_string(),
            server: server_version,
        });
    }

    let listing = handle.roundtrip("tools/list", json!({}))?;
    let advertised: Vec<ToolDescriptor> = listing
        .body
        .get("tools")
        .and_then(Value::as_array)
        .map(|tools| {
            tools
                .iter()
                .filter_map(|t| serde_json::from_value(t.clone()).ok())
                .collect()
        })
        .unwrap_or_default();

    let whitelist: BTreeSet<&String> = binding.allow_tools.iter().collect();
    handle.exposed = advertised
        .into_iter()
        .filter(|d| whitelist.contains(&d.name))
        .map(|d| (d.name.clone(), d))
        .collect();
    Ok(handle)
}

impl ServerHandle {
    /// Exposed tool descriptors in stable (lexicographic) order.
    pub fn list_tools(&self) -> Result<Vec<ToolDescriptor>, ToolError> {
        if !self.connected {
            return Err(ToolError::Transport("handle is disconnected".into()));
        }
        Ok(self.exposed.values().cloned().collect())
    }

    pub fn is_exposed(&self, tool: &str) -> bool {
        self.exposed.contains_key(tool)
    }

    pub fn descriptor(&self, tool: &str) -> Option<&ToolDescriptor> {
        self.exposed.get(tool)
    }

    /// Drop the connection; further operations fail with a transport
    /// error.
    pub fn disconnect(&mut self) {
        self.connected = false;
    }

    /// Validated, whitelisted dispatch without clock pacing. The caller
    /// owns latency accounting (the DAG scheduler path); the default
    /// per-call deadline still applies.
    pub fn dispatch(&self, tool: &str, args: &Value) -> Result<ToolResponse, ToolError> {
        if !self.connected {
            return Err(ToolError::Transport("handle is disconnected".into()));
        }
        if self.server.lock().expect("server lock").latency_for(tool) > DEFAULT_DEADLINE_MS {
            return Err(ToolError::Timeout {
                deadline_ms: DEFAULT_DEADLINE_MS,
            });
        }
        // Permission is checked here as well as at connect time; a frame
        // naming a non-whitelisted tool never reaches the server.
        let descriptor = self
            .exposed
            .get(tool)
            .ok_or_else(|| ToolError::Permission {
                tool: tool.to_string(),
            })?;
        let report = validate_payload(&descriptor.input_schema, args);
        if !report.is_conformant() {
            return Err(ToolError::Schema(report));
        }
        let latency_ms = self.server.lock().expect("server lock").latency_for(tool);
        let frame = self.roundtrip("tools/call", json!({ "tool": tool, "args": args }))?;
        match frame.kind {
            FrameKind::Response => Ok(ToolResponse {
                body: frame.body,
                latency_ms,
            }),
            FrameKind::Error => Err(ToolError::Fault {
                message: frame
                    .body
                    .get("message")
                    .and_then(Value::as_str)
                    .unwrap_or("tool fault")
                    .to_string(),
            }),
            FrameKind::Request => Err(ToolError::Transport(
                "server answered with a request frame".into(),
            )),
        }
    }

    /// Call a tool under a deadline, pacing the clock by the server's
    /// latency (or the deadline, whichever ends first).
    pub fn call_tool(
        &self,
        tool: &str,
        args: &Value,
        deadline_ms: u64,
        clock: &mut dyn Clock,
    ) -> Result<ToolResponse, ToolError> {
        let start = clock.now_ms();
        let latency = self.server.lock().expect("server lock").latency_for(tool);
        if latency > deadline_ms {
            // The response would land after the deadline; the caller
            // observes the timeout at exactly the deadline.
            clock.advance_to(start + deadline_ms);
            return Err(ToolError::Timeout { deadline_ms });
        }
        let result = self.dispatch(tool, args);
        match result {
            Ok(response) => {
                clock.advance_to(start + response.latency_ms);
                Ok(response)
            }
            Err(e) => {
                clock.advance_to(start + latency);
                Err(e)
            }
        }
    }

    /// One request/response exchange. Ids increase monotonically per
    /// connection; the response must echo the request id.
    fn roundtrip(&self, method: &str, body: Value) -> Result<WireFrame, ToolError> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let request = WireFrame {
            id,
            kind: FrameKind::Request,
            method: method.to_string(),
            body,
        };
        let response = match self.transport {
            TransportKind::InProcess => self
                .server
                .lock()
                .expect("server lock")
                .handle_frame(request),
            TransportKind::ByteStream => {
                let bytes = encode_frame(&request);
                let decoded = decode_frame(&bytes)?;
                let response = self
                    .server
                    .lock()
                    .expect("server lock")
                    .handle_frame(decoded);
                decode_frame(&encode_frame(&response))?
            }
        };
        if response.id != id {
            return Err(ToolError::Transport(format!(
                "response id {} does not echo request id {id}",
                response.id
            )));
        }
        Ok(response)
    }

    /// Shared access to the underlying sim server (request log
    /// assertions).
    pub fn server(&self) -> Arc<Mutex<SimServer>> {
        self.server.clone()
    }
}
