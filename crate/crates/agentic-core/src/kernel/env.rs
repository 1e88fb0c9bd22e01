//! The simulation environment boundary.

use super::{ExternalAction, Observation, ObservationSource};
use serde_json::json;

/// What the environment hands back after an external action.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
}

/// A simulation environment. The latent world state lives behind this
/// trait and is only mutated through [`Environment::step`].
pub trait Environment {
    /// Reset to an initial state and emit the first observation.
    fn reset(&mut self, seed: u64) -> Observation;

    /// Apply an external action and advance the world state.
    fn step(&mut self, action: &ExternalAction) -> EnvStep;

    /// Hash of the current latent state. Used to assert that reasoning
    /// steps never mutate the world.
    fn state_hash(&self) -> u64;
}

/// Environment that replays a fixed script of responses, rewarding the
/// final step. Useful for loop-level tests.
#[derive(Debug, Clone)]
pub struct ScriptedEnvironment {
    /// (reward, terminal) per step; after the script ends every step is
    /// terminal with reward 0.
    script: Vec<(f64, bool)>,
    cursor: usize,
    tick: u64,
}

impl ScriptedEnvironment {
    pub fn new(script: Vec<(f64, bool)>) -> ScriptedEnvironment {
        ScriptedEnvironment {
            script,
            cursor: 0,
            tick: 0,
        }
    }

    /// A script that runs `n` neutral steps and then terminates with
    /// reward 1.
    pub fn terminal_after(n: usize) -> ScriptedEnvironment {
        let mut script = vec![(0.0, false); n.saturating_sub(1)];
        script.push((1.0, true));
        ScriptedEnvironment::new(script)
    }
}

impl Environment for ScriptedEnvironment {
    fn reset(&mut self, _seed: u64) -> Observation {
        self.cursor = 0;
        self.tick = 0;
        Observation {
            payload: json!({"task": "scripted"}),
            source: ObservationSource::User,
            timestamp: 0,
        }
    }

    fn step(&mut self, action: &ExternalAction) -> EnvStep {
        let (reward, terminal) = self
            .script
            .get(self.cursor)
            .copied()
            .unwrap_or((0.0, true));
        self.cursor += 1;
        self.tick += 1;
        EnvStep {
            observation: Observation {
                payload: json!({"echo": action.tool_name}),
                source: ObservationSource::Tool,
                timestamp: self.tick,
            },
            reward,
            terminal,
        }
    }

    fn state_hash(&self) -> u64 {
        (self.cursor as u64) << 32 | self.tick
    }
}
