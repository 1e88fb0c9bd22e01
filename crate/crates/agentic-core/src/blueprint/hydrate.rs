//! Recursive hydration of local-agent bindings and tighten-only composition.

use super::{parse_blueprint, Blueprint, BlueprintError};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Default recursion limit for hydrating local-agent bindings.
pub const DEFAULT_HYDRATION_DEPTH: usize = 4;

/// Error raised while hydrating a blueprint tree.
#[derive(Debug, Error)]
pub enum HydrateError {
    #[error("local_agents cycle: {}", chain.join(" -> "))]
    Cycle { chain: Vec<String> },
    #[error("hydration depth limit {limit} exceeded at `{source_path}`")]
    DepthExceeded { limit: usize, source_path: String },
    #[error("cannot load `{source_path}`: {cause}")]
    Load { source_path: String, cause: String },
    #[error(transparent)]
    Parse(#[from] BlueprintError),
    #[error("tighten-only violation composing `{child}` under `{parent}`: {reason}")]
    TightenOnly {
        parent: String,
        child: String,
        reason: String,
    },
}

/// Resolves a local-agent `source` into a parsed blueprint plus a canonical
/// key used for cycle detection.
pub trait Loader {
    fn load(&self, base: &str, source: &str) -> Result<(Blueprint, String), HydrateError>;
}

/// Loads blueprints from the filesystem, resolving sources relative to the
/// referring file's directory.
pub struct FsLoader;

impl Loader for FsLoader {
    fn load(&self, base: &str, source: &str) -> Result<(Blueprint, String), HydrateError> {
        let base_dir = Path::new(base).parent().unwrap_or(Path::new("."));
        let path: PathBuf = base_dir.join(source);
        let canonical = path
            .canonicalize()
            .unwrap_or_else(|_| path.clone())
            .to_string_lossy()
            .into_owned();
        let text = std::fs::read_to_string(&path).map_err(|e| HydrateError::Load {
            source_path: source.to_string(),
            cause: e.to_string(),
        })?;
        Ok((parse_blueprint(&text)?, canonical))
    }
}

/// A blueprint together with its hydrated children, keyed by alias.
#[derive(Debug, Clone)]
pub struct HydratedBlueprint {
    pub blueprint: Blueprint,
    pub children: Vec<(String, HydratedBlueprint)>,
}

impl HydratedBlueprint {
    /// Total number of blueprints in the tree, root included.
    pub fn size(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|(_, c)| c.size())
            .sum::<usize>()
    }
}

/// Check that a child's effective constraints are a subset of the parent's.
///
/// Applies only when the parent declares `tighten_only_invariant`. The
/// child may not widen the token budget or bind servers/tools beyond the
/// parent's whitelist.
pub fn compose_check(parent: &Blueprint, child: &Blueprint) -> Result<(), HydrateError> {
    if !parent.constraints.tighten_only_invariant {
        return Ok(());
    }
    let fail = |reason: String| HydrateError::TightenOnly {
        parent: parent.metadata.id.clone(),
        child: child.metadata.id.clone(),
        reason,
    };

    match (
        parent.constraints.budget_max_tokens,
        child.constraints.budget_max_tokens,
    ) {
        (Some(p), Some(c)) if c > p => {
            return Err(fail(format!("child budget {c} exceeds parent budget {p}")))
        }
        (Some(p), None) => {
            return Err(fail(format!(
                "child has no budget while parent caps at {p}"
            )))
        }
        _ => {}
    }

    for server in &child.action_space.mcp_servers {
        match parent.server(&server.alias) {
            None => {
                return Err(fail(format!(
                    "child binds server `{}` not bound by parent",
                    server.alias
                )))
            }
            Some(parent_server) => {
                for tool in &server.allow_tools {
                    if !parent_server.allow_tools.contains(tool) {
                        return Err(fail(format!(
                            "child allows tool `{tool}` on `{}` beyond parent whitelist",
                            server.alias
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Hydrate a blueprint's local-agent bindings into a tree.
///
/// `root_key` is the canonical identity of the root document (its path for
/// file-backed blueprints). Cycles and over-deep nesting are rejected;
/// tighten-only composition is checked on every parent/child edge.
pub fn hydrate(
    root: &Blueprint,
    root_key: &str,
    loader: &dyn Loader,
    max_depth: usize,
) -> Result<HydratedBlueprint, HydrateError> {
    let mut chain = vec![root_key.to_string()];
    hydrate_inner(root, root_key, loader, max_depth, &mut chain)
}

fn hydrate_inner(
    bp: &Blueprint,
    key: &str,
    loader: &dyn Loader,
    depth_left: usize,
    chain: &mut Vec<String>,
) -> Result<HydratedBlueprint, HydrateError> {
    let mut children = Vec::new();
    for binding in &bp.action_space.local_agents {
        if depth_left == 0 {
            return Err(HydrateError::DepthExceeded {
                limit: DEFAULT_HYDRATION_DEPTH,
                source_path: binding.source.clone(),
            });
        }
        let (child, child_key) = loader.load(key, &binding.source)?;
        if chain.contains(&child_key) {
            let mut cycle = chain.clone();
            cycle.push(child_key);
            return Err(HydrateError::Cycle { chain: cycle });
        }
        compose_check(bp, &child)?;
        chain.push(child_key.clone());
        let hydrated = hydrate_inner(&child, &child_key, loader, depth_left - 1, chain)?;
        chain.pop();
        children.push((binding.alias.clone(), hydrated));
    }
    Ok(HydratedBlueprint {
        blueprint: bp.clone(),
        children,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    struct MapLoader(BTreeMap<String, Blueprint>);

    impl Loader for MapLoader {
        fn load(&self, _base: &str, source: &str) -> Result<(Blueprint, String), HydrateError> {
            self.0
                .get(source)
                .map(|bp| (bp.clone(), source.to_string()))
                .ok_or_else(|| HydrateError::Load {
                    source_path: source.to_string(),
                    cause: "not found".to_string(),
                })
        }
    }

    fn minimal(id: &str, budget: Option<u64>, tighten: bool) -> Blueprint {
        let text = format!(
            r#"
metadata: {{ id: {id}, name: T, version: 0.1.0 }}
interface:
  input: {{ inline_schema: {{ type: object }} }}
  output: {{ inline_schema: {{ type: object }} }}
constraints:
  tighten_only_invariant: {tighten}
{budget_block}
execution_policy: {{ id: loop }}
"#,
            budget_block = match budget {
                Some(b) => format!("  budget: {{ max_token_usage: {b} }}"),
                None => String::new(),
            }
        );
        parse_blueprint(&text).unwrap()
    }

    fn with_child(mut bp: Blueprint, alias: &str, source: &str) -> Blueprint {
        bp.action_space.local_agents.push(crate::blueprint::LocalAgentBinding {
            alias: alias.to_string(),
            source: source.to_string(),
        });
        bp
    }

    #[test]
    fn child_budget_over_parent_fails_composition() {
        let parent = minimal("parent", Some(1000), true);
        let child = minimal("child", Some(2000), false);
        assert!(matches!(
            compose_check(&parent, &child),
            Err(HydrateError::TightenOnly { .. })
        ));
    }

    #[test]
    fn child_within_budget_composes() {
        let parent = minimal("parent", Some(1000), true);
        let child = minimal("child", Some(500), false);
        assert!(compose_check(&parent, &child).is_ok());
    }

    #[test]
    fn no_tighten_flag_means_no_check() {
        let parent = minimal("parent", Some(1000), false);
        let child = minimal("child", Some(9999), false);
        assert!(compose_check(&parent, &child).is_ok());
    }

    #[test]
    fn cycle_detected() {
        let a = with_child(minimal("a", None, false), "b", "b.agf.yaml");
        let b = with_child(minimal("b", None, false), "a", "a.agf.yaml");
        let loader = MapLoader(BTreeMap::from([
            ("a.agf.yaml".to_string(), a.clone()),
            ("b.agf.yaml".to_string(), b),
        ]));
        let err = hydrate(&a, "a.agf.yaml", &loader, DEFAULT_HYDRATION_DEPTH).unwrap_err();
        match err {
            HydrateError::Cycle { chain } => {
                assert_eq!(chain.first(), chain.last());
            }
            other => panic!("expected cycle, got {other}"),
        }
    }

    #[test]
    fn depth_limit_enforced() {
        // a -> b -> c -> d -> e is one level too deep for max_depth 3.
        let mut docs = BTreeMap::new();
        for (name, child) in [("a", Some("b")), ("b", Some("c")), ("c", Some("d")), ("d", Some("e")), ("e", None)] {
            let bp = match child {
                Some(c) => with_child(minimal(name, None, false), c, &format!("{c}.agf.yaml")),
                None => minimal(name, None, false),
            };
            docs.insert(format!("{name}.agf.yaml"), bp);
        }
        let loader = MapLoader(docs.clone());
        let root = docs["a.agf.yaml"].clone();
        assert!(matches!(
            hydrate(&root, "a.agf.yaml", &loader, 3),
            Err(HydrateError::DepthExceeded { .. })
        ));
        let tree = hydrate(&root, "a.agf.yaml", &loader, 4).unwrap();
        assert_eq!(tree.size(), 5);
    }
}
