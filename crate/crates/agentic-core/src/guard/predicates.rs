//! Predicates registered against blueprint-declared identifiers.

use super::SafetyPredicate;
use crate::blueprint::ToolServerBinding;
use crate::kernel::ExternalAction;

/// Whitelist predicate induced by a server binding: actions addressed to
/// this alias must name a whitelisted tool. Actions on other aliases are
/// outside this predicate's scope and pass.
pub fn allow_tools_predicate(binding: &ToolServerBinding) -> SafetyPredicate {
    let alias = binding.alias.clone();
    let allowed = binding.allow_tools.clone();
    SafetyPredicate::new(
        format!("allow_tools:{alias}"),
        format!("tools on `{alias}` restricted to {allowed:?}"),
        move |a: &ExternalAction| a.tool_alias != alias || allowed.contains(&a.tool_name),
    )
}

const READ_ONLY_PREFIXES: &[&str] = &["get_", "list_", "read_", "fetch_", "search_", "query_"];

/// Predicate admitting only read-shaped tool names on the simulated
/// servers.
pub fn read_only_predicate() -> SafetyPredicate {
    SafetyPredicate::new(
        "read_only_verbs",
        "tool name must start with a read-only verb prefix",
        |a: &ExternalAction| {
            READ_ONLY_PREFIXES
                .iter()
                .any(|p| a.tool_name.starts_with(p))
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guard::ConstraintManifold;
    use serde_json::json;

    fn listing_binding() -> ToolServerBinding {
        ToolServerBinding {
            alias: "github".into(),
            url: "https://mcp-github.com".into(),
            allow_tools: vec!["get_pr_diff".into(), "post_review_comment".into()],
        }
    }

    fn action(alias: &str, name: &str) -> ExternalAction {
        ExternalAction {
            tool_alias: alias.into(),
            tool_name: name.into(),
            arguments: json!({}),
            token_cost: 1,
        }
    }

    #[test]
    fn whitelisted_tool_passes() {
        let p = allow_tools_predicate(&listing_binding());
        assert!(p.check(&action("github", "get_pr_diff")));
    }

    #[test]
    fn delete_repo_is_blocked_by_the_whitelist() {
        let manifold = ConstraintManifold::new(vec![allow_tools_predicate(&listing_binding())]);
        let verdict = manifold.admissible(&action("github", "delete_repo"));
        assert!(!verdict.admitted);
    }

    #[test]
    fn other_alias_is_out_of_scope() {
        let p = allow_tools_predicate(&listing_binding());
        assert!(p.check(&action("slack", "post_message")));
    }

    #[test]
    fn empty_whitelist_blocks_everything_on_the_alias() {
        let binding = ToolServerBinding {
            alias: "srv".into(),
            url: "mem://srv".into(),
            allow_tools: vec![],
        };
        let p = allow_tools_predicate(&binding);
        assert!(!p.check(&action("srv", "get_anything")));
    }

    #[test]
    fn read_only_verbs() {
        let p = read_only_predicate();
        assert!(p.check(&action("srv", "get_pr_diff")));
        assert!(p.check(&action("srv", "list_files")));
        assert!(!p.check(&action("srv", "post_review_comment")));
        assert!(!p.check(&action("srv", "delete_repo")));
    }
}
