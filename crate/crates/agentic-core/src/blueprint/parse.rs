//! Strict blueprint document parsing and canonical serialization.

use super::schema::value_type_name;
use super::{
    ActionSpaceConfig, Blueprint, BlueprintError, ConstraintConfig, ExecutionPolicyConfig,
    InterfaceContract, LocalAgentBinding, Metadata, SchemaNode, SemVer, ToolChoice,
    ToolServerBinding,
};
use serde_json::{Map, Value};
use std::collections::BTreeSet;

/// Serialization format for blueprint documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocFormat {
    Yaml,
    Json,
}

impl DocFormat {
    /// Pick a format from a file extension chain (`.agf.yaml` / `.agf.json`).
    pub fn from_path(path: &std::path::Path) -> DocFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => DocFormat::Json,
            _ => DocFormat::Yaml,
        }
    }
}

/// Parse a blueprint from a UTF-8 document. YAML is a superset of JSON, so
/// the default frontend handles both formats.
///
/// Parsing is strict: unknown keys anywhere in the document are rejected,
/// and all declared invariants are checked. Errors carry a path to the
/// offending node.
pub fn parse_blueprint(text: &str) -> Result<Blueprint, BlueprintError> {
    parse_blueprint_as(text, DocFormat::Yaml)
}

/// Parse with a forced input format: `Json` requires strict JSON, `Yaml`
/// accepts YAML and its JSON subset.
pub fn parse_blueprint_as(text: &str, format: DocFormat) -> Result<Blueprint, BlueprintError> {
    if text.trim().is_empty() {
        return Err(BlueprintError::Syntax {
            path: "$".into(),
            message: "empty document".into(),
        });
    }
    let doc: Value = match format {
        DocFormat::Yaml => serde_yaml::from_str(text).map_err(|e| BlueprintError::Syntax {
            path: e
                .location()
                .map(|l| format!("line {} column {}", l.line(), l.column()))
                .unwrap_or_else(|| "$".into()),
            message: e.to_string(),
        })?,
        DocFormat::Json => serde_json::from_str(text).map_err(|e| BlueprintError::Syntax {
            path: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?,
    };
    from_document(&doc)
}

/// Serialize a blueprint to its canonical YAML document.
///
/// The output re-parses to a field-for-field equal blueprint.
pub fn serialize_blueprint(bp: &Blueprint) -> String {
    serialize_blueprint_as(bp, DocFormat::Yaml)
}

/// Serialize a blueprint in the requested format.
pub fn serialize_blueprint_as(bp: &Blueprint, format: DocFormat) -> String {
    let doc = to_document(bp);
    match format {
        DocFormat::Yaml => serde_yaml::to_string(&doc).expect("blueprint document serializes"),
        DocFormat::Json => {
            let mut s = serde_json::to_string_pretty(&doc).expect("blueprint document serializes");
            s.push('\n');
            s
        }
    }
}

const TOP_KEYS: &[&str] = &[
    "metadata",
    "interface",
    "constraints",
    "action_space",
    "execution_policy",
];

/// Build a blueprint from a parsed document tree.
pub fn from_document(doc: &Value) -> Result<Blueprint, BlueprintError> {
    let root = expect_map(doc, "$")?;
    reject_unknown(root, TOP_KEYS, "$")?;

    let metadata = parse_metadata(require(root, "metadata", "$")?)?;
    let interface = parse_interface(require(root, "interface", "$")?)?;
    let constraints = match root.get("constraints") {
        Some(v) => parse_constraints(v)?,
        None => ConstraintConfig::default(),
    };
    let action_space = match root.get("action_space") {
        Some(v) => parse_action_space(v)?,
        None => ActionSpaceConfig::default(),
    };
    let execution_policy = parse_execution_policy(require(root, "execution_policy", "$")?)?;

    Ok(Blueprint {
        metadata,
        interface,
        constraints,
        action_space,
        execution_policy,
    })
}

fn parse_metadata(v: &Value) -> Result<Metadata, BlueprintError> {
    let path = "$.metadata";
    let map = expect_map(v, path)?;
    reject_unknown(map, &["id", "name", "version", "authors", "tags"], path)?;

    let id = str_field(map, "id", path)?;
    if id.is_empty() || !id.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
    {
        return Err(BlueprintError::schema(
            format!("{path}.id"),
            "identifier matching [a-z0-9_]+",
            format!("`{id}`"),
        ));
    }
    let name = str_field(map, "name", path)?;
    let version_str = str_field(map, "version", path)?;
    let version = SemVer::parse(&version_str).ok_or_else(|| {
        BlueprintError::schema(
            format!("{path}.version"),
            "semantic version major.minor.patch",
            format!("`{version_str}`"),
        )
    })?;
    let authors = opt_string_list(map, "authors", path)?;
    let tags = opt_string_list(map, "tags", path)?;

    Ok(Metadata {
        id,
        name,
        version,
        authors,
        tags,
    })
}

fn parse_interface(v: &Value) -> Result<InterfaceContract, BlueprintError> {
    let path = "$.interface";
    let map = expect_map(v, path)?;
    reject_unknown(map, &["input", "output"], path)?;
    let input_schema = parse_schema_slot(require(map, "input", path)?, &format!("{path}.input"))?;
    let output_schema =
        parse_schema_slot(require(map, "output", path)?, &format!("{path}.output"))?;
    Ok(InterfaceContract {
        input_schema,
        output_schema,
    })
}

fn parse_schema_slot(v: &Value, path: &str) -> Result<SchemaNode, BlueprintError> {
    let map = expect_map(v, path)?;
    reject_unknown(map, &["inline_schema"], path)?;
    let schema = require(map, "inline_schema", path)?;
    SchemaNode::from_value(schema, &format!("{path}.inline_schema"))
}

fn parse_constraints(v: &Value) -> Result<ConstraintConfig, BlueprintError> {
    let path = "$.constraints";
    let map = expect_map(v, path)?;
    reject_unknown(map, &["tighten_only_invariant", "budget"], path)?;
    let tighten_only_invariant = match map.get("tighten_only_invariant") {
        Some(v) => expect_bool(v, &format!("{path}.tighten_only_invariant"))?,
        None => false,
    };
    let budget_max_tokens = match map.get("budget") {
        Some(b) => {
            let bpath = format!("{path}.budget");
            let bmap = expect_map(b, &bpath)?;
            reject_unknown(bmap, &["max_token_usage"], &bpath)?;
            let v = require(bmap, "max_token_usage", &bpath)?;
            let tokens = expect_u64(v, &format!("{bpath}.max_token_usage"))?;
            if tokens == 0 {
                return Err(BlueprintError::schema(
                    format!("{bpath}.max_token_usage"),
                    "positive token count",
                    "0",
                ));
            }
            Some(tokens)
        }
        None => None,
    };
    Ok(ConstraintConfig {
        tighten_only_invariant,
        budget_max_tokens,
    })
}

fn parse_action_space(v: &Value) -> Result<ActionSpaceConfig, BlueprintError> {
    let path = "$.action_space";
    let map = expect_map(v, path)?;
    reject_unknown(map, &["mcp_servers", "local_agents"], path)?;

    let mut mcp_servers = Vec::new();
    if let Some(list) = map.get("mcp_servers") {
        let list = expect_list(list, &format!("{path}.mcp_servers"))?;
        for (i, entry) in list.iter().enumerate() {
            let epath = format!("{path}.mcp_servers[{i}]");
            let emap = expect_map(entry, &epath)?;
            reject_unknown(emap, &["alias", "url", "allow_tools"], &epath)?;
            let alias = str_field(emap, "alias", &epath)?;
            let url = str_field(emap, "url", &epath)?;
            let allow_tools = string_list(require(emap, "allow_tools", &epath)?, &format!("{epath}.allow_tools"))?;
            mcp_servers.push(ToolServerBinding {
                alias,
                url,
                allow_tools,
            });
        }
    }

    let mut local_agents = Vec::new();
    if let Some(list) = map.get("local_agents") {
        let list = expect_list(list, &format!("{path}.local_agents"))?;
        for (i, entry) in list.iter().enumerate() {
            let epath = format!("{path}.local_agents[{i}]");
            let emap = expect_map(entry, &epath)?;
            reject_unknown(emap, &["alias", "source"], &epath)?;
            local_agents.push(LocalAgentBinding {
                alias: str_field(emap, "alias", &epath)?,
                source: str_field(emap, "source", &epath)?,
            });
        }
    }

    // Aliases share one namespace across servers and local agents.
    let mut seen = BTreeSet::new();
    for (i, alias) in mcp_servers
        .iter()
        .map(|s| &s.alias)
        .chain(local_agents.iter().map(|l| &l.alias))
        .enumerate()
    {
        if !seen.insert(alias.clone()) {
            return Err(BlueprintError::schema(
                format!("{path} (entry {i})"),
                "unique alias",
                format!("duplicate alias `{alias}`"),
            ));
        }
    }

    Ok(ActionSpaceConfig {
        mcp_servers,
        local_agents,
    })
}

fn parse_execution_policy(v: &Value) -> Result<ExecutionPolicyConfig, BlueprintError> {
    let path = "$.execution_policy";
    let map = expect_map(v, path)?;
    reject_unknown(map, &["id", "config"], path)?;
    let policy_id = str_field(map, "id", path)?;

    let mut policy = ExecutionPolicyConfig {
        policy_id,
        ..ExecutionPolicyConfig::default()
    };

    if let Some(cfg) = map.get("config") {
        let cpath = format!("{path}.config");
        let cmap = expect_map(cfg, &cpath)?;
        reject_unknown(
            cmap,
            &[
                "provider",
                "model",
                "instructions",
                "max_steps",
                "temperature",
                "tool_choice",
            ],
            &cpath,
        )?;
        if cmap.contains_key("provider") {
            policy.provider = str_field(cmap, "provider", &cpath)?;
        }
        if cmap.contains_key("model") {
            policy.model = str_field(cmap, "model", &cpath)?;
        }
        if cmap.contains_key("instructions") {
            policy.instructions = str_field(cmap, "instructions", &cpath)?;
        }
        if let Some(v) = cmap.get("max_steps") {
            let steps = expect_u64(v, &format!("{cpath}.max_steps"))?;
            if steps == 0 || steps > u32::MAX as u64 {
                return Err(BlueprintError::schema(
                    format!("{cpath}.max_steps"),
                    "positive step count",
                    steps.to_string(),
                ));
            }
            policy.max_steps = steps as u32;
        }
        if let Some(v) = cmap.get("temperature") {
            let t = expect_f64(v, &format!("{cpath}.temperature"))?;
            if !(0.0..=2.0).contains(&t) {
                return Err(BlueprintError::schema(
                    format!("{cpath}.temperature"),
                    "real in [0, 2]",
                    t.to_string(),
                ));
            }
            policy.temperature = t;
        }
        if let Some(v) = cmap.get("tool_choice") {
            let tpath = format!("{cpath}.tool_choice");
            let s = expect_str(v, &tpath)?;
            policy.tool_choice = ToolChoice::parse(&s).ok_or_else(|| {
                BlueprintError::schema(&tpath, "one of auto, required, none", format!("`{s}`"))
            })?;
        }
    }

    Ok(policy)
}

/// Canonical document tree for a blueprint. All sections are emitted
/// explicitly so serialized blueprints are self-describing.
pub fn to_document(bp: &Blueprint) -> Value {
    let mut root = Map::new();

    let mut metadata = Map::new();
    metadata.insert("id".into(), bp.metadata.id.clone().into());
    metadata.insert("name".into(), bp.metadata.name.clone().into());
    metadata.insert("version".into(), bp.metadata.version.to_string().into());
    metadata.insert("authors".into(), string_values(&bp.metadata.authors));
    metadata.insert("tags".into(), string_values(&bp.metadata.tags));
    root.insert("metadata".into(), Value::Object(metadata));

    let mut interface = Map::new();
    let mut input = Map::new();
    input.insert("inline_schema".into(), bp.interface.input_schema.to_value());
    let mut output = Map::new();
    output.insert(
        "inline_schema".into(),
        bp.interface.output_schema.to_value(),
    );
    interface.insert("input".into(), Value::Object(input));
    interface.insert("output".into(), Value::Object(output));
    root.insert("interface".into(), Value::Object(interface));

    let mut constraints = Map::new();
    constraints.insert(
        "tighten_only_invariant".into(),
        bp.constraints.tighten_only_invariant.into(),
    );
    if let Some(tokens) = bp.constraints.budget_max_tokens {
        let mut budget = Map::new();
        budget.insert("max_token_usage".into(), tokens.into());
        constraints.insert("budget".into(), Value::Object(budget));
    }
    root.insert("constraints".into(), Value::Object(constraints));

    let mut action_space = Map::new();
    let servers: Vec<Value> = bp
        .action_space
        .mcp_servers
        .iter()
        .map(|s| {
            let mut m = Map::new();
            m.insert("alias".into(), s.alias.clone().into());
            m.insert("url".into(), s.url.clone().into());
            m.insert("allow_tools".into(), string_values(&s.allow_tools));
            Value::Object(m)
        })
        .collect();
    let locals: Vec<Value> = bp
        .action_space
        .local_agents
        .iter()
        .map(|l| {
            let mut m = Map::new();
            m.insert("alias".into(), l.alias.clone().into());
            m.insert("source".into(), l.source.clone().into());
            Value::Object(m)
        })
        .collect();
    action_space.insert("mcp_servers".into(), Value::Array(servers));
    action_space.insert("local_agents".into(), Value::Array(locals));
    root.insert("action_space".into(), Value::Object(action_space));

    let mut config = Map::new();
    config.insert("provider".into(), bp.execution_policy.provider.clone().into());
    config.insert("model".into(), bp.execution_policy.model.clone().into());
    config.insert(
        "instructions".into(),
        bp.execution_policy.instructions.clone().into(),
    );
    config.insert("max_steps".into(), bp.execution_policy.max_steps.into());
    config.insert(
        "temperature".into(),
        serde_json::Number::from_f64(bp.execution_policy.temperature)
            .expect("temperature is finite")
            .into(),
    );
    config.insert(
        "tool_choice".into(),
        bp.execution_policy.tool_choice.as_str().into(),
    );
    let mut execution_policy = Map::new();
    execution_policy.insert("id".into(), bp.execution_policy.policy_id.clone().into());
    execution_policy.insert("config".into(), Value::Object(config));
    root.insert("execution_policy".into(), Value::Object(execution_policy));

    Value::Object(root)
}

fn string_values(xs: &[String]) -> Value {
    Value::Array(xs.iter().cloned().map(Value::String).collect())
}

fn expect_map<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, BlueprintError> {
    v.as_object()
        .ok_or_else(|| BlueprintError::schema(path, "mapping", value_type_name(v)))
}

fn expect_list<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>, BlueprintError> {
    v.as_array()
        .ok_or_else(|| BlueprintError::schema(path, "list", value_type_name(v)))
}

fn expect_str(v: &Value, path: &str) -> Result<String, BlueprintError> {
    v.as_str()
        .map(|s| s.to_string())
        .ok_or_else(|| BlueprintError::schema(path, "string", value_type_name(v)))
}

fn expect_bool(v: &Value, path: &str) -> Result<bool, BlueprintError> {
    v.as_bool()
        .ok_or_else(|| BlueprintError::schema(path, "boolean", value_type_name(v)))
}

fn expect_u64(v: &Value, path: &str) -> Result<u64, BlueprintError> {
    v.as_u64().ok_or_else(|| {
        BlueprintError::schema(
            path,
            "nonnegative integer",
            if v.is_number() {
                "non-integer number"
            } else {
                value_type_name(v)
            },
        )
    })
}

fn expect_f64(v: &Value, path: &str) -> Result<f64, BlueprintError> {
    v.as_f64()
        .ok_or_else(|| BlueprintError::schema(path, "number", value_type_name(v)))
}

fn require<'a>(
    map: &'a Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<&'a Value, BlueprintError> {
    map.get(key)
        .ok_or_else(|| BlueprintError::schema(format!("{path}.{key}"), "required key", "absent"))
}

fn str_field(map: &Map<String, Value>, key: &str, path: &str) -> Result<String, BlueprintError> {
    expect_str(require(map, key, path)?, &format!("{path}.{key}"))
}

fn string_list(v: &Value, path: &str) -> Result<Vec<String>, BlueprintError> {
    let list = expect_list(v, path)?;
    list.iter()
        .enumerate()
        .map(|(i, item)| expect_str(item, &format!("{path}[{i}]")))
        .collect()
}

fn opt_string_list(
    map: &Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<Vec<String>, BlueprintError> {
    match map.get(key) {
        Some(v) => string_list(v, &format!("{path}.{key}")),
        None => Ok(Vec::new()),
    }
}

fn reject_unknown(
    map: &Map<String, Value>,
    allowed: &[&str],
    path: &str,
) -> Result<(), BlueprintError> {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(BlueprintError::schema(
                format!("{path}.{key}"),
                format!("one of {}", allowed.join(", ")),
                format!("unknown key `{key}`"),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str = include_str!("../../../../fixtures/code_reviewer.agf.yaml");

    #[test]
    fn listing_parses_to_expected_fields() {
        let bp = parse_blueprint(LISTING).unwrap();
        assert_eq!(bp.metadata.id, "code_reviewer");
        assert_eq!(bp.metadata.name, "Code Reviewer");
        assert_eq!(bp.metadata.version.to_string(), "1.2.0");
        assert_eq!(bp.metadata.authors, vec!["eng-productivity@org.com"]);
        assert_eq!(bp.metadata.tags, vec!["code-quality", "automated"]);
        assert_eq!(bp.constraints.budget_max_tokens, Some(50_000));
        assert!(bp.constraints.tighten_only_invariant);
        assert_eq!(bp.execution_policy.max_steps, 10);
        assert_eq!(bp.execution_policy.temperature, 0.3);
        assert_eq!(bp.execution_policy.policy_id, "x-runtime.react");
        assert_eq!(bp.execution_policy.tool_choice, ToolChoice::Auto);
        let github = bp.server("github").unwrap();
        assert_eq!(github.url, "https://mcp-github.com");
        assert_eq!(github.allow_tools, vec!["get_pr_diff", "post_review_comment"]);
        assert_eq!(bp.action_space.local_agents.len(), 1);
        assert_eq!(bp.action_space.local_agents[0].source, "./style-checker.agf.yaml");
    }

    #[test]
    fn empty_document_is_a_syntax_error() {
        assert!(matches!(
            parse_blueprint(""),
            Err(BlueprintError::Syntax { .. })
        ));
        assert!(matches!(
            parse_blueprint("   \n"),
            Err(BlueprintError::Syntax { .. })
        ));
    }

    #[test]
    fn two_component_version_rejected_at_path() {
        let doc = LISTING.replace("version: 1.2.0", "version: \"1.2\"");
        let err = parse_blueprint(&doc).unwrap_err();
        assert_eq!(err.path(), "$.metadata.version");
    }

    #[test]
    fn prerelease_version_rejected() {
        let doc = LISTING.replace("version: 1.2.0", "version: 1.2.0-rc1");
        assert!(parse_blueprint(&doc).is_err());
    }

    #[test]
    fn unknown_top_level_key_rejected() {
        let doc = format!("{LISTING}\nextra_section: {{}}\n");
        let err = parse_blueprint(&doc).unwrap_err();
        assert_eq!(err.path(), "$.extra_section");
    }

    #[test]
    fn duplicate_alias_rejected() {
        let doc = LISTING.replace("alias: style_checker", "alias: github");
        let err = parse_blueprint(&doc).unwrap_err();
        assert!(err.to_string().contains("duplicate alias"));
    }

    #[test]
    fn zero_budget_rejected() {
        let doc = LISTING.replace("max_token_usage: 50000", "max_token_usage: 0");
        let err = parse_blueprint(&doc).unwrap_err();
        assert_eq!(err.path(), "$.constraints.budget.max_token_usage");
    }

    #[test]
    fn listing_roundtrips() {
        let bp = parse_blueprint(LISTING).unwrap();
        let text = serialize_blueprint(&bp);
        let again = parse_blueprint(&text).unwrap();
        assert_eq!(bp, again);
    }

    #[test]
    fn json_form_parses_and_roundtrips() {
        let bp = parse_blueprint(LISTING).unwrap();
        let json = serialize_blueprint_as(&bp, DocFormat::Json);
        let again = parse_blueprint(&json).unwrap();
        assert_eq!(bp, again);
    }

    #[test]
    fn serialization_is_a_fixpoint_after_one_pass() {
        let bp = parse_blueprint(LISTING).unwrap();
        let once = serialize_blueprint(&bp);
        let twice = serialize_blueprint(&parse_blueprint(&once).unwrap());
        assert_eq!(once, twice);
    }

    #[test]
    fn forced_json_format_rejects_yaml_syntax() {
        let bp = parse_blueprint(LISTING).unwrap();
        let json_text = serialize_blueprint_as(&bp, DocFormat::Json);
        assert_eq!(parse_blueprint_as(&json_text, DocFormat::Json).unwrap(), bp);
        assert!(matches!(
            parse_blueprint_as(LISTING, DocFormat::Json),
            Err(BlueprintError::Syntax { .. })
        ));
    }

    #[test]
    fn format_detection_by_extension() {
        use std::path::Path;
        assert_eq!(DocFormat::from_path(Path::new("a.agf.json")), DocFormat::Json);
        assert_eq!(DocFormat::from_path(Path::new("a.agf.yaml")), DocFormat::Yaml);
        assert_eq!(DocFormat::from_path(Path::new("a.agf.yml")), DocFormat::Yaml);
    }

    #[test]
    fn semver_rules() {
        assert!(SemVer::parse("1.2.0").is_some());
        assert!(SemVer::parse("0.0.0").is_some());
        assert!(SemVer::parse("1.2").is_none());
        assert!(SemVer::parse("1.2.0.4").is_none());
        assert!(SemVer::parse("1.2.x").is_none());
        assert!(SemVer::parse("1.2.0-rc1").is_none());
        assert!(SemVer::parse("").is_none());
    }
}
