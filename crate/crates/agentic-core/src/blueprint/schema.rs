//! Inline schema trees and payload validation.

use super::BlueprintError;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;

/// The five value types an inline schema may declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaType {
    Object,
    String,
    Number,
    Boolean,
    Array,
}

impl SchemaType {
    pub fn name(&self) -> &'static str {
        match self {
            SchemaType::Object => "object",
            SchemaType::String => "string",
            SchemaType::Number => "number",
            SchemaType::Boolean => "boolean",
            SchemaType::Array => "array",
        }
    }

    fn parse(s: &str) -> Option<SchemaType> {
        match s {
            "object" => Some(SchemaType::Object),
            "string" => Some(SchemaType::String),
            "number" => Some(SchemaType::Number),
            "boolean" => Some(SchemaType::Boolean),
            "array" => Some(SchemaType::Array),
            _ => None,
        }
    }
}

/// One node of an inline schema tree.
///
/// Supports the shape visible in blueprint documents: a `type` tag, object
/// `properties` (with an optional `required` name list), and array `items`.
/// No references or combinators.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaNode {
    pub ty: SchemaType,
    /// Declared properties; meaningful for `object` only.
    pub properties: BTreeMap<String, SchemaNode>,
    /// Property names that must be present; each must be declared.
    pub required: Vec<String>,
    /// Element schema; meaningful for `array` only.
    pub items: Option<Box<SchemaNode>>,
}

impl SchemaNode {
    /// Leaf schema of the given type.
    pub fn of(ty: SchemaType) -> SchemaNode {
        SchemaNode {
            ty,
            properties: BTreeMap::new(),
            required: Vec::new(),
            items: None,
        }
    }

    /// Object schema with the given properties, none required.
    pub fn object(props: impl IntoIterator<Item = (String, SchemaNode)>) -> SchemaNode {
        SchemaNode {
            ty: SchemaType::Object,
            properties: props.into_iter().collect(),
            required: Vec::new(),
            items: None,
        }
    }

    /// Parse a schema node from a document value, rejecting unknown keys.
    pub fn from_value(v: &Value, path: &str) -> Result<SchemaNode, BlueprintError> {
        let map = v.as_object().ok_or_else(|| {
            BlueprintError::schema(path, "schema mapping", value_type_name(v))
        })?;
        for key in map.keys() {
            if !matches!(key.as_str(), "type" | "properties" | "required" | "items") {
                return Err(BlueprintError::schema(
                    format!("{path}.{key}"),
                    "one of type, properties, required, items",
                    format!("unknown key `{key}`"),
                ));
            }
        }
        let ty_val = map
            .get("type")
            .ok_or_else(|| BlueprintError::schema(format!("{path}.type"), "type tag", "absent"))?;
        let ty_str = ty_val.as_str().ok_or_else(|| {
            BlueprintError::schema(format!("{path}.type"), "string", value_type_name(ty_val))
        })?;
        let ty = SchemaType::parse(ty_str).ok_or_else(|| {
            BlueprintError::schema(
                format!("{path}.type"),
                "one of object, string, number, boolean, array",
                format!("`{ty_str}`"),
            )
        })?;

        let mut properties = BTreeMap::new();
        if let Some(props) = map.get("properties") {
            if ty != SchemaType::Object {
                return Err(BlueprintError::schema(
                    format!("{path}.properties"),
                    "properties only on object schemas",
                    ty.name(),
                ));
            }
            let props = props.as_object().ok_or_else(|| {
                BlueprintError::schema(
                    format!("{path}.properties"),
                    "mapping",
                    value_type_name(props),
                )
            })?;
            for (name, sub) in props {
                let sub_path = format!("{path}.properties.{name}");
                properties.insert(name.clone(), SchemaNode::from_value(sub, &sub_path)?);
            }
        }

        let mut required = Vec::new();
        if let Some(req) = map.get("required") {
            let req = req.as_array().ok_or_else(|| {
                BlueprintError::schema(format!("{path}.required"), "list", value_type_name(req))
            })?;
            for (i, name) in req.iter().enumerate() {
                let name = name.as_str().ok_or_else(|| {
                    BlueprintError::schema(
                        format!("{path}.required[{i}]"),
                        "string",
                        value_type_name(name),
                    )
                })?;
                if !properties.contains_key(name) {
                    return Err(BlueprintError::schema(
                        format!("{path}.required[{i}]"),
                        "a declared property name",
                        format!("`{name}`"),
                    ));
                }
                required.push(name.to_string());
            }
        }

        let items = match map.get("items") {
            Some(sub) => {
                if ty != SchemaType::Array {
                    return Err(BlueprintError::schema(
                        format!("{path}.items"),
                        "items only on array schemas",
                        ty.name(),
                    ));
                }
                Some(Box::new(SchemaNode::from_value(
                    sub,
                    &format!("{path}.items"),
                )?))
            }
            None => None,
        };

        Ok(SchemaNode {
            ty,
            properties,
            required,
            items,
        })
    }

    /// Serialize back to the document shape. Empty sections are omitted.
    pub fn to_value(&self) -> Value {
        let mut map = Map::new();
        map.insert("type".into(), Value::String(self.ty.name().into()));
        if !self.properties.is_empty() {
            let props: Map<String, Value> = self
                .properties
                .iter()
                .map(|(k, v)| (k.clone(), v.to_value()))
                .collect();
            map.insert("properties".into(), Value::Object(props));
        }
        if !self.required.is_empty() {
            map.insert(
                "required".into(),
                Value::Array(self.required.iter().cloned().map(Value::String).collect()),
            );
        }
        if let Some(items) = &self.items {
            map.insert("items".into(), items.to_value());
        }
        Value::Object(map)
    }
}

impl Serialize for SchemaNode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SchemaNode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        SchemaNode::from_value(&value, "$").map_err(serde::de::Error::custom)
    }
}

/// One schema violation: what was expected at a path and what was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub expected: String,
    pub found: String,
}

/// Outcome of validating a payload against a schema. Never an error: all
/// outcomes are encoded in the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub status: ReportStatus,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Conformant,
    Violations,
}

impl ValidationReport {
    pub fn conformant() -> ValidationReport {
        ValidationReport {
            status: ReportStatus::Conformant,
            violations: Vec::new(),
        }
    }

    pub fn violations(violations: Vec<Violation>) -> ValidationReport {
        debug_assert!(!violations.is_empty());
        ValidationReport {
            status: ReportStatus::Violations,
            violations,
        }
    }

    pub fn is_conformant(&self) -> bool {
        matches!(self.status, ReportStatus::Conformant)
    }
}

/// Validate a structured value against a schema node.
///
/// Extra (undeclared) object properties are permitted; declared ones must
/// type-check and `required` ones must be present.
pub fn validate_payload(schema: &SchemaNode, value: &Value) -> ValidationReport {
    let mut violations = Vec::new();
    check(schema, value, "$", &mut violations);
    if violations.is_empty() {
        ValidationReport::conformant()
    } else {
        ValidationReport::violations(violations)
    }
}

fn check(schema: &SchemaNode, value: &Value, path: &str, out: &mut Vec<Violation>) {
    let matches_ty = match schema.ty {
        SchemaType::Object => value.is_object(),
        SchemaType::String => value.is_string(),
        SchemaType::Number => value.is_number(),
        SchemaType::Boolean => value.is_boolean(),
        SchemaType::Array => value.is_array(),
    };
    if !matches_ty {
        out.push(Violation {
            path: path.to_string(),
            expected: schema.ty.name().to_string(),
            found: value_type_name(value).to_string(),
        });
        return;
    }
    match schema.ty {
        SchemaType::Object => {
            let obj = value.as_object().expect("checked object");
            for name in &schema.required {
                if !obj.contains_key(name) {
                    out.push(Violation {
                        path: format!("{path}.{name}"),
                        expected: schema.properties[name].ty.name().to_string(),
                        found: "absent".to_string(),
                    });
                }
            }
            for (name, sub_schema) in &schema.properties {
                if let Some(sub_value) = obj.get(name) {
                    check(sub_schema, sub_value, &format!("{path}.{name}"), out);
                }
            }
        }
        SchemaType::Array => {
            if let Some(item_schema) = &schema.items {
                for (i, item) in value.as_array().expect("checked array").iter().enumerate() {
                    check(item_schema, item, &format!("{path}[{i}]"), out);
                }
            }
        }
        _ => {}
    }
}

pub(crate) fn value_type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn listing_output_schema() -> SchemaNode {
        SchemaNode::from_value(
            &json!({
                "type": "object",
                "properties": {
                    "code_ptr_url": {"type": "string"},
                    "review": {"type": "string"}
                }
            }),
            "$",
        )
        .unwrap()
    }

    #[test]
    fn conformant_structured_output() {
        let schema = listing_output_schema();
        let value = json!({
            "code_ptr_url": "org/repo/code.py#L1-L10",
            "review": "Potential null dereference..."
        });
        assert!(validate_payload(&schema, &value).is_conformant());
    }

    #[test]
    fn bare_string_violates_object_schema() {
        let schema = listing_output_schema();
        let report = validate_payload(&schema, &json!("The code looks fine to me!"));
        assert!(!report.is_conformant());
        assert_eq!(report.violations[0].path, "$");
        assert_eq!(report.violations[0].expected, "object");
        assert_eq!(report.violations[0].found, "string");
    }

    #[test]
    fn empty_schema_accepts_empty_object() {
        let schema = SchemaNode::object([]);
        assert!(validate_payload(&schema, &json!({})).is_conformant());
    }

    #[test]
    fn required_property_absence_is_reported() {
        let mut schema = listing_output_schema();
        schema.required = vec!["review".into()];
        let report = validate_payload(&schema, &json!({"code_ptr_url": "x"}));
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].path, "$.review");
        assert_eq!(report.violations[0].found, "absent");
    }

    #[test]
    fn nested_property_path_in_violation() {
        let schema = SchemaNode::from_value(
            &json!({"type": "object", "properties": {"a": {"type": "array", "items": {"type": "number"}}}}),
            "$",
        )
        .unwrap();
        let report = validate_payload(&schema, &json!({"a": [1, "two", 3]}));
        assert_eq!(report.violations[0].path, "$.a[1]");
        assert_eq!(report.violations[0].expected, "number");
        assert_eq!(report.violations[0].found, "string");
    }

    #[test]
    fn unknown_schema_key_rejected() {
        let err = SchemaNode::from_value(&json!({"type": "object", "$ref": "x"}), "$").unwrap_err();
        assert_eq!(err.path(), "$.$ref");
    }

    #[test]
    fn schema_roundtrip() {
        let schema = SchemaNode::from_value(
            &json!({
                "type": "object",
                "properties": {"xs": {"type": "array", "items": {"type": "boolean"}}},
                "required": ["xs"]
            }),
            "$",
        )
        .unwrap();
        let back = SchemaNode::from_value(&schema.to_value(), "$").unwrap();
        assert_eq!(schema, back);
    }
}
