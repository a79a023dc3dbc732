//! A small validator for the subset of JSON Schema the shipped result
//! schemas use: type unions, required properties, nested properties, array
//! items and string enums. Output documents are checked against the
//! schemas in /schemas before they are written.

use serde_json::Value;

use crate::error::{Error, Result};

pub const RESULTS_SCHEMA: &str = include_str!("../../../schemas/results.schema.json");
pub const REGION_SCHEMA: &str = include_str!("../../../schemas/region.schema.json");
pub const SUMMARY_SCHEMA: &str = include_str!("../../../schemas/summary.schema.json");
pub const COVERAGE_SCHEMA: &str = include_str!("../../../schemas/coverage.schema.json");

/// Validate `value` against `schema`, reporting the first violation with a
/// JSON-pointer-style path.
pub fn validate(schema: &Value, value: &Value) -> Result<()> {
    check(schema, value, "$")
}

pub fn validate_str(schema_text: &str, value: &Value) -> Result<()> {
    let schema: Value = serde_json::from_str(schema_text)
        .map_err(|e| Error::schema(None, format!("schema parse: {e}")))?;
    validate(&schema, value)
}

fn type_matches(ty: &str, value: &Value) -> bool {
    match ty {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "number" => value.is_number(),
        "integer" => value.is_i64() || value.is_u64(),
        "boolean" => value.is_boolean(),
        "null" => value.is_null(),
        _ => false,
    }
}

fn check(schema: &Value, value: &Value, path: &str) -> Result<()> {
    let fail = |msg: String| Err(Error::schema(None, format!("{path}: {msg}")));

    if let Some(ty) = schema.get("type") {
        let allowed: Vec<&str> = match ty {
            Value::String(s) => vec![s.as_str()],
            Value::Array(items) => items.iter().filter_map(|v| v.as_str()).collect(),
            _ => vec![],
        };
        if !allowed.iter().any(|t| type_matches(t, value)) {
            return fail(format!("expected type {allowed:?}"));
        }
        // Nullable slots skip the structural checks when null.
        if value.is_null() {
            return Ok(());
        }
    }

    if let Some(options) = schema.get("enum").and_then(|e| e.as_array()) {
        if !options.contains(value) {
            return fail(format!("value {value} not in enum"));
        }
    }

    if let Some(obj) = value.as_object() {
        if let Some(required) = schema.get("required").and_then(|r| r.as_array()) {
            for key in required.iter().filter_map(|k| k.as_str()) {
                if !obj.contains_key(key) {
                    return fail(format!("missing required key '{key}'"));
                }
            }
        }
        if let Some(props) = schema.get("properties").and_then(|p| p.as_object()) {
            for (key, sub) in props {
                if let Some(v) = obj.get(key) {
                    check(sub, v, &format!("{path}.{key}"))?;
                }
            }
        }
    }

    if let (Some(items), Some(arr)) = (schema.get("items"), value.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            check(items, v, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn schemas_parse_and_catch_violations() {
        let doc = json!({
            "m": 5, "failures": 0, "alpha": 0.05,
            "entries": [{"kind": "pointwise_set", "coverage": 0.95, "mc_se": 0.01}]
        });
        validate_str(COVERAGE_SCHEMA, &doc).unwrap();

        let bad = json!({"m": 5, "failures": 0, "alpha": 0.05,
            "entries": [{"kind": "unknown", "coverage": 0.95, "mc_se": 0.01}]});
        assert!(validate_str(COVERAGE_SCHEMA, &bad).is_err());

        let missing = json!({"m": 5, "alpha": 0.05, "entries": []});
        assert!(validate_str(COVERAGE_SCHEMA, &missing).is_err());
    }

    #[test]
    fn nullable_slots_accept_null_and_objects() {
        let doc = json!({
            "alpha": 0.05, "level": 0.95, "B": 300, "seed": 1, "flagged": 0,
            "pointwise": {"lower": 0.1, "upper": 0.9, "critical_value": 1.95},
            "uniform": null
        });
        validate_str(REGION_SCHEMA, &doc).unwrap();
        let bad = json!({
            "alpha": 0.05, "level": 0.95, "B": 300, "seed": 1, "flagged": 0,
            "pointwise": {"lower": 0.1}, "uniform": null
        });
        assert!(validate_str(REGION_SCHEMA, &bad).is_err());
    }
}
