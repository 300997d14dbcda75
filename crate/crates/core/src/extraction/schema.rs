use serde_json::{json, Value};

use super::{ExtractionError, ExtractionItem, Result};
use crate::corpus::Severity;
use crate::text::normalize_term;

pub const SCHEMA_V1: &str = "ade-triplets/v1";

/// Items decoded from a model answer, plus non-fatal oddities.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedItems {
    pub items: Vec<ExtractionItem>,
    pub warnings: Vec<String>,
}

/// Output-format instructions substituted into the prompt's `{schema}` slot.
pub fn schema_description() -> String {
    format!(
        "Answer with a JSON array only ({SCHEMA_V1}). Each element is an object \
         {{\"drug\": string, \"ade\": string, \"severity\": \"high\"|\"moderate\"|\"mild\"|\"na\", \
         \"adversity\": true|false}}. Use [] when the post reports no adverse drug event."
    )
}

/// Canonical compact JSON for `items`; `parse_model_output` inverts it.
pub fn serialize_items(items: &[ExtractionItem]) -> String {
    let arr: Vec<Value> = items
        .iter()
        .map(|i| {
            json!({
                "drug": i.drug,
                "ade": i.ade_text,
                "severity": i.severity.as_str(),
                "adversity": i.adversity,
            })
        })
        .collect();
    Value::Array(arr).to_string()
}

/// Decode the first well-formed, schema-conformant JSON value in `raw`.
/// Drug names are normalized.
///
/// Accepts a bare array of items or `{"schema": .., "items": [..]}`.
/// Surrounding prose is ignored. An explicit schema other than
/// [`SCHEMA_V1`] is an error.
pub fn parse_model_output(raw: &str) -> Result<ParsedItems> {
    let mut last_reason = "no JSON array found".to_string();
    for (start, c) in raw.char_indices() {
        if c != '[' && c != '{' {
            continue;
        }
        let Some(end) = matching_close(raw, start) else { continue };
        let Ok(value) = serde_json::from_str::<Value>(&raw[start..end]) else { continue };
        let array = match &value {
            Value::Array(a) => a,
            Value::Object(o) => {
                if let Some(schema) = o.get("schema") {
                    if schema.as_str() != Some(SCHEMA_V1) {
                        return Err(unparseable(format!("unknown schema version {schema}"), raw));
                    }
                }
                match o.get("items") {
                    Some(Value::Array(a)) => a,
                    _ => continue,
                }
            }
            _ => continue,
        };
        match decode_items(array) {
            Ok(parsed) => return Ok(parsed),
            Err(reason) => last_reason = reason,
        }
    }
    Err(unparseable(last_reason, raw))
}

fn unparseable(reason: String, raw: &str) -> ExtractionError {
    ExtractionError::Unparseable { reason, raw_model_output: raw.to_string() }
}

fn decode_items(array: &[Value]) -> std::result::Result<ParsedItems, String> {
    let mut parsed = ParsedItems::default();
    for (i, v) in array.iter().enumerate() {
        let obj = v.as_object().ok_or_else(|| format!("item {i} is not an object"))?;
        let text = |key: &str| -> std::result::Result<String, String> {
            match obj.get(key).and_then(Value::as_str).map(str::trim) {
                Some(s) if !s.is_empty() => Ok(s.to_string()),
                _ => Err(format!("item {i} lacks a non-empty `{key}`")),
            }
        };
        let drug = normalize_term(&text("drug")?);
        let ade_text = text("ade")?;
        let severity = match obj.get("severity") {
            None | Some(Value::Null) => Severity::NotApplicable,
            Some(Value::String(s)) => Severity::parse_lenient(s).unwrap_or_else(|| {
                parsed.warnings.push(format!("item {i}: unknown severity {s:?}, using na"));
                Severity::NotApplicable
            }),
            Some(other) => return Err(format!("item {i}: severity {other} is not a string")),
        };
        let adversity = match obj.get("adversity") {
            None | Some(Value::Null) => false,
            Some(Value::Bool(b)) => *b,
            Some(other) => return Err(format!("item {i}: adversity {other} is not a boolean")),
        };
        parsed.items.push(ExtractionItem { drug, ade_text, severity, adversity });
    }
    Ok(parsed)
}

/// Byte index just past the bracket closing the one at `start`, honouring
/// JSON string literals.
fn matching_close(s: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in s[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '[' | '{' => depth += 1,
            ']' | '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(drug: &str, ade: &str, severity: Severity, adversity: bool) -> ExtractionItem {
        ExtractionItem { drug: drug.into(), ade_text: ade.into(), severity, adversity }
    }

    #[test]
    fn prose_around_array() {
        let raw = r#"Sure! Here you go: [{"drug":"tamoxifen","ade":"hot flashes","severity":"high","adversity":true}] hope it helps [1]"#;
        let p = parse_model_output(raw).unwrap();
        assert_eq!(p.items, vec![item("tamoxifen", "hot flashes", Severity::High, true)]);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn skips_non_conformant_candidates() {
        let raw = r#"note [see below] then {"schema":"ade-triplets/v1","items":[{"drug":"a","ade":"b","severity":"low"}]}"#;
        let p = parse_model_output(raw).unwrap();
        assert_eq!(p.items, vec![item("a", "b", Severity::Mild, false)]);
    }

    #[test]
    fn brackets_inside_strings() {
        let raw = r#"[{"drug":"x]","ade":"y[","severity":"na","adversity":false}]"#;
        assert_eq!(parse_model_output(raw).unwrap().items[0].drug, "x]");
    }

    #[test]
    fn unknown_severity_warns() {
        let p = parse_model_output(r#"[{"drug":"a","ade":"b","severity":"catastrophic"}]"#).unwrap();
        assert_eq!(p.items[0].severity, Severity::NotApplicable);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn failures() {
        assert!(matches!(
            parse_model_output("no json here"),
            Err(ExtractionError::Unparseable { .. })
        ));
        assert!(parse_model_output(r#"[{"drug":"a"}]"#).is_err());
        assert!(parse_model_output(r#"{"schema":"v9","items":[]}"#).is_err());
        assert!(parse_model_output("[{\"drug\":").is_err());
    }

    #[test]
    fn drug_names_normalized() {
        let raw = r#"[{"drug":"Cisplatin","ade":"nausea","severity":"moderate","adversity":true}]"#;
        let p = parse_model_output(raw).unwrap();
        assert_eq!(p.items, vec![item("cisplatin", "nausea", Severity::Moderate, true)]);
    }

    #[test]
    fn empty_array_is_valid() {
        assert!(parse_model_output("[]").unwrap().items.is_empty());
    }

    fn arb_item() -> impl Strategy<Value = ExtractionItem> {
        (
            "[a-z][a-z0-9 \\-\"\\\\\\[\\]{}]{0,12}[a-z]",
            "[a-z][a-z \\[\\]]{0,15}[a-z]",
            prop::sample::select(Severity::DESCENDING.to_vec()),
            any::<bool>(),
        )
            .prop_map(|(d, a, s, adv)| item(&normalize_term(&d), &a, s, adv))
    }

    proptest! {
        #[test]
        fn serialize_roundtrip(items in proptest::collection::vec(arb_item(), 0..6)) {
            let text = serialize_items(&items);
            prop_assert_eq!(parse_model_output(&text).unwrap().items, items.clone());
            let noisy = format!("Answer: {text}\nDone.");
            prop_assert_eq!(parse_model_output(&noisy).unwrap().items, items);
        }
    }
}
