//! Saved Overpass API responses and the tag rule table.

use std::collections::BTreeMap;
use std::path::Path;

use esle_core::corpus::Location;
use esle_core::labels::{RuleTable, Tags};
use serde_json::{json, Value};

use super::{read_text, to_json, write_bytes};
use crate::{Error, Result};

/// The default rule table as shipped.
pub const DEFAULT_RULES_JSON: &str = include_str!("../../data/rules.json");

pub fn meta_file_name(n: usize) -> String {
    format!("meta_{n:08}.json")
}

/// Tag maps of every element in an Overpass JSON document. Elements
/// without `tags` contribute an empty map; numeric and boolean tag values
/// are read as their JSON text.
pub fn parse_elements(text: &str, path: &Path) -> Result<Vec<Tags>> {
    let doc: Value = serde_json::from_str(text).map_err(|e| {
        Error::format(
            path,
            0,
            format!("line {} column {}: {e}", e.line(), e.column()),
        )
    })?;
    let elements = doc
        .get("elements")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::format(path, 0, "document has no `elements` array"))?;
    elements
        .iter()
        .enumerate()
        .map(|(i, el)| {
            let mut tags = Tags::new();
            match el.get("tags") {
                None | Some(Value::Null) => {}
                Some(Value::Object(map)) => {
                    for (k, v) in map {
                        let text = match v {
                            Value::String(s) => s.clone(),
                            Value::Number(_) | Value::Bool(_) => v.to_string(),
                            _ => {
                                return Err(Error::format(
                                    path,
                                    0,
                                    format!("element {i}: tag {k:?} is not a scalar"),
                                ))
                            }
                        };
                        tags.insert(k.clone(), text);
                    }
                }
                Some(_) => {
                    return Err(Error::format(
                        path,
                        0,
                        format!("element {i}: `tags` is not an object"),
                    ))
                }
            }
            Ok(tags)
        })
        .collect()
}

pub fn read_elements(path: &Path) -> Result<Vec<Tags>> {
    parse_elements(&read_text(path)?, path)
}

/// An Overpass-style document with one node per tag map, all placed at
/// `at`.
pub fn document(elements: &[Tags], at: Location) -> Value {
    let els: Vec<Value> = elements
        .iter()
        .enumerate()
        .map(|(i, tags)| json!({"type": "node", "id": i + 1, "lat": at.lat, "lon": at.lon, "tags": tags}))
        .collect();
    json!({"version": 0.6, "generator": "esle synthetic", "elements": els})
}

pub fn write_document(path: &Path, elements: &[Tags], at: Location) -> Result<()> {
    write_bytes(path, &to_json(&document(elements, at))?)
}

pub fn parse_rules(text: &str, path: &Path) -> Result<RuleTable> {
    let named: BTreeMap<String, Vec<String>> =
        serde_json::from_str(text).map_err(|e| Error::format(path, 0, e.to_string()))?;
    Ok(RuleTable::from_named(
        named
            .iter()
            .map(|(k, v)| (k.as_str(), v.iter().map(String::as_str))),
    )?)
}

pub fn read_rules(path: Option<&Path>) -> Result<RuleTable> {
    match path {
        Some(p) => parse_rules(&read_text(p)?, p),
        None => parse_rules(DEFAULT_RULES_JSON, Path::new("data/rules.json")),
    }
}

/// The rule table as `class name -> predicates`.
pub fn rules_json(rules: &RuleTable) -> Value {
    let map: serde_json::Map<String, Value> = rules
        .named()
        .map(|(name, preds)| {
            (
                name.to_string(),
                preds.iter().map(|p| Value::String(p.to_text())).collect(),
            )
        })
        .collect();
    Value::Object(map)
}
