//! Re-scores logged groups under the current rules and reports what moved.

use std::fmt;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::HarnessError;
use crate::harness::Harness;
use crate::log::read_log;
use crate::wire::comparable;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldDiff {
    pub line: usize,
    pub problem_id: String,
    /// Path into the response, e.g. `breakdowns[2].length`.
    pub field: String,
    pub logged: Value,
    pub current: Value,
}

impl fmt::Display for FieldDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {} ({}): {}: logged {} now {}",
            self.line, self.problem_id, self.field, self.logged, self.current
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplaySummary {
    pub entries: usize,
    pub diffs: Vec<FieldDiff>,
}

/// Every logged request is scored again without logging it; wall times are
/// ignored.
pub fn replay(harness: &Harness, log: &Path) -> Result<ReplaySummary, HarnessError> {
    let entries = read_log(log)?;
    let mut summary = ReplaySummary {
        entries: entries.len(),
        diffs: Vec::new(),
    };
    for (line, entry) in entries {
        let now = harness.score_unlogged(&entry.request)?;
        let mut found = Vec::new();
        diff_values("", &comparable(&entry.response), &comparable(&now), &mut found);
        summary.diffs.extend(found.into_iter().map(|(field, logged, current)| FieldDiff {
            line,
            problem_id: entry.request.problem_id.clone(),
            field,
            logged,
            current,
        }));
    }
    Ok(summary)
}

/// Leaf-level differences between two JSON documents. Absent fields show as
/// null.
pub fn diff_values(path: &str, a: &Value, b: &Value, out: &mut Vec<(String, Value, Value)>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
            keys.sort();
            keys.dedup();
            for key in keys {
                let child = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{}.{}", path, key)
                };
                diff_values(
                    &child,
                    x.get(key).unwrap_or(&Value::Null),
                    y.get(key).unwrap_or(&Value::Null),
                    out,
                );
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            for (i, (l, r)) in x.iter().zip(y).enumerate() {
                diff_values(&format!("{}[{}]", path, i), l, r, out);
            }
        }
        _ if a != b => out.push((path.to_string(), a.clone(), b.clone())),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn reports_leaf_paths() {
        let a = json!({"totals": [1.0, 2.0], "breakdowns": [{"length": 1.0}], "k": 4});
        let b = json!({"totals": [1.0, 2.5], "breakdowns": [{}], "k": 4});
        let mut out = Vec::new();
        diff_values("", &a, &b, &mut out);
        let fields: Vec<&str> = out.iter().map(|(f, _, _)| f.as_str()).collect();
        assert_eq!(fields, ["breakdowns[0].length", "totals[1]"]);
    }

    #[test]
    fn differing_lengths_are_one_diff() {
        let mut out = Vec::new();
        diff_values("xs", &json!([1]), &json!([1, 2]), &mut out);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, "xs");
    }
}
