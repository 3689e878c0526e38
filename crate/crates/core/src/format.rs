//! JSON instance files.
//!
//! A plain instance:
//!
//! ```json
//! {"m": 2, "n": 2, "F": [[1, 0], [0, 1]], "r": [0, 1], "c": [0, 0]}
//! ```
//!
//! with an optional `"labels": {"actions": [...], "outcomes": [...]}`. A
//! typed instance replaces `F` and `c` with `"types": [{"F": ..., "c": ...}]`
//! and adds `"lambda"`. `m` and `n` may be omitted; when present they must
//! match the data.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learning::{validate_typed, TypedInstance};
use crate::model::{validate_instance, Instance, Labels, ValidationReport};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed instance file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Shape(String),
    #[error("{0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TypeDoc {
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    c: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    f: Option<Vec<Vec<f64>>>,
    r: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Labels>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    types: Option<Vec<TypeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<Vec<f64>>,
}

/// Parsed and validated file contents, with validation warnings.
#[derive(Debug, Clone)]
pub enum Document {
    Single(Instance, ValidationReport),
    Typed(TypedInstance, ValidationReport),
}

impl Document {
    pub fn report(&self) -> &ValidationReport {
        match self {
            Self::Single(_, r) | Self::Typed(_, r) => r,
        }
    }

    /// A plain instance is a typed instance with one type.
    pub fn into_typed(self) -> TypedInstance {
        match self {
            Self::Single(inst, _) => TypedInstance::single(inst),
            Self::Typed(t, _) => t,
        }
    }
}

fn check_dim(key: &str, declared: Option<usize>, actual: usize) -> Result<(), FormatError> {
    match declared {
        Some(d) if d != actual => Err(FormatError::Shape(format!(
            "declared {key} = {d} but the data has {actual}"
        ))),
        _ => Ok(()),
    }
}

pub fn parse_document(text: &str) -> Result<Document, FormatError> {
    let raw: RawDoc = serde_json::from_str(text)?;
    check_dim("m", raw.m, raw.r.len())?;
    match (raw.f, raw.c, raw.types, raw.lambda) {
        (Some(f), Some(c), None, None) => {
            check_dim("n", raw.n, f.len())?;
            let inst = Instance {
                outcome_probs: f,
                rewards: raw.r,
                costs: c,
                labels: raw.labels,
            };
            let report = validate_instance(&inst);
            if !report.is_ok() {
                return Err(FormatError::Invalid(report));
            }
            Ok(Document::Single(inst, report))
        }
        (None, None, Some(types), Some(lambda)) => {
            let instances: Vec<Instance> = types
                .into_iter()
                .map(|t| Instance {
                    outcome_probs: t.f,
                    rewards: raw.r.clone(),
                    costs: t.c,
                    labels: raw.labels.clone(),
                })
                .collect();
            if let Some(first) = instances.first() {
                check_dim("n", raw.n, first.n())?;
            }
            let report = validate_typed(&instances, &lambda);
            if !report.is_ok() {
                return Err(FormatError::Invalid(report));
            }
            let typed = TypedInstance::from_instances(instances, lambda).expect("validated above");
            Ok(Document::Typed(typed, report))
        }
        _ => Err(FormatError::Shape(
            "expected either F and c, or types and lambda".into(),
        )),
    }
}

pub fn read_document(path: &Path) -> Result<Document, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_document(&text)
}

pub fn instance_to_json(inst: &Instance) -> String {
    let raw = RawDoc {
        m: Some(inst.m()),
        n: Some(inst.n()),
        f: Some(inst.outcome_probs.clone()),
        r: inst.rewards.clone(),
        c: Some(inst.costs.clone()),
        labels: inst.labels.clone(),
        ..RawDoc::default()
    };
    serde_json::to_string_pretty(&raw).expect("plain data serializes")
}

pub fn typed_to_json(tinst: &TypedInstance) -> String {
    let raw = RawDoc {
        m: Some(tinst.m()),
        n: Some(tinst.n()),
        r: tinst.rewards().to_vec(),
        labels: tinst.types()[0].labels.clone(),
        types: Some(
            tinst
                .types()
                .iter()
                .map(|t| TypeDoc {
                    f: t.outcome_probs.clone(),
                    c: t.costs.clone(),
                })
                .collect(),
        ),
        lambda: Some(tinst.lambda().to_vec()),
        ..RawDoc::default()
    };
    serde_json::to_string_pretty(&raw).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_random;
    use crate::model::ValidationIssue;

    #[test]
    fn plain_roundtrip() {
        let inst = gen_random(4, 3, 8, true);
        match parse_document(&instance_to_json(&inst)).unwrap() {
            Document::Single(back, report) => {
                assert_eq!(back, inst);
                assert!(report.warnings.is_empty());
            }
            Document::Typed(..) => panic!("expected a plain instance"),
        }
    }

    #[test]
    fn typed_roundtrip() {
        let mut a = gen_random(3, 2, 1, true);
        let mut b = gen_random(3, 2, 2, true);
        b.rewards = a.rewards.clone();
        a.labels = None;
        let t = TypedInstance::from_instances(vec![a, b], vec![0.25, 0.75]).unwrap();
        match parse_document(&typed_to_json(&t)).unwrap() {
            Document::Typed(back, _) => assert_eq!(back, t),
            Document::Single(..) => panic!("expected a typed instance"),
        }
    }

    #[test]
    fn names_bad_row() {
        let text = r#"{"F": [[1, 0], [0.5, 0.6]], "r": [0, 1], "c": [0, 0]}"#;
        let err = parse_document(text).unwrap_err();
        let FormatError::Invalid(report) = &err else {
            panic!("unexpected {err}");
        };
        assert!(matches!(
            report.errors[..],
            [ValidationIssue::RowNotStochastic { row: 1, .. }]
        ));
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn lambda_must_sum_to_one() {
        let text = r#"{"r": [0, 1], "types": [{"F": [[1, 0]], "c": [0]}, {"F": [[1, 0]], "c": [0]}],
                       "lambda": [0.5, 0.48]}"#;
        assert!(matches!(parse_document(text), Err(FormatError::Invalid(_))));
    }

    #[test]
    fn shape_errors() {
        let text = r#"{"m": 3, "F": [[1, 0]], "r": [0, 1], "c": [0]}"#;
        assert!(matches!(parse_document(text), Err(FormatError::Shape(_))));
        let text = r#"{"F": [[1, 0]], "r": [0, 1]}"#;
        assert!(matches!(parse_document(text), Err(FormatError::Shape(_))));
        assert!(matches!(parse_document("{"), Err(FormatError::Json(_))));
    }
}
