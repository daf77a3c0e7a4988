//! Layered configuration: serde defaults, then files, then flags. The
//! merged document is deserialized once so errors carry the field path.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

/// Deep merge; objects merge key by key, anything else replaces.
pub fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

pub fn read_layer(path: &Path) -> anyhow::Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
    if !value.is_object() {
        bail!("{} must contain a JSON object", path.display());
    }
    Ok(value)
}

/// Layers in increasing precedence, skipping absent files.
pub fn collect(files: &[Option<&Path>], flags: Map<String, Value>) -> anyhow::Result<Value> {
    let mut merged = Value::Object(Map::new());
    for path in files.iter().flatten() {
        merge(&mut merged, read_layer(path)?);
    }
    merge(&mut merged, Value::Object(flags));
    Ok(merged)
}

pub fn resolve<T: DeserializeOwned>(merged: Value) -> anyhow::Result<T> {
    serde_path_to_error::deserialize(merged).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            anyhow!("invalid configuration: {inner}")
        } else {
            anyhow!("invalid configuration at `{path}`: {inner}")
        }
    })
}

/// Flag values that were given, keyed by their configuration field.
#[derive(Default)]
pub struct Flags(Map<String, Value>);

impl Flags {
    pub fn set(mut self, key: &str, value: Option<impl serde::Serialize>) -> Self {
        if let Some(v) = value {
            let v = serde_json::to_value(v).expect("flag values serialize");
            let mut path = key.split('.').rev();
            let mut nested = Value::Object(Map::from_iter([(path.next().unwrap().to_string(), v)]));
            for parent in path {
                nested = Value::Object(Map::from_iter([(parent.to_string(), nested)]));
            }
            let mut merged = Value::Object(std::mem::take(&mut self.0));
            merge(&mut merged, nested);
            if let Value::Object(m) = merged {
                self.0 = m;
            }
        }
        self
    }

    pub fn into_map(self) -> Map<String, Value> {
        self.0
    }
}

pub fn absolute(path: &Path) -> anyhow::Result<PathBuf> {
    std::path::absolute(path).with_context(|| format!("cannot resolve {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn later_layers_win_field_by_field() {
        let mut base = json!({"a": 1, "svm": {"c": 10, "tolerance": 0.001}});
        merge(&mut base, json!({"svm": {"c": 2}, "b": [1]}));
        assert_eq!(base, json!({"a": 1, "b": [1], "svm": {"c": 2, "tolerance": 0.001}}));
    }

    #[test]
    fn dotted_flags_nest() {
        let flags = Flags::default()
            .set("hog.cell_size", Some(8))
            .set("hog.n_bins", Some(6))
            .set("seed", None::<u64>);
        assert_eq!(
            Value::Object(flags.into_map()),
            json!({"hog": {"cell_size": 8, "n_bins": 6}})
        );
    }

    #[test]
    fn errors_name_the_field() {
        #[derive(Debug, serde::Deserialize)]
        #[allow(dead_code)]
        struct Inner {
            c: f64,
        }
        #[derive(Debug, serde::Deserialize)]
        #[allow(dead_code)]
        struct Outer {
            svm: Inner,
        }
        let err = resolve::<Outer>(json!({"svm": {"c": "ten"}})).unwrap_err();
        assert!(err.to_string().contains("`svm.c`"), "{err}");
    }
}
