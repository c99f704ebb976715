use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use super::{ModelWeights, NetworkSpec, NnError, Result, Tensor};

pub const SCHEMA_VERSION: u32 = 1;

/// A trained network with its architecture and free-form string metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: Option<String>,
    pub spec: NetworkSpec,
    pub weights: ModelWeights,
    pub metadata: BTreeMap<String, String>,
}

impl ModelFile {
    pub fn new(spec: NetworkSpec, weights: ModelWeights) -> Self {
        Self { kind: None, spec, weights, metadata: BTreeMap::new() }
    }

    pub fn to_json(&self) -> String {
        let tensors: Vec<Value> = self
            .weights
            .tensors
            .iter()
            .map(|t| {
                let data: Vec<Value> = t.data.iter().map(|&v| Value::Number(exact_number(v))).collect();
                serde_json::json!({ "name": t.name, "shape": t.shape, "data": data })
            })
            .collect();
        let doc = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "spec": self.spec,
            "metadata": self.metadata,
            "tensors": tensors,
        });
        serde_json::to_string_pretty(&doc).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| NnError::CorruptFile(e.to_string()))?;
        let found = doc
            .get("schema_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| NnError::CorruptFile("missing schema_version".into()))?;
        if found != SCHEMA_VERSION as u64 {
            return Err(NnError::VersionMismatch { found: found as u32, expected: SCHEMA_VERSION });
        }
        let raw: RawModel = serde_json::from_value(doc).map_err(|e| NnError::CorruptFile(e.to_string()))?;
        raw.spec.validate().map_err(|e| NnError::CorruptFile(e.to_string()))?;
        let expected = raw.spec.tensor_shapes();
        if expected.len() != raw.tensors.len() {
            return Err(NnError::CorruptFile(format!("{} tensors, spec needs {}", raw.tensors.len(), expected.len())));
        }
        let mut tensors = Vec::with_capacity(raw.tensors.len());
        for ((name, shape), t) in expected.into_iter().zip(raw.tensors) {
            if t.name != name || t.shape != shape {
                return Err(NnError::CorruptFile(format!("tensor {} {:?}, expected {name} {shape:?}", t.name, t.shape)));
            }
            let n: usize = shape.iter().product();
            if t.data.len() != n {
                return Err(NnError::CorruptFile(format!("{name} holds {} values, shape needs {n}", t.data.len())));
            }
            let data = t
                .data
                .iter()
                .map(|v| v.as_f64().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| NnError::CorruptFile(format!("{name} holds a non-finite value")))?;
            tensors.push(Tensor { name, shape, data });
        }
        Ok(Self { kind: raw.kind, spec: raw.spec, weights: ModelWeights { tensors }, metadata: raw.metadata })
    }
}

#[derive(Deserialize, Serialize)]
struct RawTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<Number>,
}

#[derive(Deserialize)]
struct RawModel {
    kind: Option<String>,
    spec: NetworkSpec,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    tensors: Vec<RawTensor>,
}

/// 17 significant digits, enough to recover any f64 exactly.
fn exact_number(v: f64) -> Number {
    Number::from_str(&format!("{v:.16e}")).expect("finite float formats as a JSON number")
}

pub fn save_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    model.weights.check(&model.spec)?;
    if let Some(dir) = path.as_ref().parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, model.to_json())?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    ModelFile::from_json(&fs::read_to_string(path)?)
}
