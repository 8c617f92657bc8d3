//! JSON-lines datasets: one `{id, text, label, modalities}` object per line.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tgc_core::{ModalitySpec, Tensor};

use crate::error::{CliError, CliResult};

/// A modality vector given either as a path to a little-endian f32 file or inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModalitySource {
    Path(String),
    Inline(Vec<f32>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub text: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub modalities: BTreeMap<String, ModalitySource>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    /// 1-based source line of each record.
    pub lines: Vec<usize>,
    /// Directory against which relative modality paths resolve.
    pub base_dir: PathBuf,
}

fn record_id(v: &Value) -> String {
    match v.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => "<no id>".to_string(),
    }
}

impl Dataset {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input("IoError", format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Dataset::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: PathBuf) -> CliResult<Self> {
        let mut records = Vec::new();
        let mut lines = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(line)
                .map_err(|e| CliError::input("ParseError", format!("line {lineno}: {e}")))?;
            let id = record_id(&value);
            let record: Record = serde_json::from_value(value)
                .map_err(|e| CliError::input("ParseError", format!("line {lineno}, record {id:?}: {e}")))?;
            records.push(record);
            lines.push(lineno);
        }
        if records.is_empty() {
            return Err(tgc_core::Error::EmptyCorpus.into());
        }
        let names = |r: &Record| r.modalities.keys().cloned().collect::<Vec<_>>();
        let first = names(&records[0]);
        for (r, &line) in records.iter().zip(&lines) {
            if names(r) != first {
                return Err(CliError::input(
                    "ModalityError",
                    format!(
                        "line {line}, record {:?}: modalities {:?} differ from {:?}",
                        r.id,
                        names(r),
                        first
                    ),
                ));
            }
        }
        Ok(Dataset {
            records,
            lines,
            base_dir,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// Distinct labels in sorted order; index = class id.
    pub fn labels(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| r.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn modality_names(&self) -> Vec<String> {
        self.records[0].modalities.keys().cloned().collect()
    }

    /// Declared modalities, or all of the data's modalities (sorted by name,
    /// width from the first record) when none are declared.
    pub fn resolve_modalities(&self, declared: &[ModalitySpec]) -> CliResult<Vec<ModalitySpec>> {
        let available = self.modality_names();
        if declared.is_empty() {
            let first = &self.records[0];
            return available
                .into_iter()
                .map(|name| {
                    let v = load_vector(&first.modalities[&name], &self.base_dir, None)
                        .map_err(|e| self.context(0, e))?;
                    Ok(ModalitySpec { name, dim: v.len() })
                })
                .collect();
        }
        if let Some(m) = declared.iter().find(|m| !available.contains(&m.name)) {
            return Err(CliError::input(
                "ModalityError",
                format!("configured modality {:?} is absent from the dataset", m.name),
            ));
        }
        Ok(declared.to_vec())
    }

    /// Loads `specs` for record `idx`, in order.
    pub fn modality_vectors(&self, idx: usize, specs: &[ModalitySpec]) -> CliResult<Vec<Tensor<f32>>> {
        let r = &self.records[idx];
        specs
            .iter()
            .map(|spec| {
                let src = r.modalities.get(&spec.name).ok_or_else(|| {
                    self.context(idx, CliError::input("ModalityError", format!("missing modality {:?}", spec.name)))
                })?;
                load_vector(src, &self.base_dir, Some(spec))
                    .and_then(|v| Ok(Tensor::from_vec(&[1, v.len()], v)?))
                    .map_err(|e| self.context(idx, e))
            })
            .collect()
    }

    fn context(&self, idx: usize, e: CliError) -> CliError {
        let (line, id) = (self.lines[idx], &self.records[idx].id);
        match e {
            CliError::Input { code, msg } => CliError::input(code, format!("line {line}, record {id:?}: {msg}")),
            CliError::Core(core) => CliError::in_record(core, line, id),
            other => other,
        }
    }
}

/// Reads a modality vector; checks its width against `spec` when given.
pub fn load_vector(src: &ModalitySource, base: &Path, spec: Option<&ModalitySpec>) -> CliResult<Vec<f32>> {
    let v = match src {
        ModalitySource::Inline(v) => v.clone(),
        ModalitySource::Path(p) => {
            let path = base.join(p);
            let bytes = std::fs::read(&path)
                .map_err(|e| CliError::input("ModalityError", format!("{}: {e}", path.display())))?;
            if bytes.len() % 4 != 0 {
                return Err(CliError::input(
                    "ModalityError",
                    format!("{}: {} bytes is not a whole number of f32 values", path.display(), bytes.len()),
                ));
            }
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()
        }
    };
    if let Some(spec) = spec {
        if v.len() != spec.dim {
            return Err(CliError::input(
                "ModalityError",
                format!("modality {:?} has {} values, expected {}", spec.name, v.len(), spec.dim),
            ));
        }
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::input("ModalityError", "modality vector has non-finite values"));
    }
    Ok(v)
}

/// Writes `values` as little-endian f32.
pub fn write_vector(path: &Path, values: &[f32]) -> std::io::Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes)
}
