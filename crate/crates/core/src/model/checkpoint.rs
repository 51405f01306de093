use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{params, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    config: ModelConfig,
    seed: u64,
    step: u64,
    tensors: Vec<NamedTensor>,
}

/// Write `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl Model {
    pub fn to_checkpoint_json(&self, step: u64) -> Result<String> {
        let file = CheckpointFile {
            config: self.config.clone(),
            seed: self.config.seed,
            step,
            tensors: self
                .params
                .names()
                .iter()
                .zip(self.params.tensors())
                .map(|(name, t)| NamedTensor {
                    name: name.clone(),
                    rows: t.rows,
                    cols: t.cols,
                    data: t.data.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Atomically write a JSON checkpoint holding config, seed, training
    /// step and every named tensor.
    pub fn save(&self, path: impl AsRef<Path>, step: u64) -> Result<()> {
        write_atomic(path.as_ref(), self.to_checkpoint_json(step)?.as_bytes())
    }

    /// Parse a checkpoint. With `expected`, the stored config must equal it.
    pub fn from_checkpoint_json(text: &str, expected: Option<&ModelConfig>) -> Result<(Self, u64)> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if let Some(expected) = expected {
            if *expected != file.config {
                return Err(Error::ConfigMismatch(format!(
                    "stored {:?}, expected {:?}",
                    file.config, expected
                )));
            }
        }
        if file.seed != file.config.seed {
            return Err(Error::ConfigMismatch("seed differs from config seed".into()));
        }
        file.config.validate()?;
        let (layout, mut params) = params::build(&file.config, None);
        if file.tensors.len() != params.len() {
            return Err(Error::ConfigMismatch(format!(
                "{} tensors stored, config implies {}",
                file.tensors.len(),
                params.len()
            )));
        }
        for (i, t) in file.tensors.into_iter().enumerate() {
            let id = super::ParamId(i);
            let slot = params.tensor(id);
            if params.name(id) != t.name || slot.shape() != (t.rows, t.cols) {
                return Err(Error::ConfigMismatch(format!(
                    "tensor {i}: stored `{}` {}x{}, expected `{}` {}x{}",
                    t.name,
                    t.rows,
                    t.cols,
                    params.name(id),
                    slot.rows,
                    slot.cols
                )));
            }
            if t.data.len() != t.rows * t.cols {
                return Err(Error::ConfigMismatch(format!(
                    "tensor `{}` holds {} values for shape {}x{}",
                    t.name,
                    t.data.len(),
                    t.rows,
                    t.cols
                )));
            }
            *params.tensor_mut(id) = Matrix::from_vec(t.rows, t.cols, t.data);
        }
        Ok((Model::with_params(file.config, params, layout), file.step))
    }

    pub fn load(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<(Self, u64)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_json(&text, expected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tags::NUM_TAGS;

    fn config() -> ModelConfig {
        ModelConfig {
            d_model: 4,
            n_enc_layers: 1,
            n_dec_layers: 1,
            n_heads: 2,
            d_ff: 8,
            dropout: 0.0,
            max_len: 8,
            vocab_size: 9,
            n_tags: NUM_TAGS,
            seed: 3,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = Model::new(config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path, 42).unwrap();
        let (back, step) = Model::load(&path, Some(&config())).unwrap();
        assert_eq!(step, 42);
        assert_eq!(back.params(), m.params());
        assert!(!dir.path().join("model.json.tmp").exists());
    }

    #[test]
    fn mismatched_config_rejected() {
        let m = Model::new(config()).unwrap();
        let text = m.to_checkpoint_json(0).unwrap();
        let mut other = config();
        other.d_model = 8;
        assert!(matches!(
            Model::from_checkpoint_json(&text, Some(&other)),
            Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn tampered_shape_rejected() {
        let m = Model::new(config()).unwrap();
        let text = m.to_checkpoint_json(0).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["tensors"][0]["rows"] = serde_json::json!(3);
        let err = Model::from_checkpoint_json(&v.to_string(), None).unwrap_err();
        assert!(matches!(err, Error::ConfigMismatch(_)));
    }
}
