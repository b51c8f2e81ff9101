//! JSON checkpoint documents.
//!
//! Every tensor is written as `{"shape": [rows, cols], "values": [...]}` in
//! row-major order. Floats are printed in shortest round-trip form, so
//! load-then-save reproduces the original bytes.

use std::path::Path;

use indexmap::IndexMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::optim::{OptimizerConfig, OptimizerState};
use crate::nn::params::ParamStore;

pub const CHECKPOINT_FORMAT: &str = "gridmarl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorDoc {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

impl From<&Array2<f64>> for TensorDoc {
    fn from(a: &Array2<f64>) -> Self {
        Self {
            shape: [a.nrows(), a.ncols()],
            values: a.iter().copied().collect(),
        }
    }
}

impl TensorDoc {
    pub fn to_array(&self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.shape[0], self.shape[1]), self.values.clone())
            .map_err(|e| Error::Input(format!("tensor shape {:?}: {e}", self.shape)))
    }
}

pub type ParamsDoc = IndexMap<String, TensorDoc>;

pub fn params_to_doc(params: &ParamStore) -> ParamsDoc {
    params
        .iter()
        .map(|(k, v)| (k.to_string(), TensorDoc::from(v)))
        .collect()
}

pub fn params_from_doc(doc: &ParamsDoc) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    for (name, t) in doc {
        store.insert(name.clone(), t.to_array()?)?;
    }
    store.check_finite()?;
    Ok(store)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerDoc {
    pub config: OptimizerConfig,
    pub step_count: u64,
    pub slots: IndexMap<String, Vec<TensorDoc>>,
}

impl From<&OptimizerState> for OptimizerDoc {
    fn from(o: &OptimizerState) -> Self {
        Self {
            config: o.config.clone(),
            step_count: o.step_count,
            slots: o
                .slots
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(TensorDoc::from).collect()))
                .collect(),
        }
    }
}

impl OptimizerDoc {
    pub fn to_state(&self) -> Result<OptimizerState> {
        let mut slots = IndexMap::new();
        for (k, v) in &self.slots {
            slots.insert(
                k.clone(),
                v.iter()
                    .map(TensorDoc::to_array)
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(OptimizerState {
            config: self.config.clone(),
            slots,
            step_count: self.step_count,
        })
    }
}

/// A single network's parameters together with its optimizer state and
/// free-form extra tensors (e.g. batch-norm running statistics).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub params: ParamsDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerDoc>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub buffers: ParamsDoc,
}

impl Checkpoint {
    pub fn new(params: &ParamStore, optimizer: Option<&OptimizerState>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            params: params_to_doc(params),
            optimizer: optimizer.map(OptimizerDoc::from),
            buffers: IndexMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Input(format!(
                "not a checkpoint document (format `{}`)",
                c.format
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn param_store(&self) -> Result<ParamStore> {
        params_from_doc(&self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::optim::Direction;
    use ndarray::array;

    #[test]
    fn save_load_save_is_byte_stable() {
        let mut p = ParamStore::new();
        p.insert("w", array![[0.1, 1.0 / 3.0], [-2.5e-17, 7.0]])
            .unwrap();
        p.insert("b", array![[std::f64::consts::PI]]).unwrap();
        let mut opt = OptimizerState::new(OptimizerConfig::adamw(1e-3));
        let g = p.zeros_like();
        opt.step(&mut p, &g, Direction::Descent).unwrap();
        let first = Checkpoint::new(&p, Some(&opt)).to_json().unwrap();
        let back = Checkpoint::from_json(&first).unwrap();
        assert_eq!(back.param_store().unwrap(), p);
        assert_eq!(back.optimizer.as_ref().unwrap().to_state().unwrap(), opt);
        assert_eq!(back.to_json().unwrap(), first);
    }

    #[test]
    fn missing_file_is_a_missing_artifact() {
        let err = Checkpoint::load(Path::new("/nonexistent/ckpt.json")).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }
}
