//! Binary model files.
//!
//! Layout: the 8-byte magic `CLUECNN\0`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header naming the
//! class order and every tensor with its shape, then each tensor's values as
//! little-endian `f64` in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, Conv1d, Dense};
use super::model::{
    CnnModel, Mode, CONV1_FILTERS, CONV1_KERNEL, CONV2_FILTERS, CONV2_KERNEL, FLAT_LEN, HIDDEN,
    N_SPEECH_CLASSES,
};
use crate::emotion::SPEECH_EMOTIONS;
use crate::error::{Error, Result};

pub const CNN_MAGIC: &[u8; 8] = b"CLUECNN\0";
pub const CNN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnHeader {
    pub classes: Vec<String>,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub tensors: Vec<TensorInfo>,
}

fn tensor_shapes() -> Vec<(&'static str, Vec<usize>, bool)> {
    let t = CnnModel::TRAINABLE;
    let n = CnnModel::NON_TRAINABLE;
    vec![
        (t[0], vec![CONV1_KERNEL, 1, CONV1_FILTERS], true),
        (t[1], vec![CONV1_FILTERS], true),
        (t[2], vec![CONV1_FILTERS], true),
        (t[3], vec![CONV1_FILTERS], true),
        (t[4], vec![CONV2_KERNEL, CONV1_FILTERS, CONV2_FILTERS], true),
        (t[5], vec![CONV2_FILTERS], true),
        (t[6], vec![CONV2_FILTERS], true),
        (t[7], vec![CONV2_FILTERS], true),
        (t[8], vec![FLAT_LEN, HIDDEN], true),
        (t[9], vec![HIDDEN], true),
        (t[10], vec![HIDDEN, N_SPEECH_CLASSES], true),
        (t[11], vec![N_SPEECH_CLASSES], true),
        (n[0], vec![CONV1_FILTERS], false),
        (n[1], vec![CONV1_FILTERS], false),
        (n[2], vec![CONV2_FILTERS], false),
        (n[3], vec![CONV2_FILTERS], false),
    ]
}

fn header(model: &CnnModel) -> CnnHeader {
    CnnHeader {
        classes: SPEECH_EMOTIONS.iter().map(|s| s.to_string()).collect(),
        bn_momentum: model.bn1.momentum,
        bn_eps: model.bn1.eps,
        tensors: tensor_shapes()
            .into_iter()
            .map(|(name, shape, trainable)| TensorInfo {
                name: name.to_string(),
                shape,
                trainable,
            })
            .collect(),
    }
}

fn zeroed() -> CnnModel {
    let conv = |in_channels, out_channels, kernel| Conv1d {
        in_channels,
        out_channels,
        kernel,
        weight: vec![0.0; in_channels * out_channels * kernel],
        bias: vec![0.0; out_channels],
    };
    let dense = |inputs, outputs| Dense {
        inputs,
        outputs,
        weight: vec![0.0; inputs * outputs],
        bias: vec![0.0; outputs],
    };
    CnnModel {
        conv1: conv(1, CONV1_FILTERS, CONV1_KERNEL),
        bn1: BatchNorm::new(CONV1_FILTERS),
        conv2: conv(CONV1_FILTERS, CONV2_FILTERS, CONV2_KERNEL),
        bn2: BatchNorm::new(CONV2_FILTERS),
        dense1: dense(FLAT_LEN, HIDDEN),
        dense2: dense(HIDDEN, N_SPEECH_CLASSES),
        mode: Mode::Eval,
    }
}

impl CnnModel {
    /// All weights, biases and running statistics zero, BN scale one.
    pub fn zeroed() -> Self {
        zeroed()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&header(self)).expect("header serializes");
        let n_values = self.param_counts().total;
        let mut out = Vec::with_capacity(20 + header.len() + 8 * n_values);
        out.extend_from_slice(CNN_MAGIC);
        out.extend_from_slice(&CNN_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let tensors = self
            .trainable()
            .into_iter()
            .chain(self.non_trainable())
            .map(|(_, t)| t);
        for t in tensors {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::invalid(format!("speech model file: {m}"));
        if bytes.len() < 20 || &bytes[..8] != CNN_MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CNN_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: version,
                expected: CNN_FORMAT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body_start = 20usize
            .checked_add(header_len)
            .filter(|e| *e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: CnnHeader = serde_json::from_slice(&bytes[20..body_start])
            .map_err(|e| Error::json("speech model header", e))?;
        let mut model = zeroed();
        let expected = self::header(&model);
        if header.classes != expected.classes {
            return Err(bad("class order differs from the built-in speech classes"));
        }
        if header.tensors != expected.tensors {
            return Err(bad("tensor layout differs from the built-in architecture"));
        }
        if !(header.bn_momentum.is_finite() && header.bn_eps > 0.0) {
            return Err(bad("invalid batch-norm settings"));
        }
        for bn in [&mut model.bn1, &mut model.bn2] {
            bn.momentum = header.bn_momentum;
            bn.eps = header.bn_eps;
        }
        let mut data = bytes[body_start..].chunks_exact(8);
        if data.len() != model.param_counts().total || !data.remainder().is_empty() {
            return Err(bad("tensor data has the wrong length"));
        }
        let mut next = || {
            f64::from_le_bytes(
                data.next()
                    .expect("length checked")
                    .try_into()
                    .expect("8 bytes"),
            )
        };
        for t in model.trainable_mut() {
            t.iter_mut().for_each(|v| *v = next());
        }
        for t in model.non_trainable_mut() {
            t.iter_mut().for_each(|v| *v = next());
        }
        let all_finite = model
            .trainable()
            .into_iter()
            .chain(model.non_trainable())
            .all(|(_, t)| t.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::Numeric(
                "speech model contains non-finite values".into(),
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_bytes_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
