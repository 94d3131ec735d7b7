//! Parameter checkpoints.
//!
//! Layout: `"AMCP"`, `u16` version, `u32` header length, JSON header, then
//! the tensors as consecutive little-endian `f32` arrays. The header lists
//! each tensor's name, shape and byte offset from the start of the payload,
//! plus run metadata. Resumable checkpoints also carry optimizer moments
//! (`adam.m/<param>`, `adam.v/<param>`) and the best network so far
//! (`best/<param>`).

use std::collections::BTreeSet;
use std::path::Path;

use fidel_core::train::{EarlyStopping, Optimizer, OptimizerKind};
use fidel_core::{AlphabetGrid, ModelConfig, Network, Tensor, TrainConfig, TrainState};
use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, Error, Result};
use crate::framing;

pub const MAGIC: &[u8; 4] = b"AMCP";
pub const VERSION: u16 = 1;
const WHAT: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    /// Completed epochs.
    pub epoch: usize,
    pub optimizer_step: u64,
    pub stopping: Option<EarlyStopping>,
    /// Text of the grid file the model was built for.
    pub grid: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dtype: String,
    tensors: Vec<TensorEntry>,
    meta: CheckpointMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

const BEST: &str = "best/";
const ADAM_M: &str = "adam.m/";
const ADAM_V: &str = "adam.v/";

impl Checkpoint {
    pub fn from_network(network: &Network<f32>, meta: CheckpointMeta) -> Self {
        let tensors = network.params().iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        Self { meta, tensors }
    }

    /// Everything needed to continue training bit-identically.
    pub fn from_state(state: &TrainState<f32>, grid: &AlphabetGrid) -> Self {
        let mut tensors: Vec<(String, Tensor<f32>)> = Vec::new();
        let params = state.network.params();
        tensors.extend(params.iter().map(|p| (p.name.clone(), p.value.clone())));
        tensors.extend(state.best.params().iter().map(|p| (format!("{BEST}{}", p.name), p.value.clone())));
        for (p, (m, v)) in params.iter().zip(&state.optimizer.moments) {
            tensors.push((format!("{ADAM_M}{}", p.name), m.clone()));
            tensors.push((format!("{ADAM_V}{}", p.name), v.clone()));
        }
        Self {
            meta: CheckpointMeta {
                model: state.network.config().clone(),
                train: Some(state.config.clone()),
                epoch: state.epoch,
                optimizer_step: state.optimizer.step,
                stopping: Some(state.stopping),
                grid: Some(grid.to_file_string()),
            },
            tensors,
        }
    }

    fn take(&self, prefix: &str) -> Vec<(String, Tensor<f32>)> {
        self.tensors
            .iter()
            .filter_map(|(n, t)| {
                let rest = n.strip_prefix(prefix)?;
                (!prefix.is_empty() || !rest.contains('/')).then(|| (rest.to_string(), t.clone()))
            })
            .collect()
    }

    /// The model parameters (unprefixed tensors).
    pub fn network(&self) -> Result<Network<f32>> {
        Ok(Network::from_tensors(&self.meta.model, self.take(""))?)
    }

    pub fn grid(&self) -> Result<Option<AlphabetGrid>> {
        self.meta.grid.as_deref().map(fidel_core::grid::load_grid).transpose().map_err(Into::into)
    }

    pub fn into_state(self) -> Result<TrainState<f32>> {
        let config = self
            .meta
            .train
            .clone()
            .ok_or_else(|| Error::Usage("checkpoint holds no training state".into()))?;
        let network = self.network()?;
        let best = Network::from_tensors(&self.meta.model, self.take(BEST))?;
        let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, network.params());
        optimizer.step = self.meta.optimizer_step;
        if config.optimizer == OptimizerKind::Adam {
            let m = self.take(ADAM_M);
            let v = self.take(ADAM_V);
            if m.len() != network.params().len() || v.len() != network.params().len() {
                return Err(Error::Usage("checkpoint is missing optimizer moments".into()));
            }
            for ((p, slot), (mm, vv)) in network.params().iter().zip(&mut optimizer.moments).zip(m.into_iter().zip(v)) {
                if mm.0 != p.name || vv.0 != p.name || mm.1.shape() != p.value.shape() || vv.1.shape() != p.value.shape() {
                    return Err(Error::Usage(format!("optimizer moments do not match parameter {}", p.name)));
                }
                *slot = (mm.1, vv.1);
            }
        }
        let stopping = self
            .meta
            .stopping
            .unwrap_or_else(|| EarlyStopping::new(config.early_stop_patience, config.early_stop_min_delta));
        Ok(TrainState {
            config,
            network,
            optimizer,
            stopping,
            best,
            epoch: self.meta.epoch,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset: payload.len() as u64,
            });
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            dtype: "f32".into(),
            tensors: entries,
            meta: self.meta.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        framing::encode(MAGIC, VERSION, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let frame = framing::decode(bytes, MAGIC, VERSION, WHAT)?;
        let header: Header = framing::parse_header(frame.header, WHAT)?;
        if header.dtype != "f32" {
            return Err(Error::format(WHAT, framing::PRELUDE as u64, format!("unsupported dtype {:?}", header.dtype)));
        }
        let mut seen = BTreeSet::new();
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            if !seen.insert(e.name.clone()) {
                return Err(Error::format(WHAT, framing::PRELUDE as u64, format!("duplicate tensor {:?}", e.name)));
            }
            let count = e.shape.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64));
            let len = count.and_then(|c| c.checked_mul(4)).ok_or_else(|| {
                Error::format(WHAT, framing::PRELUDE as u64, format!("shape {:?} of {:?} overflows", e.shape, e.name))
            })?;
            let raw = framing::slice(&frame, e.offset, len, WHAT, &e.name)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push((e.name, Tensor::new(&e.shape, data)?));
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}
