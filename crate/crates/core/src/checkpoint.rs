//! Parameter and mask snapshots: a JSON manifest next to a little-endian
//! f64 blob.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Owner, ParamStore};
use crate::error::{Error, Result};
use crate::masks::MaskSet;
use crate::scalar::Scalar;
use crate::sparse::SparsePattern;
use crate::trainer::TrainConfig;

pub const MANIFEST: &str = "checkpoint.json";
pub const BLOB: &str = "checkpoint.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub owner: Option<Owner>,
    pub shape: (usize, usize),
    /// Offset in f64 values from the start of the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: TrainConfig,
    pub num_nodes: usize,
    pub tensors: Vec<TensorEntry>,
}

pub struct Checkpoint<S> {
    pub config: TrainConfig,
    pub store: ParamStore<S>,
    pub feature_mask: Array2<S>,
    pub structure: Vec<S>,
    pub negative: Vec<S>,
}

impl<S: Scalar> Checkpoint<S> {
    /// Rebinds the stored masks to a k-hop pattern rebuilt from the graph.
    pub fn mask_set(&self, khop: Arc<SparsePattern>) -> Result<MaskSet<S>> {
        MaskSet::new(
            self.feature_mask.clone(),
            self.structure.clone(),
            self.negative.clone(),
            khop,
        )
    }
}

struct Writer {
    blob: Vec<u8>,
    tensors: Vec<TensorEntry>,
    offset: usize,
}

impl Writer {
    fn push<'a, S: Scalar>(
        &mut self,
        name: &str,
        owner: Option<Owner>,
        shape: (usize, usize),
        values: impl Iterator<Item = &'a S>,
    ) {
        let start = self.offset;
        for v in values {
            self.blob.extend_from_slice(&v.as_f64().to_le_bytes());
            self.offset += 1;
        }
        debug_assert_eq!(self.offset - start, shape.0 * shape.1);
        self.tensors.push(TensorEntry {
            name: name.into(),
            owner,
            shape,
            offset: start,
        });
    }
}

pub fn save<S: Scalar>(
    dir: &Path,
    config: &TrainConfig,
    store: &ParamStore<S>,
    masks: &MaskSet<S>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = Writer {
        blob: Vec::new(),
        tensors: Vec::new(),
        offset: 0,
    };
    for p in store.iter() {
        w.push(&p.name, Some(p.owner), p.value.dim(), p.value.iter());
    }
    w.push(
        "masks.feature",
        None,
        masks.feature.dim(),
        masks.feature.iter(),
    );
    w.push(
        "masks.structure",
        None,
        (masks.structure.len(), 1),
        masks.structure.iter(),
    );
    w.push(
        "masks.negative",
        None,
        (masks.negative.len(), 1),
        masks.negative.iter(),
    );
    let manifest = Manifest {
        config: config.clone(),
        num_nodes: masks.feature.nrows(),
        tensors: w.tensors,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(BLOB);
    fs::write(&path, w.blob).map_err(|e| Error::io(&path, e))
}

pub fn load<S: Scalar>(dir: &Path) -> Result<Checkpoint<S>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })?;
    let path = dir.join(BLOB);
    let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let tensor = |t: &TensorEntry| -> Result<Array2<S>> {
        let (r, c) = t.shape;
        let data = values.get(t.offset..t.offset + r * c).ok_or_else(|| {
            Error::InvalidArgument(format!("checkpoint blob too short for `{}`", t.name))
        })?;
        Ok(
            Array2::from_shape_vec((r, c), data.iter().map(|&v| S::of(v)).collect())
                .expect("shape checked"),
        )
    };
    let mut store = ParamStore::new();
    let mut feature_mask = None;
    let mut structure = None;
    let mut negative = None;
    for t in &manifest.tensors {
        let value = tensor(t)?;
        match (t.name.as_str(), t.owner) {
            ("masks.feature", None) => feature_mask = Some(value),
            ("masks.structure", None) => structure = Some(value.into_iter().collect()),
            ("masks.negative", None) => negative = Some(value.into_iter().collect()),
            (name, Some(owner)) => {
                store.add(name, owner, value)?;
            }
            (name, None) => {
                return Err(Error::InvalidArgument(format!(
                    "unknown checkpoint tensor `{name}`"
                )))
            }
        }
    }
    let missing = |what: &str| Error::InvalidArgument(format!("checkpoint lacks {what}"));
    Ok(Checkpoint {
        config: manifest.config,
        store,
        feature_mask: feature_mask.ok_or_else(|| missing("masks.feature"))?,
        structure: structure.ok_or_else(|| missing("masks.structure"))?,
        negative: negative.ok_or_else(|| missing("masks.negative"))?,
    })
}
