//! Checkpoint directories: `manifest.json` plus one little-endian f64 blob
//! per named tensor.
//!
//! The manifest records a SHA-256 over the model kind and every tensor's
//! name, shape and bytes. Loading checks the format version first, then
//! blob sizes, then the hash, and only then builds the model. A sequential
//! hybrid stores its frozen HMM as a nested checkpoint and refers to it by
//! that checkpoint's hash.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::continuous::ContinuousHmmLm;
use crate::error::{CheckpointError, Error, Result};
use crate::hmm::{ContinuousHmm, DiscreteHmm, HiddenMarkov};
use crate::hybrid::{HybridParams, JointHybridParams};
use crate::lstm::{LstmParams, ParamSet, Vocab};
use crate::numeric::DenseMatrix;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const FROZEN_HMM_DIR: &str = "frozen_hmm";

type Matrix = DenseMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lstm,
    DiscreteHmm,
    ContinuousHmm,
    SequentialHybrid,
    JointHybrid,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::Lstm => "lstm",
            ModelKind::DiscreteHmm => "discrete_hmm",
            ModelKind::ContinuousHmm => "continuous_hmm",
            ModelKind::SequentialHybrid => "sequential_hybrid",
            ModelKind::JointHybrid => "joint_hybrid",
        };
        f.write_str(s)
    }
}

/// Any model the harness trains.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Lstm(LstmParams<f64>),
    DiscreteHmm(DiscreteHmm),
    ContinuousHmm(Box<ContinuousHmmLm>),
    SequentialHybrid {
        params: HybridParams<f64>,
        hmm: DiscreteHmm,
    },
    JointHybrid(JointHybridParams<f64>),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Lstm(_) => ModelKind::Lstm,
            TrainedModel::DiscreteHmm(_) => ModelKind::DiscreteHmm,
            TrainedModel::ContinuousHmm(_) => ModelKind::ContinuousHmm,
            TrainedModel::SequentialHybrid { .. } => ModelKind::SequentialHybrid,
            TrainedModel::JointHybrid(_) => ModelKind::JointHybrid,
        }
    }

    fn dims(&self) -> Dims {
        match self {
            TrainedModel::Lstm(p) => {
                Dims::lstm(p.vocab_size(), p.hidden_dim(), p.core.num_layers())
            }
            TrainedModel::DiscreteHmm(h) => Dims {
                vocab_size: h.vocab_size(),
                n_hmm: Some(h.n_states()),
                ..Dims::default()
            },
            TrainedModel::ContinuousHmm(m) => Dims {
                n_hmm: Some(m.n_states()),
                obs_dim: Some(m.hmm.dim()),
                ..Dims::lstm(
                    m.lstm.vocab_size(),
                    m.lstm.hidden_dim(),
                    m.lstm.core.num_layers(),
                )
            },
            TrainedModel::SequentialHybrid { params, .. } => Dims {
                n_hmm: Some(params.n_hmm),
                ..Dims::lstm(
                    params.vocab_size(),
                    params.hidden_dim(),
                    params.core.num_layers(),
                )
            },
            TrainedModel::JointHybrid(p) => Dims {
                n_hmm: Some(p.n_hmm()),
                ..Dims::lstm(p.vocab_size(), p.hidden_dim(), p.core.num_layers())
            },
        }
    }

    fn tensors(&self) -> Vec<Tensor> {
        match self {
            TrainedModel::Lstm(p) => param_tensors("", p, lstm_shapes(p)),
            TrainedModel::DiscreteHmm(h) => discrete_hmm_tensors(h),
            TrainedModel::ContinuousHmm(m) => {
                let mut out = param_tensors("lstm.", &m.lstm, lstm_shapes(&m.lstm));
                out.push(Tensor::matrix("hmm.transitions", m.hmm.transitions()));
                out.push(Tensor::vector("hmm.initial", m.hmm.initial()));
                out.push(Tensor::matrix("hmm.means", m.hmm.means()));
                for (i, c) in m.hmm.covariances().iter().enumerate() {
                    out.push(Tensor::matrix(&format!("hmm.cov{i}"), c));
                }
                out.push(Tensor::matrix("char_emissions", &m.char_emissions));
                out
            }
            TrainedModel::SequentialHybrid { params, .. } => {
                let mut shapes = params.core.tensor_shapes();
                shapes.push(vec![params.output.outputs(), params.output.inputs()]);
                shapes.push(vec![params.output.outputs()]);
                param_tensors("", params, shapes)
            }
            TrainedModel::JointHybrid(p) => {
                let (n, v) = (p.n_hmm(), p.vocab_size());
                let mut shapes = p.core.tensor_shapes();
                shapes.push(vec![p.output.outputs(), p.output.inputs()]);
                shapes.push(vec![p.output.outputs()]);
                shapes.extend([vec![n, n], vec![n, v], vec![n]]);
                param_tensors("", p, shapes)
            }
        }
    }
}

/// Trainable scalars in the implemented architecture. HMMs count free
/// simplex coordinates; networks count every weight and bias.
pub fn count_parameters(model: &TrainedModel) -> usize {
    let simplex = |rows: usize, cols: usize| rows * cols.saturating_sub(1);
    match model {
        TrainedModel::Lstm(p) => p.num_scalars(),
        TrainedModel::DiscreteHmm(h) => {
            simplex(h.n_states(), h.n_states()) + simplex(h.n_states(), h.vocab_size())
        }
        TrainedModel::ContinuousHmm(m) => {
            let (n, d) = (m.n_states(), m.hmm.dim());
            simplex(n, n) + n * (d + d * (d + 1) / 2) + simplex(n, m.char_emissions.cols())
        }
        TrainedModel::SequentialHybrid { params, .. } => params.num_scalars(),
        TrainedModel::JointHybrid(p) => p.num_scalars(),
    }
}

/// A model with the vocabulary it was trained on and the configuration
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: TrainedModel,
    pub vocab: Vocab,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_hmm: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs_dim: Option<usize>,
}

impl Dims {
    fn lstm(vocab_size: usize, hidden: usize, layers: usize) -> Self {
        Self {
            vocab_size,
            hidden_dim: Some(hidden),
            layers: Some(layers),
            ..Self::default()
        }
    }

    fn need(v: Option<usize>, what: &str) -> Result<usize> {
        v.ok_or_else(|| CheckpointError::Malformed(format!("manifest dims lack `{what}`")).into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
    pub offset: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenRef {
    pub dir: String,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: ModelKind,
    pub config: serde_json::Value,
    pub vocab: Vec<char>,
    pub dims: Dims,
    pub tensors: Vec<TensorEntry>,
    pub content_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_hmm: Option<FrozenRef>,
}

struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    fn matrix(name: &str, m: &Matrix) -> Self {
        Self {
            name: name.to_string(),
            shape: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        }
    }

    fn vector(name: &str, v: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            shape: vec![v.len()],
            data: v.to_vec(),
        }
    }
}

fn lstm_shapes(p: &LstmParams<f64>) -> Vec<Vec<usize>> {
    let mut shapes = p.core.tensor_shapes();
    shapes.push(vec![p.output.outputs(), p.output.inputs()]);
    shapes.push(vec![p.output.outputs()]);
    shapes
}

fn param_tensors<P: ParamSet<f64>>(prefix: &str, p: &P, shapes: Vec<Vec<usize>>) -> Vec<Tensor> {
    p.tensors()
        .into_iter()
        .zip(shapes)
        .map(|((name, data), shape)| {
            debug_assert_eq!(shape.iter().product::<usize>(), data.len());
            Tensor {
                name: format!("{prefix}{name}"),
                shape,
                data: data.to_vec(),
            }
        })
        .collect()
}

fn discrete_hmm_tensors(h: &DiscreteHmm) -> Vec<Tensor> {
    vec![
        Tensor::matrix("transitions", h.transitions()),
        Tensor::matrix("emissions", h.emissions()),
        Tensor::vector("initial", h.initial()),
    ]
}

fn content_hash(kind: ModelKind, tensors: &[(&str, &[usize], &[u8])]) -> String {
    let mut h = Sha256::new();
    h.update(kind.to_string().as_bytes());
    for (name, shape, bytes) in tensors {
        h.update([0u8]);
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update((shape.len() as u64).to_le_bytes());
        for &d in *shape {
            h.update((d as u64).to_le_bytes());
        }
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

fn to_le_bytes(data: &[f64]) -> Vec<u8> {
    data.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn blob_file_name(name: &str) -> String {
    format!(
        "{}.bin",
        name.replace(
            |c: char| !c.is_ascii_alphanumeric() && c != '.' && c != '_',
            "_"
        )
    )
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `ckpt` into `dir` (created if missing) and returns its content hash.
pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<String> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let kind = ckpt.model.kind();
    let frozen_hmm = match &ckpt.model {
        TrainedModel::SequentialHybrid { hmm, .. } => {
            let sub = Checkpoint {
                model: TrainedModel::DiscreteHmm(hmm.clone()),
                vocab: ckpt.vocab.clone(),
                config: serde_json::Value::Null,
            };
            let content_hash = save_checkpoint(&sub, &dir.join(FROZEN_HMM_DIR))?;
            Some(FrozenRef {
                dir: FROZEN_HMM_DIR.to_string(),
                content_hash,
            })
        }
        _ => None,
    };
    let tensors = ckpt.model.tensors();
    let blobs: Vec<Vec<u8>> = tensors.iter().map(|t| to_le_bytes(&t.data)).collect();
    let mut entries = Vec::with_capacity(tensors.len());
    for (t, bytes) in tensors.iter().zip(&blobs) {
        let file = blob_file_name(&t.name);
        write_file(&dir.join(&file), bytes)?;
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            file,
            offset: 0,
            bytes: bytes.len() as u64,
        });
    }
    let hash_input: Vec<(&str, &[usize], &[u8])> = tensors
        .iter()
        .zip(&blobs)
        .map(|(t, b)| (t.name.as_str(), t.shape.as_slice(), b.as_slice()))
        .collect();
    let content_hash = content_hash(kind, &hash_input);
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind,
        config: ckpt.config.clone(),
        vocab: ckpt.vocab.chars().to_vec(),
        dims: ckpt.model.dims(),
        tensors: entries,
        content_hash: content_hash.clone(),
        frozen_hmm,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_FILE), &json)?;
    Ok(content_hash)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let raw = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_slice(&raw)
        .map_err(|e| CheckpointError::Malformed(format!("{}: {e}", path.display())))?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| CheckpointError::Malformed("manifest has no format_version".into()))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(CheckpointError::VersionMismatch {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        }
        .into());
    }
    serde_json::from_value(value)
        .map_err(|e| CheckpointError::Malformed(format!("{}: {e}", path.display())).into())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest = read_manifest(dir)?;
    let mut raw: Vec<Vec<u8>> = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let elems: usize = e.shape.iter().product();
        if e.bytes != (elems * 8) as u64 {
            return Err(CheckpointError::Malformed(format!(
                "tensor `{}` declares {} bytes for shape {:?}",
                e.name, e.bytes, e.shape
            ))
            .into());
        }
        if e.file.contains('/') || e.file.contains('\\') || e.file.starts_with("..") {
            return Err(CheckpointError::Malformed(format!(
                "blob path `{}` leaves the checkpoint",
                e.file
            ))
            .into());
        }
        let path = dir.join(&e.file);
        let bytes = std::fs::read(&path).map_err(|err| Error::io(&path, err))?;
        let start = e.offset as usize;
        let end = start + e.bytes as usize;
        if bytes.len() < end {
            return Err(CheckpointError::Truncated {
                name: e.name.clone(),
                expected: e.bytes as usize,
                actual: bytes.len().saturating_sub(start),
            }
            .into());
        }
        raw.push(bytes[start..end].to_vec());
    }
    let hash_input: Vec<(&str, &[usize], &[u8])> = manifest
        .tensors
        .iter()
        .zip(&raw)
        .map(|(e, b)| (e.name.as_str(), e.shape.as_slice(), b.as_slice()))
        .collect();
    let actual = content_hash(manifest.kind, &hash_input);
    if actual != manifest.content_hash {
        return Err(CheckpointError::HashMismatch {
            expected: manifest.content_hash.clone(),
            actual,
        }
        .into());
    }
    let mut tensors: HashMap<String, (Vec<usize>, Vec<f64>)> = manifest
        .tensors
        .iter()
        .zip(raw)
        .map(|(e, bytes)| {
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            (e.name.clone(), (e.shape.clone(), data))
        })
        .collect();

    let vocab = Vocab::from(manifest.vocab.clone());
    if vocab.len() != manifest.dims.vocab_size {
        return Err(
            CheckpointError::Malformed("vocabulary size disagrees with dims".into()).into(),
        );
    }
    let model = build_model(&manifest, &mut tensors, dir)?;
    Ok(Checkpoint {
        model,
        vocab,
        config: manifest.config,
    })
}

/// Loads a checkpoint and checks it holds the expected kind of model.
pub fn load_checkpoint_of(dir: &Path, expected: ModelKind) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(dir)?;
    if ckpt.model.kind() != expected {
        return Err(CheckpointError::WrongKind {
            found: ckpt.model.kind().to_string(),
            expected: expected.to_string(),
        }
        .into());
    }
    Ok(ckpt)
}

type TensorMap = HashMap<String, (Vec<usize>, Vec<f64>)>;

fn take(tensors: &mut TensorMap, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
    let (found, data) = tensors
        .remove(name)
        .ok_or_else(|| CheckpointError::Malformed(format!("missing tensor `{name}`")))?;
    if found != shape {
        return Err(CheckpointError::Malformed(format!(
            "tensor `{name}` has shape {found:?}, expected {shape:?}"
        ))
        .into());
    }
    Ok(data)
}

fn take_matrix(tensors: &mut TensorMap, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
    let data = take(tensors, name, &[rows, cols])?;
    Matrix::from_vec(rows, cols, data)
}

fn fill_params<P: ParamSet<f64>>(
    p: &mut P,
    prefix: &str,
    shapes: Vec<Vec<usize>>,
    tensors: &mut TensorMap,
) -> Result<()> {
    let names: Vec<String> = p
        .tensors()
        .into_iter()
        .map(|(n, _)| format!("{prefix}{n}"))
        .collect();
    for ((slot, name), shape) in p.tensors_mut().into_iter().zip(&names).zip(&shapes) {
        let data = take(tensors, name, shape)?;
        slot.copy_from_slice(&data);
    }
    Ok(())
}

fn build_model(manifest: &Manifest, tensors: &mut TensorMap, dir: &Path) -> Result<TrainedModel> {
    let d = &manifest.dims;
    let v = d.vocab_size;
    let model = match manifest.kind {
        ModelKind::Lstm => {
            let mut p = LstmParams::zeros(
                v,
                Dims::need(d.hidden_dim, "hidden_dim")?,
                Dims::need(d.layers, "layers")?,
            );
            let shapes = lstm_shapes(&p);
            fill_params(&mut p, "", shapes, tensors)?;
            TrainedModel::Lstm(p)
        }
        ModelKind::DiscreteHmm => {
            let n = Dims::need(d.n_hmm, "n_hmm")?;
            let t = take_matrix(tensors, "transitions", n, n)?;
            let e = take_matrix(tensors, "emissions", n, v)?;
            let pi = take(tensors, "initial", &[n])?;
            TrainedModel::DiscreteHmm(DiscreteHmm::new(t, e, pi)?)
        }
        ModelKind::ContinuousHmm => {
            let n = Dims::need(d.n_hmm, "n_hmm")?;
            let dim = Dims::need(d.obs_dim, "obs_dim")?;
            let mut lstm = LstmParams::zeros(
                v,
                Dims::need(d.hidden_dim, "hidden_dim")?,
                Dims::need(d.layers, "layers")?,
            );
            let shapes = lstm_shapes(&lstm);
            fill_params(&mut lstm, "lstm.", shapes, tensors)?;
            let t = take_matrix(tensors, "hmm.transitions", n, n)?;
            let pi = take(tensors, "hmm.initial", &[n])?;
            let means = take_matrix(tensors, "hmm.means", n, dim)?;
            let covs = (0..n)
                .map(|i| take_matrix(tensors, &format!("hmm.cov{i}"), dim, dim))
                .collect::<Result<Vec<_>>>()?;
            let char_emissions = take_matrix(tensors, "char_emissions", n, v)?;
            TrainedModel::ContinuousHmm(Box::new(ContinuousHmmLm {
                lstm,
                hmm: ContinuousHmm::new(t, pi, means, covs)?,
                char_emissions,
            }))
        }
        ModelKind::SequentialHybrid => {
            let n = Dims::need(d.n_hmm, "n_hmm")?;
            let h = Dims::need(d.hidden_dim, "hidden_dim")?;
            let mut p = HybridParams::zeros(v, h, Dims::need(d.layers, "layers")?, n);
            let mut shapes = p.core.tensor_shapes();
            shapes.push(vec![v, h + n]);
            shapes.push(vec![v]);
            fill_params(&mut p, "", shapes, tensors)?;
            let frozen = manifest.frozen_hmm.as_ref().ok_or_else(|| {
                CheckpointError::Malformed(
                    "sequential hybrid without a frozen HMM reference".into(),
                )
            })?;
            let sub_dir = dir.join(&frozen.dir);
            let sub_manifest = read_manifest(&sub_dir)?;
            if sub_manifest.content_hash != frozen.content_hash {
                return Err(CheckpointError::HashMismatch {
                    expected: frozen.content_hash.clone(),
                    actual: sub_manifest.content_hash,
                }
                .into());
            }
            let hmm = match load_checkpoint_of(&sub_dir, ModelKind::DiscreteHmm)?.model {
                TrainedModel::DiscreteHmm(h) => h,
                _ => unreachable!("kind checked"),
            };
            if hmm.n_states() != n {
                return Err(CheckpointError::Malformed(
                    "frozen HMM state count differs from the hybrid's".into(),
                )
                .into());
            }
            TrainedModel::SequentialHybrid { params: p, hmm }
        }
        ModelKind::JointHybrid => {
            let n = Dims::need(d.n_hmm, "n_hmm")?;
            let h = Dims::need(d.hidden_dim, "hidden_dim")?;
            let mut p = JointHybridParams::zeros(v, h, Dims::need(d.layers, "layers")?, n);
            let mut shapes = p.core.tensor_shapes();
            shapes.push(vec![v, h + n]);
            shapes.push(vec![v]);
            shapes.extend([vec![n, n], vec![n, v], vec![n]]);
            fill_params(&mut p, "", shapes, tensors)?;
            TrainedModel::JointHybrid(p)
        }
    };
    if let Some(extra) = tensors.keys().next() {
        return Err(CheckpointError::Malformed(format!("unexpected tensor `{extra}`")).into());
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{LstmConfig, Vocab};
    use crate::numeric::RandomSource;

    fn lstm_ckpt() -> Checkpoint {
        let vocab = Vocab::from_text("abcdefg");
        let p = LstmParams::init(
            vocab.len(),
            &LstmConfig::with_hidden(4),
            &mut RandomSource::new(3),
        );
        Checkpoint {
            model: TrainedModel::Lstm(p),
            vocab,
            config: serde_json::json!({"note": "test"}),
        }
    }

    fn bits(m: &TrainedModel) -> Vec<u64> {
        m.tensors()
            .iter()
            .flat_map(|t| t.data.iter().map(|x| x.to_bits()))
            .collect()
    }

    #[test]
    fn lstm_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = lstm_ckpt();
        save_checkpoint(&ckpt, dir.path()).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(bits(&back.model), bits(&ckpt.model));
        assert_eq!(back, ckpt);
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&lstm_ckpt(), dir.path()).unwrap();
        let blob = dir.path().join("output.w.bin");
        let mut bytes = std::fs::read(&blob).unwrap();
        bytes[3] ^= 0x40;
        std::fs::write(&blob, &bytes).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(
            matches!(err, Error::Checkpoint(CheckpointError::HashMismatch { .. })),
            "{err}"
        );

        bytes.truncate(bytes.len() - 8);
        std::fs::write(&blob, &bytes).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(
            matches!(err, Error::Checkpoint(CheckpointError::Truncated { .. })),
            "{err}"
        );
    }

    #[test]
    fn version_bump_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&lstm_ckpt(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut m: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        m["format_version"] = serde_json::json!(FORMAT_VERSION + 1);
        std::fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Checkpoint(CheckpointError::VersionMismatch { .. })
            ),
            "{err}"
        );
    }

    #[test]
    fn wrong_kind_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&lstm_ckpt(), dir.path()).unwrap();
        let err = load_checkpoint_of(dir.path(), ModelKind::JointHybrid).unwrap_err();
        assert!(matches!(
            err,
            Error::Checkpoint(CheckpointError::WrongKind { .. })
        ));
    }

    #[test]
    fn hybrid_references_frozen_hmm() {
        let vocab = Vocab::from_text("abc");
        let hmm = DiscreteHmm::new(
            Matrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap(),
            Matrix::from_rows(&[vec![0.5, 0.25, 0.25], vec![0.1, 0.1, 0.8]]).unwrap(),
            vec![0.5, 0.5],
        )
        .unwrap();
        let params =
            HybridParams::init(3, 2, &LstmConfig::with_hidden(2), &mut RandomSource::new(1));
        let ckpt = Checkpoint {
            model: TrainedModel::SequentialHybrid { params, hmm },
            vocab,
            config: serde_json::Value::Null,
        };
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&ckpt, dir.path()).unwrap();
        let manifest = read_manifest(dir.path()).unwrap();
        assert_eq!(manifest.kind, ModelKind::SequentialHybrid);
        let frozen = manifest.frozen_hmm.unwrap();
        assert_eq!(
            read_manifest(&dir.path().join(&frozen.dir))
                .unwrap()
                .content_hash,
            frozen.content_hash
        );
        assert_eq!(load_checkpoint(dir.path()).unwrap(), ckpt);

        // a different HMM swapped in under the same directory is refused
        let other = Checkpoint {
            model: TrainedModel::DiscreteHmm(
                DiscreteHmm::new(
                    Matrix::identity(2),
                    Matrix::filled(2, 3, 1.0 / 3.0),
                    vec![1.0, 0.0],
                )
                .unwrap(),
            ),
            vocab: Vocab::from_text("abc"),
            config: serde_json::Value::Null,
        };
        save_checkpoint(&other, &dir.path().join(&frozen.dir)).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(matches!(
            err,
            Error::Checkpoint(CheckpointError::HashMismatch { .. })
        ));
    }

    #[test]
    fn parameter_counts() {
        let p = LstmParams::<f64>::zeros(65, 5, 1);
        assert_eq!(count_parameters(&TrainedModel::Lstm(p.clone())), 935);
        let h = HybridParams::from_lstm(p.clone(), 10);
        let hmm = DiscreteHmm::new(
            Matrix::filled(10, 10, 0.1),
            Matrix::filled(10, 65, 1.0 / 65.0),
            vec![0.1; 10],
        )
        .unwrap();
        assert_eq!(
            count_parameters(&TrainedModel::SequentialHybrid {
                params: h,
                hmm: hmm.clone()
            }),
            935 + 650
        );
        assert_eq!(count_parameters(&TrainedModel::DiscreteHmm(hmm)), 730);
        let j = JointHybridParams::<f64>::zeros(65, 5, 1, 10);
        assert_eq!(
            count_parameters(&TrainedModel::JointHybrid(j)),
            935 + 650 + 100 + 650 + 10
        );
    }
}
