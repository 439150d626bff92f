//! Checkpoints as a directory: one raw-tensor file per array plus a JSON
//! manifest carrying the config, noise-generator position and a SHA-256 of
//! every file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Adam, AdamHyper, ModelKind, StepRecord, TrainConfig, TrainState};
use crate::data::rawtensor::{RawTensor, TensorReader};
use crate::error::{Error, Result};
use crate::nets::{ArchConfig, ParamSet};

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const HISTORY: &str = "history.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    model_kind: ModelKind,
    k: usize,
    step: u64,
    config: TrainConfig,
    rng: RngState,
    optimizers: BTreeMap<String, OptimState>,
    arrays: Vec<ArrayEntry>,
    history: FileEntry,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RngState {
    seed: String,
    stream: u64,
    word_pos: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimState {
    hyper: AdamHyper,
    t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Role {
    Param,
    AdamM,
    AdamV,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayEntry {
    group: String,
    role: Role,
    name: String,
    #[serde(flatten)]
    file: FileEntry,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileEntry {
    file: String,
    sha256: String,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(dir: &Path, file: &str, bytes: &[u8]) -> Result<FileEntry> {
    let path = dir.join(file);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(FileEntry {
        file: file.to_string(),
        sha256: digest(bytes),
    })
}

fn read_verified(dir: &Path, entry: &FileEntry) -> Result<Vec<u8>> {
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if digest(&bytes) != entry.sha256 {
        return Err(Error::Integrity(format!(
            "checksum mismatch for {}",
            path.display()
        )));
    }
    Ok(bytes)
}

fn role_tag(role: Role) -> &'static str {
    match role {
        Role::Param => "param",
        Role::AdamM => "adam_m",
        Role::AdamV => "adam_v",
    }
}

/// Write `state` into directory `dir`, creating it if needed.
pub fn checkpoint(state: &TrainState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut arrays = Vec::new();
    for (group, params) in &state.params {
        let adam = &state.optim[group];
        for (role, set) in [(Role::Param, params), (Role::AdamM, &adam.m), (Role::AdamV, &adam.v)] {
            for (name, a) in set.iter() {
                let t = RawTensor::f64(a.shape().to_vec(), a.iter().copied().collect())?;
                let file = format!("{}.{group}.{name}.sslt", role_tag(role));
                arrays.push(ArrayEntry {
                    group: group.clone(),
                    role,
                    name: name.clone(),
                    file: write_file(dir, &file, &t.encode()?)?,
                });
            }
        }
    }
    let history = write_file(dir, HISTORY, &serde_json::to_vec(&state.history)?)?;
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        model_kind: state.config.model_kind,
        k: state.k,
        step: state.step,
        config: state.config.clone(),
        rng: RngState {
            seed: hex::encode(state.rng.get_seed()),
            stream: state.rng.get_stream(),
            word_pos: state.rng.get_word_pos().to_string(),
        },
        optimizers: state
            .optim
            .iter()
            .map(|(g, a)| (g.clone(), OptimState { hyper: a.hyper, t: a.t }))
            .collect(),
        arrays,
        history,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Integrity(format!("unreadable checkpoint manifest: {e}")))?;
    if m.version != CHECKPOINT_VERSION {
        return Err(Error::Integrity(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            m.version
        )));
    }
    if m.model_kind != m.config.model_kind {
        return Err(Error::Integrity("manifest model kind disagrees with its config".into()));
    }
    Ok(m)
}

/// Load a checkpoint written by [`checkpoint`].
pub fn restore(dir: &Path) -> Result<TrainState> {
    build(dir, read_manifest(dir)?)
}

/// Like [`restore`], but the checkpoint must have been trained with `arch`.
pub fn restore_for(dir: &Path, arch: &ArchConfig) -> Result<TrainState> {
    let m = read_manifest(dir)?;
    if &m.config.arch != arch {
        return Err(Error::Integrity(
            "checkpoint architecture does not match the requested architecture".into(),
        ));
    }
    build(dir, m)
}

fn build(dir: &Path, m: Manifest) -> Result<TrainState> {
    let integrity = |e: Error| Error::Integrity(format!("checkpoint does not fit its config: {e}"));
    let fresh = TrainState::new(m.config.clone(), m.k).map_err(integrity)?;
    let mut loaded: BTreeMap<(String, Role), ParamSet> = BTreeMap::new();
    for e in &m.arrays {
        let bytes = read_verified(dir, &e.file)?;
        let path = dir.join(&e.file.file);
        let mut r = TensorReader::new(&bytes, &path);
        let t = r.read_tensor()?;
        if !r.at_end() {
            return Err(Error::Integrity(format!("trailing data in {}", path.display())));
        }
        let a = ndarray::ArrayD::from_shape_vec(t.shape.clone(), t.to_f64())
            .map_err(|err| Error::Integrity(format!("{}: {err}", path.display())))?;
        loaded
            .entry((e.group.clone(), e.role))
            .or_default()
            .insert(e.name.clone(), a);
    }
    let mut params = BTreeMap::new();
    let mut optim = BTreeMap::new();
    for (group, expect) in &fresh.params {
        let mut take = |role: Role| -> Result<ParamSet> {
            let p = loaded.remove(&(group.clone(), role)).unwrap_or_default();
            if p.shapes() != expect.shapes() {
                return Err(Error::Integrity(format!(
                    "{group} arrays ({}) do not match the architecture",
                    role_tag(role)
                )));
            }
            Ok(p)
        };
        let p = take(Role::Param)?;
        let mm = take(Role::AdamM)?;
        let vv = take(Role::AdamV)?;
        let os = m
            .optimizers
            .get(group)
            .ok_or_else(|| Error::Integrity(format!("no optimizer state for {group}")))?;
        params.insert(group.clone(), p);
        optim.insert(
            group.clone(),
            Adam {
                hyper: os.hyper,
                t: os.t,
                m: mm,
                v: vv,
            },
        );
    }
    if !loaded.is_empty() {
        return Err(Error::Integrity("checkpoint holds arrays the architecture does not use".into()));
    }
    let history: Vec<StepRecord> = serde_json::from_slice(&read_verified(dir, &m.history)?)
        .map_err(|e| Error::Integrity(format!("unreadable history: {e}")))?;
    let seed: [u8; 32] = hex::decode(&m.rng.seed)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| Error::Integrity("bad generator seed".into()))?;
    let word_pos: u128 = m
        .rng
        .word_pos
        .parse()
        .map_err(|_| Error::Integrity("bad generator position".into()))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(m.rng.stream);
    rng.set_word_pos(word_pos);
    Ok(TrainState {
        config: m.config,
        k: m.k,
        params,
        optim,
        step: m.step,
        history,
        rng,
    })
}
