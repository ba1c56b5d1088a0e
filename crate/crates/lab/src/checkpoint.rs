//! Checkpoints are pairs of files: `<name>.manifest.json` describing the
//! network and `<name>.params.bin` holding its parameters as little-endian
//! `f64` in storage order.

use std::fs;
use std::path::{Path, PathBuf};

use realuid_core::nn::{param_hash, Generator, Mlp, MlpSpec};
use realuid_core::paths::PathSpec;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const FORMAT: &str = "realuid-checkpoint/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Teacher,
    Fake,
    Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub kind: Kind,
    pub spec: MlpSpec,
    /// Generators only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<bool>,
    /// Teachers record the path they were trained on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathSpec>,
    /// Training iterations completed when saved.
    pub step: u64,
    pub n_params: usize,
    pub param_hash: u64,
}

fn manifest_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.manifest.json"))
}

fn params_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.params.bin"))
}

pub fn exists(dir: &Path, name: &str) -> bool {
    manifest_path(dir, name).is_file() && params_path(dir, name).is_file()
}

/// Writes both files and returns the manifest path.
pub fn save(
    dir: &Path,
    name: &str,
    kind: Kind,
    net: &Mlp,
    step: u64,
    extra: impl FnOnce(&mut Manifest),
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let mut m = Manifest {
        format: FORMAT.into(),
        kind,
        spec: net.spec.clone(),
        residual: None,
        path: None,
        step,
        n_params: net.params.len(),
        param_hash: param_hash(&net.params),
    };
    extra(&mut m);
    let bytes: Vec<u8> = net.params.iter().flat_map(|p| p.to_le_bytes()).collect();
    let pp = params_path(dir, name);
    fs::write(&pp, bytes).map_err(|e| LabError::io(&pp, e))?;
    let mp = manifest_path(dir, name);
    let text = serde_json::to_string_pretty(&m).map_err(|e| LabError::json(&mp, e))?;
    fs::write(&mp, text + "\n").map_err(|e| LabError::io(&mp, e))?;
    Ok(mp)
}

pub fn save_teacher(
    dir: &Path,
    name: &str,
    teacher: &Mlp,
    path: &PathSpec,
    step: u64,
) -> Result<PathBuf> {
    save(dir, name, Kind::Teacher, teacher, step, |m| {
        m.path = Some(*path)
    })
}

pub fn save_generator(dir: &Path, name: &str, g: &Generator, step: u64) -> Result<PathBuf> {
    save(dir, name, Kind::Generator, &g.net, step, |m| {
        m.residual = Some(g.residual)
    })
}

pub fn load(dir: &Path, name: &str) -> Result<(Manifest, Mlp)> {
    let mp = manifest_path(dir, name);
    let text = fs::read_to_string(&mp).map_err(|e| LabError::io(&mp, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| LabError::json(&mp, e))?;
    let bad = |reason: String| LabError::Checkpoint {
        path: mp.clone(),
        reason,
    };
    if m.format != FORMAT {
        return Err(bad(format!("unknown format {:?}", m.format)));
    }
    let pp = params_path(dir, name);
    let bytes = fs::read(&pp).map_err(|e| LabError::io(&pp, e))?;
    if bytes.len() != 8 * m.n_params {
        return Err(bad(format!(
            "{} bytes of parameters for {} values",
            bytes.len(),
            m.n_params
        )));
    }
    let params: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if param_hash(&params) != m.param_hash {
        return Err(bad("parameter hash mismatch".into()));
    }
    let net = Mlp::from_params(m.spec.clone(), params).map_err(|e| bad(e.to_string()))?;
    Ok((m, net))
}

pub fn load_kind(dir: &Path, name: &str, kind: Kind) -> Result<(Manifest, Mlp)> {
    let (m, net) = load(dir, name)?;
    if m.kind != kind {
        return Err(LabError::Checkpoint {
            path: manifest_path(dir, name),
            reason: format!("expected a {kind:?} checkpoint, found {:?}", m.kind),
        });
    }
    Ok((m, net))
}

pub fn load_generator(dir: &Path, name: &str) -> Result<(Manifest, Generator)> {
    let (m, net) = load_kind(dir, name, Kind::Generator)?;
    let residual = m.residual.unwrap_or(true);
    Ok((m, Generator { net, residual }))
}

/// Splits a user-supplied checkpoint reference into `(dir, name)`.
///
/// Accepts a run directory (uses `checkpoints/<default_name>`), a
/// checkpoints directory, or a path to either file of a pair.
pub fn locate(arg: &Path, default_name: &str) -> Result<(PathBuf, String)> {
    if arg.is_dir() {
        let sub = arg.join("checkpoints");
        let dir = if exists(&sub, default_name) {
            sub
        } else {
            arg.to_path_buf()
        };
        if !exists(&dir, default_name) {
            return Err(LabError::Input(format!(
                "no {default_name} checkpoint under {}",
                arg.display()
            )));
        }
        return Ok((dir, default_name.into()));
    }
    let file = arg
        .file_name()
        .and_then(|f| f.to_str())
        .ok_or_else(|| LabError::Input(format!("not a checkpoint path: {}", arg.display())))?;
    let name = file
        .strip_suffix(".manifest.json")
        .or_else(|| file.strip_suffix(".params.bin"))
        .unwrap_or(file);
    let dir = arg.parent().map(Path::to_path_buf).unwrap_or_default();
    if !exists(&dir, name) {
        return Err(LabError::Input(format!(
            "checkpoint not found: {}",
            arg.display()
        )));
    }
    Ok((dir, name.into()))
}

/// Copies a checkpoint pair to `dst_dir/name`.
pub fn copy(src_dir: &Path, src_name: &str, dst_dir: &Path, name: &str) -> Result<()> {
    fs::create_dir_all(dst_dir).map_err(|e| LabError::io(dst_dir, e))?;
    for (s, d) in [
        (
            manifest_path(src_dir, src_name),
            manifest_path(dst_dir, name),
        ),
        (params_path(src_dir, src_name), params_path(dst_dir, name)),
    ] {
        fs::copy(&s, &d).map_err(|e| LabError::io(&s, e))?;
    }
    Ok(())
}
