//! On-disk formats. An instance is a JSON metadata file next to a binary
//! sidecar holding `a0`, `x0` and `y` as little-endian `f64` arrays; the
//! metadata records where each array starts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datagen::{shift_coherence, truncated_shift_coherence, InstanceSpec, PlantedInstance, PRNG_TAG};
use crate::error::{Error, Result};
use crate::signal::{Kernel, Observation, SparseMap};

pub const INSTANCE_FORMAT: &str = "sasd-instance";
pub const INSTANCE_VERSION: u32 = 1;

/// Location of one array inside the sidecar, in `f64` elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceMeta {
    pub format: String,
    pub version: u32,
    pub prng: String,
    pub spec: InstanceSpec,
    pub mu: f64,
    pub truncated_mu: f64,
    pub support_size: usize,
    /// File name of the sidecar, resolved against the metadata's directory.
    pub blob: String,
    pub a0: Slot,
    pub x0: Slot,
    pub y: Slot,
}

pub fn encode_f64_blob(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Parses a little-endian `f64` array, rejecting ragged lengths and
/// non-finite entries.
pub fn parse_f64_blob(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "f64 blob length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(8)
        .enumerate()
        .map(|(i, c)| {
            let v = f64::from_le_bytes(c.try_into().expect("chunk of 8"));
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Format(format!("entry {i} is not finite")))
            }
        })
        .collect()
}

fn check_blob_name(name: &str) -> Result<()> {
    let plain = !name.is_empty()
        && name != "."
        && name != ".."
        && !name.contains(['/', '\\'])
        && !name.contains('\0');
    if plain {
        Ok(())
    } else {
        Err(Error::Format(format!("sidecar name {name:?} must be a plain file name")))
    }
}

pub fn instance_meta(inst: &PlantedInstance, blob: &str) -> Result<InstanceMeta> {
    check_blob_name(blob)?;
    let (p0, n) = (inst.a0.len(), inst.y.len());
    Ok(InstanceMeta {
        format: INSTANCE_FORMAT.into(),
        version: INSTANCE_VERSION,
        prng: PRNG_TAG.into(),
        spec: inst.spec,
        mu: shift_coherence(inst.a0.as_slice(), n)?,
        truncated_mu: truncated_shift_coherence(inst.a0.as_slice()),
        support_size: inst.x0.nnz(),
        blob: blob.into(),
        a0: Slot { offset: 0, len: p0 },
        x0: Slot { offset: p0, len: n },
        y: Slot { offset: p0 + n, len: n },
    })
}

/// Metadata JSON and sidecar bytes for `inst`.
pub fn encode_instance(inst: &PlantedInstance, blob: &str) -> Result<(Vec<u8>, Vec<u8>)> {
    let meta = instance_meta(inst, blob)?;
    let mut json = serde_json::to_vec_pretty(&meta)?;
    json.push(b'\n');
    let mut values = Vec::with_capacity(inst.a0.len() + 2 * inst.y.len());
    values.extend_from_slice(inst.a0.as_slice());
    values.extend_from_slice(inst.x0.values());
    values.extend_from_slice(inst.y.values());
    Ok((json, encode_f64_blob(&values)))
}

fn take(values: &[f64], slot: Slot, name: &str) -> Result<Vec<f64>> {
    let end = slot
        .offset
        .checked_add(slot.len)
        .filter(|e| *e <= values.len())
        .ok_or_else(|| {
            Error::Format(format!(
                "{name} slot {}+{} exceeds sidecar of {} values",
                slot.offset,
                slot.len,
                values.len()
            ))
        })?;
    Ok(values[slot.offset..end].to_vec())
}

pub fn parse_instance_meta(json: &[u8]) -> Result<InstanceMeta> {
    let meta: InstanceMeta = serde_json::from_slice(json)?;
    if meta.format != INSTANCE_FORMAT {
        return Err(Error::Format(format!("unknown format {:?}", meta.format)));
    }
    if meta.version != INSTANCE_VERSION {
        return Err(Error::Format(format!("unsupported version {}", meta.version)));
    }
    if meta.prng != PRNG_TAG {
        return Err(Error::Format(format!(
            "instance was generated with {:?}, this build uses {PRNG_TAG:?}",
            meta.prng
        )));
    }
    check_blob_name(&meta.blob)?;
    meta.spec.validate()?;
    let (p0, n) = (meta.spec.p0, meta.spec.n);
    if meta.a0.len != p0 || meta.x0.len != n || meta.y.len != n {
        return Err(Error::Format(format!(
            "slot lengths ({}, {}, {}) do not match p0 = {p0}, n = {n}",
            meta.a0.len, meta.x0.len, meta.y.len
        )));
    }
    Ok(meta)
}

pub fn decode_instance(json: &[u8], blob: &[u8]) -> Result<PlantedInstance> {
    let meta = parse_instance_meta(json)?;
    let values = parse_f64_blob(blob)?;
    let a0 = Kernel::from_vec(take(&values, meta.a0, "a0")?);
    if !a0.is_normalized(1e-9) {
        return Err(Error::Format(format!("a0 has norm {}, expected 1", a0.norm())));
    }
    Ok(PlantedInstance {
        a0,
        x0: SparseMap::from_dense(take(&values, meta.x0, "x0")?),
        y: Observation::new(take(&values, meta.y, "y")?),
        spec: meta.spec,
    })
}

/// Sidecar path for a metadata path: same stem, `.bin` extension.
pub fn sidecar_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("bin")
}

pub fn write_instance(json_path: &Path, inst: &PlantedInstance) -> Result<InstanceMeta> {
    let bin = sidecar_path(json_path);
    let name = bin
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Format(format!("cannot derive a sidecar name from {}", json_path.display())))?
        .to_owned();
    let (json, blob) = encode_instance(inst, &name)?;
    fs::write(&bin, blob)?;
    fs::write(json_path, json)?;
    instance_meta(inst, &name)
}

pub fn read_instance(json_path: &Path) -> Result<PlantedInstance> {
    let json = fs::read(json_path)?;
    let meta = parse_instance_meta(&json)?;
    let dir = json_path.parent().unwrap_or_else(|| Path::new("."));
    let blob = fs::read(dir.join(&meta.blob))?;
    decode_instance(&json, &blob)
}

/// A kernel is either a JSON array of numbers or a raw `f64` sidecar.
pub fn parse_kernel(bytes: &[u8], json: bool) -> Result<Kernel> {
    let values: Vec<f64> = if json {
        serde_json::from_slice(bytes)?
    } else {
        parse_f64_blob(bytes)?
    };
    if values.is_empty() {
        return Err(Error::Format("kernel is empty".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("kernel has non-finite entries".into()));
    }
    Ok(Kernel::from_vec(values))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn read_kernel(path: &Path) -> Result<Kernel> {
    parse_kernel(&fs::read(path)?, is_json(path))
}

pub fn write_kernel(path: &Path, values: &[f64]) -> Result<()> {
    if is_json(path) {
        let mut bytes = serde_json::to_vec(values)?;
        bytes.push(b'\n');
        fs::write(path, bytes)?;
    } else {
        fs::write(path, encode_f64_blob(values))?;
    }
    Ok(())
}

pub fn parse_json_config<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    Ok(serde_json::from_slice(bytes)?)
}

pub fn read_json_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json_config(&fs::read(path)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}
