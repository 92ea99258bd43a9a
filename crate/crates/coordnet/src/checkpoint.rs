//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!   magic "CNCKPT01" (8 bytes)
//!   version: u32
//!   kind: u8 (1 = classifier, 2 = vae)
//!   dtype: u8 (1 = f32, 2 = f64)
//!   spec_len: u32, spec JSON (UTF-8)
//!   param_count: u32
//!   per parameter: name_len u32 + name, ndim u32, dims u32…, raw values
//!   sha-256 over everything above (32 bytes)
//!
//! Writing is deterministic, so equal models produce byte-identical files.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{build_classifier, build_vae, Network, NetworkSpec, Vae, VaeSpec};
use crate::param::Parameter;
use crate::rng::RngState;
use crate::tensor::{Dtype, Element, Tensor};

const MAGIC: &[u8; 8] = b"CNCKPT01";
const VERSION: u32 = 1;

const KIND_CLASSIFIER: u8 = 1;
const KIND_VAE: u8 = 2;

fn encode<E: Element>(kind: u8, spec_json: &str, params: &[&Parameter<E>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    out.push(E::DTYPE as u8);
    out.extend_from_slice(&(spec_json.len() as u32).to_le_bytes());
    out.extend_from_slice(spec_json.as_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.ndim() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            v.write_le(&mut out);
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    /// Raw little-endian values, width per the container dtype.
    bytes: Vec<u8>,
}

struct Container {
    kind: u8,
    dtype: Dtype,
    spec_json: String,
    params: Vec<ParamRecord>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CheckpointFormat(format!(
                "unexpected end of file at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

fn decode(bytes: &[u8]) -> Result<Container> {
    if bytes.len() < MAGIC.len() + 32 {
        return Err(Error::CheckpointFormat("file too short".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        return Err(Error::ChecksumMismatch);
    }
    let mut c = Cursor { bytes: body, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::CheckpointFormat("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::CheckpointVersion { expected: VERSION, found: version });
    }
    let kind = c.u8()?;
    let dtype = Dtype::from_tag(c.u8()?)
        .ok_or_else(|| Error::CheckpointFormat("unknown dtype tag".into()))?;
    let spec_len = c.u32()? as usize;
    let spec_json = String::from_utf8(c.take(spec_len)?.to_vec())
        .map_err(|_| Error::CheckpointFormat("spec is not UTF-8".into()))?;
    let param_count = c.u32()? as usize;
    let mut params = Vec::with_capacity(param_count);
    for _ in 0..param_count {
        let name_len = c.u32()? as usize;
        let name = String::from_utf8(c.take(name_len)?.to_vec())
            .map_err(|_| Error::CheckpointFormat("parameter name is not UTF-8".into()))?;
        let ndim = c.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(c.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let bytes = c.take(len * dtype.byte_width())?.to_vec();
        params.push(ParamRecord { name, shape, bytes });
    }
    if c.pos != body.len() {
        return Err(Error::CheckpointFormat(format!(
            "{} unexpected bytes after parameters",
            body.len() - c.pos
        )));
    }
    Ok(Container { kind, dtype, spec_json, params })
}

fn decode_values<E: Element>(record: &ParamRecord) -> Vec<E> {
    record
        .bytes
        .chunks_exact(E::DTYPE.byte_width())
        .map(E::read_le)
        .collect()
}

/// Copies container records into live parameters, verifying name and shape.
fn apply_records<E: Element>(params: Vec<&mut Parameter<E>>, records: &[ParamRecord]) -> Result<()> {
    if params.len() != records.len() {
        return Err(Error::CheckpointFormat(format!(
            "checkpoint has {} parameters, model has {}",
            records.len(),
            params.len()
        )));
    }
    for (p, r) in params.into_iter().zip(records) {
        if p.name != r.name {
            return Err(Error::CheckpointFormat(format!(
                "parameter order mismatch: model has '{}', checkpoint has '{}'",
                p.name, r.name
            )));
        }
        if p.value.shape() != r.shape {
            return Err(Error::shape(
                "load_checkpoint",
                format!("parameter '{}': model {:?} vs checkpoint {:?}", p.name, p.value.shape(), r.shape),
            ));
        }
        p.value = Tensor::from_vec(r.shape.clone(), decode_values(r))?;
    }
    Ok(())
}

fn check_dtype<E: Element>(container: &Container) -> Result<()> {
    if container.dtype != E::DTYPE {
        return Err(Error::CheckpointFormat(format!(
            "checkpoint stores {:?} values, requested {:?}",
            container.dtype,
            E::DTYPE
        )));
    }
    Ok(())
}

pub fn save_checkpoint<E: Element>(net: &Network<E>, path: &Path) -> Result<()> {
    let spec_json = serde_json::to_string(&net.spec)
        .map_err(|e| Error::CheckpointFormat(format!("spec encode: {e}")))?;
    let bytes = encode(KIND_CLASSIFIER, &spec_json, &net.parameters());
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<E: Element>(path: &Path) -> Result<Network<E>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let container = decode(&bytes)?;
    if container.kind != KIND_CLASSIFIER {
        return Err(Error::CheckpointFormat("not a classifier checkpoint".into()));
    }
    check_dtype::<E>(&container)?;
    let spec: NetworkSpec = serde_json::from_str(&container.spec_json)
        .map_err(|e| Error::CheckpointFormat(format!("spec decode: {e}")))?;
    let mut net = build_classifier::<E>(spec, &RngState::new(0))?;
    apply_records(net.parameters_mut(), &container.params)?;
    Ok(net)
}

/// Loads parameters into an existing network, enforcing spec equality.
pub fn load_checkpoint_into<E: Element>(net: &mut Network<E>, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let container = decode(&bytes)?;
    if container.kind != KIND_CLASSIFIER {
        return Err(Error::CheckpointFormat("not a classifier checkpoint".into()));
    }
    check_dtype::<E>(&container)?;
    apply_records(net.parameters_mut(), &container.params)
}

pub fn save_vae_checkpoint<E: Element>(vae: &Vae<E>, path: &Path) -> Result<()> {
    let spec_json = serde_json::to_string(&vae.spec)
        .map_err(|e| Error::CheckpointFormat(format!("spec encode: {e}")))?;
    let bytes = encode(KIND_VAE, &spec_json, &vae.parameters());
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_vae_checkpoint<E: Element>(path: &Path) -> Result<Vae<E>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let container = decode(&bytes)?;
    if container.kind != KIND_VAE {
        return Err(Error::CheckpointFormat("not a vae checkpoint".into()));
    }
    check_dtype::<E>(&container)?;
    let spec: VaeSpec = serde_json::from_str(&container.spec_json)
        .map_err(|e| Error::CheckpointFormat(format!("spec decode: {e}")))?;
    let mut vae = build_vae::<E>(spec, &RngState::new(0))?;
    apply_records(vae.parameters_mut(), &container.params)?;
    Ok(vae)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::NetworkSpec;

    #[test]
    fn round_trip_is_bit_exact_and_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let rng = RngState::new(11);
        let net = build_classifier::<f32>(NetworkSpec::with_coords(), &rng).unwrap();
        save_checkpoint(&net, &p1).unwrap();
        let loaded = load_checkpoint::<f32>(&p1).unwrap();
        for (a, b) in net.parameters().iter().zip(loaded.parameters()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.data(), b.value.data());
        }
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn corruption_fails_the_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        let rng = RngState::new(1);
        let net = build_classifier::<f32>(NetworkSpec::baseline(), &rng).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        match load_checkpoint::<f32>(&path).err() {
            Some(Error::ChecksumMismatch) => {}
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.ckpt");
        let rng = RngState::new(1);
        let net = build_classifier::<f32>(NetworkSpec::baseline(), &rng).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
        // Re-seal so only the version differs.
        let body_len = bytes.len() - 32;
        let digest = Sha256::digest(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&digest);
        std::fs::write(&path, &bytes).unwrap();
        match load_checkpoint::<f32>(&path).err() {
            Some(Error::CheckpointVersion { expected: 1, found: 99 }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn loading_into_mismatched_spec_names_the_parameter() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let rng = RngState::new(1);
        let coord = build_classifier::<f32>(NetworkSpec::with_coords(), &rng).unwrap();
        save_checkpoint(&coord, &path).unwrap();
        let mut baseline = build_classifier::<f32>(NetworkSpec::baseline(), &rng).unwrap();
        let err = load_checkpoint_into(&mut baseline, &path).unwrap_err();
        assert!(err.to_string().contains("conv1.weight"), "{err}");
    }

    #[test]
    fn dtype_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.ckpt");
        let rng = RngState::new(1);
        let net = build_classifier::<f64>(NetworkSpec::baseline(), &rng).unwrap();
        save_checkpoint(&net, &path).unwrap();
        match load_checkpoint::<f32>(&path).err() {
            Some(Error::CheckpointFormat(msg)) => assert!(msg.contains("F64"), "{msg}"),
            other => panic!("expected dtype error, got {other:?}"),
        }
    }

    #[test]
    fn vae_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.ckpt");
        let rng = RngState::new(3);
        let spec = VaeSpec { base_channels: 2, latent_dim: 3, input_extent: 8, ..VaeSpec::default() };
        let vae = build_vae::<f32>(spec, &rng).unwrap();
        save_vae_checkpoint(&vae, &path).unwrap();
        let loaded = load_vae_checkpoint::<f32>(&path).unwrap();
        for (a, b) in vae.parameters().iter().zip(loaded.parameters()) {
            assert_eq!(a.value.data(), b.value.data());
        }
        // Classifier loader refuses a vae file.
        assert!(load_checkpoint::<f32>(&path).is_err());
    }
}
