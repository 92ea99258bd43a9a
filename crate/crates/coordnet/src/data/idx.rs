//! IDX binary container: big-endian magic, big-endian u32 extents, then an
//! unsigned-byte payload in row-major order. Files may be gzip-compressed;
//! readers decompress transparently.

use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, IdxErrorKind, Result};
use crate::tensor::{Element, Tensor};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<u32>,
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Idx {
            offset,
            kind: IdxErrorKind::Truncated { expected_len: end, actual_len: bytes.len() },
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Parses the header and checks the payload length exactly matches the
/// declared extents. Returns the header and the payload slice.
fn parse_idx<'a>(bytes: &'a [u8], expected_magic: u32, dim_count: usize) -> Result<(IdxHeader, &'a [u8])> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != expected_magic {
        return Err(Error::Idx {
            offset: 0,
            kind: IdxErrorKind::BadMagic { expected: expected_magic, found: magic },
        });
    }
    let mut dims = Vec::with_capacity(dim_count);
    for d in 0..dim_count {
        dims.push(read_u32_be(bytes, 4 + 4 * d)?);
    }
    let header_len = 4 + 4 * dim_count;
    let mut payload_len = 1usize;
    for (d, &v) in dims.iter().enumerate() {
        if v == 0 {
            return Err(Error::Idx {
                offset: 4 + 4 * d,
                kind: IdxErrorKind::BadDimension { dim: d, value: v },
            });
        }
        payload_len = payload_len.checked_mul(v as usize).ok_or(Error::Idx {
            offset: 4 + 4 * d,
            kind: IdxErrorKind::BadDimension { dim: d, value: v },
        })?;
    }
    let expected_len = header_len + payload_len;
    if bytes.len() < expected_len {
        return Err(Error::Idx {
            offset: bytes.len(),
            kind: IdxErrorKind::Truncated { expected_len, actual_len: bytes.len() },
        });
    }
    if bytes.len() > expected_len {
        return Err(Error::Idx {
            offset: expected_len,
            kind: IdxErrorKind::TrailingBytes { extra: bytes.len() - expected_len },
        });
    }
    Ok((IdxHeader { magic, dims }, &bytes[header_len..]))
}

/// Image file → [N,1,H,W] tensor with pixel bytes scaled to [0,1] by /255.
pub fn parse_idx_images<E: Element>(bytes: &[u8]) -> Result<Tensor<E>> {
    let (header, payload) = parse_idx(bytes, IMAGE_MAGIC, 3)?;
    let n = header.dims[0] as usize;
    let h = header.dims[1] as usize;
    let w = header.dims[2] as usize;
    let scale = 1.0 / 255.0;
    let data = payload.iter().map(|&b| E::from_f64(b as f64 * scale)).collect();
    Tensor::from_vec(vec![n, 1, h, w], data)
}

/// Label file → raw byte labels (class range is the caller's contract).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let (_, payload) = parse_idx(bytes, LABEL_MAGIC, 1)?;
    Ok(payload.to_vec())
}

/// Serializes images (u8 pixels, row-major) into IDX bytes.
pub fn write_idx_images(n: u32, h: u32, w: u32, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), (n as usize) * (h as usize) * (w as usize));
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&n.to_be_bytes());
    out.extend_from_slice(&h.to_be_bytes());
    out.extend_from_slice(&w.to_be_bytes());
    out.extend_from_slice(pixels);
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Reads a file, gunzipping if it carries the gzip magic.
pub fn read_idx_file(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Resolves `name` or `name.gz` inside `dir`.
pub fn locate_file(dir: &Path, name: &str) -> Option<PathBuf> {
    let plain = dir.join(name);
    if plain.is_file() {
        return Some(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.is_file() {
        return Some(gz);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_synthetic_image_file() {
        let bytes = write_idx_images(1, 2, 2, &[0, 255, 0, 255]);
        assert_eq!(bytes.len(), 16 + 4);
        let t: Tensor<f64> = parse_idx_images(&bytes).unwrap();
        assert_eq!(t.shape(), &[1, 1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let mut bytes = write_idx_images(1, 2, 2, &[1, 2, 3, 4]);
        bytes[3] = 0x01; // label magic in an image parse
        match parse_idx_images::<f32>(&bytes) {
            Err(Error::Idx { offset: 0, kind: IdxErrorKind::BadMagic { expected, found } }) => {
                assert_eq!(expected, IMAGE_MAGIC);
                assert_eq!(found, LABEL_MAGIC);
            }
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn truncation_reports_expected_length() {
        let bytes = write_idx_images(2, 2, 2, &[0; 8]);
        match parse_idx_images::<f32>(&bytes[..bytes.len() - 3]) {
            Err(Error::Idx { kind: IdxErrorKind::Truncated { expected_len, actual_len }, .. }) => {
                assert_eq!(expected_len, 16 + 8);
                assert_eq!(actual_len, 16 + 5);
            }
            other => panic!("expected Truncated, got {other:?}"),
        }
        // Header-level truncation too.
        match parse_idx_images::<f32>(&bytes[..6]) {
            Err(Error::Idx { offset: 4, kind: IdxErrorKind::Truncated { .. } }) => {}
            other => panic!("expected header truncation at offset 4, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_detected() {
        let mut bytes = write_idx_labels(&[1, 2, 3]);
        bytes.push(9);
        match parse_idx_labels(&bytes) {
            Err(Error::Idx { offset, kind: IdxErrorKind::TrailingBytes { extra: 1 } }) => {
                assert_eq!(offset, 8 + 3);
            }
            other => panic!("expected TrailingBytes, got {other:?}"),
        }
    }

    #[test]
    fn zero_dimension_rejected() {
        let bytes = write_idx_images(1, 2, 2, &[0; 4]);
        let mut patched = bytes.clone();
        patched[8..12].copy_from_slice(&0u32.to_be_bytes()); // H = 0
        match parse_idx_images::<f32>(&patched) {
            Err(Error::Idx { offset: 8, kind: IdxErrorKind::BadDimension { dim: 1, value: 0 } }) => {}
            other => panic!("expected BadDimension, got {other:?}"),
        }
    }

    #[test]
    fn label_round_trip() {
        let labels = [7u8, 0, 9, 3];
        let bytes = write_idx_labels(&labels);
        assert_eq!(parse_idx_labels(&bytes).unwrap(), labels);
    }
}
