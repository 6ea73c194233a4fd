//! IDX file parsing and serialization (the distribution format of MNIST
//! and EMNIST), with transparent gzip decompression.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use flate2::read::GzDecoder;
use std::io::Read;
use std::path::Path;

/// Rank-3 unsigned-byte IDX magic (images).
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
/// Rank-1 unsigned-byte IDX magic (labels).
pub const LABEL_MAGIC: u32 = 0x0000_0801;

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::format(
            bytes.len(),
            format!("truncated header, expected 4 bytes at offset {offset}"),
        ));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Parses a rank-3 unsigned-byte IDX stream into an `n x 784` tensor of raw
/// pixel values in `[0, 255]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            0,
            format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        ));
    }
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    if rows != IMAGE_SIDE {
        return Err(Error::format(8, format!("image rows {rows}, expected {IMAGE_SIDE}")));
    }
    if cols != IMAGE_SIDE {
        return Err(Error::format(12, format!("image cols {cols}, expected {IMAGE_SIDE}")));
    }
    let payload = &bytes[16..];
    let expected = n * IMAGE_PIXELS;
    if payload.len() < expected {
        return Err(Error::format(
            16 + payload.len(),
            format!("truncated payload: {} bytes for {n} images", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(Error::format(
            16 + expected,
            format!("{} trailing bytes after {n} images", payload.len() - expected),
        ));
    }
    let data = payload.iter().map(|&b| b as f64).collect();
    Tensor::from_vec(n, IMAGE_PIXELS, data)
}

/// Parses a rank-1 unsigned-byte IDX stream into a label list.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(
            0,
            format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        ));
    }
    let n = read_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(Error::format(
            8 + payload.len().min(n),
            format!("label payload has {} bytes for count {n}", payload.len()),
        ));
    }
    Ok(payload.to_vec())
}

/// Serializes raw pixel values (whole numbers in `[0, 255]`) back to IDX
/// bytes; inverse of [`parse_idx_images`].
pub fn write_idx_images(images: &Tensor) -> Result<Vec<u8>> {
    if images.cols() != IMAGE_PIXELS {
        return Err(Error::dimension(format!(
            "expected {IMAGE_PIXELS} columns, got {}",
            images.cols()
        )));
    }
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.rows() as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    for &v in images.data() {
        if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
            return Err(Error::Validation(format!("pixel value {v} is not an 8-bit integer")));
        }
        out.push(v as u8);
    }
    Ok(out)
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Reads a file, decompressing it when it carries the gzip magic.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image_fixture(n: usize) -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&(n as u32).to_be_bytes());
        bytes.extend_from_slice(&28u32.to_be_bytes());
        bytes.extend_from_slice(&28u32.to_be_bytes());
        for i in 0..n * IMAGE_PIXELS {
            bytes.push((i % 251) as u8);
        }
        bytes
    }

    #[test]
    fn parses_two_image_fixture() {
        let bytes = image_fixture(2);
        assert_eq!(bytes.len(), 16 + 1568);
        let t = parse_idx_images(&bytes).unwrap();
        assert_eq!(t.shape(), (2, 784));
        assert_eq!(t.get(0, 5), 5.0);
        assert_eq!(t.get(1, 0), (784 % 251) as f64);
    }

    #[test]
    fn empty_image_stream_is_fine() {
        let t = parse_idx_images(&image_fixture(0)).unwrap();
        assert_eq!(t.shape(), (0, 784));
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let mut bytes = image_fixture(2);
        bytes.truncate(bytes.len() - 10);
        match parse_idx_images(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 16 + 1558),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_rejected() {
        let mut bytes = image_fixture(1);
        bytes[3] = 0x01;
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn wrong_dims_rejected() {
        let mut bytes = image_fixture(1);
        bytes[11] = 27; // rows field
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(Error::Format { offset: 8, .. })
        ));
    }

    #[test]
    fn parses_label_fixture() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&3u32.to_be_bytes());
        bytes.extend_from_slice(&[7, 2, 1]);
        assert_eq!(parse_idx_labels(&bytes).unwrap(), vec![7, 2, 1]);
    }

    #[test]
    fn empty_label_stream_is_fine() {
        let bytes = write_idx_labels(&[]);
        assert_eq!(parse_idx_labels(&bytes).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn label_count_mismatch_rejected() {
        let mut bytes = write_idx_labels(&[1, 2, 3]);
        bytes.pop();
        assert!(matches!(parse_idx_labels(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn gzip_roundtrip() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let bytes = image_fixture(1);
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&bytes).unwrap();
        let gz = enc.finish().unwrap();

        let dir = tempfile::tempdir().unwrap();
        let plain_path = dir.path().join("plain");
        let gz_path = dir.path().join("gz");
        std::fs::write(&plain_path, &bytes).unwrap();
        std::fs::write(&gz_path, &gz).unwrap();
        assert_eq!(read_maybe_gzip(&plain_path).unwrap(), bytes);
        assert_eq!(read_maybe_gzip(&gz_path).unwrap(), bytes);
    }

    proptest! {
        #[test]
        fn image_roundtrip_is_exact(n in 0usize..3, fill in any::<u8>()) {
            let mut bytes = image_fixture(n);
            for b in bytes.iter_mut().skip(16) {
                *b = b.wrapping_add(fill);
            }
            let parsed = parse_idx_images(&bytes).unwrap();
            prop_assert_eq!(write_idx_images(&parsed).unwrap(), bytes);
        }

        #[test]
        fn label_roundtrip_is_exact(labels in proptest::collection::vec(any::<u8>(), 0..64)) {
            let bytes = write_idx_labels(&labels);
            prop_assert_eq!(parse_idx_labels(&bytes).unwrap(), labels);
        }
    }
}
