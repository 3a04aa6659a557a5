//! On-disk formats: binary checkpoints and patch archives, text keypoint
//! files, homography matrices, evaluation reports and training logs.
//!
//! The binary formats share a skeleton: a 4-byte magic, a `u32` version,
//! the 64-hex-character configuration hash, then little-endian payload.
//! Decode failures surface as [`std::io::Error`]s with `InvalidData`, so
//! callers treat a corrupt file exactly like an unreadable one.

pub mod archive;
pub mod checkpoint;
pub mod homography;
pub mod keypoints;
pub mod report;
pub mod trainlog;

use std::io::{self, Read, Write};

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f32_slice(w: &mut impl Write, values: &[f32]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub(crate) fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub(crate) fn read_f32_vec(r: &mut impl Read, len: usize) -> io::Result<Vec<f32>> {
    let mut buf = vec![0u8; len * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Reads a count that sizes an upcoming allocation, rejecting values no
/// well-formed file of ours can contain before they turn into huge `Vec`
/// reservations on a truncated or corrupt stream.
pub(crate) fn read_count(r: &mut impl Read, limit: u64, what: &str) -> io::Result<usize> {
    let v = read_u64(r)?;
    if v > limit {
        return Err(invalid(format!("{what} count {v} exceeds limit {limit}")));
    }
    Ok(v as usize)
}

pub(crate) fn invalid(message: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, message)
}

pub(crate) fn check_magic(r: &mut impl Read, expected: &[u8; 4], kind: &str) -> io::Result<()> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got)?;
    if &got != expected {
        return Err(invalid(format!(
            "not a {kind} file (magic {:?}, expected {:?})",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(expected)
        )));
    }
    Ok(())
}

pub(crate) fn check_version(r: &mut impl Read, expected: u32, kind: &str) -> io::Result<()> {
    let v = read_u32(r)?;
    if v != expected {
        return Err(invalid(format!(
            "unsupported {kind} version {v} (this build reads {expected})"
        )));
    }
    Ok(())
}

/// The configuration hash travels as its 64 lowercase-hex ASCII bytes.
pub(crate) fn write_hash(w: &mut impl Write, hash: &str) -> io::Result<()> {
    if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(invalid(format!("malformed config hash {hash:?}")));
    }
    w.write_all(hash.as_bytes())
}

pub(crate) fn read_hash(r: &mut impl Read) -> io::Result<String> {
    let mut buf = [0u8; 64];
    r.read_exact(&mut buf)?;
    if !buf.iter().all(|b| b.is_ascii_hexdigit()) {
        return Err(invalid("malformed config hash field".to_string()));
    }
    Ok(String::from_utf8_lossy(&buf).into_owned())
}
