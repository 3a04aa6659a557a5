//! Text keypoint files: a commented header recording where the detections
//! came from, then one `x y score radius` line per keypoint in descending
//! score order. Floats are written in shortest round-trip form, so reading
//! a file back reproduces the detections bit-exactly.

use std::fs;
use std::path::Path;

use keydet_core::extractor::Keypoint;
use keydet_core::geometry::Vec2;

use crate::error::{CliError, Result};

/// Provenance recorded at the top of a keypoint file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeypointHeader {
    /// Which image the detections belong to (path or synthetic id).
    pub image: String,
    /// Path of the checkpoint that produced them.
    pub checkpoint: String,
    /// SHA-256 of the checkpoint file.
    pub checkpoint_hash: String,
    /// Hash of the resolved run configuration.
    pub config_hash: String,
    /// Requested detection budget.
    pub k: usize,
    /// Non-maximum-suppression radius, pixels.
    pub nms_radius: usize,
}

/// Formats header plus keypoints as the file's full text.
pub fn format(header: &KeypointHeader, keypoints: &[Keypoint]) -> String {
    let mut out = String::new();
    out.push_str(&format!("# image: {}\n", header.image));
    out.push_str(&format!(
        "# checkpoint: {} sha256:{}\n",
        header.checkpoint, header.checkpoint_hash
    ));
    out.push_str(&format!("# config: sha256:{}\n", header.config_hash));
    out.push_str(&format!(
        "# k: {} nms_radius: {}\n",
        header.k, header.nms_radius
    ));
    out.push_str(&format!("# count: {}\n", keypoints.len()));
    out.push_str("# columns: x y score radius\n");
    for kp in keypoints {
        out.push_str(&format!(
            "{} {} {} {}\n",
            kp.pos.x, kp.pos.y, kp.score, kp.radius
        ));
    }
    out
}

/// Writes a keypoint file.
pub fn save(path: &Path, header: &KeypointHeader, keypoints: &[Keypoint]) -> Result<()> {
    fs::write(path, format(header, keypoints)).map_err(|e| CliError::io(path, e))
}

fn parse_header_field(line: &str, header: &mut KeypointHeader) {
    let Some(rest) = line.strip_prefix('#') else {
        return;
    };
    let rest = rest.trim();
    if let Some(v) = rest.strip_prefix("image:") {
        header.image = v.trim().to_string();
    } else if let Some(v) = rest.strip_prefix("checkpoint:") {
        let v = v.trim();
        match v.rsplit_once(" sha256:") {
            Some((path, hash)) => {
                header.checkpoint = path.to_string();
                header.checkpoint_hash = hash.to_string();
            }
            None => header.checkpoint = v.to_string(),
        }
    } else if let Some(v) = rest.strip_prefix("config: sha256:") {
        header.config_hash = v.trim().to_string();
    } else if let Some(v) = rest.strip_prefix("k:") {
        let mut parts = v.split_whitespace();
        if let Some(k) = parts.next().and_then(|t| t.parse().ok()) {
            header.k = k;
        }
        if let (Some("nms_radius:"), Some(r)) = (parts.next(), parts.next()) {
            if let Ok(r) = r.parse() {
                header.nms_radius = r;
            }
        }
    }
}

/// Reads a keypoint file back. Unknown header lines are ignored; data
/// lines must be exactly four numbers.
pub fn load(path: &Path) -> Result<(KeypointHeader, Vec<Keypoint>)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut header = KeypointHeader::default();
    let mut keypoints = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            parse_header_field(line, &mut header);
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| {
                CliError::input(path, format!("line {}: malformed keypoint row", lineno + 1))
            })?;
        if fields.len() != 4 {
            return Err(CliError::input(
                path,
                format!(
                    "line {}: expected 4 fields (x y score radius), found {}",
                    lineno + 1,
                    fields.len()
                ),
            ));
        }
        keypoints.push(Keypoint {
            pos: Vec2::new(fields[0], fields[1]),
            score: fields[2],
            radius: fields[3],
        });
    }
    Ok((header, keypoints))
}
