//! Plain-text homography files: nine whitespace-separated numbers,
//! row-major, conventionally three per line — the layout benchmark
//! sequences ship their `H1toNp` ground-truth files in.

use std::fs;
use std::path::Path;

use keydet_core::geometry::Homography;

use crate::error::{CliError, Result};

/// Parses a 3x3 matrix from `text`. Numbers may be split across any
/// whitespace; errors name the offending token and its position.
pub fn parse(text: &str) -> std::result::Result<Homography, String> {
    let mut m = [[0.0f64; 3]; 3];
    let mut tokens = text.split_whitespace();
    for (i, slot) in m.iter_mut().flat_map(|row| row.iter_mut()).enumerate() {
        let token = tokens
            .next()
            .ok_or_else(|| format!("expected 9 matrix entries, found {i}"))?;
        *slot = token
            .parse::<f64>()
            .map_err(|_| format!("entry {} ({token:?}) is not a number", i + 1))?;
    }
    if let Some(extra) = tokens.next() {
        return Err(format!("trailing content after 9 entries: {extra:?}"));
    }
    if !m.iter().flatten().all(|v| v.is_finite()) {
        return Err("matrix entries must be finite".to_string());
    }
    if m[2][2] == 0.0 {
        return Err("matrix is not normalizable: entry (3,3) is zero".to_string());
    }
    Ok(Homography::from_matrix(m))
}

/// Loads a homography file.
pub fn load(path: &Path) -> Result<Homography> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text).map_err(|msg| CliError::input(path, msg))
}

/// Formats a homography as three lines of three, shortest round-trip
/// float form.
pub fn format(h: &Homography) -> String {
    let mut out = String::new();
    for row in &h.m {
        out.push_str(&format!("{} {} {}\n", row[0], row[1], row[2]));
    }
    out
}

/// Writes a homography file.
pub fn save(path: &Path, h: &Homography) -> Result<()> {
    fs::write(path, format(h)).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use keydet_core::geometry::Vec2;
    use tempfile::tempdir;

    #[test]
    fn parses_benchmark_layout() {
        let h = parse("0.87 0.5 -80.5\n-0.5 0.87 200.25\n0 0 1\n").unwrap();
        let p = h.apply(Vec2::new(0.0, 0.0)).unwrap();
        assert_eq!(p, Vec2::new(-80.5, 200.25));
    }

    #[test]
    fn round_trips_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("H1to2p");
        let h = Homography::from_matrix([
            [1.0625, -0.03125, 17.25],
            [0.5, 0.9375, -3.5],
            [0.0001220703125, 0.0, 1.0],
        ]);
        save(&path, &h).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.m, h.m);
    }

    #[test]
    fn errors_identify_the_bad_token() {
        let err = parse("1 0 0 0 one 0 0 0 1").unwrap_err();
        assert!(err.contains("one"), "{err}");
        assert!(err.contains("entry 5"), "{err}");
        let err = parse("1 0 0").unwrap_err();
        assert!(err.contains("found 3"), "{err}");
        let err = parse("1 0 0 0 1 0 0 0 1 99").unwrap_err();
        assert!(err.contains("trailing"), "{err}");
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load(Path::new("/nonexistent/H1to2p")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
