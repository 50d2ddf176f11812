//! Output helpers: atomic file writes and deterministic CSV formatting.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Write via a temp file in the same directory, then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into())
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Shortest round-trip decimal form of an f64; stable across runs.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// One CSV line from string cells (no quoting needed for our numeric data).
pub fn csv_line(cells: &[String]) -> String {
    cells.join(",")
}

/// FNV-1a over bytes; used to fingerprint resolved configs.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
