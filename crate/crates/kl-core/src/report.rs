//! Artifact output: atomically written CSV and JSON files, decomposition
//! serialization, and the on-disk decomposition cache.
//!
//! CSV floats are printed with 17 significant digits so a reread recovers
//! the exact bit pattern; JSON floats use the shortest round-trip form.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{KlError, Result};
use crate::grid::Grid;
use crate::kernel::KernelSpec;
use crate::spectral::{decompose, DecomposeOptions, SpectralDecomposition};

/// 17 significant digits; round-trips any finite f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path, e: std::io::Error) -> KlError {
    KlError::NumericError(format!("io failure at {}: {e}", path.display()))
}

/// Writes bytes via a temp file in the target directory plus an atomic rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    // Temp files are created 0600; published artifacts get normal modes.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let perms = std::fs::Permissions::from_mode(0o644);
        tmp.as_file()
            .set_permissions(perms)
            .map_err(|e| io_err(path, e))?;
    }
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// Writes rows of already-formatted fields as CSV, optionally with a header.
pub fn write_csv<I, R>(path: &Path, header: Option<&[&str]>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for row in rows {
        let fields: Vec<String> = row.into_iter().collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| KlError::NumericError(format!("json encode: {e}")))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// Writes `decomposition.json` (metadata), `mu.csv` (one eigenvalue per
/// line), and `efuns.csv` (rank x n matrix, row i = eigenfunction i).
pub fn write_decomposition(dec: &SpectralDecomposition, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_csv(
        &dir.join("mu.csv"),
        None,
        dec.mu().iter().map(|m| vec![fmt_f64(*m)]),
    )?;
    write_csv(
        &dir.join("efuns.csv"),
        None,
        dec.efuns()
            .iter()
            .map(|row| row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>()),
    )?;
    let meta = json!({
        "kernel_tag": dec.kernel_tag(),
        "grid": dec.grid(),
        "rank": dec.rank(),
        "drop_tol": dec.drop_tol(),
        "eigenvalue_sum": dec.mu().iter().sum::<f64>(),
    });
    write_json(&dir.join("decomposition.json"), &meta)
}

/// Reads a decomposition previously written by [`write_decomposition`].
pub fn read_decomposition(dir: &Path) -> Result<SpectralDecomposition> {
    let meta_text = std::fs::read_to_string(dir.join("decomposition.json"))
        .map_err(|e| io_err(&dir.join("decomposition.json"), e))?;
    let meta: serde_json::Value = serde_json::from_str(&meta_text)
        .map_err(|e| KlError::NumericError(format!("decomposition metadata: {e}")))?;
    let grid: Grid = serde_json::from_value(meta["grid"].clone())
        .map_err(|e| KlError::NumericError(format!("decomposition grid: {e}")))?;
    let kernel_tag = meta["kernel_tag"]
        .as_str()
        .ok_or_else(|| KlError::NumericError("missing kernel_tag".into()))?
        .to_string();
    let drop_tol = meta["drop_tol"]
        .as_f64()
        .ok_or_else(|| KlError::NumericError("missing drop_tol".into()))?;

    let mu = read_float_rows(&dir.join("mu.csv"))?
        .into_iter()
        .map(|row| {
            row.first()
                .copied()
                .ok_or_else(|| KlError::NumericError("empty row in mu.csv".into()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let efuns = read_float_rows(&dir.join("efuns.csv"))?;
    SpectralDecomposition::from_parts(grid, mu, efuns, kernel_tag, drop_tol)
}

fn read_float_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| KlError::NumericError(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| KlError::NumericError(format!("bad csv row: {e}")))?;
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        rows.push(row.map_err(|e| KlError::NumericError(format!("bad csv value: {e}")))?);
    }
    Ok(rows)
}

/// Writes coefficients as a single-column CSV.
pub fn write_coeffs_csv(path: &Path, coeffs: &crate::powerspace::CoeffVector) -> Result<()> {
    write_csv(
        path,
        None,
        coeffs.values().iter().map(|v| vec![fmt_f64(*v)]),
    )
}

/// Reads a single-column CSV of coefficients aligned with `dec`.
pub fn read_coeffs_csv(
    path: &Path,
    dec: &SpectralDecomposition,
) -> Result<crate::powerspace::CoeffVector> {
    let values = read_float_rows(path)?
        .into_iter()
        .map(|row| {
            row.first()
                .copied()
                .ok_or_else(|| KlError::NumericError("empty coefficient row".into()))
        })
        .collect::<Result<Vec<f64>>>()?;
    crate::powerspace::CoeffVector::new(values, dec)
}

/// Content key for the decomposition cache. The payload is streamed into
/// the hasher; tabulated kernels can carry multi-megabyte tables.
pub fn cache_key(spec: &KernelSpec, grid: &Grid, opts: &DecomposeOptions) -> String {
    struct HashWriter(Sha256);
    impl Write for HashWriter {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.update(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }
    #[derive(Serialize)]
    struct KeyPayload<'a> {
        kernel: &'a KernelSpec,
        grid: &'a Grid,
        max_rank: Option<usize>,
        drop_tol: f64,
    }
    let mut writer = HashWriter(Sha256::new());
    serde_json::to_writer(
        &mut writer,
        &KeyPayload {
            kernel: spec,
            grid,
            max_rank: opts.max_rank,
            drop_tol: opts.drop_tol,
        },
    )
    .expect("in-memory hash write");
    let digest = writer.0.finalize();
    hex_prefix(&digest, 16)
}

fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut s = String::with_capacity(chars);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
        if s.len() >= chars {
            break;
        }
    }
    s.truncate(chars);
    s
}

/// Loads the decomposition from `out_dir/cache/<key>/` or computes and
/// stores it. Corrupt cache entries are recomputed and overwritten.
pub fn cached_decompose(
    out_dir: &Path,
    spec: &KernelSpec,
    grid: &Grid,
    opts: DecomposeOptions,
) -> Result<SpectralDecomposition> {
    let dir: PathBuf = out_dir.join("cache").join(cache_key(spec, grid, &opts));
    if dir.join("decomposition.json").exists() {
        if let Ok(dec) = read_decomposition(&dir) {
            if dec.grid() == grid && dec.kernel_tag() == spec.tag() {
                return Ok(dec);
            }
        }
    }
    let dec = decompose(spec, grid, opts)?;
    write_decomposition(&dec, &dir)?;
    Ok(dec)
}
