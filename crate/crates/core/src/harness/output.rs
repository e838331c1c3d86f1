//! On-disk artifacts.
//!
//! * `fields_XXXX.grid`: `u64` LE dimension count `D`, `D × u64` LE points
//!   per axis, `D × f64` LE extents, then the row-major `f64` LE density.
//! * `trajectories.csv`: `frame_time,traj_id,x_0,..,x_{D-1}`.
//! * `diagnostics.csv`: `frame_time,norm,energy,l1,ks_axis_*[,circulation]`.
//! * `manifest.json`: config hash, code version, seed and a SHA-256 for every
//!   file written.
//!
//! Every file is written to a hidden temporary next to its destination and
//! renamed into place once complete.

use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::error::HarnessError;
use crate::model::Grid;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

/// Buffered file that only appears under its final name after [`commit`](Self::commit);
/// dropping it uncommitted removes the temporary.
pub struct AtomicFile {
    tmp: PathBuf,
    dest: PathBuf,
    writer: Option<BufWriter<File>>,
}

impl AtomicFile {
    pub fn create(dest: &Path) -> io::Result<Self> {
        let name = dest
            .file_name()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "destination has no file name"))?;
        let tmp = dest.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
        let writer = BufWriter::new(File::create(&tmp)?);
        Ok(Self {
            tmp,
            dest: dest.to_path_buf(),
            writer: Some(writer),
        })
    }

    pub fn commit(mut self) -> io::Result<PathBuf> {
        let file = self.writer.take().unwrap().into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        fs::rename(&self.tmp, &self.dest)?;
        Ok(self.dest.clone())
    }
}

impl Drop for AtomicFile {
    fn drop(&mut self) {
        if self.writer.take().is_some() {
            let _ = fs::remove_file(&self.tmp);
        }
    }
}

impl Write for AtomicFile {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.writer.as_mut().unwrap().write(buf)
    }
    fn flush(&mut self) -> io::Result<()> {
        self.writer.as_mut().unwrap().flush()
    }
}

pub fn write_atomic(dest: &Path, bytes: &[u8]) -> io::Result<PathBuf> {
    let mut f = AtomicFile::create(dest)?;
    f.write_all(bytes)?;
    f.commit()
}

pub fn encode_grid(grid: &Grid, values: &[f64]) -> Vec<u8> {
    let d = grid.dims();
    let mut out = Vec::with_capacity(8 * (1 + 2 * d + values.len()));
    out.extend_from_slice(&(d as u64).to_le_bytes());
    for &n in grid.points() {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for &l in grid.extents() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<(Grid, Vec<f64>), HarnessError> {
    let bad = |m: &str| HarnessError::Io(format!("malformed grid file: {m}"));
    let word = |i: usize| -> Result<[u8; 8], HarnessError> {
        bytes
            .get(8 * i..8 * i + 8)
            .map(|s| s.try_into().unwrap())
            .ok_or_else(|| bad("truncated header"))
    };
    let d = u64::from_le_bytes(word(0)?) as usize;
    if d == 0 || d > 8 {
        return Err(bad("dimension count"));
    }
    let points = (0..d)
        .map(|a| word(1 + a).map(|w| u64::from_le_bytes(w) as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let extents = (0..d)
        .map(|a| word(1 + d + a).map(f64::from_le_bytes))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = Grid::new(points, extents).map_err(|e| bad(&e.to_string()))?;
    let body = &bytes[8 * (1 + 2 * d)..];
    if body.len() != 8 * grid.len() {
        return Err(bad("payload length"));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((grid, values))
}

pub fn read_grid_file(path: &Path) -> Result<(Grid, Vec<f64>), HarnessError> {
    decode_grid(&fs::read(path)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub code_version: String,
    pub scenario: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub alpha_prime: String,
    pub frame_times: Vec<f64>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn entry(dir: &Path, file: &Path) -> io::Result<ArtifactEntry> {
        let rel = file.strip_prefix(dir).unwrap_or(file);
        Ok(ArtifactEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_file(file)?,
            bytes: fs::metadata(file)?.len(),
        })
    }

    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_NAME), text.as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Io(format!("manifest: {e}")))
    }
}

/// Re-hash every artifact listed in `dir`'s manifest.
pub fn verify_manifest(dir: &Path) -> Result<Manifest, HarnessError> {
    let m = Manifest::read(dir)?;
    for a in &m.artifacts {
        let digest = sha256_file(&dir.join(&a.path))?;
        if digest != a.sha256 {
            return Err(HarnessError::Io(format!("checksum mismatch for {}", a.path)));
        }
    }
    Ok(m)
}

/// Streaming CSV writer with deterministic float formatting (shortest round-trip form).
pub struct CsvWriter {
    file: AtomicFile,
}

impl CsvWriter {
    pub fn create(dest: &Path, header: &[String]) -> io::Result<Self> {
        let mut file = AtomicFile::create(dest)?;
        writeln!(file, "{}", header.join(","))?;
        Ok(Self { file })
    }

    pub fn row(&mut self, fields: &[String]) -> io::Result<()> {
        writeln!(self.file, "{}", fields.join(","))
    }

    pub fn commit(self) -> io::Result<PathBuf> {
        self.file.commit()
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}
