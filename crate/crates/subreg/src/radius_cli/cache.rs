//! Report cache and output files. Every file is written to a temporary in
//! the target directory and renamed into place, so concurrent readers see
//! either the old file or the new one.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::report::RunReport;

fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Reports keyed by config hash.
#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    /// The cached report, if present and readable; corrupt entries are misses.
    pub fn load(&self, hash: &str) -> Option<RunReport> {
        let text = std::fs::read_to_string(self.path(hash)).ok()?;
        RunReport::from_json(&text).ok().filter(|r| r.config_hash == hash)
    }

    pub fn store(&self, report: &RunReport) -> std::io::Result<PathBuf> {
        let path = self.path(&report.config_hash);
        write_atomic(&path, report.to_json().as_bytes())?;
        Ok(path)
    }
}

/// Writes `report.json`, `per_scale.csv` and `summary.txt` under
/// `out/<hash prefix>/` and returns that directory.
pub fn write_outputs(report: &RunReport, out: &Path) -> std::io::Result<PathBuf> {
    let dir = out.join(&report.config_hash[..16]);
    write_atomic(&dir.join("report.json"), report.to_json().as_bytes())?;
    write_atomic(&dir.join("per_scale.csv"), report.to_csv().as_bytes())?;
    write_atomic(&dir.join("summary.txt"), report.summary().as_bytes())?;
    Ok(dir)
}
