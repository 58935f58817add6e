use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::GenerationRecord;

/// One `<key>.json` file per generation.
#[derive(Clone, Debug)]
pub struct GenerationCache {
    dir: PathBuf,
}

impl GenerationCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn load(&self, key: &str) -> io::Result<Option<GenerationRecord>> {
        let text = match std::fs::read_to_string(self.path_for(key)) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        serde_json::from_str(&text).map(Some).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    /// Write-then-rename, so readers never see a partial record.
    pub fn store(&self, record: &GenerationRecord) -> io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(serde_json::to_string_pretty(record)?.as_bytes())?;
        tmp.persist(self.path_for(&record.key)).map_err(|e| e.error)?;
        Ok(())
    }
}
