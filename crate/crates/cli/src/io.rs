//! Input loading with provenance hashing, and atomic output.

use std::io::Write;
use std::path::{Path, PathBuf};

use mswig_core::{models, parse_graph, MGraph};
use mswig_stats::dataset::{Dataset, Roles};
use mswig_stats::learners::Family;
use mswig_stats::moments::LearnerSet;
use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

/// Hashes the parsed arguments and every input read, so a run is identified by its spec.
pub struct Provenance {
    hasher: Sha256,
}

impl Provenance {
    pub fn new(args_json: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(args_json.as_bytes());
        Provenance { hasher }
    }

    fn record(&mut self, label: &str, bytes: &[u8]) {
        self.hasher.update((label.len() as u64).to_le_bytes());
        self.hasher.update(label.as_bytes());
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
    }

    pub fn hex(&self) -> String {
        self.hasher.clone().finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        self.record(&path.display().to_string(), &bytes);
        Ok(bytes)
    }

    /// Graph text from a file or a `builtin:<name>` reference.
    pub fn graph_text(&mut self, source: &str) -> Result<String> {
        if let Some(name) = source.strip_prefix("builtin:") {
            let text = match name {
                "chain" => models::CHAIN,
                "M1" => models::M1,
                "M2" => models::M2,
                "M3" => models::M3,
                "necessity" => models::NECESSITY,
                "panel" => models::PANEL,
                _ => return Err(CliError::Validation(format!("unknown built-in graph `{name}`"))),
            };
            return Ok(text.to_string());
        }
        String::from_utf8(self.read(Path::new(source))?).map_err(|_| CliError::Validation(format!("{source}: not utf-8")))
    }

    pub fn graph(&mut self, source: &str) -> Result<MGraph> {
        Ok(parse_graph(&self.graph_text(source)?)?)
    }

    pub fn dataset(&mut self, path: &Path) -> Result<Dataset> {
        let bytes = self.read(path)?;
        Ok(Dataset::from_reader(bytes.as_slice())?)
    }

    /// JSON given inline (starting with `{`, `[` or `"`) or as a file path.
    pub fn json<T: DeserializeOwned>(&mut self, value: &str) -> Result<T> {
        let text = if value.trim_start().starts_with(['{', '[', '"']) {
            value.to_string()
        } else {
            String::from_utf8(self.read(Path::new(value))?).map_err(|_| CliError::Validation(format!("{value}: not utf-8")))?
        };
        Ok(serde_json::from_str(&text)?)
    }

    pub fn roles(&mut self, value: &str) -> Result<Roles> {
        self.json(value)
    }

    /// A family name selects that family for every nuisance; otherwise a full learner set.
    pub fn learners(&mut self, value: Option<&str>) -> Result<LearnerSet> {
        let Some(v) = value else { return Ok(LearnerSet::default()) };
        let family: std::result::Result<Family, _> = serde_json::from_str(&format!("\"{}\"", v.trim()));
        match family {
            Ok(f) => Ok(LearnerSet::of_family(f)),
            Err(_) => self.json(v),
        }
    }
}

/// Writes through a temporary file in the target directory and renames it into place,
/// creating the directory if needed.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

/// Writes to `out` when given, else to standard output.
pub fn emit(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(p) => {
            write_atomic(p, contents.as_bytes())?;
            log::info!("wrote {}", p.display());
            Ok(())
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}
