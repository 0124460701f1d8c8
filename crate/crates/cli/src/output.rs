//! Deterministic data files and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ConfigOverlay;
use crate::error::CliError;

/// Scientific notation with 12 significant digits.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.11e}")
}

/// A file produced by a command, held in memory until the writer runs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl OutputFile {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            bytes,
        }
    }
}

/// CSV with `#` comment lines ahead of the header. LF line endings.
#[derive(Debug, Clone, Default)]
pub struct Table {
    comments: Vec<String>,
    header: Vec<String>,
    rows: Vec<String>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self {
            comments: Vec::new(),
            header: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl AsRef<str>) -> &mut Self {
        self.comments.push(line.as_ref().to_string());
        self
    }

    /// Appends a row of pre-formatted cells.
    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.header.len(), "row width");
        self.rows.push(cells.join(","));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn into_file(self, name: &str) -> OutputFile {
        let mut s = String::new();
        for c in &self.comments {
            let _ = writeln!(s, "# {c}");
        }
        let _ = writeln!(s, "{}", self.header.join(","));
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        OutputFile::new(name, s.into_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub wall_clock_s: f64,
    #[serde(default)]
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub provenance: BTreeMap<String, String>,
    pub config: ConfigOverlay,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.toml")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Writes `files` into `dir` in order and returns their digests.
pub fn write_all(dir: &Path, files: &[OutputFile]) -> Result<Vec<FileDigest>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    files
        .iter()
        .map(|f| {
            let path: PathBuf = dir.join(&f.name);
            fs::write(&path, &f.bytes).map_err(|e| CliError::io(&path, e))?;
            Ok(FileDigest {
                path: f.name.clone(),
                sha256: sha256_hex(&f.bytes),
                bytes: f.bytes.len() as u64,
            })
        })
        .collect()
}
