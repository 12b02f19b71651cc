//! Artifact layout under the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use kinespike::encoding::InputMode;
use kinespike::nets::ModelKind;
use kinespike::Target;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn thresholds(&self) -> PathBuf {
        self.root.join("thresholds.json")
    }

    pub fn scaler(&self) -> PathBuf {
        self.root.join("scaler.json")
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("split.json")
    }

    pub fn events_dir(&self) -> PathBuf {
        self.root.join("events")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn model(&self, stem: &str) -> PathBuf {
        self.models_dir().join(format!("{stem}.model.json"))
    }

    pub fn history(&self, stem: &str) -> PathBuf {
        self.models_dir().join(format!("{stem}.history.csv"))
    }

    pub fn snn(&self, stem: &str) -> PathBuf {
        self.models_dir().join(format!("{stem}.snn.json"))
    }

    pub fn report(&self, name: &str, ext: &str) -> PathBuf {
        self.reports_dir().join(format!("{name}.{ext}"))
    }
}

/// `{kind}-{target}-{mode}-s{seed}`, the file stem shared by a model's artifacts.
pub fn model_stem(kind: ModelKind, target: Target, mode: InputMode, seed: u64) -> String {
    format!("{kind}-{target}-{mode}-s{seed}")
}

/// Writes `contents`, creating parent directories.
pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| kinespike::Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| {
        CliError::Core(kinespike::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

/// Reads an artifact produced by `command`, reporting its absence as a dependency error.
pub fn read(path: &Path, command: &'static str) -> CliResult<String> {
    if !path.exists() {
        return Err(CliError::Dependency {
            artifact: path.to_path_buf(),
            command,
        });
    }
    fs::read_to_string(path).map_err(|e| {
        CliError::Core(kinespike::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

pub fn require(path: &Path, command: &'static str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Dependency {
            artifact: path.to_path_buf(),
            command,
        })
    }
}

pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"
}
