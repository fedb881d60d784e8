use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Describes a CSV dataset and how to window it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub path: PathBuf,
    #[serde(default)]
    pub feature_columns: Vec<String>,
    #[serde(default = "default_lookback")]
    pub lookback: usize,
    pub horizon: usize,
    #[serde(default = "default_warmup_ratio")]
    pub warmup_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_lookback() -> usize {
    60
}

fn default_warmup_ratio() -> f64 {
    0.25
}

impl DatasetManifest {
    /// Parses a TOML manifest. A relative data path resolves against the
    /// manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest =
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if m.path.is_relative() {
            if let Some(dir) = path.parent() {
                m.path = dir.join(&m.path);
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.toml");
        std::fs::write(&p, "path = \"x.csv\"\nhorizon = 24\nfeature_columns = [\"OT\"]\n").unwrap();
        let m = DatasetManifest::load(&p).unwrap();
        assert_eq!(m.lookback, 60);
        assert_eq!(m.warmup_ratio, 0.25);
        assert_eq!(m.path, dir.path().join("x.csv"));
        std::fs::write(&p, "path = \"x.csv\"\nhorizon = 1\nbogus = 3\n").unwrap();
        assert!(DatasetManifest::load(&p).is_err());
    }
}
