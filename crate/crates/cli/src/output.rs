use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Writes CSV files prefixed with `# ` provenance lines.
pub struct OutputDir {
    dir: PathBuf,
    header: String,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path, experiment: &str, digest: &str, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        let header = format!(
            "# mlms {experiment}\n# config_sha256: {digest}\n# seed: {seed}\n# version: {}\n",
            env!("CARGO_PKG_VERSION")
        );
        Ok(Self { dir: dir.to_path_buf(), header, written: Vec::new() })
    }

    /// Serializes the body into memory, then writes header and body at once.
    pub fn write(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
        let mut buf = self.header.clone().into_bytes();
        body(&mut buf)?;
        let path = self.dir.join(name);
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// File-name-safe version of a label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_precedes_body() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(&dir.path().join("x"), "anc", "abc", 7).unwrap();
        let p = out
            .write("t.csv", |w| {
                w.extend_from_slice(b"a,b\n1,2\n");
                Ok(())
            })
            .unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert!(text.starts_with("# mlms anc\n# config_sha256: abc\n# seed: 7\n"));
        assert!(text.ends_with("a,b\n1,2\n"));
        assert_eq!(out.written().len(), 1);
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("SGD-M"), "sgd_m");
        assert_eq!(slug("MLMS"), "mlms");
    }
}
