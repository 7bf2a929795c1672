use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Output files collected in memory and written together by [`Artifacts::flush`].
pub struct Artifacts {
    dir: PathBuf,
    hash: String,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new(dir: &Path, hash: String) -> Self {
        Artifacts { dir: dir.to_path_buf(), hash, files: Vec::new() }
    }

    pub fn header(&self) -> String {
        format!("# measure-toc {VERSION} config-sha256={}\n", self.hash)
    }

    /// Adds a text file whose body is produced by `body`, prefixed by the header comment.
    pub fn text(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> measure_toc::Result<()>) -> Result<()> {
        let mut buf = self.header().into_bytes();
        body(&mut buf)?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    /// Adds a JSON file with `tool_version` and `config_sha256` fields merged in.
    pub fn json(&mut self, name: &str, mut value: Value) -> Result<()> {
        if let Value::Object(map) = &mut value {
            map.insert("tool_version".into(), Value::from(VERSION));
            map.insert("config_sha256".into(), Value::from(self.hash.clone()));
        }
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        self.files.push((name.to_string(), text.into_bytes()));
        Ok(())
    }

    pub fn flush(self) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir).with_context(|| format!("cannot create {}", self.dir.display()))?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = self.dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}
