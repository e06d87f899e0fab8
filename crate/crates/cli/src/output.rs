//! Fresh output directories with a manifest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

/// Output directory of one command. Removed again unless [`finish`](Self::finish)
/// is reached, so a failed command leaves nothing behind.
pub struct RunDir {
    path: PathBuf,
    files: Vec<String>,
    created: bool,
    done: bool,
}

impl RunDir {
    pub fn create(path: &Path) -> Result<Self> {
        let existed = path.exists();
        if existed {
            let empty = path.is_dir() && std::fs::read_dir(path)?.next().is_none();
            if !empty {
                bail!("output directory {} already exists and is not empty", path.display());
            }
        }
        std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(RunDir { path: path.to_path_buf(), files: Vec::new(), created: !existed, done: false })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.file(name);
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s)
    }

    /// Records a file written by other means.
    pub fn register(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    /// Writes `manifest.json`, the only output carrying a timestamp.
    pub fn finish(mut self, command: &str, extra: Value) -> Result<()> {
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut manifest = json!({
            "command": command,
            "args": std::env::args().skip(1).collect::<Vec<_>>(),
            "version": env!("CARGO_PKG_VERSION"),
            "created_unix": created,
            "files": self.files,
        });
        if let (Value::Object(m), Value::Object(x)) = (&mut manifest, extra) {
            m.extend(x);
        }
        self.write_json("manifest.json", &manifest)?;
        self.done = true;
        Ok(())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        if self.created {
            let _ = std::fs::remove_dir_all(&self.path);
        } else {
            for f in &self.files {
                let _ = std::fs::remove_file(self.path.join(f));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_non_empty() {
        let t = tempfile::tempdir().unwrap();
        std::fs::write(t.path().join("x"), "1").unwrap();
        assert!(RunDir::create(t.path()).is_err());
    }

    #[test]
    fn unfinished_is_removed() {
        let t = tempfile::tempdir().unwrap();
        let p = t.path().join("run");
        {
            let mut d = RunDir::create(&p).unwrap();
            d.write("a.txt", "x").unwrap();
        }
        assert!(!p.exists());
        let mut d = RunDir::create(&p).unwrap();
        d.write("a.txt", "x").unwrap();
        d.finish("test", json!({"k": 1})).unwrap();
        let m: Value = serde_json::from_str(&std::fs::read_to_string(p.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["files"], json!(["a.txt"]));
        assert_eq!(m["k"], 1);
    }
}
