//! Result tables. Every table starts with a comment line naming the tool
//! version and the hash of the configuration that produced it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn header(hash: &str) -> String {
    format!("# decoh {VERSION} config_sha256={hash}\n")
}

/// Tables collected in memory and written together once a command has
/// finished, so a failing run leaves no partial outputs behind.
#[derive(Debug)]
pub struct Artifacts {
    header: String,
    files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn new(hash: &str) -> Self {
        Self { header: header(hash), files: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, body: &str) {
        self.files.push((name.into(), format!("{}{body}", self.header)));
    }

    /// Writes every table to a temporary name first and renames them
    /// only after all writes succeeded.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, body) in &self.files {
            let tmp = dir.join(format!(".{name}.partial"));
            if let Err(e) = fs::write(&tmp, body) {
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                return Err(e).with_context(|| format!("cannot write {}", tmp.display()));
            }
            staged.push((tmp, dir.join(name)));
        }
        let mut out = Vec::with_capacity(staged.len());
        for (tmp, fin) in staged {
            fs::rename(&tmp, &fin).with_context(|| format!("cannot move {} into place", fin.display()))?;
            out.push(fin);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_carry_the_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new("abc");
        a.add("t.csv", "x\n1\n");
        let paths = a.write(dir.path()).unwrap();
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(text, format!("# decoh {VERSION} config_sha256=abc\nx\n1\n"));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
