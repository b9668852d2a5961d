//! Output directory handling and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use crate::config::hex_digest;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CONFIG_FILE: &str = "config.toml";

/// One command invocation writing into `dir`. Every file goes through
/// [`Run::write`] so the manifest can list it with its digest.
pub struct Run {
    dir: PathBuf,
    command: String,
    seed: u64,
    config_toml: String,
    outputs: Vec<(String, String)>,
}

impl Run {
    pub fn new(dir: PathBuf, command: impl Into<String>, seed: u64, config_toml: String) -> CliResult<Self> {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Run {
            dir,
            command: command.into(),
            seed,
            config_toml,
            outputs: Vec::new(),
        })
    }

    /// Writes `bytes` to `rel` under the run directory.
    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let bytes = bytes.as_ref();
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push((rel.to_string(), hex_digest(bytes)));
        Ok(path)
    }

    /// Writes the effective config and the manifest; returns the manifest path.
    pub fn finish(mut self) -> CliResult<PathBuf> {
        let config_path = self.dir.join(CONFIG_FILE);
        fs::write(&config_path, &self.config_toml).map_err(|e| CliError::io(&config_path, e))?;
        self.outputs.sort();
        let mut m = String::new();
        let _ = writeln!(m, "tool: mieval {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(m, "command: {}", self.command);
        let _ = writeln!(m, "seed: {}", self.seed);
        let _ = writeln!(m, "config: {CONFIG_FILE}");
        let _ = writeln!(m, "config_sha256: {}", hex_digest(self.config_toml.as_bytes()));
        for (rel, digest) in &self.outputs {
            let _ = writeln!(m, "output: {rel} sha256={digest}");
        }
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, m).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_sorted_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        let mut run = Run::new(tmp.path().join("r"), "demo --flag", 7, "seed = 7\n".into()).unwrap();
        run.write("b.txt", "b").unwrap();
        run.write("sub/a.txt", "a").unwrap();
        let m = fs::read_to_string(run.finish().unwrap()).unwrap();
        let lines: Vec<&str> = m.lines().collect();
        assert_eq!(lines[1], "command: demo --flag");
        assert_eq!(lines[2], "seed: 7");
        assert!(lines[5].starts_with("output: b.txt sha256=3e23e8160039594a33894f6564e1b1348bbd7a0088d42c4acb73eeaed59c009d"));
        assert!(lines[6].starts_with("output: sub/a.txt sha256="));
        assert_eq!(fs::read_to_string(tmp.path().join("r/config.toml")).unwrap(), "seed = 7\n");
    }
}
