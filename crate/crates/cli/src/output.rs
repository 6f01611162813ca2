use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult, Kind};

/// An output directory and the artifacts written to it so far.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        let unwritable = |e: std::io::Error| CliError::new(Kind::UnwritableOutput, format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(unwritable)?;
        let probe = dir.join(".write-test");
        fs::write(&probe, b"").map_err(unwritable)?;
        fs::remove_file(&probe).map_err(unwritable)?;
        Ok(OutDir { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::new(Kind::UnwritableOutput, format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::new(Kind::Runtime, e.to_string()))?;
        text.push('\n');
        self.write(name, text)
    }

    /// Writes `manifest.json` listing every artifact of the run.
    pub fn finish(mut self, command: &str, inputs: Value, effective: Value) -> CliResult<()> {
        let mut outputs = self.written.clone();
        outputs.push("manifest.json".into());
        let manifest = serde_json::json!({
            "tool": "ddrsm",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "inputs": inputs,
            "effective": effective,
            "outputs": outputs,
        });
        self.write_json("manifest.json", &manifest)
    }
}

/// Best-effort `error.json` next to the other artifacts.
pub fn write_error_report(dir: &Path, err: &CliError) {
    if dir.is_dir() {
        let _ = fs::write(dir.join("error.json"), err.to_json() + "\n");
    }
}
