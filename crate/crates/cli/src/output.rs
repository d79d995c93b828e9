//! Config-echo headers for every file the tool writes.

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

pub fn header(cfg: &RunConfig, command: &str, deterministic: bool) -> Value {
    json!({
        "tool": "mwp",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": cfg.seed,
        "deterministic": deterministic,
        "config": cfg,
    })
}

/// `# `-prefixed header line for line-oriented files.
pub fn header_line(cfg: &RunConfig, command: &str, deterministic: bool) -> String {
    format!("mwp {}", header(cfg, command, deterministic))
}

pub fn write(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes `{"header": …, <payload fields>}` as pretty JSON.
pub fn write_json(path: &Path, header: Value, payload: &impl Serialize) -> Result<(), CliError> {
    let mut doc = json!({ "header": header });
    match serde_json::to_value(payload).map_err(|e| CliError::Runtime(e.to_string()))? {
        Value::Object(map) => doc.as_object_mut().unwrap().extend(map),
        other => {
            doc["data"] = other;
        }
    }
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(path, &(text + "\n"))
}
