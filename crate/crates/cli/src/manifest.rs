use std::fs;
use std::path::Path;

use omnict_core::json::write_stable;
use omnict_core::{Error, Result};
use serde_json::{json, Value};

pub const FILE: &str = "manifest.json";

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `manifest.json` for a command's output directory: the command, its arguments as typed,
/// and whatever the command resolved (config, shapes, results).
pub fn write(dir: &Path, command: &str, details: Value) -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let body = json!({
        "command": command,
        "args": args,
        "version": env!("CARGO_PKG_VERSION"),
        "details": details,
    });
    write_stable(&body, dir.join(FILE))
}
