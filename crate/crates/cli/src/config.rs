//! Config resolution, manifests and atomic output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Merges a JSON config file (or a previous manifest) with the flags given on
/// the command line and deserializes the result.
///
/// Flags left unset serialize as `null` and do not shadow values from the file.
pub fn resolve<F: Serialize, C: DeserializeOwned>(
    config: Option<&Path>,
    flags: &F,
) -> Result<C, CliError> {
    let mut merged = match config {
        Some(path) => load_config(path)?,
        None => Map::new(),
    };
    match serde_json::to_value(flags).map_err(|e| CliError::Usage(e.to_string()))? {
        Value::Object(over) => merged.extend(over.into_iter().filter(|(_, v)| !v.is_null())),
        _ => unreachable!("flag structs serialize to objects"),
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
}

fn load_config(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let mut obj = match value {
        Value::Object(obj) => obj,
        _ => return Err(CliError::Usage(format!("config {} must be a JSON object", path.display()))),
    };
    // A manifest carries the resolved config under "config".
    if obj.contains_key("command") {
        if let Some(Value::Object(inner)) = obj.remove("config") {
            return Ok(inner);
        }
    }
    Ok(obj)
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    outputs: &'a [PathBuf],
}

/// Writes `<output_dir>/<command>.manifest.json` echoing the resolved config.
pub fn write_manifest<C: Serialize>(
    output_dir: &Path,
    command: &str,
    config: &C,
    outputs: &[PathBuf],
) -> Result<PathBuf, CliError> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        outputs,
    };
    let path = output_dir.join(format!("{command}.manifest.json"));
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    text.push('\n');
    write_atomic(path, |f| f.write_all(text.as_bytes()).map_err(CliError::from))
}

/// Writes through a temporary file in the destination directory, then renames it into place.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut fs::File) -> Result<(), CliError>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}
