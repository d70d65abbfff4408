//! Small text-format helpers shared by the dataset, config and export writers.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::IoError;

/// Parses exactly `N` whitespace-separated floats.
pub(crate) fn parse_floats<const N: usize>(line: &str) -> Option<[f64; N]> {
    let mut out = [0.0; N];
    let mut it = line.split_ascii_whitespace();
    for slot in out.iter_mut() {
        *slot = it.next()?.parse().ok()?;
    }
    if it.next().is_some() {
        return None;
    }
    Some(out)
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
        }
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| IoError::io(&tmp, e))?;
        f.write_all(contents).map_err(|e| IoError::io(&tmp, e))?;
        f.sync_all().map_err(|e| IoError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| IoError::io(path, e))
}

pub(crate) fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}
