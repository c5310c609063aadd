//! Atomic file writes: data goes to a sibling temp file that is renamed over
//! the destination only after a successful flush.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

fn temp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

/// Writes `bytes` to `path` via temp-then-rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let staged = stage(path, bytes)?;
    staged.commit()
}

/// A file that has been fully written next to its destination but not yet
/// moved into place. Dropping it without calling [`Staged::commit`] removes
/// the temp file.
#[derive(Debug)]
pub struct Staged {
    temp: PathBuf,
    dest: PathBuf,
    committed: bool,
}

impl Staged {
    pub fn dest(&self) -> &Path {
        &self.dest
    }

    pub fn commit(mut self) -> Result<()> {
        fs::rename(&self.temp, &self.dest).map_err(|e| Error::io(&self.dest, e))?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_file(&self.temp);
        }
    }
}

/// Writes `bytes` to a temp file beside `path` and returns the pending rename.
pub fn stage(path: &Path, bytes: &[u8]) -> Result<Staged> {
    let temp = temp_path(path);
    let mut f = fs::File::create(&temp).map_err(|e| Error::io(path, e))?;
    let res = f.write_all(bytes).and_then(|_| f.sync_all());
    if let Err(e) = res {
        let _ = fs::remove_file(&temp);
        return Err(Error::io(path, e));
    }
    Ok(Staged {
        temp,
        dest: path.to_path_buf(),
        committed: false,
    })
}
