use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use svcforge::audio::{read_wav, resample};
use svcforge::fsutil::{stage, Staged};
use svcforge::{AudioClip, CANONICAL_RATE};

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<svcforge::Error> for CliError {
    fn from(e: svcforge::Error) -> Self {
        match e {
            svcforge::Error::NonzeroFinalNoise => CliError::Internal(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Reads a WAV file and brings it to the canonical rate.
pub fn load_audio(path: &Path) -> CliResult<AudioClip> {
    let clip = read_wav(path)?;
    if clip.sample_rate() == CANONICAL_RATE {
        Ok(clip)
    } else {
        Ok(resample(&clip, CANONICAL_RATE)?)
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn json_bytes<T: serde::Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string())
}

/// Output files collected in memory and written only once every job has
/// succeeded: all files are staged first, then renamed into place.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    pub fn extend(&mut self, other: Outputs) {
        self.files.extend(other.files);
    }

    pub fn paths(&self) -> Vec<String> {
        self.files.iter().map(|(p, _)| p.display().to_string()).collect()
    }

    pub fn commit(self) -> CliResult<Vec<String>> {
        let mut seen = std::collections::HashSet::new();
        for (p, _) in &self.files {
            if !seen.insert(p.clone()) {
                return Err(CliError::Data(format!("two outputs map to {}", p.display())));
            }
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
            }
        }
        let paths = self.paths();
        let staged: Vec<Staged> = self
            .files
            .iter()
            .map(|(p, b)| stage(p, b))
            .collect::<Result<_, _>>()?;
        for s in staged {
            s.commit()?;
        }
        Ok(paths)
    }
}

/// Runs `f` over `items` on the configured pool and returns results in
/// input order.
pub fn par_map<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(usize, &T) -> CliResult<R> + Sync + Send,
) -> CliResult<Vec<R>> {
    items
        .par_iter()
        .enumerate()
        .map(|(i, x)| f(i, x))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Independent per-item seed, so results do not depend on scheduling.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
