//! Artifact persistence: atomic writes and hash-stamped JSON envelopes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::sha256_hex;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Writes via a sibling temp file and a rename, so readers never observe a
/// partially written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub artifact: String,
    pub config_hash: String,
    pub data: T,
}

pub fn to_json<T: Serialize>(artifact: &str, config_hash: &str, data: &T) -> Result<String> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        artifact: artifact.to_string(),
        config_hash: config_hash.to_string(),
        data,
    };
    Ok(serde_json::to_string_pretty(&env)? + "\n")
}

pub fn write_json<T: Serialize>(path: &Path, artifact: &str, config_hash: &str, data: &T) -> Result<()> {
    write_atomic(path, to_json(artifact, config_hash, data)?.as_bytes())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingArtifact(path.to_path_buf())),
        Err(e) => Err(e.into()),
    }
}

/// Loads an envelope, refusing a different schema or a different upstream hash.
pub fn read_json<T: DeserializeOwned>(path: &Path, artifact: &str, expected_hash: &str) -> Result<T> {
    let env: Envelope<T> = serde_json::from_slice(&read_bytes(path)?)?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "{} has schema version {}, expected {SCHEMA_VERSION}",
            path.display(),
            env.schema_version
        )));
    }
    if env.artifact != artifact {
        return Err(Error::Config(format!(
            "{} holds a {:?} artifact, expected {artifact:?}",
            path.display(),
            env.artifact
        )));
    }
    if env.config_hash != expected_hash {
        return Err(Error::HashMismatch {
            path: path.to_path_buf(),
            expected: expected_hash.to_string(),
            found: env.config_hash,
        });
    }
    Ok(env.data)
}

/// A file written by a stage, with its content digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

/// Writes a text artifact and returns its manifest entry.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<FileEntry> {
    write_atomic(&dir.join(name), contents.as_bytes())?;
    Ok(FileEntry {
        name: name.to_string(),
        sha256: sha256_hex(contents.as_bytes()),
    })
}

/// Reads a file listed in a manifest and checks it has not been altered.
pub fn read_listed(dir: &Path, entry: &FileEntry) -> Result<String> {
    let path: PathBuf = dir.join(&entry.name);
    let bytes = read_bytes(&path)?;
    let found = sha256_hex(&bytes);
    if found != entry.sha256 {
        return Err(Error::HashMismatch {
            path,
            expected: entry.sha256.clone(),
            found,
        });
    }
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(format!("{}: {e}", entry.name)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_hash_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_json(&p, "thing", "abc", &vec![1.5, 2.0]).unwrap();
        let v: Vec<f64> = read_json(&p, "thing", "abc").unwrap();
        assert_eq!(v, vec![1.5, 2.0]);
        assert!(matches!(read_json::<Vec<f64>>(&p, "thing", "abd"), Err(Error::HashMismatch { .. })));
        assert!(matches!(read_json::<Vec<f64>>(&p, "other", "abc"), Err(Error::Config(_))));
        let missing = dir.path().join("nope.json");
        let err = read_json::<Vec<f64>>(&missing, "thing", "abc").unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn listed_file_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let e = write_file(dir.path(), "a.csv", "x\n1\n").unwrap();
        assert_eq!(read_listed(dir.path(), &e).unwrap(), "x\n1\n");
        fs::write(dir.path().join("a.csv"), "x\n2\n").unwrap();
        assert!(matches!(read_listed(dir.path(), &e), Err(Error::HashMismatch { .. })));
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("sub/f.txt"), b"hi").unwrap();
        let names: Vec<_> = fs::read_dir(dir.path().join("sub")).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }
}
