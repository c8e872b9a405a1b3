//! On-disk model artifact: a directory of JSON/CSV files plus a manifest with
//! a format version and the SHA-256 of every file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error as ThisError;

use crate::backend::BuiltinState;
use crate::dataset::{read_table, FeatureSchema};
use crate::engine::{Engine, EngineConfig};
use crate::migraph::MiGraph;
use crate::pseudofeatures::BinLayout;
use crate::Error;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
const SCHEMA: &str = "schema.json";
const BINS: &str = "bins.json";
const MIGRAPH: &str = "migraph.json";
const BACKEND: &str = "backend.json";
const CONFIG: &str = "config.json";
const TRAIN: &str = "train.csv";

#[derive(Debug, ThisError)]
pub enum ArtifactError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("artifact format version {found} is not supported (supported: {supported})")]
    Version { found: u32, supported: u32 },
    #[error("{0} exists and is not a model artifact")]
    Occupied(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub created_unix: u64,
    pub files: BTreeMap<String, String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("artifact types serialize");
    s.push(b'\n');
    s
}

/// Writes `engine` to `dir`. The files are first written to a temporary
/// sibling directory that is then renamed into place.
pub fn save(engine: &Engine, dir: impl AsRef<Path>) -> Result<Manifest, Error> {
    let dir = dir.as_ref();
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(io_err(&parent))?;

    let files: Vec<(&str, Vec<u8>)> = vec![
        (SCHEMA, to_json(engine.schema())),
        (BINS, to_json(engine.layout.as_ref())),
        (MIGRAPH, to_json(engine.graph.as_ref())),
        (BACKEND, to_json(engine.builtin.as_ref())),
        (CONFIG, to_json(&engine.config)),
        (TRAIN, engine.train.to_csv_string()?.into_bytes()),
    ];
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        files: files
            .iter()
            .map(|(name, bytes)| (name.to_string(), sha256_hex(bytes)))
            .collect(),
    };

    let tmp = tempfile::Builder::new()
        .prefix(".tabguide-artifact-")
        .tempdir_in(&parent)
        .map_err(io_err(&parent))?;
    for (name, bytes) in &files {
        let p = tmp.path().join(name);
        fs::write(&p, bytes).map_err(io_err(&p))?;
    }
    let mp = tmp.path().join(MANIFEST);
    fs::write(&mp, to_json(&manifest)).map_err(io_err(&mp))?;

    if dir.exists() {
        let is_artifact = dir.join(MANIFEST).is_file();
        let is_empty = fs::read_dir(dir).map_err(io_err(dir))?.next().is_none();
        if !is_artifact && !is_empty {
            return Err(ArtifactError::Occupied(dir.to_path_buf()).into());
        }
        fs::remove_dir_all(dir).map_err(io_err(dir))?;
    }
    let kept = tmp.keep();
    fs::rename(&kept, dir).map_err(io_err(dir))?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest, Error> {
    let p = dir.as_ref().join(MANIFEST);
    let bytes = fs::read(&p).map_err(io_err(&p))?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|source| ArtifactError::Json {
        path: p.clone(),
        source,
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(ArtifactError::Version {
            found: manifest.format_version,
            supported: FORMAT_VERSION,
        }
        .into());
    }
    Ok(manifest)
}

fn read_verified(dir: &Path, manifest: &Manifest, name: &str) -> Result<Vec<u8>, Error> {
    let expected = manifest
        .files
        .get(name)
        .ok_or_else(|| ArtifactError::Integrity(format!("{name} is not listed in the manifest")))?;
    let p = dir.join(name);
    let bytes = fs::read(&p).map_err(io_err(&p))?;
    if &sha256_hex(&bytes) != expected {
        return Err(ArtifactError::Integrity(format!("{name} does not match its manifest hash")).into());
    }
    Ok(bytes)
}

fn parse<T: DeserializeOwned>(dir: &Path, name: &str, bytes: &[u8]) -> Result<T, Error> {
    serde_json::from_slice(bytes).map_err(|source| {
        ArtifactError::Json {
            path: dir.join(name),
            source,
        }
        .into()
    })
}

/// Loads and verifies an artifact. The engine uses the built-in backend.
pub fn load(dir: impl AsRef<Path>) -> Result<Engine, Error> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let schema: FeatureSchema = parse(dir, SCHEMA, &read_verified(dir, &manifest, SCHEMA)?)?;
    let layout: BinLayout = parse(dir, BINS, &read_verified(dir, &manifest, BINS)?)?;
    let graph: MiGraph = parse(dir, MIGRAPH, &read_verified(dir, &manifest, MIGRAPH)?)?;
    let builtin: BuiltinState = parse(dir, BACKEND, &read_verified(dir, &manifest, BACKEND)?)?;
    let config: EngineConfig = parse(dir, CONFIG, &read_verified(dir, &manifest, CONFIG)?)?;
    let train_bytes = read_verified(dir, &manifest, TRAIN)?;
    let train = read_table(train_bytes.as_slice(), &schema)?;

    let p = layout.num_pseudo();
    let consistent = layout.matches_schema(&schema)
        && graph.num_pseudo() == p
        && graph.feature_names.iter().map(String::as_str).eq(schema.names())
        && builtin.counts.num_pseudo == p
        && builtin.counts.rows == train.len() as u64;
    if !consistent {
        return Err(ArtifactError::Integrity("artifact files are mutually inconsistent".into()).into());
    }
    Engine::from_parts(train, config, layout, graph, builtin)
}

/// Combined hash of all manifest entries; identifies an artifact independent
/// of its creation time.
pub fn content_hash(manifest: &Manifest) -> String {
    let mut h = Sha256::new();
    for (name, digest) in &manifest.files {
        h.update(name.as_bytes());
        h.update(b"=");
        h.update(digest.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
