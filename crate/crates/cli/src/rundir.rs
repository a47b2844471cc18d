//! Run directories and manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use boclab::boc::SeedLink;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const OUT_ENV: &str = "BOCLAB_OUT";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub versions: Vec<(String, String)>,
    pub seed: u64,
    pub seed_chain: Vec<SeedLink>,
    pub created: String,
    /// Files read by the run, with their checksums at run time.
    pub inputs: Vec<FileEntry>,
    pub files: Vec<FileEntry>,
    /// `ok`, or a description of the numerical failure.
    pub status: String,
}

pub fn sha256_file(path: &Path) -> CliResult<(String, u64)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Writes `bytes` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// An output directory being filled by one run.
#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    config: ExperimentConfig,
    files: Vec<String>,
    inputs: Vec<FileEntry>,
    seed_chain: Vec<SeedLink>,
}

impl RunDir {
    /// Output root: `--out`, else `$BOCLAB_OUT`, else `runs`.
    pub fn root(flag: Option<&Path>) -> PathBuf {
        match flag {
            Some(p) => p.to_path_buf(),
            None => std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs")),
        }
    }

    /// Creates `<root>/<UTC timestamp>-<hash12>/` (with a numeric suffix on
    /// collision) and writes the config snapshot.
    pub fn create(root: &Path, config: &ExperimentConfig) -> CliResult<Self> {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
        let base = format!("{stamp}-{}", &config.hash()[..12]);
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let mut path = root.join(&base);
        let mut k = 1;
        loop {
            match fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    k += 1;
                    path = root.join(format!("{base}-{k}"));
                }
                Err(e) => return Err(CliError::io(&path, e)),
            }
        }
        let mut dir = Self { path, config: config.clone(), files: Vec::new(), inputs: Vec::new(), seed_chain: Vec::new() };
        dir.write(CONFIG_FILE, config.canonical_json().as_bytes())?;
        Ok(dir)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let p = self.file(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        write_atomic(&p, bytes)?;
        self.register(name);
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Records a file written by other code (e.g. a BOCM writer).
    pub fn register(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        let (sha256, bytes) = sha256_file(path)?;
        self.inputs.push(FileEntry { path: path.display().to_string(), sha256, bytes });
        Ok(())
    }

    pub fn seed_link(&mut self, label: &str, seed: u64) {
        self.seed_chain.push(SeedLink { label: label.to_string(), seed });
    }

    /// Checksums every registered file and writes the manifest atomically.
    pub fn finish(mut self, status: &str) -> CliResult<RunManifest> {
        self.files.sort();
        let files = self
            .files
            .iter()
            .map(|f| {
                let (sha256, bytes) = sha256_file(&self.file(f))?;
                Ok(FileEntry { path: f.clone(), sha256, bytes })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.config.command.clone(),
            config_hash: self.config.hash(),
            versions: vec![
                ("boclab".into(), boclab::VERSION.into()),
                ("boclab-cli".into(), env!("CARGO_PKG_VERSION").into()),
            ],
            seed: self.config.seed,
            seed_chain: self.seed_chain,
            created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            inputs: self.inputs,
            files,
            status: status.to_string(),
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        write_atomic(&self.path.join(MANIFEST_FILE), s.as_bytes())?;
        Ok(manifest)
    }
}

/// Reads `dir/manifest.json` (or a manifest path) and checks every listed
/// file. Returns the manifest and the paths whose checksums differ.
pub fn verify(path: &Path) -> CliResult<(RunManifest, Vec<String>)> {
    let (dir, manifest_path) = manifest_location(path);
    let text = fs::read_to_string(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let mut bad = Vec::new();
    for f in &manifest.files {
        match sha256_file(&dir.join(&f.path)) {
            Ok((h, _)) if h == f.sha256 => {}
            _ => bad.push(f.path.clone()),
        }
    }
    Ok((manifest, bad))
}

/// Accepts a run directory or a path to its manifest.
pub fn manifest_location(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
    }
}
