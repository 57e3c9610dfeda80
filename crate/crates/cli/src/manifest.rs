//! Run manifests and the output directory that records them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce a run's outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Option<RunConfig>,
    pub seeds: Seeds,
    /// SHA-256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// Hash of everything above; output files carry it.
    pub run_id: String,
    /// SHA-256 of every output file, keyed by name.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Seeds {
    pub master: Option<u64>,
    pub cohort: Option<u64>,
    pub sim: Option<u64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: Option<RunConfig>,
        seeds: Seeds,
        inputs: BTreeMap<String, String>,
    ) -> Self {
        let mut m = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            config,
            seeds,
            inputs,
            run_id: String::new(),
            outputs: BTreeMap::new(),
        };
        let body = serde_json::to_vec(&m).expect("manifest serializes");
        m.run_id = sha256_hex(&body);
        m
    }
}

/// Records the hash of each input file it reads.
#[derive(Debug, Default)]
pub struct Inputs {
    pub hashes: BTreeMap<String, String>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path, what: &str) -> Result<Vec<u8>, CliError> {
        if !path.exists() {
            return Err(CliError::Validation(format!(
                "{what} not found: {}",
                path.display()
            )));
        }
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.hashes
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_text(&mut self, path: &Path, what: &str) -> Result<String, CliError> {
        let bytes = self.read(path, what)?;
        String::from_utf8(bytes)
            .map_err(|_| CliError::Validation(format!("{what} is not UTF-8: {}", path.display())))
    }

    /// Hashes every file under a directory without keeping the contents.
    pub fn hash_dir(&mut self, dir: &Path, what: &str) -> Result<(), CliError> {
        for file in sorted_files(dir, what, None)? {
            self.read(&file, what)?;
        }
        Ok(())
    }
}

/// Regular files in a directory in name order, optionally by extension.
pub fn sorted_files(dir: &Path, what: &str, ext: Option<&str>) -> Result<Vec<PathBuf>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Validation(format!(
            "{what} not found: {}",
            dir.display()
        )));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && ext.is_none_or(|x| p.extension().is_some_and(|e| e == x)))
        .collect();
    files.sort();
    Ok(files)
}

/// An output directory whose files all name the run that wrote them.
pub struct OutputDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutputDir {
    pub fn create(dir: &Path, manifest: RunManifest) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutputDir {
            dir: dir.to_owned(),
            manifest,
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.manifest
            .outputs
            .insert(name.to_owned(), sha256_hex(bytes));
        Ok(())
    }

    /// CSV text behind a `# manifest=` comment line.
    pub fn write_csv_text(&mut self, name: &str, csv: &[u8]) -> Result<(), CliError> {
        let mut body =
            format!("# manifest={MANIFEST_FILE} run={}\n", self.manifest.run_id).into_bytes();
        body.extend_from_slice(csv);
        self.put(name, &body)
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut buf = Vec::new();
        speller_core::harness::write_rows(&mut buf, rows)?;
        self.write_csv_text(name, &buf)
    }

    /// JSON object `{"run": id, "data": value}`.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            run: &'a str,
            data: &'a T,
        }
        let run_id = self.manifest.run_id.clone();
        let body = serde_json::to_vec_pretty(&Wrapped {
            run: &run_id,
            data: value,
        })
        .expect("output serializes");
        self.put(name, &body)
    }

    /// Records a file some other writer put in the directory.
    pub fn adopt(&mut self, name: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        self.manifest
            .outputs
            .insert(name.to_owned(), sha256_hex(&bytes));
        Ok(())
    }

    /// Writes the manifest with the hashes of every output.
    pub fn finish(self) -> Result<RunManifest, CliError> {
        let path = self.dir.join(MANIFEST_FILE);
        let body = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        Ok(self.manifest)
    }
}
