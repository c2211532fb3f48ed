//! Output bundles: a set of named text files plus a manifest.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

/// Formats a number with 12 significant digits in its shortest exact form.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    if rounded == 0.0 {
        "0".into()
    } else {
        rounded.to_string()
    }
}

/// Rounds to 12 significant digits, for JSON output.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.11e}").parse().unwrap_or(x)
    } else {
        x
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleFile {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub workflow: String,
    pub seed: u64,
    pub config_sha256: String,
    pub files: Vec<BundleFile>,
    pub notes: Vec<String>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Files produced by one workflow run, kept in memory until written.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultBundle {
    pub workflow: String,
    pub seed: u64,
    pub config_sha256: String,
    pub files: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

impl ResultBundle {
    pub fn new(workflow: &str, seed: u64, config_sha256: String) -> Self {
        ResultBundle {
            workflow: workflow.into(),
            seed,
            config_sha256,
            files: BTreeMap::new(),
            notes: vec![],
        }
    }

    pub fn add(&mut self, name: &str, content: String) {
        self.files.insert(name.into(), content);
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            tool: "spillover".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            workflow: self.workflow.clone(),
            seed: self.seed,
            config_sha256: self.config_sha256.clone(),
            files: self
                .files
                .iter()
                .map(|(name, c)| BundleFile {
                    name: name.clone(),
                    sha256: sha256_hex(c.as_bytes()),
                    bytes: c.len(),
                })
                .collect(),
            notes: self.notes.clone(),
        }
    }

    pub fn manifest_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, content) in &self.files {
            std::fs::write(dir.join(name), content)?;
        }
        std::fs::write(dir.join(MANIFEST_NAME), self.manifest_json())?;
        Ok(())
    }
}

/// Builds CSV text from a header and rows of already formatted cells.
pub(crate) fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
