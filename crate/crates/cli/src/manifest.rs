use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::Options;

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Provenance record for one invocation. Contains no timestamps, so
/// identical runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config: &'a Options,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Tracks files read and written during a run.
#[derive(Debug, Default)]
pub struct Ledger {
    inputs: Vec<(String, PathBuf)>,
    outputs: Vec<String>,
}

impl Ledger {
    pub fn input(&mut self, role: &str, path: &Path) {
        if !self.inputs.iter().any(|(_, p)| p == path) {
            self.inputs.push((role.to_string(), path.to_path_buf()));
        }
    }

    pub fn has_output(&self, name: &str) -> bool {
        self.outputs.iter().any(|n| n == name)
    }

    pub fn output(&mut self, name: &str) {
        if !self.outputs.iter().any(|n| n == name) {
            self.outputs.push(name.to_string());
        }
    }

    pub fn write(&self, subcommand: &'static str, opts: &Options) -> Result<()> {
        let inputs = self
            .inputs
            .iter()
            .map(|(role, p)| {
                Ok(FileHash { role: role.clone(), path: p.display().to_string(), sha256: sha256_file(p)? })
            })
            .collect::<Result<_>>()?;
        let mut names = self.outputs.clone();
        names.sort();
        let outputs = names
            .iter()
            .map(|n| Ok(FileHash { role: "output".into(), path: n.clone(), sha256: sha256_file(&opts.out.join(n))? }))
            .collect::<Result<_>>()?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config: opts,
            inputs,
            outputs,
        };
        let path = opts.out.join(format!("manifest-{subcommand}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
