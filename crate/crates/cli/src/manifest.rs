//! Output directory layout and run manifests.
//!
//! Every run writes its CSV files, an SVG drawn from each CSV, the resolved configuration
//! (`config.txt`) and a manifest listing the outputs with their SHA-256 digests. Nothing in
//! these files depends on wall-clock time, so identical inputs give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::svg::{plot_csv, PlotSpec};
use crate::table::Table;

/// `sha256("blob <len>\0" ++ content)`, the git object hashing scheme with SHA-256.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    format!("{:x}", h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub seed: u64,
    pub config: String,
    pub input_hash: String,
    /// `(file name, content hash)` in write order.
    pub outputs: Vec<(String, String)>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = format!(
            "run_id={}\ncommand={}\nseed={}\ninput_hash={}\nversion={}\n",
            self.run_id,
            self.command,
            self.seed,
            self.input_hash,
            env!("CARGO_PKG_VERSION")
        );
        for (f, h) in &self.outputs {
            s.push_str(&format!("output={f} {h}\n"));
        }
        s.push_str("[config]\n");
        s.push_str(&self.config);
        s
    }
}

pub struct RunWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunWriter {
    pub fn new(dir: &Path, command: &str, config: &Config, seed: u64) -> Result<RunWriter> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        let snapshot = config.snapshot();
        let input = format!("{command}\n{}\n{snapshot}", env!("CARGO_PKG_VERSION"));
        let input_hash = content_hash(input.as_bytes());
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                run_id: format!("{command}-{}", &input_hash[..12]),
                command: command.into(),
                seed,
                config: snapshot,
                input_hash,
                outputs: Vec::new(),
            },
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push((name.into(), content_hash(content.as_bytes())));
        Ok(())
    }

    /// Writes `<stem>.csv` and, with a plot spec, `<stem>.svg` drawn from that CSV.
    pub fn table(&mut self, stem: &str, table: &Table, plot: Option<&PlotSpec>) -> Result<()> {
        let csv = table.to_csv();
        self.write(&format!("{stem}.csv"), &csv)?;
        if let Some(spec) = plot {
            let svg = plot_csv(&csv, spec).with_context(|| format!("plotting {stem}"))?;
            self.write(&format!("{stem}.svg"), &svg)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        let config = self.manifest.config.clone();
        self.write("config.txt", &config)?;
        let text = self.manifest.render();
        let path = self.dir.join("manifest.txt");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn git_style_hash_of_empty_blob() {
        // Same construction git uses for object ids, with SHA-256.
        assert_eq!(content_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    }
}
