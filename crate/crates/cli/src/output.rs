use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use pilotctl::{Boundary64, BoundaryHeader};

use crate::config::ScenarioConfig;

/// Writes data files under one directory, each tagged with the config that produced it.
pub struct Output {
    dir: PathBuf,
    provenance: serde_json::Value,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn new(root: &Path, cfg: &ScenarioConfig) -> Result<Self> {
        let dir = root.join(cfg.output_dir());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let provenance = json!({
            "artifact": "pilotctl",
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
        });
        Ok(Self { dir, provenance, written: Vec::new() })
    }

    fn header_line(&self) -> String {
        format!("# {}\n", self.provenance)
    }

    fn put(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    /// One CSV row per record, columns named after the fields.
    pub fn table<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<()> {
        let mut buf = self.header_line().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        self.put(name, buf)
    }

    pub fn json(&mut self, name: &str, results: &impl Serialize) -> Result<()> {
        let v = json!({ "provenance": self.provenance, "results": results });
        let mut s = serde_json::to_string_pretty(&v)?;
        s.push('\n');
        self.put(name, s.into_bytes())
    }

    /// Boundary file readable by `pilotctl::read_boundary`; the provenance
    /// line follows the boundary header.
    pub fn boundary(&mut self, name: &str, b: &Boundary64, header: &BoundaryHeader<f64>) -> Result<()> {
        let mut raw = Vec::new();
        pilotctl::write_boundary(&mut raw, b, header)?;
        let cut = raw.iter().position(|&c| c == b'\n').map_or(raw.len(), |i| i + 1);
        let mut buf = raw[..cut].to_vec();
        buf.extend_from_slice(self.header_line().as_bytes());
        buf.extend_from_slice(&raw[cut..]);
        self.put(name, buf)
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.written
    }
}

/// File-name tag for an SNR point, e.g. `snr3dB`, `snr-2.5dB`.
pub fn snr_tag(snr: f64) -> String {
    format!("snr{snr}dB")
}
