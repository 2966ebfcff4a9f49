//! Run manifests: everything needed to reproduce a sample batch.

use std::path::Path;

use cftp_core::{Caps, Readout};
use serde::{Deserialize, Serialize};

use crate::model_file::sha256_hex;

pub const SEED_RULE: &str = "seed_k = derive(base, k), k = 0..n";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub model: ModelRef,
    pub site: Vec<i32>,
    pub seeds: SeedSchedule,
    pub caps: CapsDoc,
    pub readout: String,
    pub versions: Versions,
    pub outputs: Vec<OutputRef>,
    /// Not part of the reproducible content.
    pub timing: Timing,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRef {
    /// File path, or `builtin:<name>`.
    pub source: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSchedule {
    pub base: u64,
    pub n: u64,
    pub rule: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapsDoc {
    pub nodes: usize,
    pub depth: usize,
    pub points: usize,
    pub layers: usize,
}

impl From<Caps> for CapsDoc {
    fn from(c: Caps) -> Self {
        CapsDoc { nodes: c.nodes, depth: c.depth, points: c.points, layers: c.layers }
    }
}

impl From<CapsDoc> for Caps {
    fn from(c: CapsDoc) -> Self {
        Caps { nodes: c.nodes, depth: c.depth, points: c.points, layers: c.layers }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub cftp: String,
    pub cftp_core: String,
}

impl Versions {
    pub fn current() -> Self {
        // Both crates share the workspace version.
        let v = env!("CARGO_PKG_VERSION").to_string();
        Versions { cftp: v.clone(), cftp_core: v }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRef {
    pub path: String,
    pub sha256: String,
    pub rows: u64,
    pub failures: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

pub fn readout_name(r: Readout) -> String {
    match r {
        Readout::Consensus { k, seed } => format!("consensus(k={k},seed={seed})"),
        Readout::Exact => "exact".into(),
    }
}

pub fn parse_readout(s: &str) -> Result<Readout, String> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    match compact.as_str() {
        "exact" => return Ok(Readout::Exact),
        "consensus" => return Ok(Readout::default()),
        _ => {}
    }
    let inner = compact
        .strip_prefix("consensus(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| format!("unknown readout {s:?}; expected exact, consensus or consensus(k=K,seed=S)"))?;
    let Readout::Consensus { mut k, mut seed } = Readout::default() else { unreachable!() };
    for part in inner.split(',').filter(|p| !p.is_empty()) {
        let (key, val) = part.split_once('=').ok_or_else(|| format!("bad readout parameter {part:?}"))?;
        let val: u64 = val.parse().map_err(|_| format!("bad readout value {val:?}"))?;
        match key {
            "k" => k = val as usize,
            "seed" => seed = val,
            _ => return Err(format!("unknown readout parameter {key:?}")),
        }
    }
    if k == 0 || k > cftp_core::readout::MAX_CONFIGS {
        return Err(format!("readout k must be in 1..={}", cftp_core::readout::MAX_CONFIGS));
    }
    Ok(Readout::Consensus { k, seed })
}

/// `<out>.manifest.json`.
pub fn path_for(out: &Path) -> std::path::PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    s.into()
}

pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn readout_names_parse_back() {
        for r in [Readout::Exact, Readout::default(), Readout::Consensus { k: 3, seed: 11 }] {
            assert_eq!(parse_readout(&readout_name(r)).unwrap(), r);
        }
        assert!(parse_readout("consensus(k=9)").is_err());
        assert!(parse_readout("vote").is_err());
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(path_for(Path::new("a/b.csv")), Path::new("a/b.csv.manifest.json"));
    }
}
