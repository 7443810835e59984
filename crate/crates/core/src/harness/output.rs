//! Run records, CSV files and the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BfnError, Result};

pub const RUNS_HEADER: &str = "experiment,solver,nfe,eta,seed,metric,value,ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub solver: String,
    pub nfe: usize,
    pub eta: f64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub ms: u64,
}

impl RunRecord {
    fn sort_key(&self) -> (&str, usize, u64, &str, u64) {
        (&self.solver, self.nfe, self.eta.to_bits(), &self.metric, self.seed)
    }
}

/// Shortest round-trip representation, so files compare byte for byte.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for r in sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.experiment,
            r.solver,
            r.nfe,
            fmt_f64(r.eta),
            r.seed,
            r.metric,
            fmt_f64(r.value),
            r.ms
        );
    }
    out
}

/// An output directory that never overwrites an existing file.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Fails if any of `names` already exists, before anything is written.
    pub fn ensure_fresh(&self, names: &[String]) -> Result<()> {
        for n in names {
            let p = self.path(n);
            if p.exists() {
                return Err(BfnError::Config(format!("refusing to overwrite {}", p.display())));
            }
        }
        Ok(())
    }

    pub fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let p = self.path(name);
        if p.exists() {
            return Err(BfnError::Config(format!("refusing to overwrite {}", p.display())));
        }
        fs::write(&p, contents)?;
        Ok(p)
    }
}
