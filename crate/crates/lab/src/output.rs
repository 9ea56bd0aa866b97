use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hierarchy_core::{DiagRecord, State64};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";
pub const SNAPSHOTS_FILE: &str = "snapshots.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

/// One saved state; floats are written in shortest round-trip form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub n: usize,
    pub length: f64,
    pub t: f64,
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
}

impl Snapshot {
    pub fn of(state: &State64) -> Self {
        let g = state.grid();
        Snapshot {
            n: g.n(),
            length: g.length(),
            t: state.t,
            rho: state.rho.samples().to_vec(),
            u: state.u.samples().to_vec(),
        }
    }
}

/// Line-delimited JSON sink.
pub struct JsonLines {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonLines {
    pub fn create(path: PathBuf) -> LabResult<Self> {
        let file = File::create(&path).map_err(|e| LabError::io(&path, e))?;
        Ok(JsonLines {
            path,
            out: BufWriter::new(file),
        })
    }

    pub fn write<S: Serialize>(&mut self, value: &S) -> LabResult<()> {
        serde_json::to_writer(&mut self.out, value)
            .map_err(|e| LabError::io(&self.path, e.into()))?;
        self.out.write_all(b"\n").map_err(|e| LabError::io(&self.path, e))
    }

    pub fn finish(mut self) -> LabResult<()> {
        self.out.flush().map_err(|e| LabError::io(&self.path, e))
    }
}

pub fn ensure_dir(dir: &Path) -> LabResult<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> LabResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| LabError::io(path, e.into()))?;
    fs::write(path, text + "\n").map_err(|e| LabError::io(path, e))
}

pub fn read_rows(path: &Path) -> LabResult<Vec<DiagRecord>> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| LabError::io(path, e.into())))
        .collect()
}
