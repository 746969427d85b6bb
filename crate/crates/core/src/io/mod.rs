//! File formats: dataset manifests, per-video CSV, parameter documents and
//! tabular reports.
//!
//! Every file written here starts with a run header. CSV outputs carry it as
//! a `#` comment line, which the CSV readers skip.

mod dataset;
mod params;
mod report;

pub use dataset::{
    load_videos, read_video_csv, write_manifest, write_video_csv, Dataset, ManifestEntry, Role,
};
pub use params::{load_params, params_from_json, params_to_json, save_params};
pub use report::{
    write_marginals_csv, write_pr_curves_csv, write_report_csv, write_stabilized_csv,
    write_trace_csv, write_truth_csv, ReportRow,
};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Machine-readable provenance of one CLI run. Carries no timestamps, so
/// reruns with the same inputs are byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub program: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    /// Keys are sorted on output.
    pub config: Map<String, Value>,
}

impl RunHeader {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        Self {
            program: "stabhmm".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.config.insert(key.into(), value.into());
        self
    }

    /// One-line JSON form.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("header serializes")
    }

    pub(crate) fn write_comment(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "# run {}", self.to_line())
    }
}

/// Creates `path` and runs `body` on a buffered writer, mapping IO errors to
/// the path.
pub(crate) fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Shortest representation that parses back to the same value.
pub(crate) fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        "0.0".into()
    } else {
        format!("{x:?}")
    }
}
