//! TOML description of a simulated dataset.
//!
//! ```toml
//! seed = 7
//! num_videos = 50
//! test_videos = 10
//! frames_per_video = 500            # or { min = 200, max = 800 }
//! kind = "coupled"
//! label_policy = { type = "labelled-videos", count = 10 }
//!
//! [model]
//! phases = 4                        # a count, or a list of identifiers
//! tools = ["grasper", "hook", "clipper"]
//! # params = "theta.json"           # use these parameters instead
//!
//! [model.theta]
//! tool_stay = 0.95
//! ```
//!
//! Test videos are written with complete truth; the label policy governs
//! the rest.

use std::path::Path;

use serde::Deserialize;
use stabhmm::io::load_params;
use stabhmm::synth::{synthetic_theta, FrameCount, LabelPolicy, SyntheticTheta};
use stabhmm::{Error, LabelSpace, ModelKind, ModelParams64, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub seed: u64,
    pub num_videos: usize,
    #[serde(default)]
    pub test_videos: usize,
    pub frames_per_video: FrameCount,
    #[serde(default = "coupled")]
    pub kind: ModelKind,
    #[serde(default = "all_observed")]
    pub label_policy: LabelPolicy,
    pub model: ModelSection,
}

fn coupled() -> ModelKind {
    ModelKind::Coupled
}

fn all_observed() -> LabelPolicy {
    LabelPolicy::AllObserved
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum Labels {
    Count(usize),
    Names(Vec<String>),
}

impl Labels {
    fn names(&self, prefix: &str) -> Vec<String> {
        match self {
            Labels::Count(n) => (1..=*n).map(|i| format!("{prefix}{i}")).collect(),
            Labels::Names(v) => v.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub phases: Option<Labels>,
    #[serde(default)]
    pub tools: Option<Labels>,
    #[serde(default)]
    pub params: Option<String>,
    #[serde(default)]
    pub theta: SyntheticTheta,
}

impl SimulationSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| {
            let line = e.span().map_or(0, |s| {
                text[..s.start].bytes().filter(|&b| b == b'\n').count() as u64 + 1
            });
            Error::Parse {
                path: path.into(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    /// Generating parameters, read from `model.params` (relative to the spec
    /// file) or built from the theta knobs.
    pub fn model(&self, spec_path: &Path) -> Result<(LabelSpace, ModelParams64)> {
        if let Some(rel) = &self.model.params {
            let path = spec_path.parent().unwrap_or(Path::new(".")).join(rel);
            let params = load_params(&path)?;
            if params.kind != self.kind {
                return Err(Error::InvalidSpec(format!(
                    "spec asks for a {} model but {} holds a {} model",
                    self.kind,
                    path.display(),
                    params.kind
                )));
            }
            return Ok((params.space.clone(), params));
        }
        let phases = self
            .model
            .phases
            .as_ref()
            .map_or(vec!["P1".to_string()], |l| l.names("P"));
        let tools = match (&self.model.tools, self.kind) {
            (_, ModelKind::PhaseOnly) | (None, _) => Vec::new(),
            (Some(l), _) => l.names("T"),
        };
        let space = LabelSpace::new(phases, tools)?;
        let params = synthetic_theta(&space, self.kind, &self.model.theta)?;
        Ok((space, params))
    }
}
