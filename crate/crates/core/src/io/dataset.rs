use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{fmt_f64, write_file, RunHeader};
use crate::error::{Error, Result};
use crate::model::{FrameRecord, LabelSpace, VideoProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub role: Role,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    phases: Vec<String>,
    tools: Vec<String>,
    videos: Vec<ManifestEntry>,
}

/// Label space plus every video listed in a manifest, in manifest order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub space: LabelSpace,
    pub videos: Vec<(Role, VideoProfile<f64>)>,
}

impl Dataset {
    pub fn with_role(&self, role: Role) -> Vec<VideoProfile<f64>> {
        self.videos
            .iter()
            .filter(|(r, _)| *r == role)
            .map(|(_, v)| v.clone())
            .collect()
    }
}

/// Reads a TOML manifest and every video file it lists.
pub fn load_videos(manifest: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let doc: Manifest = toml::from_str(&text).map_err(|e| {
        let line = e.span().map_or(0, |s| {
            text[..s.start].bytes().filter(|&b| b == b'\n').count() as u64 + 1
        });
        Error::Parse {
            path: manifest.into(),
            line,
            message: e.message().to_string(),
        }
    })?;
    let space = LabelSpace::new(doc.phases, doc.tools).map_err(|e| Error::Schema {
        path: manifest.into(),
        message: e.to_string(),
    })?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut videos = Vec::with_capacity(doc.videos.len());
    for entry in doc.videos {
        if !seen.insert(entry.id.clone()) {
            return Err(Error::Schema {
                path: manifest.into(),
                message: format!("duplicate video id `{}`", entry.id),
            });
        }
        let path = base.join(&entry.path);
        videos.push((entry.role, read_video_csv(&path, &entry.id, &space)?));
    }
    Ok(Dataset { space, videos })
}

pub fn write_manifest(
    path: &Path,
    space: &LabelSpace,
    entries: &[ManifestEntry],
    header: &RunHeader,
) -> Result<()> {
    let doc = Manifest {
        phases: space.phases().to_vec(),
        tools: space.tools().to_vec(),
        videos: entries.to_vec(),
    };
    let body = toml::to_string(&doc).map_err(|e| Error::Schema {
        path: path.into(),
        message: e.to_string(),
    })?;
    write_file(path, |w| {
        header.write_comment(w)?;
        w.write_all(body.as_bytes())
    })
}

#[derive(Default)]
struct Columns {
    frame_idx: usize,
    pred_phase: Option<usize>,
    pred_tools: Vec<Option<usize>>,
    true_phase: Option<usize>,
    true_tools: Vec<Option<usize>>,
    soft_phase: Vec<Option<usize>>,
    soft_tools: Vec<Option<usize>>,
}

fn block(cols: &[Option<usize>], what: &str, path: &Path) -> Result<Option<Vec<usize>>> {
    if cols.iter().all(Option::is_none) {
        return Ok(None);
    }
    if cols.iter().any(Option::is_none) {
        return Err(Error::Schema {
            path: path.into(),
            message: format!("{what} columns must be all present or all absent"),
        });
    }
    Ok(Some(cols.iter().map(|c| c.unwrap()).collect()))
}

fn parse_header(record: &csv::StringRecord, space: &LabelSpace, path: &Path) -> Result<Columns> {
    let schema = |message: String| Error::Schema {
        path: path.into(),
        message,
    };
    let mut c = Columns {
        pred_tools: vec![None; space.n_tools()],
        true_tools: vec![None; space.n_tools()],
        soft_phase: vec![None; space.n_phases()],
        soft_tools: vec![None; space.n_tools()],
        ..Default::default()
    };
    if record.get(0) != Some("frame_idx") {
        return Err(schema("first column must be `frame_idx`".into()));
    }
    let mut names = HashSet::new();
    for (i, name) in record.iter().enumerate().skip(1) {
        if !names.insert(name) {
            return Err(schema(format!("duplicate column `{name}`")));
        }
        let tool = |id: &str| {
            space
                .tool_index(id)
                .ok_or_else(|| schema(format!("unknown tool `{id}` in column `{name}`")))
        };
        let phase = |id: &str| {
            space
                .phase_index(id)
                .ok_or_else(|| schema(format!("unknown phase `{id}` in column `{name}`")))
        };
        match name {
            "pred_phase" => c.pred_phase = Some(i),
            "true_phase" => c.true_phase = Some(i),
            _ => {
                if let Some(id) = name.strip_prefix("pred_tool_") {
                    c.pred_tools[tool(id)?] = Some(i);
                } else if let Some(id) = name.strip_prefix("true_tool_") {
                    c.true_tools[tool(id)?] = Some(i);
                } else if let Some(id) = name.strip_prefix("soft_phase_") {
                    c.soft_phase[phase(id)?] = Some(i);
                } else if let Some(id) = name.strip_prefix("soft_tool_") {
                    c.soft_tools[tool(id)?] = Some(i);
                } else {
                    return Err(schema(format!("unknown column `{name}`")));
                }
            }
        }
    }
    Ok(c)
}

/// Reads one video file. Tool cells hold `0`/`1`, phase cells hold phase
/// identifiers, and truth cells may hold `?` for an unobserved label. Missing
/// truth columns mean unobserved throughout.
pub fn read_video_csv(
    path: &Path,
    video_id: &str,
    space: &LabelSpace,
) -> Result<VideoProfile<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols = parse_header(&header, space, path)?;
    let pred_tools = block(&cols.pred_tools, "pred_tool", path)?;
    let soft_phase = block(&cols.soft_phase, "soft_phase", path)?;
    let soft_tools = block(&cols.soft_tools, "soft_tool", path)?;

    let mut frames: Vec<FrameRecord<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse {
            path: path.into(),
            line,
            message,
        };
        let cell = |i: usize| record.get(i).unwrap_or("");
        let phase_cell = |i: usize, allow_unobserved: bool| -> Result<Option<usize>> {
            match cell(i) {
                "?" if allow_unobserved => Ok(None),
                id => space
                    .phase_index(id)
                    .map(Some)
                    .ok_or_else(|| bad(format!("unknown phase `{id}`"))),
            }
        };
        let tool_cell = |i: usize, allow_unobserved: bool| -> Result<Option<bool>> {
            match cell(i) {
                "0" => Ok(Some(false)),
                "1" => Ok(Some(true)),
                "?" if allow_unobserved => Ok(None),
                v => Err(bad(format!("expected 0 or 1, found `{v}`"))),
            }
        };
        let prob_cell = |i: usize| -> Result<f64> {
            cell(i)
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("expected a probability, found `{}`", cell(i))))
        };

        let frame_index: u64 = cell(cols.frame_idx)
            .parse()
            .map_err(|_| bad(format!("invalid frame_idx `{}`", cell(cols.frame_idx))))?;
        if let Some(prev) = frames.last() {
            if frame_index <= prev.frame_index {
                return Err(Error::Order {
                    path: path.into(),
                    line,
                    frame_index,
                });
            }
        }
        let frame = FrameRecord {
            frame_index,
            pred_phase: cols
                .pred_phase
                .map(|i| phase_cell(i, false))
                .transpose()?
                .flatten(),
            pred_tools: pred_tools
                .as_ref()
                .map(|idx| {
                    idx.iter()
                        .map(|&i| tool_cell(i, false).map(Option::unwrap))
                        .collect()
                })
                .transpose()?,
            true_phase: cols
                .true_phase
                .map(|i| phase_cell(i, true))
                .transpose()?
                .flatten(),
            true_tools: cols
                .true_tools
                .iter()
                .map(|c| c.map_or(Ok(None), |i| tool_cell(i, true)))
                .collect::<Result<_>>()?,
            soft_phase: soft_phase
                .as_ref()
                .map(|idx| idx.iter().map(|&i| prob_cell(i)).collect())
                .transpose()?,
            soft_tools: soft_tools
                .as_ref()
                .map(|idx| idx.iter().map(|&i| prob_cell(i)).collect())
                .transpose()?,
        };
        frames.push(frame);
    }
    VideoProfile::new(video_id, frames).map_err(|e| Error::Schema {
        path: path.into(),
        message: e.to_string(),
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.into(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Column names of the video format, for the fields present in `frames`.
pub(crate) fn video_columns(space: &LabelSpace, frames: &[FrameRecord<f64>]) -> Vec<String> {
    let has_phase = frames.iter().any(|f| f.pred_phase.is_some());
    let has_tools = frames.iter().any(|f| f.pred_tools.is_some());
    let soft_phase = frames.iter().all(|f| f.soft_phase.is_some());
    let soft_tools = frames.iter().all(|f| f.soft_tools.is_some());
    let mut cols = vec!["frame_idx".to_string()];
    if has_phase {
        cols.push("pred_phase".into());
    }
    if has_tools {
        cols.extend(space.tools().iter().map(|t| format!("pred_tool_{t}")));
    }
    cols.push("true_phase".into());
    cols.extend(space.tools().iter().map(|t| format!("true_tool_{t}")));
    if soft_phase {
        cols.extend(space.phases().iter().map(|p| format!("soft_phase_{p}")));
    }
    if soft_tools {
        cols.extend(space.tools().iter().map(|t| format!("soft_tool_{t}")));
    }
    cols
}

/// Cells of one frame, matching [`video_columns`].
pub(crate) fn video_cells(
    space: &LabelSpace,
    columns: &[String],
    frame: &FrameRecord<f64>,
) -> Vec<String> {
    let bit = |b: bool| if b { "1" } else { "0" }.to_string();
    let mut out = vec![frame.frame_index.to_string()];
    let has = |c: &str| columns.iter().any(|x| x == c);
    if has("pred_phase") {
        out.push(
            frame
                .pred_phase
                .map_or("?".into(), |p| space.phases()[p].clone()),
        );
    }
    if let Some(first) = space.tools().first() {
        if has(&format!("pred_tool_{first}")) {
            let pred = frame.pred_tools.as_deref().unwrap_or(&[]);
            out.extend((0..space.n_tools()).map(|k| pred.get(k).map_or("?".into(), |&b| bit(b))));
        }
    }
    out.push(
        frame
            .true_phase
            .map_or("?".into(), |p| space.phases()[p].clone()),
    );
    out.extend((0..space.n_tools()).map(|k| frame.true_tool(k).map_or("?".into(), bit)));
    if let Some(first) = space.phases().first() {
        if has(&format!("soft_phase_{first}")) {
            out.extend(frame.soft_phase.iter().flatten().map(|&x| fmt_f64(x)));
        }
    }
    if let Some(first) = space.tools().first() {
        if has(&format!("soft_tool_{first}")) {
            out.extend(frame.soft_tools.iter().flatten().map(|&x| fmt_f64(x)));
        }
    }
    out
}

/// Writes one video in the format [`read_video_csv`] reads.
pub fn write_video_csv(
    path: &Path,
    space: &LabelSpace,
    video: &VideoProfile<f64>,
    header: &RunHeader,
) -> Result<()> {
    let columns = video_columns(space, video.frames());
    write_file(path, |w| {
        header.write_comment(w)?;
        writeln!(w, "{}", columns.join(","))?;
        for frame in video.frames() {
            writeln!(w, "{}", video_cells(space, &columns, frame).join(","))?;
        }
        Ok(())
    })
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Role::Train),
            "test" => Ok(Role::Test),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}
