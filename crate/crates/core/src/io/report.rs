use std::io::Write;
use std::path::Path;

use super::dataset::{video_cells, video_columns};
use super::{fmt_f64, write_file, RunHeader};
use crate::error::Result;
use crate::inference::PosteriorMarginals;
use crate::metrics::PrPoint;
use crate::model::{LabelSpace, VideoProfile};
use crate::synth::HiddenTruth;

/// One line of an evaluation report. `None` values are written as `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    /// Tool or phase identifier, or `all` for dataset-level metrics.
    pub target: String,
    pub raw: Option<f64>,
    pub stabilized: Option<f64>,
}

fn opt(x: Option<f64>) -> String {
    x.map_or("NA".into(), fmt_f64)
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow], header: &RunHeader) -> Result<()> {
    write_file(path, |w| {
        header.write_comment(w)?;
        writeln!(w, "metric,target,raw,stabilized")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{}",
                r.metric,
                r.target,
                opt(r.raw),
                opt(r.stabilized)
            )?;
        }
        Ok(())
    })
}

/// `curves` pairs each tool identifier with its points.
pub fn write_pr_curves_csv(
    path: &Path,
    curves: &[(String, Vec<PrPoint<f64>>)],
    header: &RunHeader,
) -> Result<()> {
    write_file(path, |w| {
        header.write_comment(w)?;
        writeln!(w, "tool,cutoff,precision,recall")?;
        for (tool, points) in curves {
            for p in points {
                writeln!(
                    w,
                    "{tool},{},{},{}",
                    fmt_f64(p.cutoff),
                    fmt_f64(p.precision),
                    fmt_f64(p.recall)
                )?;
            }
        }
        Ok(())
    })
}

/// Entry 0 is the log-likelihood of the initial parameters.
pub fn write_trace_csv(path: &Path, log_likelihoods: &[f64], header: &RunHeader) -> Result<()> {
    write_file(path, |w| {
        header.write_comment(w)?;
        writeln!(w, "iteration,log_likelihood")?;
        for (i, ll) in log_likelihoods.iter().enumerate() {
            writeln!(w, "{i},{}", fmt_f64(*ll))?;
        }
        Ok(())
    })
}

/// All videos in one file: a `video_id` column followed by the video format.
pub fn write_stabilized_csv(
    path: &Path,
    space: &LabelSpace,
    videos: &[VideoProfile<f64>],
    header: &RunHeader,
) -> Result<()> {
    let all: Vec<_> = videos
        .iter()
        .flat_map(|v| v.frames().iter().cloned())
        .collect();
    let columns = video_columns(space, &all);
    write_file(path, |w| {
        header.write_comment(w)?;
        writeln!(w, "video_id,{}", columns.join(","))?;
        for v in videos {
            for f in v.frames() {
                writeln!(
                    w,
                    "{},{}",
                    v.video_id,
                    video_cells(space, &columns, f).join(",")
                )?;
            }
        }
        Ok(())
    })
}

/// Posterior phase probabilities and tool presence probabilities per frame.
/// Tool-only marginals have no phase columns.
pub fn write_marginals_csv(
    path: &Path,
    space: &LabelSpace,
    videos: &[(&VideoProfile<f64>, &PosteriorMarginals<f64>)],
    with_phases: bool,
    header: &RunHeader,
) -> Result<()> {
    let n_tools = videos
        .first()
        .map_or(0, |(_, m)| m.tool_post.first().map_or(0, Vec::len));
    write_file(path, |w| {
        header.write_comment(w)?;
        let mut cols = vec!["video_id".to_string(), "frame_idx".to_string()];
        if with_phases {
            cols.extend(space.phases().iter().map(|p| format!("phase_{p}")));
        }
        cols.extend(
            space
                .tools()
                .iter()
                .take(n_tools)
                .map(|t| format!("tool_{t}")),
        );
        writeln!(w, "{}", cols.join(","))?;
        for (video, m) in videos {
            for (t, f) in video.frames().iter().enumerate() {
                let mut row = vec![video.video_id.clone(), f.frame_index.to_string()];
                if with_phases {
                    row.extend(m.phase_post[t].iter().map(|&x| fmt_f64(x)));
                }
                row.extend(m.tool_post[t].iter().map(|&x| fmt_f64(x)));
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    })
}

/// Complete hidden sequences of a sampled video.
pub fn write_truth_csv(
    path: &Path,
    space: &LabelSpace,
    truth: &HiddenTruth,
    header: &RunHeader,
) -> Result<()> {
    write_file(path, |w| {
        header.write_comment(w)?;
        let mut cols = vec!["frame_idx".to_string(), "phase".to_string()];
        cols.extend(
            space
                .tools()
                .iter()
                .take(truth.tools.first().map_or(0, Vec::len))
                .map(|t| format!("tool_{t}")),
        );
        writeln!(w, "{}", cols.join(","))?;
        for (t, (&phase, tools)) in truth.phases.iter().zip(&truth.tools).enumerate() {
            let mut row = vec![t.to_string(), space.phases()[phase].clone()];
            row.extend(tools.iter().map(|&b| if b { "1" } else { "0" }.to_string()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_uses_na_for_missing_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let rows = vec![
            ReportRow {
                metric: "ap".into(),
                target: "hook".into(),
                raw: Some(0.5),
                stabilized: None,
            },
            ReportRow {
                metric: "map".into(),
                target: "all".into(),
                raw: Some(0.25),
                stabilized: Some(1.0),
            },
        ];
        write_report_csv(&p, &rows, &RunHeader::new("evaluate", None)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# run {"));
        assert_eq!(
            &lines[1..],
            [
                "metric,target,raw,stabilized",
                "ap,hook,0.5,NA",
                "map,all,0.25,1.0"
            ]
        );
    }

    #[test]
    fn trace_rows_are_numbered_from_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_trace_csv(&p, &[-3.0, -2.5], &RunHeader::new("fit", Some(0))).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.ends_with("iteration,log_likelihood\n0,-3.0\n1,-2.5\n"));
    }
}
