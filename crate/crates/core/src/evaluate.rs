//! Side-by-side scoring of raw classifier outputs and stabilized outputs.

use rayon::prelude::*;

use crate::decode::{posterior_mode, stabilize, StabilizeMode, Stabilized};
use crate::error::Result;
use crate::io::ReportRow;
use crate::metrics::{
    f1_scores, frame_accuracy, mean_average_precision, pr_curve, PrPoint, ScoredFrameSet,
    ToolScores,
};
use crate::model::{ModelParams, VideoProfile};
use crate::scalar::Scalar;

/// Headline numbers plus the full report.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rows: Vec<ReportRow>,
    /// Stabilized precision-recall curve per tool with positives.
    pub pr_curves: Vec<(String, Vec<PrPoint<f64>>)>,
    pub raw_map: Option<f64>,
    pub stabilized_map: Option<f64>,
    pub raw_tool_accuracy: Option<f64>,
    /// Thresholded posterior marginals.
    pub stabilized_tool_accuracy: Option<f64>,
    pub raw_phase_accuracy: Option<f64>,
    /// Viterbi phases.
    pub stabilized_phase_accuracy: Option<f64>,
}

/// Stabilizes every video with its truth hidden, then scores raw and
/// stabilized outputs on the same frames: each tool on the frames where
/// that tool is labelled, phases on the frames where the phase is labelled.
///
/// Raw tool scores are the classifier's soft scores when present, otherwise
/// its binary predictions. Stabilized scores are posterior presence
/// probabilities.
pub fn evaluate<T: Scalar>(
    videos: &[VideoProfile<T>],
    params: &ModelParams<T>,
    cutoff: T,
) -> Result<Evaluation> {
    let stabilized: Vec<Stabilized<T>> = videos
        .par_iter()
        .map(|v| stabilize(&v.without_truth(), params, StabilizeMode::Map, cutoff))
        .collect::<Result<_>>()?;
    let k = params.tool_count();
    let uses_phases = params.kind.uses_phases();
    let f = |x: T| x.as_f64();

    let mut raw = ScoredFrameSet::<f64> {
        tools: vec![empty(); k],
        ..Default::default()
    };
    let mut post = ScoredFrameSet::<f64> {
        tools: vec![empty(); k],
        ..Default::default()
    };
    let (mut tool_truth, mut tool_raw, mut tool_thr, mut tool_map) =
        (vec![], vec![], vec![], vec![]);
    let mut phase_marginal = Vec::new();
    for (video, s) in videos.iter().zip(&stabilized) {
        let decoded = s.decoded.as_ref().expect("map mode decodes");
        for (t, frame) in video.frames().iter().enumerate() {
            for tool in 0..k {
                let Some(truth) = frame.true_tool(tool) else {
                    continue;
                };
                let pred = frame.pred_tools.as_ref().expect("checked by stabilize")[tool];
                let raw_score = frame
                    .soft_tools
                    .as_ref()
                    .map_or(if pred { 1.0 } else { 0.0 }, |s| f(s[tool]));
                let p = f(s.marginals.tool_post[t][tool]);
                raw.tools[tool].scores.push(raw_score);
                raw.tools[tool].truths.push(truth);
                post.tools[tool].scores.push(p);
                post.tools[tool].truths.push(truth);
                tool_truth.push(truth);
                tool_raw.push(pred);
                tool_thr.push(p > f(cutoff));
                tool_map.push(decoded.tools.as_ref().expect("tools decoded")[t][tool]);
            }
            if uses_phases {
                if let Some(truth) = frame.true_phase {
                    raw.true_phases.push(truth);
                    raw.pred_phases
                        .push(frame.pred_phase.expect("checked by stabilize"));
                    post.true_phases.push(truth);
                    post.pred_phases
                        .push(decoded.phases.as_ref().expect("phases decoded")[t]);
                    phase_marginal.push(posterior_mode(&s.marginals.phase_post[t]));
                }
            }
        }
    }

    let space = &params.space;
    let mut rows = Vec::new();
    let row = |metric: &str, target: &str, raw: Option<f64>, stabilized: Option<f64>| ReportRow {
        metric: metric.into(),
        target: target.into(),
        raw,
        stabilized,
    };
    let mut ev = Evaluation {
        rows: Vec::new(),
        pr_curves: Vec::new(),
        raw_map: None,
        stabilized_map: None,
        raw_tool_accuracy: None,
        stabilized_tool_accuracy: None,
        raw_phase_accuracy: None,
        stabilized_phase_accuracy: None,
    };
    if k > 0 {
        let (m_raw, m_post) = (mean_average_precision(&raw), mean_average_precision(&post));
        for tool in 0..k {
            let id = &space.tools()[tool];
            rows.push(row("ap", id, m_raw.per_tool[tool], m_post.per_tool[tool]));
            if let Ok(curve) = pr_curve(&post.tools[tool].scores, &post.tools[tool].truths) {
                ev.pr_curves.push((id.clone(), curve));
            }
        }
        rows.push(row("map", "all", m_raw.map, m_post.map));
        ev.raw_map = m_raw.map;
        ev.stabilized_map = m_post.map;
        ev.raw_tool_accuracy = frame_accuracy(&tool_raw, &tool_truth);
        ev.stabilized_tool_accuracy = frame_accuracy(&tool_thr, &tool_truth);
        rows.push(row(
            "tool_accuracy",
            "all",
            ev.raw_tool_accuracy,
            ev.stabilized_tool_accuracy,
        ));
        rows.push(row(
            "tool_accuracy_map",
            "all",
            ev.raw_tool_accuracy,
            frame_accuracy(&tool_map, &tool_truth),
        ));
        let n = tool_truth.len() as f64;
        rows.push(row("scored_tool_labels", "all", Some(n), Some(n)));
    }
    if uses_phases {
        let l = space.n_phases();
        let (truth, raw_pred) = (&raw.true_phases, &raw.pred_phases);
        let f_raw = f1_scores::<f64>(raw_pred, truth, l);
        for (metric, pred) in [("", &post.pred_phases), ("_marginal", &phase_marginal)] {
            let f_post = f1_scores::<f64>(pred, truth, l);
            for (q, id) in space.phases().iter().enumerate() {
                rows.push(row(
                    &format!("f1{metric}"),
                    id,
                    Some(f_raw.per_phase[q].f1),
                    Some(f_post.per_phase[q].f1),
                ));
            }
            let any = !truth.is_empty();
            rows.push(row(
                &format!("mf1{metric}"),
                "all",
                any.then_some(f_raw.mf1),
                any.then_some(f_post.mf1),
            ));
            let (acc_raw, acc_post) =
                (frame_accuracy(raw_pred, truth), frame_accuracy(pred, truth));
            rows.push(row(
                &format!("phase_accuracy{metric}"),
                "all",
                acc_raw,
                acc_post,
            ));
            if metric.is_empty() {
                ev.raw_phase_accuracy = acc_raw;
                ev.stabilized_phase_accuracy = acc_post;
            }
        }
        let n = truth.len() as f64;
        rows.push(row("scored_phase_labels", "all", Some(n), Some(n)));
    }
    ev.rows = rows;
    Ok(ev)
}

fn empty() -> ToolScores<f64> {
    ToolScores {
        scores: Vec::new(),
        truths: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{uniform_init, FrameRecord, LabelSpace, ModelKind};

    fn identity_params() -> ModelParams<f64> {
        let space = LabelSpace::numbered(2, 1).unwrap();
        let mut p = uniform_init::<f64>(&space, ModelKind::Coupled).unwrap();
        p.phase_confusion = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        p.tool_confusion = vec![[[1.0, 0.0], [0.0, 1.0]]];
        p
    }

    #[test]
    fn noiseless_channel_scores_equal_raw() {
        let frames = vec![
            FrameRecord::predicted(0, Some(0), Some(vec![true]))
                .with_truth(Some(0), vec![Some(true)]),
            FrameRecord::predicted(1, Some(1), Some(vec![false]))
                .with_truth(Some(0), vec![Some(false)]),
            FrameRecord::predicted(2, Some(1), Some(vec![true]))
                .with_truth(None, vec![Some(false)]),
        ];
        let v = VideoProfile::new("v", frames).unwrap();
        let ev = evaluate(&[v], &identity_params(), 0.5).unwrap();
        for r in &ev.rows {
            assert_eq!(r.raw, r.stabilized, "{}", r.metric);
        }
        assert_eq!(ev.raw_phase_accuracy, Some(0.5));
        assert_eq!(ev.raw_tool_accuracy, Some(2.0 / 3.0));
        let scored = ev
            .rows
            .iter()
            .find(|r| r.metric == "scored_phase_labels")
            .unwrap();
        assert_eq!(scored.raw, Some(2.0));
    }
}
