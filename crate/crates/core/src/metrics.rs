//! Recognition metrics: per-tool average precision, per-phase F1, accuracy.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Precision and recall at one cutoff; precision is `None` when nothing is
/// predicted positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall<T> {
    pub precision: Option<T>,
    pub recall: T,
}

fn ratio<T: Scalar>(num: usize, den: usize) -> T {
    T::of(num as f64) / T::of(den as f64)
}

/// Precision and recall with positives predicted by `score > cutoff`.
pub fn precision_recall<T: Scalar>(
    scores: &[T],
    truths: &[bool],
    cutoff: T,
) -> Result<PrecisionRecall<T>> {
    assert_eq!(scores.len(), truths.len(), "scores and truths must align");
    let positives = truths.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let (mut predicted, mut hits) = (0, 0);
    for (&s, &t) in scores.iter().zip(truths) {
        if s > cutoff {
            predicted += 1;
            hits += usize::from(t);
        }
    }
    Ok(PrecisionRecall {
        precision: (predicted > 0).then(|| ratio(hits, predicted)),
        recall: ratio(hits, positives),
    })
}

/// One point of a precision-recall curve. Frames with `score >= cutoff` are
/// the predicted positives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint<T> {
    pub cutoff: T,
    pub precision: T,
    pub recall: T,
}

/// Precision-recall points at every distinct score, highest score first.
/// Frames sharing a score enter the positive set together.
pub fn pr_curve<T: Scalar>(scores: &[T], truths: &[bool]) -> Result<Vec<PrPoint<T>>> {
    assert_eq!(scores.len(), truths.len(), "scores and truths must align");
    let positives = truths.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores must not be NaN")
    });
    let mut points = Vec::new();
    let (mut seen, mut hits) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let cutoff = scores[order[i]];
        while i < order.len() && scores[order[i]] == cutoff {
            seen += 1;
            hits += usize::from(truths[order[i]]);
            i += 1;
        }
        points.push(PrPoint {
            cutoff,
            precision: ratio(hits, seen),
            recall: ratio(hits, positives),
        });
    }
    Ok(points)
}

/// Area under the precision-recall curve: `sum P * dR` over a descending
/// sweep of the distinct scores.
pub fn average_precision<T: Scalar>(scores: &[T], truths: &[bool]) -> Result<T> {
    let mut ap = T::zero();
    let mut last_recall = T::zero();
    for p in pr_curve(scores, truths)? {
        ap += p.precision * (p.recall - last_recall);
        last_recall = p.recall;
    }
    Ok(ap)
}

/// Scores and truths of one tool over the evaluation frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolScores<T> {
    pub scores: Vec<T>,
    pub truths: Vec<bool>,
}

/// Everything the tool and phase metrics read.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredFrameSet<T> {
    pub tools: Vec<ToolScores<T>>,
    pub pred_phases: Vec<usize>,
    pub true_phases: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport<T> {
    /// `None` for tools without any positive frame.
    pub per_tool: Vec<Option<T>>,
    /// Indices of tools left out of the mean.
    pub excluded: Vec<usize>,
    /// `None` when every tool was excluded.
    pub map: Option<T>,
}

/// Unweighted mean of per-tool AP over tools that have positives.
pub fn mean_average_precision<T: Scalar>(set: &ScoredFrameSet<T>) -> MapReport<T> {
    let per_tool: Vec<Option<T>> = set
        .tools
        .iter()
        .map(|t| average_precision(&t.scores, &t.truths).ok())
        .collect();
    let excluded = per_tool
        .iter()
        .enumerate()
        .filter(|(_, ap)| ap.is_none())
        .map(|(i, _)| i)
        .collect();
    let included: Vec<T> = per_tool.iter().flatten().copied().collect();
    let map = (!included.is_empty())
        .then(|| included.iter().copied().sum::<T>() / T::of(included.len() as f64));
    MapReport {
        per_tool,
        excluded,
        map,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseScore<T> {
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub f1: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Report<T> {
    pub per_phase: Vec<PhaseScore<T>>,
    /// Mean over all phases, including phases absent from both sequences.
    pub mf1: T,
    /// Phases that never occur in either sequence (scored 0).
    pub degenerate: Vec<usize>,
}

/// Per-phase precision, recall and F1, and their mean over `n_phases`.
pub fn f1_scores<T: Scalar>(pred: &[usize], truth: &[usize], n_phases: usize) -> F1Report<T> {
    assert_eq!(pred.len(), truth.len(), "sequences must align");
    let mut tp = vec![0usize; n_phases];
    let mut predicted = vec![0usize; n_phases];
    let mut actual = vec![0usize; n_phases];
    for (&p, &t) in pred.iter().zip(truth) {
        predicted[p] += 1;
        actual[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let mut degenerate = Vec::new();
    let per_phase: Vec<PhaseScore<T>> = (0..n_phases)
        .map(|q| {
            if predicted[q] == 0 && actual[q] == 0 {
                degenerate.push(q);
            }
            let precision = (predicted[q] > 0).then(|| ratio::<T>(tp[q], predicted[q]));
            let recall = (actual[q] > 0).then(|| ratio::<T>(tp[q], actual[q]));
            let p = precision.unwrap_or_else(T::zero);
            let r = recall.unwrap_or_else(T::zero);
            let f1 = if p + r > T::zero() {
                T::of(2.0) * p * r / (p + r)
            } else {
                T::zero()
            };
            PhaseScore {
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let mf1 = if n_phases == 0 {
        T::zero()
    } else {
        per_phase.iter().map(|s| s.f1).sum::<T>() / T::of(n_phases as f64)
    };
    F1Report {
        per_phase,
        mf1,
        degenerate,
    }
}

/// Fraction of positions where the sequences agree; `None` when empty.
pub fn frame_accuracy<A: PartialEq>(pred: &[A], truth: &[A]) -> Option<f64> {
    assert_eq!(pred.len(), truth.len(), "sequences must align");
    if pred.is_empty() {
        return None;
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Some(hits as f64 / pred.len() as f64)
}
