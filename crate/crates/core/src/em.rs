//! Semi-supervised Baum-Welch fitting and the direct counting estimator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{accumulate_counts, forward_backward, ExpectedCounts};
use crate::model::{uniform_init, LabelSpace, ModelKind, ModelParams, Stoch2, VideoProfile};
use crate::scalar::Scalar;

/// What the M-step does with a row whose expected count total is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroRowPolicy {
    KeepPrevious,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop once the relative log-likelihood improvement drops below this.
    pub loglik_rel_tol: f64,
    pub zero_row_policy: ZeroRowPolicy,
    /// Added to every count cell before normalizing.
    pub smoothing_pseudocount: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            loglik_rel_tol: 1e-7,
            zero_row_policy: ZeroRowPolicy::KeepPrevious,
            smoothing_pseudocount: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxIters,
}

/// Log-likelihood history of one EM run.
///
/// `log_likelihoods[0]` is the evidence under the initial parameters and
/// `log_likelihoods[s]` the evidence after the `s`-th update.
#[derive(Debug, Clone, PartialEq)]
pub struct EmTrace<T> {
    pub log_likelihoods: Vec<T>,
    pub iterations: usize,
    pub stop: StopReason,
}

impl<T: Scalar> EmTrace<T> {
    /// Largest drop between consecutive iterations (zero if monotone).
    pub fn worst_decrease(&self) -> T {
        self.log_likelihoods
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(T::zero(), T::max)
    }
}

fn estimate_row<T: Scalar>(
    counts: &[T],
    previous: &[T],
    pseudo: T,
    policy: ZeroRowPolicy,
    path: impl FnOnce() -> String,
    zero_rows: &mut Vec<String>,
) -> Vec<T> {
    let width = T::of(counts.len() as f64);
    let total = counts.iter().copied().sum::<T>() + width * pseudo;
    if total > T::zero() {
        counts.iter().map(|&c| (c + pseudo) / total).collect()
    } else {
        zero_rows.push(path());
        match policy {
            ZeroRowPolicy::KeepPrevious => previous.to_vec(),
            ZeroRowPolicy::Uniform => vec![T::one() / width; counts.len()],
        }
    }
}

fn estimate_matrix<T: Scalar>(
    counts: &[Vec<T>],
    previous: &[Vec<T>],
    pseudo: T,
    policy: ZeroRowPolicy,
    name: &str,
    zero_rows: &mut Vec<String>,
) -> Vec<Vec<T>> {
    counts
        .iter()
        .zip(previous)
        .enumerate()
        .map(|(i, (c, p))| {
            estimate_row(
                c,
                p,
                pseudo,
                policy,
                || format!("{name} row {i}"),
                zero_rows,
            )
        })
        .collect()
}

fn estimate_stoch2<T: Scalar>(
    counts: &Stoch2<T>,
    previous: &Stoch2<T>,
    pseudo: T,
    policy: ZeroRowPolicy,
    name: &str,
    zero_rows: &mut Vec<String>,
) -> Stoch2<T> {
    let mut out = *previous;
    for i in 0..2 {
        let row = estimate_row(
            &counts[i],
            &previous[i],
            pseudo,
            policy,
            || format!("{name} row {i}"),
            zero_rows,
        );
        out[i] = [row[0], row[1]];
    }
    out
}

/// Normalizes counts into parameters, recording rows that had no mass.
fn estimate<T: Scalar>(
    counts: &ExpectedCounts<T>,
    previous: &ModelParams<T>,
    pseudo: T,
    policy: ZeroRowPolicy,
    zero_rows: &mut Vec<String>,
) -> ModelParams<T> {
    let mut next = previous.clone();
    if previous.kind.uses_phases() {
        next.alpha = estimate_row(
            &counts.init_phase,
            &previous.alpha,
            pseudo,
            policy,
            || "alpha".into(),
            zero_rows,
        );
        next.phase_trans = estimate_matrix(
            &counts.phase_trans,
            &previous.phase_trans,
            pseudo,
            policy,
            "phase_trans",
            zero_rows,
        );
        next.phase_confusion = estimate_matrix(
            &counts.phase_conf,
            &previous.phase_confusion,
            pseudo,
            policy,
            "phase_confusion",
            zero_rows,
        );
    }
    for tool in 0..previous.tool_count() {
        for phase in 0..previous.phase_states() {
            let c = counts.init_tool[tool][phase];
            let prev_b = previous.tool_init[tool][phase];
            let row = estimate_row(
                &c,
                &[T::one() - prev_b, prev_b],
                pseudo,
                policy,
                || format!("tool_init[{tool}][{phase}]"),
                zero_rows,
            );
            next.tool_init[tool][phase] = row[1];
            next.tool_trans[tool][phase] = estimate_stoch2(
                &counts.tool_trans[tool][phase],
                &previous.tool_trans[tool][phase],
                pseudo,
                policy,
                &format!("tool_trans[{tool}][{phase}]"),
                zero_rows,
            );
        }
        next.tool_confusion[tool] = estimate_stoch2(
            &counts.tool_conf[tool],
            &previous.tool_confusion[tool],
            pseudo,
            policy,
            &format!("tool_confusion[{tool}]"),
            zero_rows,
        );
    }
    next
}

/// Closed-form maximizer of the expected complete-data log-likelihood.
pub fn m_step<T: Scalar>(
    counts: &ExpectedCounts<T>,
    previous: &ModelParams<T>,
    config: &EmConfig,
) -> ModelParams<T> {
    let mut ignored = Vec::new();
    estimate(
        counts,
        previous,
        T::of(config.smoothing_pseudocount),
        config.zero_row_policy,
        &mut ignored,
    )
}

/// Expected counts and total log-evidence of `videos` under `params`.
///
/// Videos are processed in parallel on the current rayon pool; per-video
/// results are merged in input order, so the output does not depend on the
/// number of threads.
pub fn e_step<T: Scalar>(
    videos: &[VideoProfile<T>],
    params: &ModelParams<T>,
) -> Result<(ExpectedCounts<T>, T)> {
    let parts = videos
        .par_iter()
        .map(|v| {
            let fb = forward_backward(v, params)?;
            let mut acc = ExpectedCounts::for_params(params);
            accumulate_counts(v, &fb, params, &mut acc);
            Ok((acc, fb.log_likelihood))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = ExpectedCounts::for_params(params);
    let mut ll = T::zero();
    for (acc, l) in &parts {
        total.merge(acc);
        ll += *l;
    }
    Ok((total, ll))
}

/// Runs EM from `init` until the relative log-likelihood gain falls below
/// the configured tolerance or the iteration budget is spent.
pub fn em_fit<T: Scalar>(
    videos: &[VideoProfile<T>],
    init: &ModelParams<T>,
    config: &EmConfig,
) -> Result<(ModelParams<T>, EmTrace<T>)> {
    if videos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    init.validate()?;
    let tol = T::of(config.loglik_rel_tol);
    let mut params = init.clone();
    let (mut counts, mut prev) = e_step(videos, &params)?;
    let mut trace = EmTrace {
        log_likelihoods: vec![prev],
        iterations: 0,
        stop: StopReason::MaxIters,
    };
    for iter in 1..=config.max_iters {
        params = m_step(&counts, &params, config);
        let (c, ll) = e_step(videos, &params)?;
        trace.log_likelihoods.push(ll);
        trace.iterations = iter;
        if ll - prev <= tol * prev.abs() {
            trace.stop = StopReason::Converged;
            break;
        }
        counts = c;
        prev = ll;
    }
    Ok((params, trace))
}

/// Output of [`empirical_shortcut_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShortcutFit<T> {
    pub params: ModelParams<T>,
    /// Rows with no usable labelled events; these were filled uniform.
    pub unestimable: Vec<String>,
}

impl<T: Scalar> ShortcutFit<T> {
    pub fn is_estimable(&self, row: &str) -> bool {
        !self.unestimable.iter().any(|r| r == row)
    }
}

/// Estimates every parameter by counting observed labels directly.
///
/// Transitions are counted only between labelled frames whose indices are
/// consecutive; confusion rows come from labelled frames against the
/// predictions at the same frame.
pub fn empirical_shortcut_fit<T: Scalar>(
    videos: &[VideoProfile<T>],
    space: &LabelSpace,
    kind: ModelKind,
) -> Result<ShortcutFit<T>> {
    let base = uniform_init::<T>(space, kind)?;
    if !videos
        .iter()
        .flat_map(|v| v.frames())
        .any(|f| f.has_any_truth())
    {
        return Err(Error::NoLabelledData);
    }
    for v in videos {
        v.check_compatible(&base)?;
    }
    let uses_phases = kind.uses_phases();
    let k = base.tool_count();
    let one = T::one();
    let mut c = ExpectedCounts::for_params(&base);
    // tool-only models have a single implicit phase
    let phase_of = |p: Option<usize>| if uses_phases { p } else { Some(0) };

    for v in videos {
        let frames = v.frames();
        let first = &frames[0];
        if let Some(p) = phase_of(first.true_phase) {
            if uses_phases {
                c.init_phase[p] += one;
            }
            for tool in 0..k {
                if let Some(on) = first.true_tool(tool) {
                    c.init_tool[tool][p][usize::from(on)] += one;
                }
            }
        }
        for f in frames {
            if uses_phases {
                if let (Some(x), Some(y)) = (f.true_phase, f.pred_phase) {
                    c.phase_conf[x][y] += one;
                }
            }
            for tool in 0..k {
                if let Some(on) = f.true_tool(tool) {
                    let pred = f.pred_tools.as_ref().expect("checked")[tool];
                    c.tool_conf[tool][usize::from(on)][usize::from(pred)] += one;
                }
            }
        }
        for w in frames.windows(2) {
            if w[1].frame_index != w[0].frame_index + 1 {
                continue;
            }
            let later = phase_of(w[1].true_phase);
            if uses_phases {
                if let (Some(a), Some(b)) = (w[0].true_phase, w[1].true_phase) {
                    c.phase_trans[a][b] += one;
                }
            }
            if let Some(p) = later {
                for tool in 0..k {
                    if let (Some(a), Some(b)) = (w[0].true_tool(tool), w[1].true_tool(tool)) {
                        c.tool_trans[tool][p][usize::from(a)][usize::from(b)] += one;
                    }
                }
            }
        }
    }

    let mut unestimable = Vec::new();
    let params = estimate(
        &c,
        &base,
        T::zero(),
        ZeroRowPolicy::Uniform,
        &mut unestimable,
    );
    Ok(ShortcutFit {
        params,
        unestimable,
    })
}
