//! Exhaustive enumeration over complete hidden sequences.
//!
//! Written directly from the factorized joint distribution, without the
//! lattice machinery used by the production inference code, so the two can
//! be checked against each other on small problems.

use crate::error::{Error, Result};
use crate::inference::{ExpectedCounts, PosteriorMarginals};
use crate::model::{ModelParams, VideoProfile};
use crate::scalar::Scalar;

/// Upper bound on the number of enumerated hidden sequences.
pub const MAX_ASSIGNMENTS: f64 = 1e7;

#[derive(Debug, Clone, Copy)]
struct Hidden {
    phase: usize,
    tools: u32,
}

impl Hidden {
    fn tool(self, k: usize) -> bool {
        (self.tools >> k) & 1 == 1
    }
}

struct Space {
    phases: usize,
    tools: usize,
}

impl Space {
    fn of<T: Scalar>(params: &ModelParams<T>) -> Self {
        Self {
            phases: params.phase_states(),
            tools: params.tool_count(),
        }
    }

    fn per_frame(&self) -> usize {
        self.phases << self.tools
    }

    fn decode(&self, digit: usize) -> Hidden {
        Hidden {
            phase: digit >> self.tools,
            tools: (digit & ((1 << self.tools) - 1)) as u32,
        }
    }

    /// All sequences of length `n`, frame 0 varying slowest.
    fn sequences(&self, n: usize) -> Result<impl Iterator<Item = Vec<Hidden>> + '_> {
        let total = (self.per_frame() as f64).powi(n as i32);
        if total > MAX_ASSIGNMENTS {
            return Err(Error::TooLarge { assignments: total });
        }
        let base = self.per_frame();
        Ok((0..total as usize).map(move |mut code| {
            let mut seq = vec![Hidden { phase: 0, tools: 0 }; n];
            for slot in seq.iter_mut().rev() {
                *slot = self.decode(code % base);
                code /= base;
            }
            seq
        }))
    }
}

/// Per-frame factors of the joint probability of `seq` and the video's
/// predictions; the product over frames is the joint probability.
fn frame_factors<T: Scalar>(
    video: &VideoProfile<T>,
    params: &ModelParams<T>,
    seq: &[Hidden],
) -> Vec<f64> {
    let k = params.tool_count();
    let phases = params.kind.uses_phases();
    let f = |x: T| x.as_f64();
    video
        .frames()
        .iter()
        .zip(seq)
        .enumerate()
        .map(|(t, (frame, &h))| {
            let mut p = 1.0;
            if t == 0 {
                p *= f(params.alpha[h.phase]);
                for tool in 0..k {
                    let beta = f(params.tool_init[tool][h.phase]);
                    p *= if h.tool(tool) { beta } else { 1.0 - beta };
                }
            } else {
                let prev = seq[t - 1];
                p *= f(params.phase_trans[prev.phase][h.phase]);
                for tool in 0..k {
                    let m = &params.tool_trans[tool][h.phase];
                    p *= f(m[usize::from(prev.tool(tool))][usize::from(h.tool(tool))]);
                }
            }
            if phases {
                if frame.true_phase.is_some_and(|obs| obs != h.phase) {
                    return 0.0;
                }
                p *= f(params.phase_confusion[h.phase][frame.pred_phase.unwrap()]);
            }
            for tool in 0..k {
                if frame.true_tool(tool).is_some_and(|obs| obs != h.tool(tool)) {
                    return 0.0;
                }
                let pred = frame.pred_tools.as_ref().unwrap()[tool];
                p *= f(params.tool_confusion[tool][usize::from(h.tool(tool))][usize::from(pred)]);
            }
            p
        })
        .collect()
}

fn prepare<T: Scalar>(video: &VideoProfile<T>, params: &ModelParams<T>) -> Result<Space> {
    params.validate()?;
    video.check_compatible(params)?;
    Ok(Space::of(params))
}

/// Posterior over complete hidden sequences, in enumeration order.
pub struct Enumeration {
    pub log_evidence: f64,
    sequences: Vec<Vec<Hidden>>,
    weights: Vec<f64>,
}

/// Enumerates every hidden sequence and its normalized posterior weight.
///
/// When every sequence has probability zero, the error names the latest frame
/// any sequence survives to: the first frame at which no partial sequence
/// has positive probability.
pub fn brute_force_evidence<T: Scalar>(
    video: &VideoProfile<T>,
    params: &ModelParams<T>,
) -> Result<Enumeration> {
    let space = prepare(video, params)?;
    let mut sequences = Vec::new();
    let mut weights = Vec::new();
    let mut survives_to = 0;
    for seq in space.sequences(video.len())? {
        let factors = frame_factors(video, params, &seq);
        let first_zero = factors.iter().position(|&x| x == 0.0);
        match first_zero {
            Some(t) => survives_to = survives_to.max(t),
            None => {
                weights.push(factors.iter().product());
                sequences.push(seq);
            }
        }
    }
    let evidence: f64 = weights.iter().sum();
    if evidence <= 0.0 {
        return Err(Error::ZeroEvidence {
            video_id: video.video_id.clone(),
            frame_index: video.frames()[survives_to].frame_index,
        });
    }
    weights.iter_mut().for_each(|w| *w /= evidence);
    Ok(Enumeration {
        log_evidence: evidence.ln(),
        sequences,
        weights,
    })
}

/// Highest-probability hidden sequence; the first one in enumeration order
/// wins ties. Returns `(phases, tools, log joint probability)`.
pub fn brute_force_map<T: Scalar>(
    video: &VideoProfile<T>,
    params: &ModelParams<T>,
) -> Result<(Vec<usize>, Vec<Vec<bool>>, f64)> {
    let space = prepare(video, params)?;
    let mut best: Option<(f64, Vec<Hidden>)> = None;
    for seq in space.sequences(video.len())? {
        let p: f64 = frame_factors(video, params, &seq).iter().product();
        if p > 0.0 && best.as_ref().is_none_or(|(b, _)| p > *b) {
            best = Some((p, seq));
        }
    }
    let Some((p, seq)) = best else {
        // Reuse the evidence pass for the error location.
        return brute_force_evidence(video, params)
            .map(|_| unreachable!("positive evidence without a maximizer"));
    };
    let phases = seq.iter().map(|h| h.phase).collect();
    let tools = seq
        .iter()
        .map(|h| (0..space.tools).map(|k| h.tool(k)).collect())
        .collect();
    Ok((phases, tools, p.ln()))
}

/// Log joint probability of one complete hidden sequence and the video's
/// predictions (negative infinity if it contradicts an observed label).
/// `phases` is ignored for tool-only models and `tools` for phase-only ones.
pub fn path_log_prob<T: Scalar>(
    video: &VideoProfile<T>,
    params: &ModelParams<T>,
    phases: Option<&[usize]>,
    tools: Option<&[Vec<bool>]>,
) -> Result<f64> {
    let space = prepare(video, params)?;
    let seq: Vec<Hidden> = (0..video.len())
        .map(|t| Hidden {
            phase: if params.kind.uses_phases() {
                phases.expect("phases required")[t]
            } else {
                0
            },
            tools: (0..space.tools)
                .map(|k| u32::from(tools.expect("tools required")[t][k]) << k)
                .sum(),
        })
        .collect();
    Ok(frame_factors(video, params, &seq)
        .iter()
        .map(|x| x.ln())
        .sum())
}

/// Posterior phase distributions and tool presence probabilities.
pub fn brute_force_marginals<T: Scalar>(
    video: &VideoProfile<T>,
    params: &ModelParams<T>,
) -> Result<PosteriorMarginals<f64>> {
    let e = brute_force_evidence(video, params)?;
    let space = Space::of(params);
    let n = video.len();
    let mut phase_post = vec![vec![0.0; space.phases]; n];
    let mut tool_post = vec![vec![0.0; space.tools]; n];
    for (seq, &w) in e.sequences.iter().zip(&e.weights) {
        for (t, h) in seq.iter().enumerate() {
            phase_post[t][h.phase] += w;
            for k in 0..space.tools {
                if h.tool(k) {
                    tool_post[t][k] += w;
                }
            }
        }
    }
    Ok(PosteriorMarginals {
        phase_post,
        tool_post,
    })
}

/// Posterior expected sufficient statistics of one video.
pub fn brute_force_counts<T: Scalar>(
    video: &VideoProfile<T>,
    params: &ModelParams<T>,
) -> Result<ExpectedCounts<f64>> {
    let e = brute_force_evidence(video, params)?;
    let space = Space::of(params);
    let mut c = ExpectedCounts::<f64>::zeros(space.phases, space.tools);
    let phases = params.kind.uses_phases();
    for (seq, &w) in e.sequences.iter().zip(&e.weights) {
        let first = seq[0];
        c.init_phase[first.phase] += w;
        for k in 0..space.tools {
            c.init_tool[k][first.phase][usize::from(first.tool(k))] += w;
        }
        for (t, (frame, &h)) in video.frames().iter().zip(seq).enumerate() {
            if phases {
                c.phase_conf[h.phase][frame.pred_phase.unwrap()] += w;
            }
            for k in 0..space.tools {
                let pred = frame.pred_tools.as_ref().unwrap()[k];
                c.tool_conf[k][usize::from(h.tool(k))][usize::from(pred)] += w;
            }
            if t > 0 {
                let prev = seq[t - 1];
                c.phase_trans[prev.phase][h.phase] += w;
                for k in 0..space.tools {
                    c.tool_trans[k][h.phase][usize::from(prev.tool(k))][usize::from(h.tool(k))] +=
                        w;
                }
            }
        }
    }
    Ok(c)
}
