//! MAP decoding, posterior thresholding and assembly of stabilized outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::lattice::Lattice;
use crate::inference::{forward_backward, posterior_marginals, PosteriorMarginals};
use crate::model::{ModelParams, VideoProfile};
use crate::scalar::Scalar;

/// Most probable hidden sequence of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSequence<T> {
    /// Absent for tool-only models.
    pub phases: Option<Vec<usize>>,
    /// `n x K`; absent for phase-only models.
    pub tools: Option<Vec<Vec<bool>>>,
    /// Log joint probability of the decoded hidden sequence and the predictions.
    pub joint_log_prob: T,
}

fn ln_all<T: Scalar>(row: &mut [T]) {
    row.iter_mut().for_each(|x| *x = x.ln());
}

/// Max-plus version of a forward bit contraction. `choice[x]` records the
/// old value of the bit that attains the max for new-coordinate entry `x`;
/// ties keep the absent state.
fn max_contract<T: Scalar>(table: &mut [T], bit: usize, log_m: &[[T; 2]; 2], choice: &mut [u8]) {
    let stride = 1usize << bit;
    for base in (0..table.len()).step_by(stride << 1) {
        for x in base..base + stride {
            let (a, b) = (table[x], table[x + stride]);
            for j in 0..2 {
                let from0 = a + log_m[0][j];
                let from1 = b + log_m[1][j];
                let at = x + j * stride;
                if from1 > from0 {
                    table[at] = from1;
                    choice[at] = 1;
                } else {
                    table[at] = from0;
                    choice[at] = 0;
                }
            }
        }
    }
}

/// Viterbi decoding in log space over the joint state space, honouring
/// every observed truth label.
pub fn viterbi_decode<T: Scalar>(
    video: &VideoProfile<T>,
    params: &ModelParams<T>,
) -> Result<DecodedSequence<T>> {
    params.validate()?;
    video.check_compatible(params)?;
    let lat = Lattice::new(params);
    let (lp, k, block) = (lat.phases, lat.tools, lat.block);
    let s = lat.states();
    let n = video.len();

    let log_a: Vec<Vec<T>> = params
        .phase_trans
        .iter()
        .map(|r| r.iter().map(|x| x.ln()).collect())
        .collect();
    let log_tool: Vec<Vec<[[T; 2]; 2]>> = params
        .tool_trans
        .iter()
        .map(|per| per.iter().map(|m| m.map(|r| r.map(|x| x.ln()))).collect())
        .collect();

    let zero_evidence = |t: usize| Error::ZeroEvidence {
        video_id: video.video_id.clone(),
        frame_index: video.frames()[t].frame_index,
    };

    let mut delta = vec![T::zero(); s];
    let mut emis = vec![T::zero(); s];
    lat.prior_row(&mut delta);
    lat.emission_row(&video.frames()[0], &mut emis);
    delta.iter_mut().zip(&emis).for_each(|(d, &e)| *d = *d * e);
    ln_all(&mut delta);
    if delta.iter().all(|&d| d == T::neg_infinity()) {
        return Err(zero_evidence(0));
    }

    // back[t * s + state] = best predecessor joint state at frame t - 1
    let mut back = vec![0u32; n.saturating_sub(1) * s];
    let mut next = vec![T::zero(); s];
    let mut table = vec![T::zero(); block];
    let mut from_phase = vec![0usize; block];
    let mut choices = vec![vec![0u8; block]; k];
    for t in 1..n {
        lat.emission_row(&video.frames()[t], &mut emis);
        ln_all(&mut emis);
        for phase in 0..lp {
            table.iter_mut().for_each(|x| *x = T::neg_infinity());
            from_phase.iter_mut().for_each(|x| *x = 0);
            for prev in 0..lp {
                let la = log_a[prev][phase];
                for x in 0..block {
                    let v = delta[prev * block + x] + la;
                    if v > table[x] {
                        table[x] = v;
                        from_phase[x] = prev;
                    }
                }
            }
            for (bit, choice) in choices.iter_mut().enumerate() {
                max_contract(&mut table, bit, &log_tool[bit][phase], choice);
            }
            let row = &mut back[(t - 1) * s + phase * block..(t - 1) * s + (phase + 1) * block];
            for bits in 0..block {
                let mut old = bits;
                for bit in (0..k).rev() {
                    let i = usize::from(choices[bit][old]);
                    old = (old & !(1 << bit)) | (i << bit);
                }
                row[bits] = (from_phase[old] * block + old) as u32;
                next[phase * block + bits] = table[bits] + emis[phase * block + bits];
            }
        }
        std::mem::swap(&mut delta, &mut next);
        if delta.iter().all(|&d| d == T::neg_infinity()) {
            return Err(zero_evidence(t));
        }
    }

    let mut best = 0;
    for (i, &d) in delta.iter().enumerate() {
        if d > delta[best] {
            best = i;
        }
    }
    let joint_log_prob = delta[best];
    let mut path = vec![0usize; n];
    path[n - 1] = best;
    for t in (1..n).rev() {
        path[t - 1] = back[(t - 1) * s + path[t]] as usize;
    }

    let phases = params
        .kind
        .uses_phases()
        .then(|| path.iter().map(|&st| st / block).collect());
    let tools = params.kind.uses_tools().then(|| {
        path.iter()
            .map(|&st| (0..k).map(|b| (st >> b) & 1 == 1).collect())
            .collect()
    });
    Ok(DecodedSequence {
        phases,
        tools,
        joint_log_prob,
    })
}

/// `true` where the posterior presence probability strictly exceeds `cutoff`.
pub fn threshold_binarize<T: Scalar>(
    marginals: &PosteriorMarginals<T>,
    cutoff: T,
) -> Vec<Vec<bool>> {
    marginals
        .tool_post
        .iter()
        .map(|row| row.iter().map(|&p| p > cutoff).collect())
        .collect()
}

/// Index of the largest entry; the first one wins ties.
pub fn posterior_mode<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// How hard labels are produced by [`stabilize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilizeMode {
    /// Phases and tools from the Viterbi path.
    Map,
    /// Phase posterior mode and thresholded tool posteriors.
    Marginal,
    /// Viterbi phases with thresholded tool posteriors.
    Hybrid,
}

impl std::str::FromStr for StabilizeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "map" => Ok(Self::Map),
            "marginal" => Ok(Self::Marginal),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stabilized<T> {
    /// Input video with predicted fields replaced by stabilized labels and
    /// soft fields replaced by posterior marginals. Truth fields are kept.
    pub video: VideoProfile<T>,
    pub marginals: PosteriorMarginals<T>,
    /// Present whenever the mode used the Viterbi path.
    pub decoded: Option<DecodedSequence<T>>,
}

pub fn stabilize<T: Scalar>(
    video: &VideoProfile<T>,
    params: &ModelParams<T>,
    mode: StabilizeMode,
    cutoff: T,
) -> Result<Stabilized<T>> {
    let tables = forward_backward(video, params)?;
    let marginals = posterior_marginals(&tables, params);
    let decoded = match mode {
        StabilizeMode::Marginal => None,
        _ => Some(viterbi_decode(video, params)?),
    };
    let marginal_phases: Vec<usize> = marginals
        .phase_post
        .iter()
        .map(|r| posterior_mode(r))
        .collect();
    let marginal_tools = threshold_binarize(&marginals, cutoff);

    let (phases, tools) = match (mode, &decoded) {
        (StabilizeMode::Map, Some(d)) => (d.phases.clone(), d.tools.clone()),
        (StabilizeMode::Hybrid, Some(d)) => (d.phases.clone(), Some(marginal_tools)),
        _ => (Some(marginal_phases), Some(marginal_tools)),
    };
    let uses_phases = params.kind.uses_phases();
    let uses_tools = params.kind.uses_tools();

    let frames = video
        .frames()
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let mut f = f.clone();
            if uses_phases {
                f.pred_phase = phases.as_ref().map(|p| p[t]);
                f.soft_phase = Some(marginals.phase_post[t].clone());
            }
            if uses_tools {
                f.pred_tools = tools.as_ref().map(|x| x[t].clone());
                f.soft_tools = Some(marginals.tool_post[t].clone());
            }
            f
        })
        .collect();
    let video = VideoProfile::new(video.video_id.clone(), frames)?;
    Ok(Stabilized {
        video,
        marginals,
        decoded,
    })
}
