//! Exact forward-backward inference over the joint phase/tool state space.
//!
//! Forward rows are rescaled to sum to one at every frame and the scaling
//! constants are kept, so the evidence is `sum_t ln c_t` and nothing
//! underflows on long videos. Observed truth labels act as a zero multiplier
//! on inconsistent states inside the emission term, which is the only place
//! semi-supervised data differs from unlabelled data.

mod counts;
pub(crate) mod lattice;

pub use counts::{accumulate_counts, ExpectedCounts};

use crate::error::{Error, Result};
use crate::model::{FrameRecord, ModelParams, VideoProfile};
use crate::scalar::Scalar;
use lattice::Lattice;

/// One hidden state: a phase plus the presence flag of every tool.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointState {
    pub phase: usize,
    pub tools: Vec<bool>,
}

impl JointState {
    pub fn new(phase: usize, tools: Vec<bool>) -> Self {
        Self { phase, tools }
    }

    /// Position in the `phase * 2^K + bits` layout.
    pub fn index(&self) -> usize {
        let bits = self
            .tools
            .iter()
            .enumerate()
            .fold(0usize, |acc, (k, &on)| acc | (usize::from(on) << k));
        (self.phase << self.tools.len()) | bits
    }

    pub fn from_index(index: usize, n_tools: usize) -> Self {
        Self {
            phase: index >> n_tools,
            tools: (0..n_tools).map(|k| (index >> k) & 1 == 1).collect(),
        }
    }
}

/// Probability of the frame's predicted labels given `state`, or zero when the
/// state contradicts an observed truth field.
pub fn joint_emission<T: Scalar>(
    frame: &FrameRecord<T>,
    state: &JointState,
    params: &ModelParams<T>,
) -> T {
    let mut p = T::one();
    if params.kind.uses_phases() {
        if matches!(frame.true_phase, Some(obs) if obs != state.phase) {
            return T::zero();
        }
        let pred = frame.pred_phase.expect("predicted phase required");
        p *= params.phase_confusion[state.phase][pred];
    }
    if params.kind.uses_tools() {
        let pred = frame
            .pred_tools
            .as_deref()
            .expect("predicted tools required");
        for (k, &on) in state.tools.iter().enumerate() {
            if matches!(frame.true_tool(k), Some(obs) if obs != on) {
                return T::zero();
            }
            p *= params.tool_confusion[k][usize::from(on)][usize::from(pred[k])];
        }
    }
    p
}

/// Scaled forward/backward tables of one video.
#[derive(Debug, Clone)]
pub struct ForwardBackwardTables<T> {
    pub video_id: String,
    /// Number of joint states per frame.
    pub states: usize,
    /// Row-major `n x states`; each row sums to one.
    pub forward: Vec<T>,
    /// Row-major `n x states`, scaled by the product of later constants.
    pub backward: Vec<T>,
    /// Per-frame normalization constants.
    pub scale: Vec<T>,
    pub log_likelihood: T,
}

impl<T: Scalar> ForwardBackwardTables<T> {
    pub fn frames(&self) -> usize {
        self.scale.len()
    }

    pub fn forward_row(&self, t: usize) -> &[T] {
        &self.forward[t * self.states..(t + 1) * self.states]
    }

    pub fn backward_row(&self, t: usize) -> &[T] {
        &self.backward[t * self.states..(t + 1) * self.states]
    }

    /// Normalized joint-state posterior of frame `t`.
    pub fn state_posterior(&self, t: usize, out: &mut [T]) {
        let mut total = T::zero();
        for ((o, &f), &b) in out
            .iter_mut()
            .zip(self.forward_row(t))
            .zip(self.backward_row(t))
        {
            *o = f * b;
            total += *o;
        }
        out.iter_mut().for_each(|x| *x /= total);
    }
}

fn prepare<T: Scalar>(video: &VideoProfile<T>, params: &ModelParams<T>) -> Result<()> {
    params.validate()?;
    video.check_compatible(params)
}

fn normalize_row<T: Scalar>(row: &mut [T], video: &VideoProfile<T>, t: usize) -> Result<T> {
    let c: T = row.iter().copied().sum();
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::ZeroEvidence {
            video_id: video.video_id.clone(),
            frame_index: video.frames()[t].frame_index,
        });
    }
    row.iter_mut().for_each(|x| *x /= c);
    Ok(c)
}

/// Runs the scaled forward pass, calling `keep` with every normalized row.
fn forward_pass<T: Scalar>(
    lat: &Lattice<'_, T>,
    video: &VideoProfile<T>,
    mut keep: impl FnMut(usize, &[T], T),
) -> Result<T> {
    let s = lat.states();
    let mut prev = vec![T::zero(); s];
    let mut row = vec![T::zero(); s];
    let mut emis = vec![T::zero(); s];
    let mut scratch = vec![T::zero(); lat.block];
    let mut log_lik = T::zero();
    for (t, frame) in video.frames().iter().enumerate() {
        lat.emission_row(frame, &mut emis);
        if t == 0 {
            lat.prior_row(&mut row);
            row.iter_mut().zip(&emis).for_each(|(r, &e)| *r *= e);
        } else {
            lat.advance(&prev, &emis, &mut row, &mut scratch);
        }
        let c = normalize_row(&mut row, video, t)?;
        log_lik += c.ln();
        keep(t, &row, c);
        std::mem::swap(&mut prev, &mut row);
    }
    Ok(log_lik)
}

/// Forward and backward tables for one video under `params`.
pub fn forward_backward<T: Scalar>(
    video: &VideoProfile<T>,
    params: &ModelParams<T>,
) -> Result<ForwardBackwardTables<T>> {
    prepare(video, params)?;
    let lat = Lattice::new(params);
    let n = video.len();
    let s = lat.states();

    let mut forward = vec![T::zero(); n * s];
    let mut scale = vec![T::zero(); n];
    let log_likelihood = forward_pass(&lat, video, |t, row, c| {
        forward[t * s..(t + 1) * s].copy_from_slice(row);
        scale[t] = c;
    })?;

    let mut backward = vec![T::zero(); n * s];
    backward[(n - 1) * s..]
        .iter_mut()
        .for_each(|x| *x = T::one());
    let mut h = vec![T::zero(); s];
    let mut msg = vec![T::zero(); lat.block];
    for t in (0..n - 1).rev() {
        lat.emission_row(&video.frames()[t + 1], &mut h);
        let (head, tail) = backward.split_at_mut((t + 1) * s);
        let next = &tail[..s];
        let cur = &mut head[t * s..];
        h.iter_mut().zip(next).for_each(|(x, &b)| *x *= b);
        cur.iter_mut().for_each(|x| *x = T::zero());
        for phase in 0..lat.phases {
            msg.copy_from_slice(&h[phase * lat.block..(phase + 1) * lat.block]);
            lat.tools_backward(&mut msg, phase);
            for prev in 0..lat.phases {
                let a = params.phase_trans[prev][phase];
                if a == T::zero() {
                    continue;
                }
                for (o, &m) in cur[prev * lat.block..(prev + 1) * lat.block]
                    .iter_mut()
                    .zip(&msg)
                {
                    *o += a * m;
                }
            }
        }
        let c = scale[t + 1];
        cur.iter_mut().for_each(|x| *x /= c);
    }

    Ok(ForwardBackwardTables {
        video_id: video.video_id.clone(),
        states: s,
        forward,
        backward,
        scale,
        log_likelihood,
    })
}

/// Per-frame posterior phase distribution and tool presence probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMarginals<T> {
    /// `n x L`; empty rows' width is 1 for tool-only models.
    pub phase_post: Vec<Vec<T>>,
    /// `n x K`; width 0 for phase-only models.
    pub tool_post: Vec<Vec<T>>,
}

pub fn posterior_marginals<T: Scalar>(
    tables: &ForwardBackwardTables<T>,
    params: &ModelParams<T>,
) -> PosteriorMarginals<T> {
    let lat = Lattice::new(params);
    assert_eq!(
        lat.states(),
        tables.states,
        "tables were built for different parameters"
    );
    let mut gamma = vec![T::zero(); tables.states];
    let mut phase_post = Vec::with_capacity(tables.frames());
    let mut tool_post = Vec::with_capacity(tables.frames());
    for t in 0..tables.frames() {
        tables.state_posterior(t, &mut gamma);
        let phases: Vec<T> = gamma
            .chunks(lat.block)
            .map(|b| b.iter().copied().sum::<T>().min(T::one()))
            .collect();
        let tools: Vec<T> = (0..lat.tools)
            .map(|k| {
                let present: T = gamma
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| (i >> k) & 1 == 1)
                    .map(|(_, &g)| g)
                    .sum();
                present.min(T::one())
            })
            .collect();
        phase_post.push(phases);
        tool_post.push(tools);
    }
    PosteriorMarginals {
        phase_post,
        tool_post,
    }
}

/// Log-evidence of one video, using only the forward pass (constant memory).
pub fn video_log_likelihood<T: Scalar>(
    video: &VideoProfile<T>,
    params: &ModelParams<T>,
) -> Result<T> {
    prepare(video, params)?;
    forward_pass(&Lattice::new(params), video, |_, _, _| {})
}

/// Sum of per-video log-evidence.
pub fn log_likelihood<T: Scalar>(videos: &[VideoProfile<T>], params: &ModelParams<T>) -> Result<T> {
    videos
        .iter()
        .map(|v| video_log_likelihood(v, params))
        .try_fold(T::zero(), |acc, ll| Ok(acc + ll?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{uniform_init, LabelSpace, ModelKind};

    pub(crate) fn two_phase() -> ModelParams<f64> {
        let mut p =
            uniform_init(&LabelSpace::numbered(2, 0).unwrap(), ModelKind::PhaseOnly).unwrap();
        p.phase_trans = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        p.phase_confusion = vec![vec![0.8, 0.2], vec![0.2, 0.8]];
        p
    }

    fn phase_video(preds: &[usize], truth: &[Option<usize>]) -> VideoProfile<f64> {
        let frames = preds
            .iter()
            .zip(truth)
            .enumerate()
            .map(|(t, (&p, &x))| {
                FrameRecord::predicted(t as u64, Some(p), None).with_truth(x, vec![])
            })
            .collect();
        VideoProfile::new("v", frames).unwrap()
    }

    #[test]
    fn identity_emission_is_one_or_zero() {
        let mut p =
            uniform_init::<f64>(&LabelSpace::numbered(2, 1).unwrap(), ModelKind::Coupled).unwrap();
        p.phase_confusion = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        p.tool_confusion = vec![[[1.0, 0.0], [0.0, 1.0]]];
        let f = FrameRecord::predicted(0, Some(1), Some(vec![true]));
        assert_eq!(joint_emission(&f, &JointState::new(1, vec![true]), &p), 1.0);
        assert_eq!(joint_emission(&f, &JointState::new(0, vec![true]), &p), 0.0);
    }

    #[test]
    fn emission_reads_confusion_rows() {
        let mut p =
            uniform_init::<f64>(&LabelSpace::numbered(2, 1).unwrap(), ModelKind::Coupled).unwrap();
        p.phase_confusion = vec![vec![0.8, 0.2], vec![0.2, 0.8]];
        p.tool_confusion = vec![[[1.0, 0.0], [0.0, 1.0]]];
        // phase index 0 is the first phase
        let f = FrameRecord::predicted(0, Some(0), Some(vec![true]));
        assert_eq!(joint_emission(&f, &JointState::new(0, vec![true]), &p), 0.8);
    }

    #[test]
    fn emission_row_agrees_with_pointwise_emission() {
        let p = crate::model::random_init::<f64>(
            &LabelSpace::numbered(3, 2).unwrap(),
            ModelKind::Coupled,
            9,
        )
        .unwrap();
        let f = FrameRecord::predicted(0, Some(2), Some(vec![true, false]))
            .with_truth(None, vec![None, Some(false)]);
        let lat = Lattice::new(&p);
        let mut row = vec![0.0; lat.states()];
        lat.emission_row(&f, &mut row);
        for (i, &x) in row.iter().enumerate() {
            let want = joint_emission(&f, &JointState::from_index(i, 2), &p);
            assert!((x - want).abs() < 1e-15);
        }
    }

    #[test]
    fn two_frame_phase_example() {
        let p = two_phase();
        let v = phase_video(&[0, 0], &[None, None]);
        let fb = forward_backward(&v, &p).unwrap();
        assert!((fb.log_likelihood - 0.322f64.ln()).abs() < 1e-12);
        let m = posterior_marginals(&fb, &p);
        assert!((m.phase_post[0][0] - 0.296 / 0.322).abs() < 1e-12);
        assert!((m.phase_post[1][0] - 0.296 / 0.322).abs() < 1e-12);

        let clamped = phase_video(&[0, 0], &[Some(1), None]);
        let fb = forward_backward(&clamped, &p).unwrap();
        assert!((fb.log_likelihood - 0.026f64.ln()).abs() < 1e-12);
        let m = posterior_marginals(&fb, &p);
        assert_eq!(m.phase_post[0], vec![0.0, 1.0]);
    }

    #[test]
    fn noiseless_channel_gives_prior_path_probability() {
        let mut p = two_phase();
        p.phase_confusion = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let v = phase_video(&[0, 0, 1, 1], &[None; 4]);
        let fb = forward_backward(&v, &p).unwrap();
        let want = (0.5f64 * 0.9 * 0.1 * 0.9).ln();
        assert!((fb.log_likelihood - want).abs() < 1e-12);
        let m = posterior_marginals(&fb, &p);
        assert_eq!(m.phase_post[2], vec![0.0, 1.0]);
    }

    #[test]
    fn uniform_model_has_flat_posteriors() {
        let p =
            uniform_init::<f64>(&LabelSpace::numbered(3, 2).unwrap(), ModelKind::Coupled).unwrap();
        let frames = (0..4)
            .map(|t| {
                FrameRecord::predicted(t, Some((t % 3) as usize), Some(vec![t % 2 == 0, true]))
            })
            .collect();
        let v = VideoProfile::new("u", frames).unwrap();
        let m = posterior_marginals(&forward_backward(&v, &p).unwrap(), &p);
        for row in &m.phase_post {
            row.iter()
                .for_each(|&x| assert!((x - 1.0 / 3.0).abs() < 1e-12));
        }
        for row in &m.tool_post {
            row.iter().for_each(|&x| assert!((x - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn contradictory_clamp_is_zero_evidence() {
        let mut p = two_phase();
        p.phase_confusion = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let v = phase_video(&[0, 0], &[None, Some(1)]);
        match forward_backward(&v, &p) {
            Err(Error::ZeroEvidence { frame_index, .. }) => assert_eq!(frame_index, 1),
            other => panic!("expected ZeroEvidence, got {other:?}"),
        }
    }

    #[test]
    fn log_likelihood_sums_videos() {
        let p = two_phase();
        let v = phase_video(&[0, 0], &[None, None]);
        assert_eq!(log_likelihood::<f64>(&[], &p).unwrap(), 0.0);
        let two = log_likelihood(&[v.clone(), v], &p).unwrap();
        assert!((two - 2.0 * 0.322f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = two_phase();
        p.alpha = vec![0.6, 0.6];
        let v = phase_video(&[0], &[None]);
        assert!(matches!(
            forward_backward(&v, &p),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn scaled_identity_holds_across_frames() {
        let p = crate::model::random_init::<f64>(
            &LabelSpace::numbered(3, 3).unwrap(),
            ModelKind::Coupled,
            4,
        )
        .unwrap();
        let frames = (0..40)
            .map(|t| {
                FrameRecord::predicted(
                    t,
                    Some((t % 3) as usize),
                    Some(vec![t % 2 == 0, t % 5 == 0, true]),
                )
            })
            .collect();
        let v = VideoProfile::new("s", frames).unwrap();
        let fb = forward_backward(&v, &p).unwrap();
        for t in 0..fb.frames() {
            let fsum: f64 = fb.forward_row(t).iter().sum();
            assert!((fsum - 1.0).abs() < 1e-9);
            let z: f64 = fb
                .forward_row(t)
                .iter()
                .zip(fb.backward_row(t))
                .map(|(a, b)| a * b)
                .sum();
            assert!((z - 1.0).abs() < 1e-9, "t={t} z={z}");
        }
        let fwd_only = video_log_likelihood(&v, &p).unwrap();
        assert_eq!(fwd_only, fb.log_likelihood);
    }

    #[test]
    fn long_video_stays_finite() {
        let mut p = two_phase();
        p.phase_confusion = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let n = 5000;
        let preds: Vec<usize> = (0..n).map(|t| usize::from(t >= n / 2)).collect();
        let v = phase_video(&preds, &vec![None; n]);
        let fb = forward_backward(&v, &p).unwrap();
        let want = 0.5f64.ln() + (n as f64 - 2.0) * 0.9f64.ln() + 0.1f64.ln();
        assert!(((fb.log_likelihood - want) / want).abs() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let p = two_phase().cast::<f32>();
        let frames = (0..2)
            .map(|t| FrameRecord::predicted(t, Some(0), None))
            .collect();
        let v = VideoProfile::<f32>::new("f", frames).unwrap();
        let fb = forward_backward(&v, &p).unwrap();
        assert!((fb.log_likelihood - 0.322f32.ln()).abs() < 1e-5);
    }
}
