//! Synthetic data from the generative model, and brute-force oracles.
//!
//! Sampled videos come with their complete hidden sequences in a separate
//! [`HiddenTruth`] sidecar; the [`VideoProfile`]s only carry the truth fields
//! the label policy exposes.

pub mod oracle;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameRecord, LabelSpace, ModelKind, ModelParams, VideoProfile};
use crate::scalar::Scalar;

/// Which truth fields of the sampled videos are exposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LabelPolicy {
    /// Continuous labels on every frame.
    AllObserved,
    NoneObserved,
    /// Each frame is fully labelled independently with this probability.
    FrameFraction {
        fraction: f64,
    },
    /// Each phase label and each tool label is observed independently with
    /// this probability.
    LabelFraction {
        fraction: f64,
    },
    /// For every tool, `positives` frames where it is present and `negatives`
    /// where it is absent are drawn across the whole dataset; only that tool
    /// is labelled on those frames.
    PerTool {
        positives: usize,
        negatives: usize,
    },
    /// The first `count` videos are fully labelled, the rest not at all.
    LabelledVideos {
        count: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrameCount {
    Fixed(usize),
    Range { min: usize, max: usize },
}

#[derive(Debug, Clone)]
pub struct GeneratorSpec<T> {
    /// Generating parameters.
    pub params: ModelParams<T>,
    pub num_videos: usize,
    pub frames_per_video: FrameCount,
    pub label_policy: LabelPolicy,
    pub seed: u64,
}

/// Complete hidden sequences of one sampled video.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTruth {
    pub video_id: String,
    pub phases: Vec<usize>,
    /// `n x K`.
    pub tools: Vec<Vec<bool>>,
}

#[derive(Debug, Clone)]
pub struct SampledDataset<T> {
    pub videos: Vec<VideoProfile<T>>,
    pub truth: Vec<HiddenTruth>,
}

fn draw(rng: &mut ChaCha8Rng, probs: impl Iterator<Item = f64> + Clone) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.gen::<f64>() < p
}

fn check_spec<T: Scalar>(spec: &GeneratorSpec<T>) -> Result<()> {
    spec.params.validate()?;
    if spec.num_videos == 0 {
        return Err(Error::InvalidSpec("num_videos must be positive".into()));
    }
    match spec.frames_per_video {
        FrameCount::Fixed(0) => {
            return Err(Error::InvalidSpec(
                "frames_per_video must be positive".into(),
            ))
        }
        FrameCount::Range { min, max } if min == 0 || min > max => {
            return Err(Error::InvalidSpec(format!(
                "invalid frame range {min}..={max}"
            )))
        }
        _ => {}
    }
    match spec.label_policy {
        LabelPolicy::FrameFraction { fraction } | LabelPolicy::LabelFraction { fraction }
            if !(0.0..=1.0).contains(&fraction) =>
        {
            Err(Error::InvalidSpec(format!(
                "fraction {fraction} outside [0,1]"
            )))
        }
        LabelPolicy::LabelledVideos { count } if count > spec.num_videos => {
            Err(Error::InvalidSpec(format!(
                "{count} labelled videos requested but only {} generated",
                spec.num_videos
            )))
        }
        _ => Ok(()),
    }
}

/// Ancestral sampling of complete profiles, then masking per the label policy.
pub fn sample_profile<T: Scalar>(spec: &GeneratorSpec<T>) -> Result<SampledDataset<T>> {
    check_spec(spec)?;
    let p = &spec.params;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = p.tool_count();
    let f = |x: &T| x.as_f64();

    let mut truth = Vec::with_capacity(spec.num_videos);
    let mut preds = Vec::with_capacity(spec.num_videos);
    for v in 0..spec.num_videos {
        let n = match spec.frames_per_video {
            FrameCount::Fixed(n) => n,
            FrameCount::Range { min, max } => rng.gen_range(min..=max),
        };
        let mut phases: Vec<usize> = Vec::with_capacity(n);
        let mut tools: Vec<Vec<bool>> = Vec::with_capacity(n);
        for t in 0..n {
            let phase = if t == 0 {
                draw(&mut rng, p.alpha.iter().map(f))
            } else {
                draw(&mut rng, p.phase_trans[phases[t - 1]].iter().map(f))
            };
            let row: Vec<bool> = (0..k)
                .map(|tool| {
                    let present = if t == 0 {
                        f(&p.tool_init[tool][phase])
                    } else {
                        let prev = usize::from(tools[t - 1][tool]);
                        f(&p.tool_trans[tool][phase][prev][1])
                    };
                    bernoulli(&mut rng, present)
                })
                .collect();
            phases.push(phase);
            tools.push(row);
        }
        let pred_phase: Vec<usize> = phases
            .iter()
            .map(|&x| draw(&mut rng, p.phase_confusion[x].iter().map(f)))
            .collect();
        let pred_tools: Vec<Vec<bool>> = tools
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(tool, &on)| {
                        bernoulli(&mut rng, f(&p.tool_confusion[tool][usize::from(on)][1]))
                    })
                    .collect()
            })
            .collect();
        truth.push(HiddenTruth {
            video_id: format!("vid{:03}", v + 1),
            phases,
            tools,
        });
        preds.push((pred_phase, pred_tools));
    }

    // masks[v][t] = (phase observed, per-tool observed)
    let mut masks: Vec<Vec<(bool, Vec<bool>)>> = truth
        .iter()
        .map(|h| vec![(false, vec![false; k]); h.phases.len()])
        .collect();
    let full = |m: &mut (bool, Vec<bool>)| {
        m.0 = true;
        m.1.iter_mut().for_each(|x| *x = true);
    };
    match &spec.label_policy {
        LabelPolicy::AllObserved => masks.iter_mut().flatten().for_each(full),
        LabelPolicy::NoneObserved => {}
        LabelPolicy::FrameFraction { fraction } => {
            for m in masks.iter_mut().flatten() {
                if bernoulli(&mut rng, *fraction) {
                    full(m);
                }
            }
        }
        LabelPolicy::LabelFraction { fraction } => {
            for m in masks.iter_mut().flatten() {
                m.0 = bernoulli(&mut rng, *fraction);
                m.1.iter_mut()
                    .for_each(|x| *x = bernoulli(&mut rng, *fraction));
            }
        }
        LabelPolicy::LabelledVideos { count } => {
            masks.iter_mut().take(*count).flatten().for_each(full)
        }
        LabelPolicy::PerTool {
            positives,
            negatives,
        } => {
            for tool in 0..k {
                for (want, budget) in [(true, *positives), (false, *negatives)] {
                    let mut pool: Vec<(usize, usize)> = truth
                        .iter()
                        .enumerate()
                        .flat_map(|(v, h)| {
                            h.tools
                                .iter()
                                .enumerate()
                                .filter(move |(_, row)| row[tool] == want)
                                .map(move |(t, _)| (v, t))
                        })
                        .collect();
                    pool.shuffle(&mut rng);
                    for (v, t) in pool.into_iter().take(budget) {
                        masks[v][t].1[tool] = true;
                    }
                }
            }
        }
    }

    let uses_phases = p.kind.uses_phases();
    let videos = truth
        .iter()
        .zip(preds)
        .zip(&masks)
        .map(|((h, (pp, pt)), mask)| {
            let frames = (0..h.phases.len())
                .map(|t| FrameRecord {
                    frame_index: t as u64,
                    pred_phase: uses_phases.then_some(pp[t]),
                    pred_tools: (k > 0).then(|| pt[t].clone()),
                    true_phase: (uses_phases && mask[t].0).then_some(h.phases[t]),
                    true_tools: (0..k)
                        .map(|tool| mask[t].1[tool].then_some(h.tools[t][tool]))
                        .collect(),
                    soft_phase: None,
                    soft_tools: None,
                })
                .collect();
            VideoProfile::new(h.video_id.clone(), frames)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampledDataset { videos, truth })
}

/// Knobs of the built-in generating parameters.
///
/// These are engineering defaults shaped after typical surgical workflows
/// (slow forward phase progression, sticky tool usage, 80-90% accurate
/// frame classifiers); they are not measured values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTheta {
    /// Phase self-transition probability.
    pub phase_stay: f64,
    /// Self-transition probability of a tool in a phase it belongs to.
    pub tool_stay: f64,
    /// Diagonal of the phase confusion matrix.
    pub phase_accuracy: f64,
    /// Diagonal of every tool confusion matrix.
    pub tool_accuracy: f64,
    /// Phases only advance to the next phase (last phase absorbing) and
    /// videos start in the first phase. Otherwise leaving mass is spread
    /// evenly and the start is uniform.
    pub forward_only: bool,
}

impl Default for SyntheticTheta {
    fn default() -> Self {
        Self {
            phase_stay: 0.99,
            tool_stay: 0.95,
            phase_accuracy: 0.85,
            tool_accuracy: 0.85,
            forward_only: true,
        }
    }
}

/// Builds generating parameters for `space` from the knobs in `theta`.
///
/// Tool `k` belongs to phase `q` when `q + k` is even. In its own phases a
/// tool switches on and off with probability `1 - tool_stay`; elsewhere it
/// switches on three times less often and starts present with probability
/// 0.1 instead of 0.8.
pub fn synthetic_theta<T: Scalar>(
    space: &LabelSpace,
    kind: ModelKind,
    theta: &SyntheticTheta,
) -> Result<ModelParams<T>> {
    let mut p = crate::model::uniform_init::<T>(space, kind)?;
    let lp = p.phase_states();
    let c = T::of;
    if kind.uses_phases() {
        let stay = if lp == 1 { 1.0 } else { theta.phase_stay };
        let acc = if lp == 1 { 1.0 } else { theta.phase_accuracy };
        for from in 0..lp {
            for to in 0..lp {
                p.phase_trans[from][to] = c(if theta.forward_only {
                    if from == lp - 1 {
                        f64::from(u8::from(to == from))
                    } else if to == from {
                        stay
                    } else if to == from + 1 {
                        1.0 - stay
                    } else {
                        0.0
                    }
                } else if to == from {
                    stay
                } else {
                    (1.0 - stay) / (lp - 1) as f64
                });
                p.phase_confusion[from][to] = c(if to == from {
                    acc
                } else {
                    (1.0 - acc) / (lp - 1) as f64
                });
            }
        }
        if theta.forward_only {
            p.alpha = (0..lp).map(|q| c(f64::from(u8::from(q == 0)))).collect();
        }
    }
    let leave = 1.0 - theta.tool_stay;
    for tool in 0..p.tool_count() {
        for phase in 0..lp {
            let own = (phase + tool) % 2 == 0;
            let enter = if own { leave } else { leave / 3.0 };
            p.tool_init[tool][phase] = c(if own { 0.8 } else { 0.1 });
            p.tool_trans[tool][phase] =
                [[c(1.0 - enter), c(enter)], [c(leave), c(theta.tool_stay)]];
        }
        let a = theta.tool_accuracy;
        p.tool_confusion[tool] = [[c(a), c(1.0 - a)], [c(1.0 - a), c(a)]];
    }
    p.validate()?;
    Ok(p)
}

/// Random valid parameters with every entry at least `floor / n` for rows of
/// length `n`, so every hidden sequence has positive probability.
pub fn random_params<T: Scalar>(
    space: &LabelSpace,
    kind: ModelKind,
    seed: u64,
    floor: f64,
) -> Result<ModelParams<T>> {
    fn row<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Vec<T> {
        let raw: Vec<f64> = (0..n).map(|_| floor + rng.gen::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| T::of(x / s)).collect()
    }
    fn stoch2<T: Scalar>(rng: &mut ChaCha8Rng, floor: f64) -> [[T; 2]; 2] {
        let (a, b) = (row::<T>(rng, 2, floor), row::<T>(rng, 2, floor));
        [[a[0], a[1]], [b[0], b[1]]]
    }
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let mut p = crate::model::uniform_init::<T>(space, kind)?;
    let lp = p.phase_states();
    let k = p.tool_count();
    p.alpha = row(rng, lp, floor);
    p.phase_trans = (0..lp).map(|_| row(rng, lp, floor)).collect();
    p.phase_confusion = (0..lp).map(|_| row(rng, lp, floor)).collect();
    p.tool_init = (0..k)
        .map(|_| (0..lp).map(|_| row::<T>(rng, 2, floor)[1]).collect())
        .collect();
    p.tool_trans = (0..k)
        .map(|_| (0..lp).map(|_| stoch2(rng, floor)).collect())
        .collect();
    p.tool_confusion = (0..k).map(|_| stoch2(rng, floor)).collect();
    p.validate()?;
    Ok(p)
}

/// One video of `n` frames sampled from random parameters, with each label
/// observed independently with probability `clamp_density`.
pub fn random_instance(
    space: &LabelSpace,
    kind: ModelKind,
    n: usize,
    clamp_density: f64,
    seed: u64,
) -> Result<(ModelParams<f64>, VideoProfile<f64>)> {
    let params = random_params::<f64>(space, kind, seed, 0.05)?;
    let spec = GeneratorSpec {
        params,
        num_videos: 1,
        frames_per_video: FrameCount::Fixed(n),
        label_policy: LabelPolicy::LabelFraction {
            fraction: clamp_density,
        },
        seed: seed ^ 0x9e37_79b9_7f4a_7c15,
    };
    let mut data = sample_profile(&spec)?;
    Ok((spec.params, data.videos.remove(0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{uniform_init, validate_params};

    fn spec(params: ModelParams<f64>, policy: LabelPolicy, seed: u64) -> GeneratorSpec<f64> {
        GeneratorSpec {
            params,
            num_videos: 4,
            frames_per_video: FrameCount::Range { min: 20, max: 30 },
            label_policy: policy,
            seed,
        }
    }

    fn generic(space: &LabelSpace) -> ModelParams<f64> {
        synthetic_theta(
            space,
            ModelKind::Coupled,
            &SyntheticTheta {
                forward_only: false,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn default_theta_is_valid() {
        let space = LabelSpace::numbered(7, 7).unwrap();
        for kind in [
            ModelKind::Coupled,
            ModelKind::ToolOnly,
            ModelKind::PhaseOnly,
        ] {
            let p = synthetic_theta::<f64>(&space, kind, &SyntheticTheta::default()).unwrap();
            assert!(validate_params(&p).is_empty());
        }
    }

    #[test]
    fn deterministic_chain_is_constant() {
        let space = LabelSpace::numbered(3, 1).unwrap();
        let mut p = uniform_init::<f64>(&space, ModelKind::Coupled).unwrap();
        p.alpha = vec![1.0, 0.0, 0.0];
        p.phase_trans = (0..3)
            .map(|i| (0..3).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        p.phase_confusion = p.phase_trans.clone();
        let d = sample_profile(&spec(p, LabelPolicy::AllObserved, 1)).unwrap();
        for v in &d.videos {
            assert!(v
                .frames()
                .iter()
                .all(|f| f.pred_phase == Some(0) && f.true_phase == Some(0)));
        }
    }

    #[test]
    fn absorbing_absent_tool_never_appears() {
        let space = LabelSpace::numbered(2, 2).unwrap();
        let mut p = generic(&space);
        p.tool_init[1] = vec![0.0, 0.0];
        p.tool_trans[1] = vec![[[1.0, 0.0], [0.5, 0.5]]; 2];
        p.tool_confusion[1] = [[1.0, 0.0], [0.0, 1.0]];
        let d = sample_profile(&spec(p, LabelPolicy::NoneObserved, 3)).unwrap();
        for (v, h) in d.videos.iter().zip(&d.truth) {
            assert!(h.tools.iter().all(|row| !row[1]));
            assert!(v
                .frames()
                .iter()
                .all(|f| !f.pred_tools.as_ref().unwrap()[1]));
        }
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let space = LabelSpace::numbered(3, 2).unwrap();
        let a = sample_profile(&spec(generic(&space), LabelPolicy::NoneObserved, 5)).unwrap();
        let b = sample_profile(&spec(generic(&space), LabelPolicy::NoneObserved, 5)).unwrap();
        assert_eq!(a.videos, b.videos);
        assert_eq!(a.truth, b.truth);
        let outputs: Vec<_> = (0..10)
            .map(|s| {
                sample_profile(&spec(generic(&space), LabelPolicy::NoneObserved, s))
                    .unwrap()
                    .truth
            })
            .collect();
        for i in 0..10 {
            for j in i + 1..10 {
                assert_ne!(outputs[i], outputs[j]);
            }
        }
    }

    #[test]
    fn per_tool_policy_labels_budgeted_frames() {
        let space = LabelSpace::numbered(3, 2).unwrap();
        let d = sample_profile(&spec(
            generic(&space),
            LabelPolicy::PerTool {
                positives: 5,
                negatives: 7,
            },
            2,
        ))
        .unwrap();
        for tool in 0..2 {
            let labelled: Vec<bool> = d
                .videos
                .iter()
                .flat_map(|v| v.frames().iter().filter_map(|f| f.true_tool(tool)))
                .collect();
            assert_eq!(labelled.iter().filter(|&&x| x).count(), 5);
            assert_eq!(labelled.iter().filter(|&&x| !x).count(), 7);
        }
        assert!(d
            .videos
            .iter()
            .flat_map(|v| v.frames())
            .all(|f| f.true_phase.is_none()));
    }

    #[test]
    fn exposed_labels_match_sidecar() {
        let space = LabelSpace::numbered(3, 2).unwrap();
        let d = sample_profile(&spec(
            generic(&space),
            LabelPolicy::FrameFraction { fraction: 0.5 },
            9,
        ))
        .unwrap();
        let mut seen = 0;
        for (v, h) in d.videos.iter().zip(&d.truth) {
            for (t, f) in v.frames().iter().enumerate() {
                if let Some(p) = f.true_phase {
                    seen += 1;
                    assert_eq!(p, h.phases[t]);
                    assert_eq!(
                        f.true_tools,
                        h.tools[t].iter().map(|&x| Some(x)).collect::<Vec<_>>()
                    );
                }
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn labelled_videos_policy() {
        let space = LabelSpace::numbered(2, 1).unwrap();
        let d = sample_profile(&spec(
            generic(&space),
            LabelPolicy::LabelledVideos { count: 1 },
            4,
        ))
        .unwrap();
        assert!(d.videos[0].frames().iter().all(|f| f.true_phase.is_some()));
        assert!(d.videos[1..]
            .iter()
            .flat_map(|v| v.frames())
            .all(|f| !f.has_any_truth()));
    }

    #[test]
    fn bad_specs_are_rejected() {
        let space = LabelSpace::numbered(2, 1).unwrap();
        let mut s = spec(
            generic(&space),
            LabelPolicy::FrameFraction { fraction: 1.5 },
            1,
        );
        assert!(matches!(sample_profile(&s), Err(Error::InvalidSpec(_))));
        s.label_policy = LabelPolicy::AllObserved;
        s.num_videos = 0;
        assert!(matches!(sample_profile(&s), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn transition_frequencies_converge() {
        let space = LabelSpace::numbered(2, 1).unwrap();
        let p = generic(&space);
        let s = GeneratorSpec {
            params: p.clone(),
            num_videos: 20,
            frames_per_video: FrameCount::Fixed(5000),
            label_policy: LabelPolicy::NoneObserved,
            seed: 17,
        };
        let d = sample_profile(&s).unwrap();
        let mut stay = [0usize; 2];
        let mut total = [0usize; 2];
        let mut conf = [[0usize; 2]; 2];
        for (v, h) in d.videos.iter().zip(&d.truth) {
            for w in h.phases.windows(2) {
                total[w[0]] += 1;
                stay[w[0]] += usize::from(w[0] == w[1]);
            }
            for (f, on) in v.frames().iter().zip(&h.tools) {
                conf[usize::from(on[0])][usize::from(f.pred_tools.as_ref().unwrap()[0])] += 1;
            }
        }
        for q in 0..2 {
            let freq = stay[q] as f64 / total[q] as f64;
            assert!(
                (freq - p.phase_trans[q][q]).abs() < 0.01,
                "phase {q}: {freq}"
            );
        }
        let hit = conf[1][1] as f64 / (conf[1][0] + conf[1][1]) as f64;
        assert!((hit - p.tool_confusion[0][1][1]).abs() < 0.01, "{hit}");
    }
}
