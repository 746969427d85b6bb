//! Label spaces, model parameters and per-video frame records.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which of the two chains the model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Phase chain driving K binary tool chains.
    Coupled,
    /// Independent tool chains; the phase chain is collapsed to a single state.
    ToolOnly,
    /// Plain phase HMM; tools are ignored.
    PhaseOnly,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Coupled => "coupled",
            ModelKind::ToolOnly => "tool-only",
            ModelKind::PhaseOnly => "phase-only",
        }
    }

    pub fn uses_phases(self) -> bool {
        self != ModelKind::ToolOnly
    }

    pub fn uses_tools(self) -> bool {
        self != ModelKind::PhaseOnly
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coupled" => Ok(ModelKind::Coupled),
            "tool-only" => Ok(ModelKind::ToolOnly),
            "phase-only" => Ok(ModelKind::PhaseOnly),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

/// Ordered phase and tool alphabets. Matrix indices are positions in these lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    phases: Vec<String>,
    tools: Vec<String>,
}

impl LabelSpace {
    pub fn new<P, Q>(phases: P, tools: Q) -> Result<Self>
    where
        P: IntoIterator,
        P::Item: Into<String>,
        Q: IntoIterator,
        Q::Item: Into<String>,
    {
        let phases: Vec<String> = phases.into_iter().map(Into::into).collect();
        let tools: Vec<String> = tools.into_iter().map(Into::into).collect();
        if phases.is_empty() {
            return Err(Error::KindMismatch("at least one phase is required".into()));
        }
        for (what, list) in [("phase", &phases), ("tool", &tools)] {
            let mut seen = HashSet::new();
            for id in list {
                if !seen.insert(id.as_str()) {
                    return Err(Error::KindMismatch(format!(
                        "duplicate {what} identifier `{id}`"
                    )));
                }
            }
        }
        Ok(Self { phases, tools })
    }

    /// Label space with generated identifiers `P1..PL` and `T1..TK`.
    pub fn numbered(n_phases: usize, n_tools: usize) -> Result<Self> {
        Self::new(
            (1..=n_phases).map(|i| format!("P{i}")),
            (1..=n_tools).map(|i| format!("T{i}")),
        )
    }

    pub fn phases(&self) -> &[String] {
        &self.phases
    }

    pub fn tools(&self) -> &[String] {
        &self.tools
    }

    pub fn n_phases(&self) -> usize {
        self.phases.len()
    }

    pub fn n_tools(&self) -> usize {
        self.tools.len()
    }

    pub fn phase_index(&self, id: &str) -> Option<usize> {
        self.phases.iter().position(|p| p == id)
    }

    pub fn tool_index(&self, id: &str) -> Option<usize> {
        self.tools.iter().position(|t| t == id)
    }

    fn check_kind(&self, kind: ModelKind) -> Result<()> {
        if kind.uses_tools() && self.tools.is_empty() {
            return Err(Error::KindMismatch(format!(
                "{kind} model needs at least one tool"
            )));
        }
        Ok(())
    }
}

/// Row-stochastic 2x2 matrix indexed `[from][to]`, with state 0 = absent.
pub type Stoch2<T> = [[T; 2]; 2];

/// Full parameter set of the coupled model.
///
/// Phase-indexed structures have one row per phase for the coupled and
/// phase-only kinds, and a single row for the tool-only kind (the collapsed
/// `beta_tau` / `A_tau`). Tool-indexed structures are empty for phase-only.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub kind: ModelKind,
    pub space: LabelSpace,
    /// Initial phase distribution.
    pub alpha: Vec<T>,
    /// Phase transition matrix, `[from][to]`.
    pub phase_trans: Vec<Vec<T>>,
    /// Initial presence probability, `[tool][phase]`.
    pub tool_init: Vec<Vec<T>>,
    /// Tool presence transitions, `[tool][phase at the later frame]`.
    pub tool_trans: Vec<Vec<Stoch2<T>>>,
    /// Phase confusion, `[true][predicted]`.
    pub phase_confusion: Vec<Vec<T>>,
    /// Tool confusion, `[tool][true][predicted]`.
    pub tool_confusion: Vec<Stoch2<T>>,
}

/// One broken invariant found by [`validate_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.path, self.message)
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Number of states of the phase chain as seen by inference (1 for tool-only).
    pub fn phase_states(&self) -> usize {
        match self.kind {
            ModelKind::ToolOnly => 1,
            _ => self.space.n_phases(),
        }
    }

    /// Number of tool chains as seen by inference (0 for phase-only).
    pub fn tool_count(&self) -> usize {
        match self.kind {
            ModelKind::PhaseOnly => 0,
            _ => self.space.n_tools(),
        }
    }

    /// Size of the joint (phase, tool-vector) state space.
    pub fn state_count(&self) -> usize {
        self.phase_states() << self.tool_count()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let c = |x: &T| U::of(x.as_f64());
        let c2 = |m: &Stoch2<T>| [[c(&m[0][0]), c(&m[0][1])], [c(&m[1][0]), c(&m[1][1])]];
        ModelParams {
            kind: self.kind,
            space: self.space.clone(),
            alpha: self.alpha.iter().map(c).collect(),
            phase_trans: self
                .phase_trans
                .iter()
                .map(|r| r.iter().map(c).collect())
                .collect(),
            tool_init: self
                .tool_init
                .iter()
                .map(|r| r.iter().map(c).collect())
                .collect(),
            tool_trans: self
                .tool_trans
                .iter()
                .map(|r| r.iter().map(c2).collect())
                .collect(),
            phase_confusion: self
                .phase_confusion
                .iter()
                .map(|r| r.iter().map(c).collect())
                .collect(),
            tool_confusion: self.tool_confusion.iter().map(c2).collect(),
        }
    }

    /// Every stochastic row the model uses, named as in validation
    /// messages. Initial tool presence appears as `[absent, present]`.
    pub fn named_rows(&self) -> Vec<(String, Vec<T>)> {
        let mut rows = Vec::new();
        if self.kind.uses_phases() {
            rows.push(("alpha".to_string(), self.alpha.clone()));
            for (i, r) in self.phase_trans.iter().enumerate() {
                rows.push((format!("phase_trans row {i}"), r.clone()));
            }
            for (i, r) in self.phase_confusion.iter().enumerate() {
                rows.push((format!("phase_confusion row {i}"), r.clone()));
            }
        }
        for tool in 0..self.tool_count() {
            for phase in 0..self.phase_states() {
                let b = self.tool_init[tool][phase];
                rows.push((format!("tool_init[{tool}][{phase}]"), vec![T::one() - b, b]));
                for (i, r) in self.tool_trans[tool][phase].iter().enumerate() {
                    rows.push((format!("tool_trans[{tool}][{phase}] row {i}"), r.to_vec()));
                }
            }
            for (i, r) in self.tool_confusion[tool].iter().enumerate() {
                rows.push((format!("tool_confusion[{tool}] row {i}"), r.to_vec()));
            }
        }
        rows
    }

    pub fn validate(&self) -> Result<()> {
        let v = validate_params(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v))
        }
    }
}

fn check_entry<T: Scalar>(path: String, x: T, out: &mut Vec<Violation>) -> bool {
    if !x.is_finite() {
        out.push(Violation {
            path,
            message: format!("is not finite ({x})"),
        });
        false
    } else if x < T::zero() {
        out.push(Violation {
            path,
            message: format!("is negative ({x})"),
        });
        false
    } else if x > T::one() {
        out.push(Violation {
            path,
            message: format!("exceeds 1 ({x})"),
        });
        false
    } else {
        true
    }
}

fn check_row<T: Scalar>(path: &str, row: &[T], out: &mut Vec<Violation>) {
    let mut entries_ok = true;
    for (j, &x) in row.iter().enumerate() {
        entries_ok &= check_entry(format!("{path}[{j}]"), x, out);
    }
    if entries_ok {
        let s: T = row.iter().copied().sum();
        if (s - T::one()).abs() > T::sum_tolerance() {
            out.push(Violation {
                path: path.to_string(),
                message: format!("sums to {s}"),
            });
        }
    }
}

fn check_square<T: Scalar>(name: &str, m: &[Vec<T>], n: usize, out: &mut Vec<Violation>) {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        out.push(Violation {
            path: name.to_string(),
            message: format!("must be {n}x{n}"),
        });
        return;
    }
    for (i, row) in m.iter().enumerate() {
        check_row(&format!("{name} row {i}"), row, out);
    }
}

/// Lists every broken invariant of `params`; an empty list means valid.
pub fn validate_params<T: Scalar>(params: &ModelParams<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    if let Err(e) = params.space.check_kind(params.kind) {
        out.push(Violation {
            path: "space".into(),
            message: e.to_string(),
        });
        return out;
    }
    let lp = params.phase_states();
    let k = params.tool_count();

    if params.alpha.len() != lp {
        out.push(Violation {
            path: "alpha".into(),
            message: format!("must have length {lp}"),
        });
    } else {
        check_row("alpha", &params.alpha, &mut out);
    }
    check_square("phase_trans", &params.phase_trans, lp, &mut out);
    check_square("phase_confusion", &params.phase_confusion, lp, &mut out);

    if params.tool_init.len() != k || params.tool_init.iter().any(|r| r.len() != lp) {
        out.push(Violation {
            path: "tool_init".into(),
            message: format!("must be {k}x{lp}"),
        });
    } else {
        for (t, row) in params.tool_init.iter().enumerate() {
            for (p, &x) in row.iter().enumerate() {
                check_entry(format!("tool_init[{t}][{p}]"), x, &mut out);
            }
        }
    }
    if params.tool_trans.len() != k || params.tool_trans.iter().any(|r| r.len() != lp) {
        out.push(Violation {
            path: "tool_trans".into(),
            message: format!("must be {k}x{lp} 2x2 matrices"),
        });
    } else {
        for (t, per_phase) in params.tool_trans.iter().enumerate() {
            for (p, m) in per_phase.iter().enumerate() {
                for (i, row) in m.iter().enumerate() {
                    check_row(&format!("tool_trans[{t}][{p}] row {i}"), row, &mut out);
                }
            }
        }
    }
    if params.tool_confusion.len() != k {
        out.push(Violation {
            path: "tool_confusion".into(),
            message: format!("must have {k} matrices"),
        });
    } else {
        for (t, m) in params.tool_confusion.iter().enumerate() {
            for (i, row) in m.iter().enumerate() {
                check_row(&format!("tool_confusion[{t}] row {i}"), row, &mut out);
            }
        }
    }
    out
}

fn filled<T: Clone>(rows: usize, cols: usize, x: T) -> Vec<Vec<T>> {
    vec![vec![x; cols]; rows]
}

/// Every stochastic row uniform, every initial presence probability 1/2.
pub fn uniform_init<T: Scalar>(space: &LabelSpace, kind: ModelKind) -> Result<ModelParams<T>> {
    space.check_kind(kind)?;
    let lp = if kind == ModelKind::ToolOnly {
        1
    } else {
        space.n_phases()
    };
    let k = if kind == ModelKind::PhaseOnly {
        0
    } else {
        space.n_tools()
    };
    let u = T::one() / T::of(lp as f64);
    let h = T::of(0.5);
    Ok(ModelParams {
        kind,
        space: space.clone(),
        alpha: vec![u; lp],
        phase_trans: filled(lp, lp, u),
        tool_init: filled(k, lp, h),
        tool_trans: filled(k, lp, [[h; 2]; 2]),
        phase_confusion: filled(lp, lp, u),
        tool_confusion: vec![[[h; 2]; 2]; k],
    })
}

fn random_row<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    let lo = 1.0 / (2.0 * n as f64);
    let hi = (2.0 / n as f64).min(1.0);
    let raw: Vec<f64> = (0..n)
        .map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| T::of(x / s)).collect()
}

fn random_pair<T: Scalar>(rng: &mut ChaCha8Rng) -> [T; 2] {
    let a: f64 = rng.gen_range(0.25..0.75);
    let b: f64 = rng.gen_range(0.25..0.75);
    [T::of(a / (a + b)), T::of(b / (a + b))]
}

/// Random perturbation around uniform; deterministic for a fixed seed.
pub fn random_init<T: Scalar>(
    space: &LabelSpace,
    kind: ModelKind,
    seed: u64,
) -> Result<ModelParams<T>> {
    let mut p = uniform_init::<T>(space, kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lp = p.phase_states();
    p.alpha = random_row(&mut rng, lp);
    p.phase_trans = (0..lp).map(|_| random_row(&mut rng, lp)).collect();
    p.phase_confusion = (0..lp).map(|_| random_row(&mut rng, lp)).collect();
    for row in &mut p.tool_init {
        for x in row.iter_mut() {
            *x = T::of(rng.gen_range(0.25..0.75));
        }
    }
    for per_phase in &mut p.tool_trans {
        for m in per_phase.iter_mut() {
            *m = [random_pair(&mut rng), random_pair(&mut rng)];
        }
    }
    for m in &mut p.tool_confusion {
        *m = [random_pair(&mut rng), random_pair(&mut rng)];
    }
    Ok(p)
}

/// One key frame: classifier outputs plus whatever ground truth is known.
///
/// `None` in a truth field means unobserved. Tool truth is tracked per tool,
/// so a frame may be labelled for some tools and not others.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord<T> {
    pub frame_index: u64,
    pub pred_phase: Option<usize>,
    pub pred_tools: Option<Vec<bool>>,
    pub true_phase: Option<usize>,
    pub true_tools: Vec<Option<bool>>,
    /// Classifier phase probabilities; carried through, not modelled.
    pub soft_phase: Option<Vec<T>>,
    /// Classifier tool scores; used as raw scores when evaluating.
    pub soft_tools: Option<Vec<T>>,
}

impl<T: Scalar> FrameRecord<T> {
    /// Frame with predictions only and nothing observed.
    pub fn predicted(
        frame_index: u64,
        pred_phase: Option<usize>,
        pred_tools: Option<Vec<bool>>,
    ) -> Self {
        let k = pred_tools.as_ref().map_or(0, Vec::len);
        Self {
            frame_index,
            pred_phase,
            pred_tools,
            true_phase: None,
            true_tools: vec![None; k],
            soft_phase: None,
            soft_tools: None,
        }
    }

    pub fn with_truth(mut self, true_phase: Option<usize>, true_tools: Vec<Option<bool>>) -> Self {
        self.true_phase = true_phase;
        self.true_tools = true_tools;
        self
    }

    pub fn true_tool(&self, tool: usize) -> Option<bool> {
        self.true_tools.get(tool).copied().flatten()
    }

    pub fn has_any_truth(&self) -> bool {
        self.true_phase.is_some() || self.true_tools.iter().any(Option::is_some)
    }
}

/// The ordered frames of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoProfile<T> {
    pub video_id: String,
    frames: Vec<FrameRecord<T>>,
}

impl<T: Scalar> VideoProfile<T> {
    pub fn new(video_id: impl Into<String>, frames: Vec<FrameRecord<T>>) -> Result<Self> {
        let video_id = video_id.into();
        if frames.is_empty() {
            return Err(Error::InvalidVideo {
                video_id,
                reason: "no frames".into(),
            });
        }
        for w in frames.windows(2) {
            if w[1].frame_index <= w[0].frame_index {
                return Err(Error::InvalidVideo {
                    video_id,
                    reason: format!("frame_index {} does not increase", w[1].frame_index),
                });
            }
        }
        for f in &frames {
            if let Some(sp) = &f.soft_phase {
                let s: f64 = sp.iter().map(|x| x.as_f64()).sum();
                if (s - 1.0).abs() > 1e-6
                    || sp.iter().any(|x| !(x.as_f64() >= 0.0 && x.as_f64() <= 1.0))
                {
                    return Err(Error::InvalidVideo {
                        video_id,
                        reason: format!(
                            "soft phase scores at frame {} are not a distribution",
                            f.frame_index
                        ),
                    });
                }
            }
            if let Some(st) = &f.soft_tools {
                if st.iter().any(|x| !(x.as_f64() >= 0.0 && x.as_f64() <= 1.0)) {
                    return Err(Error::InvalidVideo {
                        video_id,
                        reason: format!("soft tool score outside [0,1] at frame {}", f.frame_index),
                    });
                }
            }
        }
        Ok(Self { video_id, frames })
    }

    pub fn frames(&self) -> &[FrameRecord<T>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Copy with every truth field unobserved; predictions are kept.
    pub fn without_truth(&self) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|f| {
                let mut f = f.clone();
                f.true_phase = None;
                f.true_tools.iter_mut().for_each(|x| *x = None);
                f
            })
            .collect();
        Self {
            video_id: self.video_id.clone(),
            frames,
        }
    }

    /// Checks the video carries the predicted fields `params` needs, with
    /// indices in range.
    pub fn check_compatible(&self, params: &ModelParams<T>) -> Result<()> {
        let l = params.space.n_phases();
        let k = params.tool_count();
        let bad = |reason: String| Error::InvalidVideo {
            video_id: self.video_id.clone(),
            reason,
        };
        for f in &self.frames {
            let at = f.frame_index;
            if params.kind.uses_phases() {
                match f.pred_phase {
                    None => return Err(bad(format!("frame {at} lacks a predicted phase"))),
                    Some(p) if p >= l => {
                        return Err(bad(format!("frame {at} predicted phase {p} out of range")))
                    }
                    _ => {}
                }
                if matches!(f.true_phase, Some(p) if p >= l) {
                    return Err(bad(format!("frame {at} true phase out of range")));
                }
            }
            if k > 0 {
                match &f.pred_tools {
                    Some(t) if t.len() == k => {}
                    _ => return Err(bad(format!("frame {at} lacks {k} predicted tool flags"))),
                }
                if !f.true_tools.is_empty() && f.true_tools.len() != k {
                    return Err(bad(format!(
                        "frame {at} has {} true tool fields, expected {k}",
                        f.true_tools.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(l: usize, k: usize) -> LabelSpace {
        LabelSpace::numbered(l, k).unwrap()
    }

    #[test]
    fn uniform_coupled_is_valid() {
        let p = uniform_init::<f64>(&space(2, 1), ModelKind::Coupled).unwrap();
        assert!(validate_params(&p).is_empty());
    }

    #[test]
    fn alpha_oversum_is_reported() {
        let mut p = uniform_init::<f64>(&space(2, 1), ModelKind::Coupled).unwrap();
        p.alpha = vec![0.6, 0.6];
        let v = validate_params(&p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "alpha");
    }

    #[test]
    fn negative_entry_is_reported_once() {
        let mut p = uniform_init::<f64>(&space(4, 1), ModelKind::Coupled).unwrap();
        p.phase_trans[0] = vec![0.5, 0.5, -0.0001, 0.0001];
        let v = validate_params(&p);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].path.starts_with("phase_trans row 0"));
        assert!(v[0].message.contains("negative"));
    }

    #[test]
    fn uniform_init_shapes() {
        let p = uniform_init::<f64>(&space(7, 7), ModelKind::Coupled).unwrap();
        assert!(p.phase_trans.iter().flatten().all(|&x| x == 1.0 / 7.0));
        assert!(p
            .tool_trans
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .all(|&x| x == 0.5));

        let p = uniform_init::<f64>(&space(1, 2), ModelKind::ToolOnly).unwrap();
        assert_eq!(p.alpha, vec![1.0]);
        assert_eq!(p.tool_init, vec![vec![0.5], vec![0.5]]);

        let p = uniform_init::<f64>(&space(3, 0), ModelKind::PhaseOnly).unwrap();
        assert_eq!(p.phase_confusion, vec![vec![1.0 / 3.0; 3]; 3]);
        assert!(p.tool_confusion.is_empty());
    }

    #[test]
    fn coupled_without_tools_is_rejected() {
        assert!(matches!(
            uniform_init::<f64>(&space(3, 0), ModelKind::Coupled),
            Err(Error::KindMismatch(_))
        ));
    }

    #[test]
    fn random_init_is_deterministic_and_seed_sensitive() {
        let s = space(3, 2);
        let a = random_init::<f64>(&s, ModelKind::Coupled, 1).unwrap();
        let b = random_init::<f64>(&s, ModelKind::Coupled, 1).unwrap();
        let c = random_init::<f64>(&s, ModelKind::Coupled, 2).unwrap();
        assert_eq!(a, b);
        let diff = a
            .phase_trans
            .iter()
            .flatten()
            .zip(c.phase_trans.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff > 1e-6);
    }

    #[test]
    fn duplicate_identifiers_rejected() {
        assert!(LabelSpace::new(["a", "a"], Vec::<String>::new()).is_err());
        assert!(LabelSpace::new(["a"], ["x", "x"]).is_err());
    }

    #[test]
    fn video_requires_increasing_frames() {
        let f = |i| FrameRecord::<f64>::predicted(i, Some(0), None);
        assert!(VideoProfile::new("v", vec![f(0), f(2)]).is_ok());
        assert!(VideoProfile::new("v", vec![f(0), f(0)]).is_err());
        assert!(VideoProfile::<f64>::new("v", vec![]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn inits_always_validate(l in 1usize..6, k in 0usize..4, seed in 0u64..1000) {
            for kind in [ModelKind::Coupled, ModelKind::ToolOnly, ModelKind::PhaseOnly] {
                if kind.uses_tools() && k == 0 { continue; }
                let s = space(l, k);
                proptest::prop_assert!(validate_params(&uniform_init::<f64>(&s, kind).unwrap()).is_empty());
                proptest::prop_assert!(validate_params(&random_init::<f64>(&s, kind, seed).unwrap()).is_empty());
                proptest::prop_assert!(validate_params(&random_init::<f32>(&s, kind, seed).unwrap()).is_empty());
            }
        }
    }
}
