use super::lattice::{bit_pair_sums, contract_backward, contract_forward, Lattice};
use super::ForwardBackwardTables;
use crate::model::{ModelParams, Stoch2, VideoProfile};
use crate::scalar::Scalar;

/// Expected sufficient statistics of the six parameter families.
///
/// Counts are additive over videos: merging two accumulators is the same as
/// accumulating the union of their videos.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCounts<T> {
    /// `[phase]` at the first frame.
    pub init_phase: Vec<T>,
    /// `[from][to]`.
    pub phase_trans: Vec<Vec<T>>,
    /// `[true][predicted]`.
    pub phase_conf: Vec<Vec<T>>,
    /// `[tool][phase][presence]` at the first frame.
    pub init_tool: Vec<Vec<[T; 2]>>,
    /// `[tool][phase at later frame][from][to]`.
    pub tool_trans: Vec<Vec<Stoch2<T>>>,
    /// `[tool][true][predicted]`.
    pub tool_conf: Vec<Stoch2<T>>,
}

impl<T: Scalar> ExpectedCounts<T> {
    pub fn zeros(phases: usize, tools: usize) -> Self {
        let z = T::zero();
        Self {
            init_phase: vec![z; phases],
            phase_trans: vec![vec![z; phases]; phases],
            phase_conf: vec![vec![z; phases]; phases],
            init_tool: vec![vec![[z; 2]; phases]; tools],
            tool_trans: vec![vec![[[z; 2]; 2]; phases]; tools],
            tool_conf: vec![[[z; 2]; 2]; tools],
        }
    }

    /// Empty accumulator shaped for `params`.
    pub fn for_params(params: &ModelParams<T>) -> Self {
        Self::zeros(params.phase_states(), params.tool_count())
    }

    pub fn merge(&mut self, other: &Self) {
        let add = |a: &mut T, b: &T| *a += *b;
        self.init_phase
            .iter_mut()
            .zip(&other.init_phase)
            .for_each(|(a, b)| add(a, b));
        for (ra, rb) in self.phase_trans.iter_mut().zip(&other.phase_trans) {
            ra.iter_mut().zip(rb).for_each(|(a, b)| add(a, b));
        }
        for (ra, rb) in self.phase_conf.iter_mut().zip(&other.phase_conf) {
            ra.iter_mut().zip(rb).for_each(|(a, b)| add(a, b));
        }
        for (ta, tb) in self.init_tool.iter_mut().zip(&other.init_tool) {
            for (a, b) in ta.iter_mut().zip(tb) {
                add(&mut a[0], &b[0]);
                add(&mut a[1], &b[1]);
            }
        }
        for (ta, tb) in self.tool_trans.iter_mut().zip(&other.tool_trans) {
            for (ma, mb) in ta.iter_mut().zip(tb) {
                add2(ma, mb);
            }
        }
        for (ma, mb) in self.tool_conf.iter_mut().zip(&other.tool_conf) {
            add2(ma, mb);
        }
    }

    /// Iterates every cell; used by tests and invariant checks.
    pub fn cells(&self) -> Vec<T> {
        let mut out = Vec::new();
        out.extend(&self.init_phase);
        self.phase_trans.iter().for_each(|r| out.extend(r));
        self.phase_conf.iter().for_each(|r| out.extend(r));
        self.init_tool.iter().flatten().for_each(|c| out.extend(c));
        self.tool_trans
            .iter()
            .flatten()
            .flatten()
            .for_each(|r| out.extend(r));
        self.tool_conf.iter().flatten().for_each(|r| out.extend(r));
        out
    }
}

fn add2<T: Scalar>(a: &mut Stoch2<T>, b: &Stoch2<T>) {
    for i in 0..2 {
        for j in 0..2 {
            a[i][j] += b[i][j];
        }
    }
}

/// Adds one video's expected counts to `acc`.
///
/// Each frame's (and each transition's) contribution is normalized to unit
/// mass per family, so a fully clamped video contributes exact integers.
pub fn accumulate_counts<T: Scalar>(
    video: &VideoProfile<T>,
    tables: &ForwardBackwardTables<T>,
    params: &ModelParams<T>,
    acc: &mut ExpectedCounts<T>,
) {
    let lat = Lattice::new(params);
    let (lp, k, block) = (lat.phases, lat.tools, lat.block);
    let s = lat.states();
    assert_eq!(
        s, tables.states,
        "tables were built for different parameters"
    );
    let n = video.len();

    // Single-frame families.
    let mut gamma = vec![T::zero(); s];
    let mut lambda = vec![T::zero(); lp];
    let mut bit_mass = vec![[T::zero(); 2]; k];
    for (t, frame) in video.frames().iter().enumerate() {
        tables.state_posterior(t, &mut gamma);
        for (phase, chunk) in gamma.chunks(block).enumerate() {
            lambda[phase] = chunk.iter().copied().sum();
        }
        if t == 0 {
            acc.init_phase
                .iter_mut()
                .zip(&lambda)
                .for_each(|(a, &l)| *a += l);
            for (tool, per_phase) in acc.init_tool.iter_mut().enumerate() {
                for (phase, chunk) in gamma.chunks(block).enumerate() {
                    let m = split_bit(chunk, tool);
                    per_phase[phase][0] += m[0];
                    per_phase[phase][1] += m[1];
                }
            }
        }
        if params.kind.uses_phases() {
            let pred = frame.pred_phase.expect("checked upstream");
            for (phase, &l) in lambda.iter().enumerate() {
                acc.phase_conf[phase][pred] += l;
            }
        }
        if k > 0 {
            let pred = frame.pred_tools.as_deref().expect("checked upstream");
            bit_mass.iter_mut().for_each(|m| *m = [T::zero(); 2]);
            for chunk in gamma.chunks(block) {
                for (tool, m) in bit_mass.iter_mut().enumerate() {
                    let part = split_bit(chunk, tool);
                    m[0] += part[0];
                    m[1] += part[1];
                }
            }
            for (tool, m) in bit_mass.iter().enumerate() {
                let obs = usize::from(pred[tool]);
                acc.tool_conf[tool][0][obs] += m[0];
                acc.tool_conf[tool][1][obs] += m[1];
            }
        }
    }

    // Transition families. For the pair (t, t+1) and a fixed phase at t+1,
    // `pre[j]` holds the phase-mixed forward table with tools 0..j already
    // advanced, and `post[j]` the emission-weighted backward table with tools
    // j..K already pulled back. Tool j's pair marginal pairs `pre[j]` (bit j
    // old) with `post[j + 1]` (bit j new); all other bits agree.
    let mut emis = vec![T::zero(); s];
    let mut pre = vec![vec![T::zero(); block]; k.max(1)];
    let mut post = vec![vec![T::zero(); block]; k + 1];
    let mut phase_raw = vec![vec![T::zero(); lp]; lp];
    let mut tool_raw = vec![vec![[[T::zero(); 2]; 2]; lp]; k];
    for t in 0..n.saturating_sub(1) {
        lat.emission_row(&video.frames()[t + 1], &mut emis);
        let fwd = tables.forward_row(t);
        let bwd = tables.backward_row(t + 1);
        for phase in 0..lp {
            lat.phase_mix(fwd, phase, &mut pre[0]);
            for j in 0..k.saturating_sub(1) {
                let (lo, hi) = pre.split_at_mut(j + 1);
                hi[0].copy_from_slice(&lo[j]);
                contract_forward(&mut hi[0], j, &params.tool_trans[j][phase]);
            }
            let range = phase * block..(phase + 1) * block;
            for ((x, &e), &b) in post[k]
                .iter_mut()
                .zip(&emis[range.clone()])
                .zip(&bwd[range])
            {
                *x = e * b;
            }
            for j in (0..k).rev() {
                let (lo, hi) = post.split_at_mut(j + 1);
                lo[j].copy_from_slice(&hi[0]);
                contract_backward(&mut lo[j], j, &params.tool_trans[j][phase]);
            }
            for (j, raw) in tool_raw.iter_mut().enumerate() {
                raw[phase] = bit_pair_sums(&pre[j], &post[j + 1], j, &params.tool_trans[j][phase]);
            }
            // Fully pulled-back message for the phase transition.
            let msg = &post[0];
            for (prev, row) in phase_raw.iter_mut().enumerate() {
                let a = params.phase_trans[prev][phase];
                let f = &fwd[prev * block..(prev + 1) * block];
                let dot: T = f.iter().zip(msg).map(|(&x, &m)| x * m).sum();
                row[phase] = a * dot;
            }
        }
        add_normalized(&mut acc.phase_trans, &phase_raw);
        for (tool, raw) in tool_raw.iter().enumerate() {
            let total: T = raw.iter().flatten().flatten().copied().sum();
            if total == T::zero() {
                continue;
            }
            for (phase, m) in raw.iter().enumerate() {
                for i in 0..2 {
                    for jj in 0..2 {
                        acc.tool_trans[tool][phase][i][jj] += m[i][jj] / total;
                    }
                }
            }
        }
    }
}

fn add_normalized<T: Scalar>(acc: &mut [Vec<T>], raw: &[Vec<T>]) {
    let total: T = raw.iter().flatten().copied().sum();
    if total == T::zero() {
        return;
    }
    for (a, r) in acc.iter_mut().zip(raw) {
        a.iter_mut().zip(r).for_each(|(a, &x)| *a += x / total);
    }
}

/// Mass of `chunk` with bit `bit` clear / set.
fn split_bit<T: Scalar>(chunk: &[T], bit: usize) -> [T; 2] {
    let mut m = [T::zero(); 2];
    for (x, &g) in chunk.iter().enumerate() {
        m[(x >> bit) & 1] += g;
    }
    m
}
