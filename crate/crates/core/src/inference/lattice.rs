//! Kernels over the joint (phase, tool-bit-vector) state space.
//!
//! A joint state is stored at index `phase * 2^K + bits`, where bit `k` of
//! `bits` is the presence of tool `k`. Tool transitions factorize across
//! tools once the phase at the later frame is fixed, so the `2^K x 2^K` tool
//! transition is applied as K single-bit contractions.

use crate::model::{FrameRecord, ModelParams, Stoch2};
use crate::scalar::Scalar;

/// Replaces bit `bit` of the table by its successor: `new[j] = sum_i old[i] * m[i][j]`.
#[inline]
pub(crate) fn contract_forward<T: Scalar>(table: &mut [T], bit: usize, m: &Stoch2<T>) {
    let stride = 1usize << bit;
    for base in (0..table.len()).step_by(stride << 1) {
        for x in base..base + stride {
            let a = table[x];
            let b = table[x + stride];
            table[x] = a * m[0][0] + b * m[1][0];
            table[x + stride] = a * m[0][1] + b * m[1][1];
        }
    }
}

/// Transposed contraction: `new[i] = sum_j m[i][j] * old[j]`.
#[inline]
pub(crate) fn contract_backward<T: Scalar>(table: &mut [T], bit: usize, m: &Stoch2<T>) {
    let stride = 1usize << bit;
    for base in (0..table.len()).step_by(stride << 1) {
        for x in base..base + stride {
            let a = table[x];
            let b = table[x + stride];
            table[x] = m[0][0] * a + m[0][1] * b;
            table[x + stride] = m[1][0] * a + m[1][1] * b;
        }
    }
}

/// Sum over pairs `(old bit = i, new bit = j)` of `pre[x|i] * m[i][j] * post[x|j]`
/// for every assignment `x` of the other bits.
#[inline]
pub(crate) fn bit_pair_sums<T: Scalar>(
    pre: &[T],
    post: &[T],
    bit: usize,
    m: &Stoch2<T>,
) -> Stoch2<T> {
    let stride = 1usize << bit;
    let mut acc = [[T::zero(); 2]; 2];
    for base in (0..pre.len()).step_by(stride << 1) {
        for x in base..base + stride {
            let (p0, p1) = (pre[x], pre[x + stride]);
            let (q0, q1) = (post[x], post[x + stride]);
            acc[0][0] += p0 * q0;
            acc[0][1] += p0 * q1;
            acc[1][0] += p1 * q0;
            acc[1][1] += p1 * q1;
        }
    }
    for (i, row) in acc.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x *= m[i][j];
        }
    }
    acc
}

/// Fills `out[bits] = prod_k f_k(bit k of bits)`.
pub(crate) fn product_table<T: Scalar>(factors: impl Iterator<Item = [T; 2]>, out: &mut [T]) {
    out[0] = T::one();
    let mut len = 1;
    for f in factors {
        for x in 0..len {
            let v = out[x];
            out[x] = v * f[0];
            out[x + len] = v * f[1];
        }
        len <<= 1;
    }
    debug_assert_eq!(len, out.len());
}

/// Shape of the joint state space plus the parameters it was built from.
pub(crate) struct Lattice<'a, T> {
    pub params: &'a ModelParams<T>,
    pub phases: usize,
    pub tools: usize,
    pub block: usize,
}

impl<'a, T: Scalar> Lattice<'a, T> {
    pub fn new(params: &'a ModelParams<T>) -> Self {
        let tools = params.tool_count();
        Self {
            params,
            phases: params.phase_states(),
            tools,
            block: 1 << tools,
        }
    }

    pub fn states(&self) -> usize {
        self.phases * self.block
    }

    /// Emission probability of the frame's predictions for every joint
    /// state, zeroed on states inconsistent with the frame's observed truth.
    pub fn emission_row(&self, frame: &FrameRecord<T>, out: &mut [T]) {
        let p = self.params;
        let tool_part = &mut out[..self.block];
        if self.tools > 0 {
            let pred = frame.pred_tools.as_deref().unwrap_or(&[]);
            product_table(
                (0..self.tools).map(|k| {
                    let obs = usize::from(pred[k]);
                    let b = &p.tool_confusion[k];
                    match frame.true_tool(k) {
                        None => [b[0][obs], b[1][obs]],
                        Some(false) => [b[0][obs], T::zero()],
                        Some(true) => [T::zero(), b[1][obs]],
                    }
                }),
                tool_part,
            );
        } else {
            tool_part[0] = T::one();
        }
        // phase 0 last: higher blocks are scaled copies of the tool table
        let uses_phases = p.kind.uses_phases();
        for phase in (1..self.phases).rev() {
            let f = self.phase_factor(frame, phase, uses_phases);
            for x in 0..self.block {
                out[phase * self.block + x] = out[x] * f;
            }
        }
        let f0 = self.phase_factor(frame, 0, uses_phases);
        for x in out[..self.block].iter_mut() {
            *x *= f0;
        }
    }

    #[inline]
    fn phase_factor(&self, frame: &FrameRecord<T>, phase: usize, uses_phases: bool) -> T {
        if !uses_phases {
            return T::one();
        }
        if matches!(frame.true_phase, Some(obs) if obs != phase) {
            return T::zero();
        }
        let pred = frame.pred_phase.expect("checked by check_compatible");
        self.params.phase_confusion[phase][pred]
    }

    /// Prior of the first frame: `alpha(phase) * prod_k Bernoulli(bit k | beta[k][phase])`.
    pub fn prior_row(&self, out: &mut [T]) {
        let p = self.params;
        for phase in 0..self.phases {
            let block = &mut out[phase * self.block..(phase + 1) * self.block];
            product_table(
                (0..self.tools).map(|k| {
                    let b = p.tool_init[k][phase];
                    [T::one() - b, b]
                }),
                block,
            );
            let a = p.alpha[phase];
            block.iter_mut().for_each(|x| *x *= a);
        }
    }

    /// `out[bits] = sum_prev A(prev, to_phase) * row[prev, bits]`.
    pub fn phase_mix(&self, row: &[T], to_phase: usize, out: &mut [T]) {
        out.iter_mut().for_each(|x| *x = T::zero());
        for prev in 0..self.phases {
            let a = self.params.phase_trans[prev][to_phase];
            if a == T::zero() {
                continue;
            }
            let src = &row[prev * self.block..(prev + 1) * self.block];
            for (o, &s) in out.iter_mut().zip(src) {
                *o += a * s;
            }
        }
    }

    /// Applies every tool transition in phase `phase` to an old-coordinate table.
    pub fn tools_forward(&self, table: &mut [T], phase: usize) {
        for k in 0..self.tools {
            contract_forward(table, k, &self.params.tool_trans[k][phase]);
        }
    }

    pub fn tools_backward(&self, table: &mut [T], phase: usize) {
        for k in (0..self.tools).rev() {
            contract_backward(table, k, &self.params.tool_trans[k][phase]);
        }
    }

    /// Unnormalized next forward row from a normalized previous one.
    pub fn advance(&self, prev: &[T], emission: &[T], out: &mut [T], scratch: &mut [T]) {
        for phase in 0..self.phases {
            self.phase_mix(prev, phase, scratch);
            self.tools_forward(scratch, phase);
            let block = phase * self.block..(phase + 1) * self.block;
            for ((o, &s), &e) in out[block.clone()]
                .iter_mut()
                .zip(scratch.iter())
                .zip(&emission[block])
            {
                *o = s * e;
            }
        }
    }
}
