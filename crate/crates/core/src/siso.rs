//! Classical soft-in soft-out decoding: log-MAP and max-log-MAP BCJR over one
//! constituent trellis, the iterative turbo decoder built from two of them,
//! and an exhaustive enumeration oracle for short blocks.
//!
//! Branch metrics use bits `x, u` in `{0, 1}`:
//! `gamma(s', s) = u L(u) + x^s y^s + x^p y^p`, so `gamma(0, 0) = 0`. This is
//! the antipodal form `½ (±1) L` shifted by `-½ L` per term; the shift is
//! common to every branch of a stage and cancels in the posterior difference.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::frame::{ConstituentView, LlrFrame};
use crate::trellis::{TrellisTable, TurboCode, NUM_BRANCHES, NUM_STATES, TAIL_STAGES};

/// Stand-in for minus infinity in the boundary metrics.
pub const NEG_SENTINEL: f64 = -128.0;

/// Largest block the exhaustive oracle accepts.
pub const ORACLE_MAX_K: usize = 12;

/// How two log-domain metrics combine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SisoMode {
    /// Jacobian logarithm, i.e. log-MAP.
    Exact,
    /// Plain maximum, i.e. max-log-MAP.
    MaxOnly,
}

/// `max*(x, y)`: `max(x, y) + ln(1 + e^-|x-y|)` in exact mode, `max(x, y)` otherwise.
#[inline]
pub fn max_star(x: f64, y: f64, mode: SisoMode) -> f64 {
    let m = x.max(y);
    match mode {
        SisoMode::MaxOnly => m,
        SisoMode::Exact => {
            let d = (x - y).abs();
            // e^-40 is below f64 resolution relative to any metric of order 1
            if d > 40.0 {
                m
            } else {
                m + (-d).exp().ln_1p()
            }
        }
    }
}

#[inline]
fn fold(values: impl IntoIterator<Item = f64>, mode: SisoMode) -> f64 {
    let mut it = values.into_iter();
    let first = it.next().unwrap_or(f64::NEG_INFINITY);
    it.fold(first, |acc, v| max_star(acc, v, mode))
}

pub(crate) fn boundary() -> [f64; NUM_STATES] {
    let mut b = [NEG_SENTINEL; NUM_STATES];
    b[0] = 0.0;
    b
}

/// The 16 branch metrics of one stage, indexed by `8 * u + s'`.
pub fn branch_metrics(sys: f64, parity: f64, apriori: f64, trellis: &TrellisTable) -> [f64; NUM_BRANCHES] {
    let mut g = [0.0; NUM_BRANCHES];
    for (from, slot) in g[..NUM_STATES].iter_mut().enumerate() {
        let p = trellis.parity(0, from) as f64;
        *slot = p * parity;
    }
    for (from, slot) in g[NUM_STATES..].iter_mut().enumerate() {
        let p = trellis.parity(1, from) as f64;
        *slot = apriori + sys + p * parity;
    }
    g
}

/// Branch metrics for all `k + 3` stages; termination stages carry no a-priori term.
pub fn all_branch_metrics(
    view: &ConstituentView<'_>,
    apriori: &[f64],
    trellis: &TrellisTable,
) -> Vec<[f64; NUM_BRANCHES]> {
    let k = view.k();
    let mut gamma = Vec::with_capacity(k + TAIL_STAGES);
    for t in 0..k {
        gamma.push(branch_metrics(view.sys[t], view.parity[t], apriori[t], trellis));
    }
    for pair in view.tail {
        gamma.push(branch_metrics(pair[0], pair[1], 0.0, trellis));
    }
    gamma
}

/// Forward and backward metrics of one constituent trellis.
///
/// `alpha[t]` holds the metrics after `t` stages (`alpha[0]` is the start
/// boundary); `beta[t]` the backward metrics at the same time index, with
/// `beta[k + 3]` the end boundary. `gamma[t]` belongs to the stage between
/// `t` and `t + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SisoState {
    pub alpha: Vec<[f64; NUM_STATES]>,
    pub beta: Vec<[f64; NUM_STATES]>,
    pub gamma: Vec<[f64; NUM_BRANCHES]>,
}

fn normalize(v: &mut [f64; NUM_STATES]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for x in v.iter_mut() {
        *x -= m;
    }
}

/// Runs both recursions over precomputed branch metrics.
pub fn forward_backward_from_gamma(
    gamma: Vec<[f64; NUM_BRANCHES]>,
    trellis: &TrellisTable,
    mode: SisoMode,
    normalized: bool,
) -> SisoState {
    let stages = gamma.len();
    let mut alpha = vec![[0.0; NUM_STATES]; stages + 1];
    let mut beta = vec![[0.0; NUM_STATES]; stages + 1];
    alpha[0] = boundary();
    beta[stages] = boundary();
    for t in 0..stages {
        let g = &gamma[t];
        let prev = alpha[t];
        let mut next = [0.0; NUM_STATES];
        for (s, slot) in next.iter_mut().enumerate() {
            let p0 = trellis.prev_state(0, s);
            let p1 = trellis.prev_state(1, s);
            *slot = max_star(prev[p0] + g[p0], prev[p1] + g[NUM_STATES + p1], mode);
        }
        if normalized {
            normalize(&mut next);
        }
        alpha[t + 1] = next;
    }
    for t in (0..stages).rev() {
        let g = &gamma[t];
        let after = beta[t + 1];
        let mut cur = [0.0; NUM_STATES];
        for (s, slot) in cur.iter_mut().enumerate() {
            let n0 = trellis.next_state(0, s);
            let n1 = trellis.next_state(1, s);
            *slot = max_star(after[n0] + g[s], after[n1] + g[NUM_STATES + s], mode);
        }
        if normalized {
            normalize(&mut cur);
        }
        beta[t] = cur;
    }
    SisoState { alpha, beta, gamma }
}

/// Normalized forward-backward pass over one constituent trellis.
pub fn forward_backward(
    view: &ConstituentView<'_>,
    apriori: &[f64],
    trellis: &TrellisTable,
    mode: SisoMode,
) -> Result<SisoState> {
    check_len("a-priori LLRs", view.k(), apriori.len())?;
    check_len("parity LLRs", view.k(), view.parity.len())?;
    Ok(forward_backward_from_gamma(
        all_branch_metrics(view, apriori, trellis),
        trellis,
        mode,
        true,
    ))
}

/// Posterior LLRs of the first `k` stages.
pub fn posteriors(state: &SisoState, k: usize, trellis: &TrellisTable, mode: SisoMode) -> Vec<f64> {
    (0..k)
        .map(|t| {
            let a = &state.alpha[t];
            let g = &state.gamma[t];
            let b = &state.beta[t + 1];
            let one = fold(
                (0..NUM_STATES).map(|s| a[s] + g[NUM_STATES + s] + b[trellis.next_state(1, s)]),
                mode,
            );
            let zero = fold(
                (0..NUM_STATES).map(|s| a[s] + g[s] + b[trellis.next_state(0, s)]),
                mode,
            );
            one - zero
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SisoOutput {
    pub posterior: Vec<f64>,
    pub extrinsic: Vec<f64>,
}

/// One SISO pass: posteriors and extrinsic `L(u|y) - y^s - L(u)`.
pub fn siso_decode(
    view: &ConstituentView<'_>,
    apriori: &[f64],
    trellis: &TrellisTable,
    mode: SisoMode,
) -> Result<SisoOutput> {
    let state = forward_backward(view, apriori, trellis, mode)?;
    let posterior = posteriors(&state, view.k(), trellis, mode);
    let extrinsic = posterior
        .iter()
        .zip(view.sys)
        .zip(apriori)
        .map(|((l, y), a)| l - y - a)
        .collect();
    Ok(SisoOutput {
        posterior,
        extrinsic,
    })
}

/// Decoder output in natural bit order.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutput {
    pub posterior: Vec<f64>,
    pub bits: Vec<u8>,
}

/// Hard decision on LLRs; an LLR of exactly 0 decides 1.
pub fn hard_decision(llrs: &[f64]) -> Vec<u8> {
    llrs.iter().map(|&l| (l >= 0.0) as u8).collect()
}

/// Iterative turbo decoding with `iterations` full iterations.
pub fn turbo_decode(
    frame: &LlrFrame,
    code: &TurboCode,
    iterations: usize,
    mode: SisoMode,
) -> Result<DecodeOutput> {
    if iterations == 0 {
        return Err(Error::Config("turbo decoding needs at least one iteration".into()));
    }
    let k = code.k();
    check_len("frame", k, frame.k())?;
    let il = &code.interleaver;
    let mut apriori = vec![0.0; k];
    let mut apriori2 = vec![0.0; k];
    let mut posterior = vec![0.0; k];
    for _ in 0..iterations {
        let d1 = siso_decode(&frame.constituent(0), &apriori, &code.trellis, mode)?;
        il.interleave_into(&d1.extrinsic, &mut apriori2);
        let d2 = siso_decode(&frame.constituent(1), &apriori2, &code.trellis, mode)?;
        il.deinterleave_into(&d2.extrinsic, &mut apriori);
        il.deinterleave_into(&d2.posterior, &mut posterior);
    }
    let bits = hard_decision(&posterior);
    Ok(DecodeOutput { posterior, bits })
}

/// Exact posterior LLRs of one constituent code by enumerating all `2^k`
/// terminated input sequences.
pub fn exhaustive_map_oracle(
    view: &ConstituentView<'_>,
    apriori: &[f64],
    trellis: &TrellisTable,
) -> Result<Vec<f64>> {
    let k = view.k();
    if k > ORACLE_MAX_K {
        return Err(Error::Config(format!(
            "exhaustive oracle enumerates 2^k paths; k = {k} exceeds {ORACLE_MAX_K}"
        )));
    }
    check_len("a-priori LLRs", k, apriori.len())?;
    // log P(bit = b) for an LLR l, computed from probabilities directly
    let logp = |b: u8, l: f64| {
        let p1 = 1.0 / (1.0 + (-l).exp());
        if b == 1 { p1.ln() } else { (1.0 - p1).ln() }
    };
    let mut metrics = Vec::with_capacity(1 << k);
    for word in 0u32..(1 << k) {
        let mut state = 0;
        let mut m = 0.0;
        for t in 0..k {
            let u = ((word >> t) & 1) as u8;
            let p = trellis.parity(u, state);
            m += logp(u, apriori[t]) + logp(u, view.sys[t]) + logp(p, view.parity[t]);
            state = trellis.next_state(u, state);
        }
        for pair in view.tail {
            let u = trellis.tail_input(state);
            let p = trellis.parity(u, state);
            m += logp(u, pair[0]) + logp(p, pair[1]);
            state = trellis.next_state(u, state);
        }
        debug_assert_eq!(state, 0);
        metrics.push(m);
    }
    let lse = |bit: usize, val: u32| {
        let sel = metrics
            .iter()
            .enumerate()
            .filter(|(w, _)| ((*w as u32 >> bit) & 1) == val)
            .map(|(_, &m)| m);
        let mx = sel.clone().fold(f64::NEG_INFINITY, f64::max);
        mx + sel.map(|m| (m - mx).exp()).sum::<f64>().ln()
    };
    Ok((0..k).map(|t| lse(t, 1) - lse(t, 0)).collect())
}
