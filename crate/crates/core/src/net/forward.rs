use crate::error::{check_len, Error, Result};
use crate::frame::{ConstituentView, LlrFrame};
use crate::siso::{boundary, branch_metrics};
use crate::trellis::{TrellisTable, TurboCode, NUM_BRANCHES, NUM_STATES};

use super::weights::{plw_index, GammaTerm, GwLayout, SubnetWeights, WeightSet};
use super::sigmoid;

/// Intermediates of one subnet needed to differentiate it.
///
/// Decisions of every max node are stored as small indices: for the
/// recursions the winning input bit, for normalization the maximizing state,
/// for the posterior folds the winning source state. Ties go to the lowest
/// index.
#[derive(Clone, Debug, PartialEq)]
pub struct SubnetTape {
    pub apriori: Vec<f64>,
    pub gamma: Vec<[f64; NUM_BRANCHES]>,
    pub alpha: Vec<[f64; NUM_STATES]>,
    pub beta: Vec<[f64; NUM_STATES]>,
    pub alpha_arg: Vec<[u8; NUM_STATES]>,
    pub alpha_norm: Vec<u8>,
    pub beta_arg: Vec<[u8; NUM_STATES]>,
    pub beta_norm: Vec<u8>,
    /// Winning source state of the `u = 1` and `u = 0` folds.
    pub post_arg: Vec<[u8; 2]>,
    pub posterior: Vec<f64>,
    pub extrinsic: Vec<f64>,
    /// Smallest winner/runner-up gap over every max node.
    pub min_margin: f64,
}

impl SubnetTape {
    fn decisions_eq(&self, other: &SubnetTape) -> bool {
        self.alpha_arg == other.alpha_arg
            && self.alpha_norm == other.alpha_norm
            && self.beta_arg == other.beta_arg
            && self.beta_norm == other.beta_norm
            && self.post_arg == other.post_arg
    }
}

/// Recorded forward pass of the whole unfolded decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeTape {
    /// `units[m][0]` is SN1 of unit m, `units[m][1]` SN2.
    pub units: Vec<[SubnetTape; 2]>,
}

impl DecodeTape {
    pub fn k(&self) -> usize {
        self.units.first().map_or(0, |u| u[0].posterior.len())
    }

    /// Smallest max-node margin anywhere in the graph.
    pub fn min_margin(&self) -> f64 {
        self.units
            .iter()
            .flatten()
            .map(|s| s.min_margin)
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether two tapes made the same choice at every max node.
    pub fn same_decisions(&self, other: &DecodeTape) -> bool {
        self.units.len() == other.units.len()
            && self
                .units
                .iter()
                .zip(&other.units)
                .all(|(a, b)| a[0].decisions_eq(&b[0]) && a[1].decisions_eq(&b[1]))
    }

    /// Re-evaluates the graph with every max node pinned to the recorded
    /// choice. With the recorded weights this reproduces the recorded
    /// posteriors exactly; with other weights it evaluates the linear piece
    /// the tape belongs to.
    pub fn replay(&self, frame: &LlrFrame, weights: &WeightSet, code: &TurboCode) -> Result<Vec<f64>> {
        check_len("tape units", weights.num_units(), self.units.len())?;
        let out = run(frame, weights, code, Mode::Replay(self))?;
        Ok(out.posterior)
    }
}

/// Result of a forward pass.
#[derive(Clone, Debug)]
pub struct NetOutput {
    /// `L^M(u|y)` in natural bit order.
    pub posterior: Vec<f64>,
    /// `sigmoid(posterior)`, the estimated probability of each bit being 1.
    pub probabilities: Vec<f64>,
    pub tape: Option<DecodeTape>,
}

impl NetOutput {
    pub fn tape(&self) -> Result<&DecodeTape> {
        self.tape
            .as_ref()
            .ok_or_else(|| Error::Invalid("forward pass was run without recording a tape".into()))
    }
}

#[derive(Clone, Copy)]
enum Mode<'a> {
    Compute,
    Replay(&'a DecodeTape),
}

struct Tracker {
    margin: f64,
}

impl Tracker {
    /// Index of the maximum (lowest index on ties) and its value.
    #[inline]
    fn argmax<const N: usize>(&mut self, values: &[f64; N]) -> (usize, f64) {
        let mut best = 0;
        for i in 1..N {
            if values[i] > values[best] {
                best = i;
            }
        }
        let mut gap = f64::INFINITY;
        for (i, &v) in values.iter().enumerate() {
            if i != best {
                gap = gap.min(values[best] - v);
            }
        }
        self.margin = self.margin.min(gap);
        (best, values[best])
    }
}

fn weighted_gamma(
    view: &ConstituentView<'_>,
    apriori: &[f64],
    w: &SubnetWeights,
    trellis: &TrellisTable,
) -> Vec<[f64; NUM_BRANCHES]> {
    let k = view.k();
    let layout = GwLayout::get();
    let mut gamma = Vec::with_capacity(k + 3);
    for t in 0..k {
        let mut g = [0.0; NUM_BRANCHES];
        for (b, slot) in g.iter_mut().enumerate() {
            let term = |term: GammaTerm, value: f64| {
                layout.slot(b, term).map(|s| w.gw(t, s) * value)
            };
            let parts = [
                term(GammaTerm::Apriori, apriori[t]),
                term(GammaTerm::Systematic, view.sys[t]),
                term(GammaTerm::Parity, view.parity[t]),
            ];
            let mut acc: Option<f64> = None;
            for p in parts.into_iter().flatten() {
                acc = Some(acc.map_or(p, |a| a + p));
            }
            *slot = acc.unwrap_or(0.0);
        }
        gamma.push(g);
    }
    for pair in view.tail {
        gamma.push(branch_metrics(pair[0], pair[1], 0.0, trellis));
    }
    gamma
}

fn run_subnet(
    view: &ConstituentView<'_>,
    apriori: &[f64],
    w: &SubnetWeights,
    trellis: &TrellisTable,
    replay: Option<&SubnetTape>,
) -> SubnetTape {
    let k = view.k();
    let gamma = weighted_gamma(view, apriori, w, trellis);
    let stages = gamma.len();
    let mut tr = Tracker {
        margin: f64::INFINITY,
    };

    let mut alpha = vec![[0.0; NUM_STATES]; stages + 1];
    let mut alpha_arg = vec![[0u8; NUM_STATES]; stages];
    let mut alpha_norm = vec![0u8; stages];
    alpha[0] = boundary();
    for t in 0..stages {
        let g = &gamma[t];
        let prev = alpha[t];
        let mut next = [0.0; NUM_STATES];
        for s in 0..NUM_STATES {
            let p0 = trellis.prev_state(0, s);
            let p1 = trellis.prev_state(1, s);
            let cand = [prev[p0] + g[p0], prev[p1] + g[NUM_STATES + p1]];
            let u = match replay {
                Some(r) => r.alpha_arg[t][s] as usize,
                None => tr.argmax(&cand).0,
            };
            alpha_arg[t][s] = u as u8;
            next[s] = cand[u];
        }
        let n = match replay {
            Some(r) => r.alpha_norm[t] as usize,
            None => tr.argmax(&next).0,
        };
        alpha_norm[t] = n as u8;
        let m = next[n];
        for x in next.iter_mut() {
            *x -= m;
        }
        alpha[t + 1] = next;
    }

    let mut beta = vec![[0.0; NUM_STATES]; stages + 1];
    let mut beta_arg = vec![[0u8; NUM_STATES]; stages];
    let mut beta_norm = vec![0u8; stages];
    beta[stages] = boundary();
    for t in (0..stages).rev() {
        let g = &gamma[t];
        let after = beta[t + 1];
        let mut cur = [0.0; NUM_STATES];
        for s in 0..NUM_STATES {
            let cand = [
                after[trellis.next_state(0, s)] + g[s],
                after[trellis.next_state(1, s)] + g[NUM_STATES + s],
            ];
            let u = match replay {
                Some(r) => r.beta_arg[t][s] as usize,
                None => tr.argmax(&cand).0,
            };
            beta_arg[t][s] = u as u8;
            cur[s] = cand[u];
        }
        let n = match replay {
            Some(r) => r.beta_norm[t] as usize,
            None => tr.argmax(&cur).0,
        };
        beta_norm[t] = n as u8;
        let m = cur[n];
        for x in cur.iter_mut() {
            *x -= m;
        }
        beta[t] = cur;
    }

    let mut posterior = Vec::with_capacity(k);
    let mut extrinsic = Vec::with_capacity(k);
    let mut post_arg = Vec::with_capacity(k);
    for t in 0..k {
        let a = &alpha[t];
        let g = &gamma[t];
        let b = &beta[t + 1];
        let plw = w.plw_stage(t);
        let pw = |fold: usize, term: usize, idx: usize| plw.map_or(1.0, |p| p[plw_index(fold, term, idx)]);
        let mut folds = [0.0; 2];
        let mut args = [0u8; 2];
        for (fold, u) in [(0usize, 1u8), (1, 0)] {
            let cand: [f64; NUM_STATES] = std::array::from_fn(|s| {
                let to = trellis.next_state(u, s);
                pw(fold, 0, s) * a[s] + pw(fold, 1, s) * g[u as usize * NUM_STATES + s] + pw(fold, 2, to) * b[to]
            });
            let s = match replay {
                Some(r) => r.post_arg[t][fold] as usize,
                None => tr.argmax(&cand).0,
            };
            args[fold] = s as u8;
            folds[fold] = cand[s];
        }
        let l = folds[0] - folds[1];
        let e = w.elw(t);
        posterior.push(l);
        extrinsic.push(e[0] * l - e[1] * view.sys[t] - e[2] * apriori[t]);
        post_arg.push(args);
    }

    SubnetTape {
        apriori: apriori.to_vec(),
        gamma,
        alpha,
        beta,
        alpha_arg,
        alpha_norm,
        beta_arg,
        beta_norm,
        post_arg,
        posterior,
        extrinsic,
        min_margin: tr.margin,
    }
}

fn run(frame: &LlrFrame, weights: &WeightSet, code: &TurboCode, mode: Mode<'_>) -> Result<NetOutput> {
    let k = code.k();
    if weights.k != frame.k() {
        return Err(Error::Config(format!(
            "weights are for k = {} but the frame has k = {}",
            weights.k,
            frame.k()
        )));
    }
    check_len("frame", k, frame.k())?;
    weights.validate()?;
    let il = &code.interleaver;
    let mut apriori = vec![0.0; k];
    let mut apriori2 = vec![0.0; k];
    let mut posterior = vec![0.0; k];
    let mut tapes = Vec::with_capacity(weights.num_units());
    for (m, unit) in weights.units.iter().enumerate() {
        let pinned = |which: usize| match mode {
            Mode::Replay(t) => Some(&t.units[m][which]),
            Mode::Compute => None,
        };
        let t1 = run_subnet(&frame.constituent(0), &apriori, &unit.sn1, &code.trellis, pinned(0));
        il.interleave_into(&t1.extrinsic, &mut apriori2);
        let t2 = run_subnet(&frame.constituent(1), &apriori2, &unit.sn2, &code.trellis, pinned(1));
        il.deinterleave_into(&t2.extrinsic, &mut apriori);
        if m + 1 == weights.num_units() {
            il.deinterleave_into(&t2.posterior, &mut posterior);
        }
        tapes.push([t1, t2]);
    }
    let probabilities = posterior.iter().map(|&l| sigmoid(l)).collect();
    Ok(NetOutput {
        posterior,
        probabilities,
        tape: Some(DecodeTape { units: tapes }),
    })
}

/// Forward pass of the unfolded decoder.
pub fn forward(frame: &LlrFrame, weights: &WeightSet, code: &TurboCode, record_tape: bool) -> Result<NetOutput> {
    let mut out = run(frame, weights, code, Mode::Compute)?;
    if !record_tape {
        out.tape = None;
    }
    Ok(out)
}
