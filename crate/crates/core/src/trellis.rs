//! The 8-state recursive systematic convolutional (RSC) code, the parallel
//! concatenated turbo encoder built from two of them, and rate matching.
//!
//! State numbering follows the shift register `(w[k-1], w[k-2], w[k-3])` read
//! as a 3-bit number with `w[k-1]` as the most significant bit. With feedback
//! polynomial `g0 = 1 + D^2 + D^3` and feedforward `g1 = 1 + D + D^3` this
//! gives the state table used throughout the crate:
//!
//! | s'            | 0 | 1 | 2 | 3 | 4 | 5 | 6 | 7 |
//! |---------------|---|---|---|---|---|---|---|---|
//! | s (u = 0)     | 0 | 4 | 5 | 1 | 2 | 6 | 7 | 3 |
//! | parity (u = 0)| 0 | 0 | 1 | 1 | 1 | 1 | 0 | 0 |
//! | s (u = 1)     | 4 | 0 | 1 | 5 | 6 | 2 | 3 | 7 |
//! | parity (u = 1)| 1 | 1 | 0 | 0 | 0 | 0 | 1 | 1 |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::frame::LlrFrame;
use crate::interleaver::Interleaver;

pub const NUM_STATES: usize = 8;
pub const NUM_BRANCHES: usize = 2 * NUM_STATES;
/// Trellis stages spent on termination, per constituent encoder.
pub const TAIL_STAGES: usize = 3;
/// Termination bits in the codeword: 3 systematic and 3 parity per encoder.
pub const TAIL_BITS: usize = 4 * TAIL_STAGES;

/// Code rate before counting termination bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rate {
    #[serde(rename = "1/3")]
    OneThird,
    #[serde(rename = "1/2")]
    OneHalf,
}

impl Rate {
    pub fn nominal(self) -> f64 {
        match self {
            Rate::OneThird => 1.0 / 3.0,
            Rate::OneHalf => 0.5,
        }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rate::OneThird => "1/3",
            Rate::OneHalf => "1/2",
        })
    }
}

impl FromStr for Rate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1/3" => Ok(Rate::OneThird),
            "1/2" => Ok(Rate::OneHalf),
            other => Err(Error::Config(format!(
                "unsupported code rate {other:?} (expected 1/3 or 1/2)"
            ))),
        }
    }
}

/// Block length and rate of a turbo code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeConfig {
    pub k: usize,
    pub rate: Rate,
}

impl CodeConfig {
    pub fn new(k: usize, rate: Rate) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("block length k must be positive".into()));
        }
        Ok(Self { k, rate })
    }

    /// Length of the unpunctured codeword, `3k + 12`.
    pub fn mother_len(&self) -> usize {
        3 * self.k + TAIL_BITS
    }

    /// Number of transmitted bits per block.
    pub fn codeword_len(&self) -> usize {
        match self.rate {
            Rate::OneThird => 3 * self.k + TAIL_BITS,
            Rate::OneHalf => 2 * self.k + TAIL_BITS,
        }
    }

    /// Effective rate including termination, `k / codeword_len`.
    pub fn effective_rate(&self) -> f64 {
        self.k as f64 / self.codeword_len() as f64
    }
}

/// One edge of the trellis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub input: u8,
    pub parity: u8,
}

/// Transition structure of the constituent RSC encoder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrellisTable {
    next_state: [[usize; NUM_STATES]; 2],
    parity: [[u8; NUM_STATES]; 2],
    prev_state: [[usize; NUM_STATES]; 2],
    tail_input: [u8; NUM_STATES],
}

impl Default for TrellisTable {
    fn default() -> Self {
        Self::new()
    }
}

impl TrellisTable {
    /// Derives the table from the shift-register recursion of `g0`/`g1`.
    pub fn new() -> Self {
        let mut next_state = [[0; NUM_STATES]; 2];
        let mut parity = [[0; NUM_STATES]; 2];
        let mut prev_state = [[0; NUM_STATES]; 2];
        let mut tail_input = [0; NUM_STATES];
        for s in 0..NUM_STATES {
            let (r1, r2, r3) = ((s >> 2) & 1, (s >> 1) & 1, s & 1);
            let feedback = r2 ^ r3;
            for u in 0..2 {
                let w = u ^ feedback;
                let p = w ^ r1 ^ r3;
                let to = (w << 2) | (r1 << 1) | r2;
                next_state[u][s] = to;
                parity[u][s] = p as u8;
                prev_state[u][to] = s;
            }
            tail_input[s] = feedback as u8;
        }
        Self {
            next_state,
            parity,
            prev_state,
            tail_input,
        }
    }

    #[inline]
    pub fn next_state(&self, input: u8, from: usize) -> usize {
        self.next_state[input as usize][from]
    }

    #[inline]
    pub fn parity(&self, input: u8, from: usize) -> u8 {
        self.parity[input as usize][from]
    }

    /// The unique predecessor of `to` under `input`.
    #[inline]
    pub fn prev_state(&self, input: u8, to: usize) -> usize {
        self.prev_state[input as usize][to]
    }

    /// Input bit that drives the register towards state 0 during termination.
    #[inline]
    pub fn tail_input(&self, from: usize) -> u8 {
        self.tail_input[from]
    }

    /// The eight transitions caused by `input`, ordered by source state.
    pub fn transitions(&self, input: u8) -> [Transition; NUM_STATES] {
        std::array::from_fn(|s| Transition {
            from: s,
            to: self.next_state(input, s),
            input,
            parity: self.parity(input, s),
        })
    }

    /// All 16 transitions, indexed by `branch = 8 * input + from`.
    pub fn all_transitions(&self) -> [Transition; NUM_BRANCHES] {
        std::array::from_fn(|b| {
            let input = (b / NUM_STATES) as u8;
            let from = b % NUM_STATES;
            Transition {
                from,
                to: self.next_state(input, from),
                input,
                parity: self.parity(input, from),
            }
        })
    }
}

/// Output of one terminated RSC encoder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RscOutput {
    pub parity: Vec<u8>,
    pub tail_sys: [u8; TAIL_STAGES],
    pub tail_parity: [u8; TAIL_STAGES],
    pub final_state: usize,
}

fn check_bits(bits: &[u8]) -> Result<()> {
    match bits.iter().position(|&b| b > 1) {
        Some(i) => Err(Error::Invalid(format!(
            "bit {i} has value {} (expected 0 or 1)",
            bits[i]
        ))),
        None => Ok(()),
    }
}

/// Encodes `info` from state 0 and terminates the trellis.
pub fn rsc_encode(info: &[u8], trellis: &TrellisTable) -> Result<RscOutput> {
    check_bits(info)?;
    let mut state = 0;
    let mut parity = Vec::with_capacity(info.len());
    for &u in info {
        parity.push(trellis.parity(u, state));
        state = trellis.next_state(u, state);
    }
    let mut tail_sys = [0; TAIL_STAGES];
    let mut tail_parity = [0; TAIL_STAGES];
    for i in 0..TAIL_STAGES {
        let u = trellis.tail_input(state);
        tail_sys[i] = u;
        tail_parity[i] = trellis.parity(u, state);
        state = trellis.next_state(u, state);
    }
    Ok(RscOutput {
        parity,
        tail_sys,
        tail_parity,
        final_state: state,
    })
}

/// Unpunctured turbo codeword.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotherCodeword {
    pub systematic: Vec<u8>,
    pub parity1: Vec<u8>,
    pub parity2: Vec<u8>,
    /// `(sys, parity)` per termination stage of encoder 1.
    pub tail1: [[u8; 2]; TAIL_STAGES],
    /// `(sys, parity)` per termination stage of encoder 2.
    pub tail2: [[u8; 2]; TAIL_STAGES],
}

impl MotherCodeword {
    pub fn k(&self) -> usize {
        self.systematic.len()
    }

    /// Layout `x^s ‖ x^1p ‖ x^2p ‖ tail1 ‖ tail2`, each tail as
    /// `sys0 par0 sys1 par1 sys2 par2`.
    pub fn to_bits(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 * self.k() + TAIL_BITS);
        out.extend_from_slice(&self.systematic);
        out.extend_from_slice(&self.parity1);
        out.extend_from_slice(&self.parity2);
        push_tails(&mut out, &self.tail1, &self.tail2);
        out
    }
}

fn push_tails<T: Copy>(out: &mut Vec<T>, t1: &[[T; 2]; 3], t2: &[[T; 2]; 3]) {
    for pair in t1.iter().chain(t2) {
        out.extend_from_slice(pair);
    }
}

fn tails_of(out: &RscOutput) -> [[u8; 2]; TAIL_STAGES] {
    std::array::from_fn(|i| [out.tail_sys[i], out.tail_parity[i]])
}

/// Encodes one block with two terminated constituent encoders.
pub fn turbo_encode(
    info: &[u8],
    interleaver: &Interleaver,
    trellis: &TrellisTable,
) -> Result<MotherCodeword> {
    if info.len() != interleaver.len() {
        return Err(Error::Config(format!(
            "info block has {} bits but the interleaver has length {}",
            info.len(),
            interleaver.len()
        )));
    }
    let e1 = rsc_encode(info, trellis)?;
    let e2 = rsc_encode(&interleaver.interleave(info)?, trellis)?;
    Ok(MotherCodeword {
        systematic: info.to_vec(),
        tail1: tails_of(&e1),
        tail2: tails_of(&e2),
        parity1: e1.parity,
        parity2: e2.parity,
    })
}

/// Whether stage `i` (0-based) keeps parity 1 under rate-1/2 puncturing.
/// Stage `i` is the 1-based position `i + 1`, so odd positions keep parity 1.
#[inline]
fn keeps_parity1(i: usize) -> bool {
    i % 2 == 0
}

/// Produces the transmitted bits for `rate`.
///
/// Rate 1/2 alternates the parity streams (parity 1 at odd positions, parity 2
/// at even positions, 1-based) into a single stream of length `k`. Systematic
/// and termination bits are never punctured.
pub fn rate_match(codeword: &MotherCodeword, rate: Rate) -> Vec<u8> {
    match rate {
        Rate::OneThird => codeword.to_bits(),
        Rate::OneHalf => {
            let k = codeword.k();
            let mut out = Vec::with_capacity(2 * k + TAIL_BITS);
            out.extend_from_slice(&codeword.systematic);
            out.extend((0..k).map(|i| {
                if keeps_parity1(i) {
                    codeword.parity1[i]
                } else {
                    codeword.parity2[i]
                }
            }));
            push_tails(&mut out, &codeword.tail1, &codeword.tail2);
            out
        }
    }
}

/// Places received LLRs back onto the mother-code positions, inserting 0 for
/// punctured parity bits.
pub fn depuncture(llrs: &[f64], code: &CodeConfig, interleaver: &Interleaver) -> Result<LlrFrame> {
    let k = code.k;
    check_len("received LLR block", code.codeword_len(), llrs.len())?;
    check_len("interleaver", k, interleaver.len())?;
    let ys = llrs[..k].to_vec();
    let (y1p, y2p, tail) = match code.rate {
        Rate::OneThird => (
            llrs[k..2 * k].to_vec(),
            llrs[2 * k..3 * k].to_vec(),
            &llrs[3 * k..],
        ),
        Rate::OneHalf => {
            let merged = &llrs[k..2 * k];
            let mut p1 = vec![0.0; k];
            let mut p2 = vec![0.0; k];
            for (i, &v) in merged.iter().enumerate() {
                if keeps_parity1(i) {
                    p1[i] = v;
                } else {
                    p2[i] = v;
                }
            }
            (p1, p2, &llrs[2 * k..])
        }
    };
    let tail1 = std::array::from_fn(|i| [tail[2 * i], tail[2 * i + 1]]);
    let tail2 = std::array::from_fn(|i| [tail[6 + 2 * i], tail[6 + 2 * i + 1]]);
    LlrFrame::new(ys, y1p, y2p, tail1, tail2, interleaver)
}

/// The pieces needed to encode and decode one code: block configuration,
/// trellis and interleaver.
#[derive(Clone, Debug)]
pub struct TurboCode {
    pub config: CodeConfig,
    pub trellis: TrellisTable,
    pub interleaver: Interleaver,
}

impl TurboCode {
    pub fn new(config: CodeConfig, interleaver: Interleaver) -> Result<Self> {
        check_len("interleaver", config.k, interleaver.len())?;
        Ok(Self {
            config,
            trellis: TrellisTable::new(),
            interleaver,
        })
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    /// Info bits to transmitted bits.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        let cw = turbo_encode(info, &self.interleaver, &self.trellis)?;
        Ok(rate_match(&cw, self.config.rate))
    }

    /// Channel LLRs (one per transmitted bit) to a decoder frame.
    pub fn frame(&self, llrs: &[f64]) -> Result<LlrFrame> {
        depuncture(llrs, &self.config, &self.interleaver)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_matches_reference_rows() {
        let t = TrellisTable::new();
        let s0 = [0, 4, 5, 1, 2, 6, 7, 3];
        let p0 = [0, 0, 1, 1, 1, 1, 0, 0];
        let s1 = [4, 0, 1, 5, 6, 2, 3, 7];
        let p1 = [1, 1, 0, 0, 0, 0, 1, 1];
        for s in 0..8 {
            assert_eq!(t.next_state(0, s), s0[s]);
            assert_eq!(t.parity(0, s), p0[s]);
            assert_eq!(t.next_state(1, s), s1[s]);
            assert_eq!(t.parity(1, s), p1[s]);
        }
        assert_eq!((t.next_state(0, 2), t.parity(0, 2)), (5, 1));
        assert_eq!((t.next_state(0, 0), t.parity(0, 0)), (0, 0));
    }

    #[test]
    fn sixteen_disjoint_transitions_and_bijective_maps() {
        let t = TrellisTable::new();
        let all = t.all_transitions();
        let mut pairs: Vec<_> = all.iter().map(|tr| (tr.from, tr.to)).collect();
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs.len(), 16);
        for u in 0..2u8 {
            let mut seen = [false; 8];
            for tr in t.transitions(u) {
                assert!(!seen[tr.to]);
                seen[tr.to] = true;
                assert_eq!(t.prev_state(u, tr.to), tr.from);
            }
        }
    }

    #[test]
    fn zero_input_stays_zero() {
        let t = TrellisTable::new();
        let out = rsc_encode(&[0; 12], &t).unwrap();
        assert!(out.parity.iter().all(|&p| p == 0));
        assert_eq!(out.tail_sys, [0; 3]);
        assert_eq!(out.tail_parity, [0; 3]);
        assert_eq!(out.final_state, 0);
    }

    #[test]
    fn impulse_response_is_g1_over_g0() {
        // h = g1/g0 by GF(2) long division: h_n = g1_n + h_{n-2} + h_{n-3}.
        let g1 = [1u8, 1, 0, 1];
        let mut h = [0u8; 8];
        for n in 0..8 {
            let mut v = if n < 4 { g1[n] } else { 0 };
            if n >= 2 {
                v ^= h[n - 2];
            }
            if n >= 3 {
                v ^= h[n - 3];
            }
            h[n] = v;
        }
        assert_eq!(h, [1, 1, 1, 1, 0, 0, 1, 0]);
        let mut impulse = [0u8; 8];
        impulse[0] = 1;
        let out = rsc_encode(&impulse, &TrellisTable::new()).unwrap();
        assert_eq!(out.parity, h);
        assert_eq!(out.final_state, 0);
    }

    #[test]
    fn rejects_non_binary_bits() {
        assert!(rsc_encode(&[0, 2, 1], &TrellisTable::new()).is_err());
    }

    #[test]
    fn codeword_lengths() {
        let c = |k, r| CodeConfig::new(k, r).unwrap().codeword_len();
        assert_eq!(c(40, Rate::OneThird), 132);
        assert_eq!(c(40, Rate::OneHalf), 92);
        assert_eq!(c(64, Rate::OneHalf), 140);
        assert_eq!(CodeConfig::new(64, Rate::OneHalf).unwrap().mother_len(), 204);
        assert!(CodeConfig::new(0, Rate::OneHalf).is_err());
    }

    #[test]
    fn rate_parse() {
        assert_eq!("1/2".parse::<Rate>().unwrap(), Rate::OneHalf);
        assert_eq!("1/3".parse::<Rate>().unwrap(), Rate::OneThird);
        assert!(matches!("2/3".parse::<Rate>(), Err(Error::Config(_))));
    }

    #[test]
    fn turbo_encode_length_mismatch() {
        let il = Interleaver::qpp(40).unwrap();
        let err = turbo_encode(&[0; 39], &il, &TrellisTable::new()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn depuncture_rejects_wrong_length() {
        let il = Interleaver::qpp(40).unwrap();
        let cfg = CodeConfig::new(40, Rate::OneHalf).unwrap();
        assert!(matches!(
            depuncture(&[0.0; 91], &cfg, &il),
            Err(Error::Length { expected: 92, .. })
        ));
    }
}
