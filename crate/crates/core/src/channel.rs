//! Modulation, the AWGN channel, soft demapping and SNR bookkeeping.
//!
//! Bits map to symbols with Gray labeling and unit average energy. For BPSK
//! bit 0 maps to -1 and bit 1 to +1, so a positive LLR favours bit 1. QAM-16
//! uses per-axis levels `{-3, -1, +1, +3} / sqrt(10)` labelled `00, 01, 11, 10`
//! (first bit selects the sign, second bit the magnitude).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Symbol {
    pub re: f64,
    pub im: f64,
}

impl Symbol {
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Qam16,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
        }
    }

    /// Amplitude levels of one axis, indexed by the axis label bits
    /// (MSB first), and the number of bits per axis.
    fn axis(self) -> (&'static [f64], usize) {
        const QPSK: f64 = std::f64::consts::FRAC_1_SQRT_2;
        const Q16: f64 = 0.316_227_766_016_837_94; // 1/sqrt(10)
        match self {
            Modulation::Bpsk => (&[-1.0, 1.0], 1),
            Modulation::Qpsk => (&[-QPSK, QPSK], 1),
            // label 00 -> -3, 01 -> -1, 10 -> +3, 11 -> +1
            Modulation::Qam16 => (&[-3.0 * Q16, -Q16, 3.0 * Q16, Q16], 2),
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "qam16",
        })
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" => Ok(Modulation::Qpsk),
            "qam16" | "16qam" | "16-qam" => Ok(Modulation::Qam16),
            other => Err(Error::Config(format!("unknown modulation {other:?}"))),
        }
    }
}

/// A modulation scheme with its labelled constellation.
#[derive(Clone, Debug, PartialEq)]
pub struct ModScheme {
    pub kind: Modulation,
    /// `constellation[label]`, label bits MSB first in transmission order.
    pub constellation: Vec<Symbol>,
}

impl ModScheme {
    pub fn new(kind: Modulation) -> Self {
        let m = kind.bits_per_symbol();
        let constellation = (0..1usize << m).map(|label| map_label(kind, label)).collect();
        Self {
            kind,
            constellation,
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.kind.bits_per_symbol()
    }

    /// Label bits of `label`, transmission order.
    pub fn label_bits(&self, label: usize) -> impl Iterator<Item = u8> + '_ {
        let m = self.bits_per_symbol();
        (0..m).map(move |j| ((label >> (m - 1 - j)) & 1) as u8)
    }
}

fn map_label(kind: Modulation, label: usize) -> Symbol {
    let (levels, per_axis) = kind.axis();
    match kind {
        Modulation::Bpsk => Symbol::new(levels[label], 0.0),
        _ => {
            let mask = (1 << per_axis) - 1;
            let i = (label >> per_axis) & mask;
            let q = label & mask;
            Symbol::new(levels[i], levels[q])
        }
    }
}

/// Symbols plus the number of zero bits appended to fill the last symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct Modulated {
    pub symbols: Vec<Symbol>,
    pub padding: usize,
}

pub fn modulate(bits: &[u8], scheme: &ModScheme) -> Modulated {
    let m = scheme.bits_per_symbol();
    let padding = (m - bits.len() % m) % m;
    let symbols = bits
        .chunks(m)
        .map(|chunk| {
            let label = (0..m).fold(0usize, |acc, j| {
                (acc << 1) | chunk.get(j).map_or(0, |&b| (b & 1) as usize)
            });
            scheme.constellation[label]
        })
        .collect();
    Modulated { symbols, padding }
}

/// Adds white Gaussian noise of variance `sigma2` per real dimension. BPSK
/// symbols are real, so only the in-phase component is perturbed.
pub fn apply_awgn<R: Rng + ?Sized>(
    symbols: &[Symbol],
    modulation: Modulation,
    sigma2: f64,
    rng: &mut R,
) -> Vec<Symbol> {
    let sigma = sigma2.max(0.0).sqrt();
    let mut noise = || -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        sigma * z
    };
    symbols
        .iter()
        .map(|s| match modulation {
            Modulation::Bpsk => Symbol::new(s.re + noise(), s.im),
            _ => {
                let re = s.re + noise();
                Symbol::new(re, s.im + noise())
            }
        })
        .collect()
}

/// Per-axis max-log LLRs: `(min_{x:b=0} (y-x)^2 - min_{x:b=1} (y-x)^2) / (2 sigma2)`.
fn axis_llrs(y: f64, levels: &[f64], bits: usize, sigma2: f64, out: &mut Vec<f64>) {
    for j in 0..bits {
        let shift = bits - 1 - j;
        let mut best = [f64::INFINITY; 2];
        for (label, &x) in levels.iter().enumerate() {
            let b = (label >> shift) & 1;
            let d = (y - x) * (y - x);
            if d < best[b] {
                best[b] = d;
            }
        }
        out.push((best[0] - best[1]) / (2.0 * sigma2));
    }
}

/// Soft demapper producing `bits_per_symbol` LLRs per received symbol.
///
/// BPSK and QPSK are exact (`2 a y / sigma2` per axis with amplitude `a`);
/// QAM-16 uses the max-log approximation. `sigma2` must be positive.
pub fn demap_llr(received: &[Symbol], scheme: &ModScheme, sigma2: f64) -> Result<Vec<f64>> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Invalid(format!(
            "noise variance must be positive and finite for soft demapping (got {sigma2})"
        )));
    }
    let mut out = Vec::with_capacity(received.len() * scheme.bits_per_symbol());
    match scheme.kind {
        Modulation::Bpsk => out.extend(received.iter().map(|y| 2.0 * y.re / sigma2)),
        Modulation::Qpsk => {
            let a = std::f64::consts::FRAC_1_SQRT_2;
            for y in received {
                out.push(2.0 * a * y.re / sigma2);
                out.push(2.0 * a * y.im / sigma2);
            }
        }
        Modulation::Qam16 => {
            let (levels, per_axis) = scheme.kind.axis();
            for y in received {
                axis_llrs(y.re, levels, per_axis, sigma2, &mut out);
                axis_llrs(y.im, levels, per_axis, sigma2, &mut out);
            }
        }
    }
    Ok(out)
}

/// Noiseless LLRs of magnitude `magnitude` with the sign of each bit.
pub fn noiseless_llrs(bits: &[u8], magnitude: f64) -> Vec<f64> {
    bits.iter()
        .map(|&b| if b == 1 { magnitude } else { -magnitude })
        .collect()
}

/// Per-real-dimension noise variance for unit-energy symbols at `ebno_db`,
/// `1 / (2 R m 10^(ebno_db / 10))`.
pub fn ebno_to_sigma2(ebno_db: f64, rate: f64, bits_per_symbol: usize) -> f64 {
    let ebno = 10f64.powf(ebno_db / 10.0);
    1.0 / (2.0 * rate * bits_per_symbol as f64 * ebno)
}

/// Noise level of a Monte-Carlo point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub ebno_db: f64,
    pub sigma2: f64,
}

impl NoiseSpec {
    pub fn new(ebno_db: f64, rate: f64, modulation: Modulation) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::Config(format!("code rate {rate} outside (0, 1]")));
        }
        Ok(Self {
            ebno_db,
            sigma2: ebno_to_sigma2(ebno_db, rate, modulation.bits_per_symbol()),
        })
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent RNG for item `index` of stream `stream` under `master_seed`.
///
/// Every frame draws from its own stream, so results do not depend on how
/// frames are distributed over worker threads.
pub fn derive_rng(master_seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let seed = splitmix64(splitmix64(splitmix64(master_seed) ^ stream) ^ index);
    ChaCha8Rng::seed_from_u64(seed)
}
