//! Monte-Carlo BER sweeps, CSV output and the weight histogram report.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{derive_rng, ModScheme};
use crate::error::{Error, Result};
use crate::frame::LlrFrame;
use crate::net::{forward, Family, WeightSet, WeightVariant};
use crate::siso::{turbo_decode, SisoMode};
use crate::training::transmit;
use crate::trellis::TurboCode;

/// Default stop-at-error-count of a sweep point.
pub const DEFAULT_MAX_ERRORS: u64 = 200;

/// Frames simulated between two checks of the error count. Fixed, so the
/// stopping point does not depend on the worker count.
const BLOCK_FRAMES: usize = 500;

pub const CSV_HEADER: &str = "ebno_db,decoder,iterations,frames,bit_errors,ber,seed";

/// Width of a histogram bin in the weight report.
pub const BIN_WIDTH: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    MaxLogMap,
    LogMap,
    Turbonet,
    TurbonetPlus,
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecoderKind::MaxLogMap => "max_log_map",
            DecoderKind::LogMap => "log_map",
            DecoderKind::Turbonet => "turbonet",
            DecoderKind::TurbonetPlus => "turbonet_plus",
        })
    }
}

impl FromStr for DecoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_log_map" | "max-log-map" => Ok(DecoderKind::MaxLogMap),
            "log_map" | "log-map" => Ok(DecoderKind::LogMap),
            "turbonet" => Ok(DecoderKind::Turbonet),
            "turbonet_plus" | "turbonet-plus" => Ok(DecoderKind::TurbonetPlus),
            _ => Err(Error::Config(format!(
                "unknown decoder {s:?} (expected max_log_map, log_map, turbonet or turbonet_plus)"
            ))),
        }
    }
}

/// A decoder under test.
#[derive(Clone, Debug)]
pub enum Decoder {
    Classical { mode: SisoMode, iterations: usize },
    Net(Arc<WeightSet>),
}

impl Decoder {
    pub fn max_log_map(iterations: usize) -> Self {
        Decoder::Classical {
            mode: SisoMode::MaxOnly,
            iterations,
        }
    }

    pub fn log_map(iterations: usize) -> Self {
        Decoder::Classical {
            mode: SisoMode::Exact,
            iterations,
        }
    }

    pub fn net(weights: WeightSet) -> Self {
        Decoder::Net(Arc::new(weights))
    }

    pub fn kind(&self) -> DecoderKind {
        match self {
            Decoder::Classical {
                mode: SisoMode::MaxOnly,
                ..
            } => DecoderKind::MaxLogMap,
            Decoder::Classical { .. } => DecoderKind::LogMap,
            Decoder::Net(w) if w.variant == WeightVariant::ElwOnly => DecoderKind::TurbonetPlus,
            Decoder::Net(_) => DecoderKind::Turbonet,
        }
    }

    /// Iterations, or decoding units for the network.
    pub fn iterations(&self) -> usize {
        match self {
            Decoder::Classical { iterations, .. } => *iterations,
            Decoder::Net(w) => w.num_units(),
        }
    }

    pub fn decode(&self, frame: &LlrFrame, code: &TurboCode) -> Result<Vec<f64>> {
        match self {
            Decoder::Classical { mode, iterations } => Ok(turbo_decode(frame, code, *iterations, *mode)?.posterior),
            Decoder::Net(w) => Ok(forward(frame, w, code, false)?.posterior),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub ebno_db: f64,
    pub decoder: DecoderKind,
    pub iterations: usize,
    pub frames: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub seed: u64,
}

impl BerRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:e},{}",
            self.ebno_db, self.decoder, self.iterations, self.frames, self.bit_errors, self.ber, self.seed
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    /// Frame cap per point.
    pub frames: u64,
    /// Stop a decoder at a point once it has made this many bit errors.
    pub max_errors: Option<u64>,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

/// Runs every decoder at every SNR point. All decoders see the same frames:
/// frame `i` at Eb/N0 `x` depends only on `(seed, x, i)`. Output is ordered
/// by SNR point, then decoder.
pub fn ber_sweep(code: &TurboCode, scheme: &ModScheme, decoders: &[Decoder], cfg: &SweepConfig) -> Result<Vec<BerRecord>> {
    match cfg.workers {
        None => sweep_inner(code, scheme, decoders, cfg),
        Some(0) => Err(Error::Config("worker count must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(|| sweep_inner(code, scheme, decoders, cfg)),
    }
}

fn sweep_inner(code: &TurboCode, scheme: &ModScheme, decoders: &[Decoder], cfg: &SweepConfig) -> Result<Vec<BerRecord>> {
    let k = code.k() as u64;
    let mut records = Vec::with_capacity(cfg.snr_db.len() * decoders.len());
    for &snr in &cfg.snr_db {
        let stream = snr.to_bits();
        let mut frames = vec![0u64; decoders.len()];
        let mut errors = vec![0u64; decoders.len()];
        let mut done = 0u64;
        while done < cfg.frames {
            let active: Vec<usize> = (0..decoders.len())
                .filter(|&d| cfg.max_errors.is_none_or(|m| errors[d] < m))
                .collect();
            if active.is_empty() {
                break;
            }
            let n = (cfg.frames - done).min(BLOCK_FRAMES as u64);
            let block: Vec<Vec<u64>> = (done..done + n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = derive_rng(cfg.seed, stream, i);
                    let (info, frame) = transmit(code, scheme, snr, &mut rng)?;
                    active
                        .iter()
                        .map(|&d| {
                            let llr = decoders[d].decode(&frame, code)?;
                            Ok(llr.iter().zip(&info).filter(|(l, &b)| ((**l >= 0.0) as u8) != b).count() as u64)
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            for per_frame in &block {
                for (slot, &d) in active.iter().enumerate() {
                    errors[d] += per_frame[slot];
                }
            }
            for &d in &active {
                frames[d] += n;
            }
            done += n;
        }
        for (d, dec) in decoders.iter().enumerate() {
            records.push(BerRecord {
                ebno_db: snr,
                decoder: dec.kind(),
                iterations: dec.iterations(),
                frames: frames[d],
                bit_errors: errors[d],
                ber: if frames[d] == 0 {
                    0.0
                } else {
                    errors[d] as f64 / (frames[d] * k) as f64
                },
                seed: cfg.seed,
            });
        }
    }
    Ok(records)
}

/// A CSV document: one `#` comment line, the header, then the rows.
pub fn to_csv(comment: &str, header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", comment.replace('\n', " "));
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

pub fn ber_csv(comment: &str, records: &[BerRecord]) -> String {
    to_csv(comment, CSV_HEADER, records.iter().map(BerRecord::csv_row))
}

/// One bin of the weight histogram. `unit` is 1-based and covers both
/// subnets of the unit.
#[derive(Clone, Debug, PartialEq)]
pub struct HistogramBin {
    pub unit: usize,
    pub family: Family,
    pub bin_center: f64,
    pub count: usize,
    pub frequency: f64,
}

pub const HISTOGRAM_HEADER: &str = "unit,family,bin_center,count,frequency";

impl HistogramBin {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.2},{},{}",
            self.unit,
            self.family.name(),
            self.bin_center,
            self.count,
            self.frequency
        )
    }
}

/// Relative frequencies of weight values per unit and family, in bins of
/// width [`BIN_WIDTH`] centred on multiples of it.
pub fn weight_histogram(w: &WeightSet) -> Vec<HistogramBin> {
    let mut out = Vec::new();
    for (m, unit) in w.units.iter().enumerate() {
        for family in Family::ALL {
            let values: Vec<f64> = [&unit.sn1, &unit.sn2]
                .into_iter()
                .filter_map(|sn| family.of(sn))
                .flatten()
                .copied()
                .collect();
            if values.is_empty() {
                continue;
            }
            let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
            for v in &values {
                *bins.entry((v / BIN_WIDTH).round() as i64).or_default() += 1;
            }
            let total = values.len() as f64;
            out.extend(bins.into_iter().map(|(b, count)| HistogramBin {
                unit: m + 1,
                family,
                bin_center: b as f64 * BIN_WIDTH,
                count,
                frequency: count as f64 / total,
            }));
        }
    }
    out
}
