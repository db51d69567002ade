//! On-disk formats: bit and LLR text files, the JSON weight file and the
//! binary dataset cache.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::channel::Modulation;
use crate::error::{Error, Result};
use crate::frame::{LlrFrame, TailLlrs};
use crate::interleaver::{Interleaver, InterleaverDescriptor};
use crate::net::{SubnetWeights, TrainingInfo, UnitWeights, WeightMeta, WeightSet, WeightVariant};
use crate::training::Sample;
use crate::trellis::{Rate, TAIL_STAGES};

pub const WEIGHT_FORMAT_VERSION: u32 = 1;

/// Parses one block of `'0'`/`'1'` characters per line. Blank lines are
/// skipped; `line` and `offset` in errors are 1-based.
pub fn parse_bits(text: &str) -> Result<Vec<Vec<u8>>> {
    let mut blocks = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut block = Vec::with_capacity(line.len());
        for (i, c) in line.chars().enumerate() {
            match c {
                '0' => block.push(0),
                '1' => block.push(1),
                _ => {
                    return Err(Error::Parse {
                        line: n + 1,
                        offset: i + 1,
                        msg: format!("expected '0' or '1', found {c:?}"),
                    })
                }
            }
        }
        blocks.push(block);
    }
    Ok(blocks)
}

pub fn format_bits(blocks: &[Vec<u8>]) -> String {
    let mut out = String::new();
    for b in blocks {
        out.extend(b.iter().map(|&x| if x == 0 { '0' } else { '1' }));
        out.push('\n');
    }
    out
}

/// Parses one block of whitespace-separated decimal floats per line. The
/// error offset is the 1-based column where the bad token starts.
pub fn parse_llrs(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut blocks = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut block = Vec::new();
        let mut rest = line;
        let mut col = 0;
        while let Some(start) = rest.find(|c: char| !c.is_whitespace()) {
            let end = rest[start..].find(char::is_whitespace).map_or(rest.len(), |e| start + e);
            let token = &rest[start..end];
            let v: f64 = token.parse().map_err(|_| Error::Parse {
                line: n + 1,
                offset: col + start + 1,
                msg: format!("not a number: {token:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: n + 1,
                    offset: col + start + 1,
                    msg: format!("non-finite value {token:?}"),
                });
            }
            block.push(v);
            col += end;
            rest = &rest[end..];
        }
        blocks.push(block);
    }
    Ok(blocks)
}

/// One block per line; values use the shortest representation that reads
/// back to the same `f64`.
pub fn format_llrs(blocks: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for b in blocks {
        for (i, v) in b.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

/// Serializes floats with 17 significant digits.
struct Digits17<'a>(&'a [f64]);

impl Serialize for Digits17<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for v in self.0 {
            let raw = RawValue::from_string(format!("{v:.16e}")).map_err(serde::ser::Error::custom)?;
            seq.serialize_element(&raw)?;
        }
        seq.end()
    }
}

#[derive(Serialize)]
struct SubnetOut<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    gw: Option<Digits17<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    plw: Option<Digits17<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    elw: Option<Digits17<'a>>,
}

impl<'a> From<&'a SubnetWeights> for SubnetOut<'a> {
    fn from(w: &'a SubnetWeights) -> Self {
        Self {
            gw: w.gw.as_deref().map(Digits17),
            plw: w.plw.as_deref().map(Digits17),
            elw: w.elw.as_deref().map(Digits17),
        }
    }
}

#[derive(Serialize)]
struct UnitOut<'a> {
    sn1: SubnetOut<'a>,
    sn2: SubnetOut<'a>,
}

#[derive(Serialize)]
struct WeightFileOut<'a> {
    format_version: u32,
    k: usize,
    #[serde(rename = "M")]
    m: usize,
    rate: Option<Rate>,
    modulation: Option<Modulation>,
    variant: WeightVariant,
    interleaver: Option<&'a InterleaverDescriptor>,
    units: Vec<UnitOut<'a>>,
    training: Option<&'a TrainingInfo>,
}

#[derive(Deserialize)]
struct WeightFileIn {
    format_version: u32,
    k: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(default)]
    rate: Option<Rate>,
    #[serde(default)]
    modulation: Option<Modulation>,
    variant: WeightVariant,
    #[serde(default)]
    interleaver: Option<InterleaverDescriptor>,
    units: Vec<UnitWeights>,
    #[serde(default)]
    training: Option<TrainingInfo>,
}

pub fn weights_to_json(w: &WeightSet) -> Result<String> {
    let doc = WeightFileOut {
        format_version: WEIGHT_FORMAT_VERSION,
        k: w.k,
        m: w.num_units(),
        rate: w.meta.rate,
        modulation: w.meta.modulation,
        variant: w.variant,
        interleaver: w.meta.interleaver.as_ref(),
        units: w
            .units
            .iter()
            .map(|u| UnitOut {
                sn1: (&u.sn1).into(),
                sn2: (&u.sn2).into(),
            })
            .collect(),
        training: w.meta.training.as_ref(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn weights_from_json(text: &str) -> Result<WeightSet> {
    let doc: WeightFileIn = serde_json::from_str(text)?;
    if doc.format_version != WEIGHT_FORMAT_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported weight file format_version {} (expected {WEIGHT_FORMAT_VERSION})",
            doc.format_version
        )));
    }
    if doc.m != doc.units.len() {
        return Err(Error::Invalid(format!(
            "weight file declares M = {} but stores {} units",
            doc.m,
            doc.units.len()
        )));
    }
    let w = WeightSet {
        k: doc.k,
        variant: doc.variant,
        units: doc.units,
        meta: WeightMeta {
            rate: doc.rate,
            modulation: doc.modulation,
            interleaver: doc.interleaver,
            training: doc.training,
        },
    };
    w.validate()?;
    Ok(w)
}

pub fn save_weights(path: &Path, w: &WeightSet) -> Result<()> {
    std::fs::write(path, weights_to_json(w)?)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<WeightSet> {
    weights_from_json(&std::fs::read_to_string(path)?)
}

/// The configuration a weight set is about to be used with.
#[derive(Clone, Debug, PartialEq)]
pub struct Expected {
    pub k: usize,
    pub units: Option<usize>,
    pub rate: Rate,
    pub modulation: Modulation,
    pub interleaver: Option<InterleaverDescriptor>,
}

/// Refuses a weight set whose metadata disagrees with `expected`, listing
/// every differing field. Metadata that is absent from the file is not
/// checked.
pub fn check_compatible(w: &WeightSet, expected: &Expected) -> Result<()> {
    let mut diff = Vec::new();
    let mut field = |name: &str, file: String, want: String| {
        if file != want {
            diff.push(format!("  {name}: file has {file}, requested {want}"));
        }
    };
    field("k", w.k.to_string(), expected.k.to_string());
    if let Some(m) = expected.units {
        field("M", w.num_units().to_string(), m.to_string());
    }
    if let Some(r) = w.meta.rate {
        field("rate", r.to_string(), expected.rate.to_string());
    }
    if let Some(m) = w.meta.modulation {
        field("modulation", m.to_string(), expected.modulation.to_string());
    }
    if let (Some(a), Some(b)) = (&w.meta.interleaver, &expected.interleaver) {
        field("interleaver", format!("{a:?}"), format!("{b:?}"));
    }
    if diff.is_empty() {
        Ok(())
    } else {
        Err(Error::Metadata(diff.join("\n")))
    }
}

const DATASET_MAGIC: &[u8; 4] = b"TNDS";
pub const DATASET_VERSION: u32 = 1;

/// Header of a dataset cache file.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub k: usize,
    pub rate: Rate,
    pub modulation: Modulation,
    pub snr_db: f64,
    pub target_iters: usize,
    pub seed: u64,
    pub n: usize,
}

fn rate_code(r: Rate) -> u8 {
    match r {
        Rate::OneThird => 3,
        Rate::OneHalf => 2,
    }
}

fn modulation_code(m: Modulation) -> u8 {
    match m {
        Modulation::Bpsk => 1,
        Modulation::Qpsk => 2,
        Modulation::Qam16 => 4,
    }
}

/// Writes the cache: little-endian throughout, see the file-format chapter
/// of the guide for the byte layout.
pub fn write_dataset<W: Write>(mut out: W, header: &DatasetHeader, samples: &[Sample]) -> Result<()> {
    if header.n != samples.len() {
        return Err(Error::Invalid(format!(
            "header announces {} samples but {} were given",
            header.n,
            samples.len()
        )));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.k as u32).to_le_bytes());
    buf.push(rate_code(header.rate));
    buf.push(modulation_code(header.modulation));
    buf.extend_from_slice(&[0, 0]);
    buf.extend_from_slice(&header.snr_db.to_le_bytes());
    buf.extend_from_slice(&(header.target_iters as u32).to_le_bytes());
    buf.extend_from_slice(&header.seed.to_le_bytes());
    buf.extend_from_slice(&(header.n as u64).to_le_bytes());
    out.write_all(&buf)?;
    for s in samples {
        if s.info_bits.len() != header.k || s.frame.k() != header.k || s.target_llrs.len() != header.k {
            return Err(Error::Invalid("sample length does not match the header's k".into()));
        }
        buf.clear();
        buf.extend(s.info_bits.iter().copied());
        let f = &s.frame;
        for v in f
            .ys
            .iter()
            .chain(&f.y1p)
            .chain(&f.y2p)
            .chain(f.tail1.iter().flatten())
            .chain(f.tail2.iter().flatten())
            .chain(&s.target_llrs)
        {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Invalid("dataset cache is truncated".into()),
            _ => Error::Io(e),
        })?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn tail(&mut self) -> Result<TailLlrs> {
        let mut t = [[0.0; 2]; TAIL_STAGES];
        for pair in t.iter_mut() {
            pair[0] = self.f64()?;
            pair[1] = self.f64()?;
        }
        Ok(t)
    }
}

/// Reads a cache written by [`write_dataset`]. The interleaver must be the
/// one the samples were generated with; it rebuilds the interleaved
/// systematic stream.
pub fn read_dataset<R: Read>(input: R, interleaver: &Interleaver) -> Result<(DatasetHeader, Vec<Sample>)> {
    let mut c = Cursor { inner: input };
    if &c.bytes::<4>()? != DATASET_MAGIC {
        return Err(Error::Invalid("not a dataset cache (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Invalid(format!("unsupported dataset cache version {version}")));
    }
    let k = c.u32()? as usize;
    let [rate, modulation, _, _] = c.bytes::<4>()?;
    let rate = match rate {
        3 => Rate::OneThird,
        2 => Rate::OneHalf,
        x => return Err(Error::Invalid(format!("unknown rate code {x}"))),
    };
    let modulation = match modulation {
        1 => Modulation::Bpsk,
        2 => Modulation::Qpsk,
        4 => Modulation::Qam16,
        x => return Err(Error::Invalid(format!("unknown modulation code {x}"))),
    };
    let header = DatasetHeader {
        k,
        rate,
        modulation,
        snr_db: c.f64()?,
        target_iters: c.u32()? as usize,
        seed: c.u64()?,
        n: c.u64()? as usize,
    };
    if interleaver.len() != k {
        return Err(Error::Config(format!(
            "interleaver length {} does not match cached k = {k}",
            interleaver.len()
        )));
    }
    let mut samples = Vec::with_capacity(header.n);
    let mut info = vec![0u8; k];
    for _ in 0..header.n {
        c.inner.read_exact(&mut info).map_err(|_| Error::Invalid("dataset cache is truncated".into()))?;
        if info.iter().any(|&b| b > 1) {
            return Err(Error::Invalid("dataset cache holds a non-binary info bit".into()));
        }
        let ys = c.f64s(k)?;
        let y1p = c.f64s(k)?;
        let y2p = c.f64s(k)?;
        let tail1 = c.tail()?;
        let tail2 = c.tail()?;
        let target_llrs = c.f64s(k)?;
        samples.push(Sample {
            frame: LlrFrame::new(ys, y1p, y2p, tail1, tail2, interleaver)?,
            target_llrs,
            info_bits: info.clone(),
        });
    }
    Ok((header, samples))
}
