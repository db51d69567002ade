use crate::error::{check_len, Error, Result};
use crate::interleaver::Interleaver;
use crate::trellis::TAIL_STAGES;

/// `(systematic, parity)` LLR pairs for the three termination stages of
/// one constituent trellis.
pub type TailLlrs = [[f64; 2]; TAIL_STAGES];

/// Channel LLRs of one codeword, laid out for the two constituent decoders.
///
/// LLRs follow `log P(bit = 1) / P(bit = 0)`. Punctured positions hold 0.
#[derive(Clone, Debug, PartialEq)]
pub struct LlrFrame {
    pub ys: Vec<f64>,
    pub y1p: Vec<f64>,
    pub y2p: Vec<f64>,
    /// `ys` permuted by the interleaver; systematic input of the second decoder.
    pub ys_interleaved: Vec<f64>,
    pub tail1: TailLlrs,
    pub tail2: TailLlrs,
}

/// The inputs of a single constituent decoder.
#[derive(Clone, Copy, Debug)]
pub struct ConstituentView<'a> {
    pub sys: &'a [f64],
    pub parity: &'a [f64],
    pub tail: &'a TailLlrs,
}

impl ConstituentView<'_> {
    pub fn k(&self) -> usize {
        self.sys.len()
    }
}

impl LlrFrame {
    pub fn new(
        ys: Vec<f64>,
        y1p: Vec<f64>,
        y2p: Vec<f64>,
        tail1: TailLlrs,
        tail2: TailLlrs,
        interleaver: &Interleaver,
    ) -> Result<Self> {
        let k = ys.len();
        check_len("parity-1 LLRs", k, y1p.len())?;
        check_len("parity-2 LLRs", k, y2p.len())?;
        let finite = ys
            .iter()
            .chain(&y1p)
            .chain(&y2p)
            .chain(tail1.iter().flatten())
            .chain(tail2.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Invalid("frame contains a non-finite LLR".into()));
        }
        let ys_interleaved = interleaver.interleave(&ys)?;
        Ok(Self {
            ys,
            y1p,
            y2p,
            ys_interleaved,
            tail1,
            tail2,
        })
    }

    pub fn k(&self) -> usize {
        self.ys.len()
    }

    /// View for decoder 1 (`which = 0`) or decoder 2 (`which = 1`).
    pub fn constituent(&self, which: usize) -> ConstituentView<'_> {
        if which == 0 {
            ConstituentView {
                sys: &self.ys,
                parity: &self.y1p,
                tail: &self.tail1,
            }
        } else {
            ConstituentView {
                sys: &self.ys_interleaved,
                parity: &self.y2p,
                tail: &self.tail2,
            }
        }
    }
}
