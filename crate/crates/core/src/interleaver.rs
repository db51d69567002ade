//! Block interleavers. The permutation convention everywhere is
//! `output[i] = input[pi[i]]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// `(K, f1, f2)` from the LTE turbo interleaver parameter table, K = 40..=512.
const QPP_TABLE: &[(usize, usize, usize)] = &[
    (40, 3, 10),
    (48, 7, 12),
    (56, 19, 42),
    (64, 7, 16),
    (72, 7, 18),
    (80, 11, 20),
    (88, 5, 22),
    (96, 11, 24),
    (104, 7, 26),
    (112, 41, 84),
    (120, 103, 90),
    (128, 15, 32),
    (136, 9, 34),
    (144, 17, 108),
    (152, 9, 38),
    (160, 21, 120),
    (168, 101, 84),
    (176, 21, 44),
    (184, 57, 46),
    (192, 23, 48),
    (200, 13, 50),
    (208, 27, 52),
    (216, 11, 36),
    (224, 27, 56),
    (232, 85, 58),
    (240, 29, 60),
    (248, 33, 62),
    (256, 15, 32),
    (264, 17, 198),
    (272, 33, 68),
    (280, 103, 210),
    (288, 19, 36),
    (296, 19, 74),
    (304, 37, 76),
    (312, 19, 78),
    (320, 21, 120),
    (328, 21, 82),
    (336, 115, 84),
    (344, 193, 86),
    (352, 21, 44),
    (360, 133, 90),
    (368, 81, 46),
    (376, 45, 94),
    (384, 23, 48),
    (392, 243, 98),
    (400, 151, 40),
    (408, 155, 102),
    (416, 25, 52),
    (424, 51, 106),
    (432, 47, 72),
    (440, 91, 110),
    (448, 29, 168),
    (456, 29, 114),
    (464, 247, 58),
    (472, 29, 118),
    (480, 89, 180),
    (488, 91, 122),
    (496, 157, 62),
    (504, 55, 84),
    (512, 31, 64),
];

pub const MIN_LEN: usize = 8;
pub const DEFAULT_SEED: u64 = 0x7462_6f5f_696c_7631;

/// QPP coefficients `(f1, f2)` for block length `k`, if tabulated.
pub fn qpp_params(k: usize) -> Option<(usize, usize)> {
    QPP_TABLE
        .binary_search_by_key(&k, |&(kk, _, _)| kk)
        .ok()
        .map(|i| (QPP_TABLE[i].1, QPP_TABLE[i].2))
}

/// Block lengths with tabulated QPP coefficients.
pub fn qpp_lengths() -> impl Iterator<Item = usize> {
    QPP_TABLE.iter().map(|&(k, _, _)| k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterleaverKind {
    Qpp,
    SeededRandom,
}

/// What is needed to rebuild an interleaver; stored in weight files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterleaverDescriptor {
    pub kind: InterleaverKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interleaver {
    kind: InterleaverKind,
    seed: Option<u64>,
    pi: Vec<usize>,
    pi_inv: Vec<usize>,
}

impl Interleaver {
    pub fn new(k: usize, kind: InterleaverKind, seed: Option<u64>) -> Result<Self> {
        match kind {
            InterleaverKind::Qpp => Self::qpp(k),
            InterleaverKind::SeededRandom => Self::seeded_random(k, seed.unwrap_or(DEFAULT_SEED)),
        }
    }

    pub fn from_descriptor(k: usize, d: InterleaverDescriptor) -> Result<Self> {
        Self::new(k, d.kind, d.seed)
    }

    /// Quadratic permutation polynomial interleaver `pi(i) = (f1 i + f2 i^2) mod k`.
    pub fn qpp(k: usize) -> Result<Self> {
        Self::check_min(k)?;
        let (f1, f2) = qpp_params(k).ok_or_else(|| {
            Error::Config(format!(
                "no QPP parameters for k = {k}; use the seeded_random interleaver instead"
            ))
        })?;
        let pi = (0..k)
            .map(|i| {
                let i = i as u64;
                ((f1 as u64 * i + f2 as u64 * i * i) % k as u64) as usize
            })
            .collect();
        Self::from_parts(InterleaverKind::Qpp, None, pi)
    }

    /// Uniformly random permutation from a fixed seed (Fisher-Yates over a
    /// ChaCha8 stream, so it is identical on every platform).
    pub fn seeded_random(k: usize, seed: u64) -> Result<Self> {
        Self::check_min(k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pi: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            let j = rng.random_range(0..=i as u64) as usize;
            pi.swap(i, j);
        }
        Self::from_parts(InterleaverKind::SeededRandom, Some(seed), pi)
    }

    /// QPP where tabulated, otherwise a seeded random permutation.
    pub fn auto(k: usize) -> Result<Self> {
        if qpp_params(k).is_some() {
            Self::qpp(k)
        } else {
            Self::seeded_random(k, DEFAULT_SEED)
        }
    }

    /// Builds an interleaver from an explicit permutation.
    pub fn from_permutation(pi: Vec<usize>) -> Result<Self> {
        Self::from_parts(InterleaverKind::SeededRandom, None, pi)
    }

    fn check_min(k: usize) -> Result<()> {
        if k < MIN_LEN {
            return Err(Error::Config(format!(
                "interleaver length {k} is below the minimum of {MIN_LEN}"
            )));
        }
        Ok(())
    }

    fn from_parts(kind: InterleaverKind, seed: Option<u64>, pi: Vec<usize>) -> Result<Self> {
        let k = pi.len();
        let mut pi_inv = vec![usize::MAX; k];
        for (i, &p) in pi.iter().enumerate() {
            if p >= k || pi_inv[p] != usize::MAX {
                return Err(Error::Config(format!(
                    "interleaver of length {k} is not a permutation (index {i} -> {p})"
                )));
            }
            pi_inv[p] = i;
        }
        Ok(Self {
            kind,
            seed,
            pi,
            pi_inv,
        })
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn kind(&self) -> InterleaverKind {
        self.kind
    }

    pub fn descriptor(&self) -> InterleaverDescriptor {
        InterleaverDescriptor {
            kind: self.kind,
            seed: self.seed,
        }
    }

    pub fn pi(&self) -> &[usize] {
        &self.pi
    }

    pub fn pi_inv(&self) -> &[usize] {
        &self.pi_inv
    }

    pub fn permute<T: Copy>(&self, seq: &[T], direction: Direction) -> Result<Vec<T>> {
        check_len("permuted sequence", self.len(), seq.len())?;
        let map = match direction {
            Direction::Forward => &self.pi,
            Direction::Inverse => &self.pi_inv,
        };
        Ok(map.iter().map(|&j| seq[j]).collect())
    }

    pub fn interleave<T: Copy>(&self, seq: &[T]) -> Result<Vec<T>> {
        self.permute(seq, Direction::Forward)
    }

    pub fn deinterleave<T: Copy>(&self, seq: &[T]) -> Result<Vec<T>> {
        self.permute(seq, Direction::Inverse)
    }

    /// `dst[i] = src[pi[i]]`; lengths must equal `len()`.
    #[inline]
    pub(crate) fn interleave_into(&self, src: &[f64], dst: &mut [f64]) {
        for (d, &j) in dst.iter_mut().zip(&self.pi) {
            *d = src[j];
        }
    }

    /// `dst[pi[i]] = src[i]`; lengths must equal `len()`.
    #[inline]
    pub(crate) fn deinterleave_into(&self, src: &[f64], dst: &mut [f64]) {
        for (&s, &j) in src.iter().zip(&self.pi) {
            dst[j] = s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_bijection(pi: &[usize]) -> bool {
        let mut seen = vec![false; pi.len()];
        pi.iter().all(|&p| p < pi.len() && !std::mem::replace(&mut seen[p], true))
    }

    #[test]
    fn every_tabulated_qpp_is_a_bijection() {
        for k in qpp_lengths() {
            let (f1, f2) = qpp_params(k).unwrap();
            let pi: Vec<usize> = (0..k).map(|i| (f1 * i + f2 * i * i) % k).collect();
            assert!(is_bijection(&pi), "k = {k}");
            let il = Interleaver::qpp(k).unwrap();
            assert_eq!(il.pi(), &pi[..]);
            assert_eq!(il.pi()[0], 0);
        }
    }

    #[test]
    fn k40_coefficients() {
        assert_eq!(qpp_params(40), Some((3, 10)));
        assert_eq!(qpp_params(64), Some((7, 16)));
        assert_eq!(qpp_params(120), Some((103, 90)));
    }

    #[test]
    fn qpp_missing_length_names_fallback() {
        let err = Interleaver::qpp(100).unwrap_err().to_string();
        assert!(err.contains("seeded_random"), "{err}");
        assert_eq!(Interleaver::auto(100).unwrap().kind(), InterleaverKind::SeededRandom);
    }

    #[test]
    fn too_short() {
        assert!(Interleaver::seeded_random(7, 1).is_err());
    }

    #[test]
    fn seeded_random_is_deterministic() {
        let a = Interleaver::seeded_random(8, 1).unwrap();
        let b = Interleaver::seeded_random(8, 1).unwrap();
        assert_eq!(a, b);
        assert!(is_bijection(a.pi()));
        let x: Vec<u32> = (0..8).collect();
        assert_eq!(a.interleave(&x).unwrap(), b.interleave(&x).unwrap());
        assert_ne!(
            Interleaver::seeded_random(100, 1).unwrap().pi(),
            Interleaver::seeded_random(100, 2).unwrap().pi()
        );
    }

    #[test]
    fn identity_and_length_errors() {
        let id = Interleaver::from_permutation((0..10).collect()).unwrap();
        let x: Vec<i32> = (0..10).map(|v| v * 3).collect();
        assert_eq!(id.interleave(&x).unwrap(), x);
        assert!(id.interleave(&x[..9]).is_err());
        assert!(Interleaver::from_permutation(vec![0, 0, 1, 2, 3, 4, 5, 6]).is_err());
    }

    #[test]
    fn into_variants_match_allocating_ones() {
        let il = Interleaver::qpp(40).unwrap();
        let x: Vec<f64> = (0..40).map(|v| v as f64 * 0.5).collect();
        let mut y = vec![0.0; 40];
        il.interleave_into(&x, &mut y);
        assert_eq!(y, il.interleave(&x).unwrap());
        let mut z = vec![0.0; 40];
        il.deinterleave_into(&y, &mut z);
        assert_eq!(z, x);
    }
}
