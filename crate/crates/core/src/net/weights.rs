use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::channel::Modulation;
use crate::error::{check_len, Error, Result};
use crate::interleaver::InterleaverDescriptor;
use crate::trellis::{Rate, TrellisTable, NUM_BRANCHES, NUM_STATES};

/// Connected input edges of the 16 branch-metric neurons of one stage.
pub const GW_PER_STAGE: usize = 24;
/// Posterior-term weights per stage: 3 terms x 8 branches x 2 folds.
pub const PLW_PER_STAGE: usize = 48;
/// Extrinsic-combination weights per stage.
pub const ELW_PER_STAGE: usize = 3;

/// Which weight families are trainable. Absent families act as constant 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightVariant {
    GwOnly,
    /// The pruned decoder (TurboNet+).
    ElwOnly,
    GwElw,
    /// Every family (TurboNet).
    Full,
}

impl WeightVariant {
    pub const ALL: [WeightVariant; 4] = [
        WeightVariant::GwOnly,
        WeightVariant::ElwOnly,
        WeightVariant::GwElw,
        WeightVariant::Full,
    ];

    pub fn has_gw(self) -> bool {
        !matches!(self, WeightVariant::ElwOnly)
    }

    pub fn has_plw(self) -> bool {
        matches!(self, WeightVariant::Full)
    }

    pub fn has_elw(self) -> bool {
        !matches!(self, WeightVariant::GwOnly)
    }

    /// Trainable weights per stage of one subnet.
    pub fn per_stage(self) -> usize {
        self.has_gw() as usize * GW_PER_STAGE
            + self.has_plw() as usize * PLW_PER_STAGE
            + self.has_elw() as usize * ELW_PER_STAGE
    }
}

impl fmt::Display for WeightVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightVariant::GwOnly => "gw_only",
            WeightVariant::ElwOnly => "elw_only",
            WeightVariant::GwElw => "gw_elw",
            WeightVariant::Full => "full",
        })
    }
}

impl FromStr for WeightVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gw_only" => Ok(WeightVariant::GwOnly),
            "elw_only" | "turbonet_plus" => Ok(WeightVariant::ElwOnly),
            "gw_elw" => Ok(WeightVariant::GwElw),
            "full" | "turbonet" => Ok(WeightVariant::Full),
            other => Err(Error::Config(format!("unknown weight variant {other:?}"))),
        }
    }
}

/// Term of a branch metric: a-priori, systematic or parity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaTerm {
    Apriori = 0,
    Systematic = 1,
    Parity = 2,
}

/// Maps the 24 connected `(branch, term)` edges of a stage onto GW slots.
///
/// A term is connected when its bit is 1: the a-priori and systematic terms
/// for the 8 branches with `u = 1`, the parity term for the 8 branches with
/// parity 1.
#[derive(Clone, Debug)]
pub struct GwLayout {
    slot: [[Option<u8>; 3]; NUM_BRANCHES],
    edges: Vec<(usize, GammaTerm)>,
}

impl GwLayout {
    fn build(trellis: &TrellisTable) -> Self {
        let mut slot = [[None; 3]; NUM_BRANCHES];
        let mut edges = Vec::with_capacity(GW_PER_STAGE);
        for (b, tr) in trellis.all_transitions().iter().enumerate() {
            let mut connect = |term: GammaTerm| {
                slot[b][term as usize] = Some(edges.len() as u8);
                edges.push((b, term));
            };
            if tr.input == 1 {
                connect(GammaTerm::Apriori);
                connect(GammaTerm::Systematic);
            }
            if tr.parity == 1 {
                connect(GammaTerm::Parity);
            }
        }
        debug_assert_eq!(edges.len(), GW_PER_STAGE);
        Self { slot, edges }
    }

    pub fn get() -> &'static GwLayout {
        static LAYOUT: OnceLock<GwLayout> = OnceLock::new();
        LAYOUT.get_or_init(|| GwLayout::build(&TrellisTable::new()))
    }

    #[inline]
    pub fn slot(&self, branch: usize, term: GammaTerm) -> Option<usize> {
        self.slot[branch][term as usize].map(usize::from)
    }

    pub fn edges(&self) -> &[(usize, GammaTerm)] {
        &self.edges
    }
}

/// Index of a posterior-term weight within a stage.
///
/// `fold` is 0 for the `u = 1` maximum and 1 for `u = 0`; `term` is 0, 1, 2
/// for the alpha, gamma and beta terms. Alpha and gamma weights are indexed
/// by the source state, beta weights by the destination state.
#[inline]
pub fn plw_index(fold: usize, term: usize, index: usize) -> usize {
    fold * 3 * NUM_STATES + term * NUM_STATES + index
}

/// Weights of one subnet; `None` marks a family that is not trainable.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubnetWeights {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gw: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plw: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elw: Option<Vec<f64>>,
}

impl SubnetWeights {
    fn filled(k: usize, variant: WeightVariant, value: f64) -> Self {
        let family = |present: bool, per_stage: usize| present.then(|| vec![value; k * per_stage]);
        Self {
            gw: family(variant.has_gw(), GW_PER_STAGE),
            plw: family(variant.has_plw(), PLW_PER_STAGE),
            elw: family(variant.has_elw(), ELW_PER_STAGE),
        }
    }

    pub fn families(&self) -> impl Iterator<Item = &Vec<f64>> {
        [&self.gw, &self.plw, &self.elw].into_iter().flatten()
    }

    fn families_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        [&mut self.gw, &mut self.plw, &mut self.elw].into_iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.families().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_shape(&self, k: usize, variant: WeightVariant) -> Result<()> {
        let fam = |v: &Option<Vec<f64>>, present: bool, per: usize, what: &'static str| match (v, present) {
            (Some(v), true) => check_len(what, k * per, v.len()),
            (None, false) => Ok(()),
            (Some(_), false) => Err(Error::Invalid(format!("{what} present but variant {variant} has none"))),
            (None, true) => Err(Error::Invalid(format!("{what} missing for variant {variant}"))),
        };
        fam(&self.gw, variant.has_gw(), GW_PER_STAGE, "GW weights")?;
        fam(&self.plw, variant.has_plw(), PLW_PER_STAGE, "PLW weights")?;
        fam(&self.elw, variant.has_elw(), ELW_PER_STAGE, "ELW weights")
    }

    #[inline]
    pub(crate) fn gw(&self, t: usize, slot: usize) -> f64 {
        self.gw.as_ref().map_or(1.0, |v| v[t * GW_PER_STAGE + slot])
    }

    #[inline]
    pub(crate) fn plw_stage(&self, t: usize) -> Option<&[f64]> {
        self.plw.as_ref().map(|v| &v[t * PLW_PER_STAGE..(t + 1) * PLW_PER_STAGE])
    }

    #[inline]
    pub(crate) fn elw(&self, t: usize) -> [f64; 3] {
        self.elw
            .as_ref()
            .map_or([1.0; 3], |v| [v[3 * t], v[3 * t + 1], v[3 * t + 2]])
    }
}

/// The two subnets of one decoding unit. They never share parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitWeights {
    pub sn1: SubnetWeights,
    pub sn2: SubnetWeights,
}

impl UnitWeights {
    pub fn subnet(&self, which: usize) -> &SubnetWeights {
        if which == 0 {
            &self.sn1
        } else {
            &self.sn2
        }
    }

    pub fn subnet_mut(&mut self, which: usize) -> &mut SubnetWeights {
        if which == 0 {
            &mut self.sn1
        } else {
            &mut self.sn2
        }
    }
}

/// Provenance recorded when a weight set is produced by training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub train_snr_db: f64,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    #[serde(rename = "target_T")]
    pub target_t: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<String>,
}

/// Code and channel the weights were trained for.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightMeta {
    pub rate: Option<Rate>,
    pub modulation: Option<Modulation>,
    pub interleaver: Option<InterleaverDescriptor>,
    pub training: Option<TrainingInfo>,
}

/// All weights of an unfolded decoder with `units.len()` decoding units.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet {
    pub k: usize,
    pub variant: WeightVariant,
    pub units: Vec<UnitWeights>,
    pub meta: WeightMeta,
}

/// Every trainable weight at 1, which reproduces max-log-MAP decoding.
pub fn init_weights(k: usize, m: usize, variant: WeightVariant) -> Result<WeightSet> {
    if k == 0 || m == 0 {
        return Err(Error::Config("weight sets need k >= 1 and M >= 1".into()));
    }
    Ok(WeightSet {
        k,
        variant,
        units: (0..m)
            .map(|_| UnitWeights {
                sn1: SubnetWeights::filled(k, variant, 1.0),
                sn2: SubnetWeights::filled(k, variant, 1.0),
            })
            .collect(),
        meta: WeightMeta::default(),
    })
}

impl WeightSet {
    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    pub fn trainable_count(&self) -> usize {
        self.units.iter().map(|u| u.sn1.len() + u.sn2.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.is_empty() {
            return Err(Error::Invalid("weight set has no decoding units".into()));
        }
        for u in &self.units {
            u.sn1.check_shape(self.k, self.variant)?;
            u.sn2.check_shape(self.k, self.variant)?;
        }
        Ok(())
    }

    fn subnets(&self) -> impl Iterator<Item = &SubnetWeights> {
        self.units.iter().flat_map(|u| [&u.sn1, &u.sn2])
    }

    /// All trainable weights in a fixed order: unit, subnet, family (GW, PLW, ELW).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trainable_count());
        for sn in self.subnets() {
            for fam in sn.families() {
                out.extend_from_slice(fam);
            }
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_len("flat weight vector", self.trainable_count(), flat.len())?;
        let mut rest = flat;
        for u in &mut self.units {
            for sn in [&mut u.sn1, &mut u.sn2] {
                for fam in sn.families_mut() {
                    let (head, tail) = rest.split_at(fam.len());
                    fam.copy_from_slice(head);
                    rest = tail;
                }
            }
        }
        Ok(())
    }

    /// A zero-valued set with the same shape, used to accumulate gradients.
    pub fn zeros_like(&self) -> Gradients {
        Gradients {
            units: self
                .units
                .iter()
                .map(|_| UnitWeights {
                    sn1: SubnetWeights::filled(self.k, self.variant, 0.0),
                    sn2: SubnetWeights::filled(self.k, self.variant, 0.0),
                })
                .collect(),
        }
    }

    /// Values of one family across every unit and subnet.
    pub fn family_values(&self, family: Family) -> Vec<f64> {
        self.subnets()
            .filter_map(|sn| family.of(sn))
            .flatten()
            .copied()
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Gw,
    Plw,
    Elw,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gw, Family::Plw, Family::Elw];

    pub fn of(self, sn: &SubnetWeights) -> Option<&Vec<f64>> {
        match self {
            Family::Gw => sn.gw.as_ref(),
            Family::Plw => sn.plw.as_ref(),
            Family::Elw => sn.elw.as_ref(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Gw => "gw",
            Family::Plw => "plw",
            Family::Elw => "elw",
        }
    }
}

/// Loss gradient with the shape of the trainable part of a [`WeightSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub units: Vec<UnitWeights>,
}

impl Gradients {
    pub fn len(&self) -> usize {
        self.units.iter().map(|u| u.sn1.len() + u.sn2.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for u in &self.units {
            for sn in [&u.sn1, &u.sn2] {
                for fam in sn.families() {
                    out.extend_from_slice(fam);
                }
            }
        }
        out
    }

    fn zip_mut(&mut self, other: &Gradients, mut f: impl FnMut(&mut f64, f64)) {
        for (a, b) in self.units.iter_mut().zip(&other.units) {
            for (sa, sb) in [(&mut a.sn1, &b.sn1), (&mut a.sn2, &b.sn2)] {
                for (fa, fb) in sa.families_mut().zip(sb.families()) {
                    for (x, &y) in fa.iter_mut().zip(fb) {
                        f(x, y);
                    }
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        self.zip_mut(other, |x, y| *x += y);
    }

    pub fn scale(&mut self, factor: f64) {
        for u in &mut self.units {
            for sn in [&mut u.sn1, &mut u.sn2] {
                for fam in sn.families_mut() {
                    fam.iter_mut().for_each(|x| *x *= factor);
                }
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.to_flat().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_subnet_count_is_75_per_stage() {
        assert_eq!(GW_PER_STAGE + PLW_PER_STAGE + ELW_PER_STAGE, 75);
        assert_eq!(GwLayout::get().edges().len(), 24);
        assert_eq!(WeightVariant::Full.per_stage(), 75);
        assert_eq!(WeightVariant::ElwOnly.per_stage(), 3);
    }

    #[test]
    fn parameter_counts() {
        let count = |v, k, m| init_weights(k, m, v).unwrap().trainable_count();
        assert_eq!(count(WeightVariant::Full, 100, 3), 45_000);
        assert_eq!(count(WeightVariant::ElwOnly, 100, 3), 1_800);
        assert_eq!(count(WeightVariant::Full, 40, 3), 150 * 3 * 40);
        assert_eq!(count(WeightVariant::ElwOnly, 40, 3), 6 * 3 * 40);
        assert_eq!(count(WeightVariant::GwElw, 40, 2), 2 * 2 * 27 * 40);
    }

    #[test]
    fn gw_layout_matches_connectivity() {
        let l = GwLayout::get();
        // (0,0): u = 0, parity 0 -> no inputs at all
        assert!((0..3).all(|t| l.slot(0, [GammaTerm::Apriori, GammaTerm::Systematic, GammaTerm::Parity][t]).is_none()));
        // (2,5): u = 0, parity 1 -> parity only
        assert!(l.slot(2, GammaTerm::Parity).is_some());
        assert!(l.slot(2, GammaTerm::Systematic).is_none());
        // (2,1): u = 1, parity 0 -> a-priori and systematic
        assert!(l.slot(8 + 2, GammaTerm::Apriori).is_some());
        assert!(l.slot(8 + 2, GammaTerm::Systematic).is_some());
        assert!(l.slot(8 + 2, GammaTerm::Parity).is_none());
    }

    #[test]
    fn flat_round_trip_and_validation() {
        let mut w = init_weights(10, 2, WeightVariant::Full).unwrap();
        let flat: Vec<f64> = (0..w.trainable_count()).map(|i| i as f64).collect();
        w.set_flat(&flat).unwrap();
        assert_eq!(w.to_flat(), flat);
        w.validate().unwrap();
        assert!(w.set_flat(&flat[1..]).is_err());
        w.units[1].sn2.plw = None;
        assert!(w.validate().is_err());
        assert!(init_weights(0, 3, WeightVariant::Full).is_err());
    }

    #[test]
    fn variant_names() {
        for v in WeightVariant::ALL {
            assert_eq!(v.to_string().parse::<WeightVariant>().unwrap(), v);
        }
    }
}
