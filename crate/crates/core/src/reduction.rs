//! Weighted to unweighted reduction by consistent randomized rounding.
//!
//! An element of weight `j + f` (integer part `j`, fraction `f`) becomes the
//! items `(a, 1..=j)`, plus `(a, j + 1)` when a seeded hash falls below `f`.
//! The independent variant hashes `(a, j)`; the dependent variant hashes
//! `(a, 0)` for every weight, so one hash per element serves any scaling.
//!
//! Both variants are monotone in the weights for a fixed seed, which is what
//! makes `reduce(min(w1, w2)) = reduce(w1) ∩ reduce(w2)` hold exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{unit_hash, Seed};
use crate::set::{ElementId, UnweightedSet, WeightedSet};

/// Weights at or above this cannot carry an exact integer part in an f64.
pub const MAX_WEIGHT: f64 = 9_007_199_254_740_992.0; // 2^53

/// Index hashed by the dependent variant.
pub const DEPENDENT_INDEX: u64 = 0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionVariant {
    Independent,
    #[default]
    Dependent,
}

impl ReductionVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReductionVariant::Independent => "independent",
            ReductionVariant::Dependent => "dependent",
        }
    }
}

impl std::str::FromStr for ReductionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "independent" | "indep" => Ok(ReductionVariant::Independent),
            "dependent" | "dep" => Ok(ReductionVariant::Dependent),
            _ => Err(Error::InvalidParams(format!(
                "unknown reduction variant {s:?}"
            ))),
        }
    }
}

#[inline]
fn split_weight(element: &ElementId, weight: f64) -> Result<(u64, f64)> {
    if weight >= MAX_WEIGHT {
        return Err(Error::WeightTooLarge {
            element: element.to_string(),
            weight,
        });
    }
    let whole = weight.floor();
    Ok((whole as u64, weight - whole))
}

/// Independent rounding: the extra item for `a` is decided by `h(seed, a, j_a)`.
pub fn reduce_to_unwtd(w: &WeightedSet, seed: &Seed) -> Result<UnweightedSet> {
    reduce_counted(w, seed, ReductionVariant::Independent, &mut 0)
}

/// Dependent rounding: the extra item for `a` is decided by `h(seed, a, 0)`.
pub fn reduce_to_unwtd_dep(w: &WeightedSet, seed: &Seed) -> Result<UnweightedSet> {
    reduce_counted(w, seed, ReductionVariant::Dependent, &mut 0)
}

pub fn reduce(w: &WeightedSet, seed: &Seed, variant: ReductionVariant) -> Result<UnweightedSet> {
    reduce_counted(w, seed, variant, &mut 0)
}

/// Like [`reduce`], adding the number of hash evaluations to `hashes`.
pub fn reduce_counted(
    w: &WeightedSet,
    seed: &Seed,
    variant: ReductionVariant,
    hashes: &mut u64,
) -> Result<UnweightedSet> {
    let mut counts = Vec::with_capacity(w.len());
    for (a, weight) in w.iter() {
        let (mut j, frac) = split_weight(a, weight)?;
        if frac > 0.0 {
            let index = match variant {
                ReductionVariant::Independent => j,
                ReductionVariant::Dependent => DEPENDENT_INDEX,
            };
            *hashes += 1;
            if unit_hash(seed, a.as_bytes(), index) < frac {
                j += 1;
            }
        }
        counts.push((a.clone(), j));
    }
    Ok(UnweightedSet::from_counts(counts))
}

/// Per-element thresholds of the dependent variant, computed once and reused
/// for every scaling of the same set.
#[derive(Clone, Debug)]
pub struct DependentThresholds {
    thresholds: Vec<f64>,
}

impl DependentThresholds {
    /// One hash evaluation per element of `w`.
    pub fn new(w: &WeightedSet, seed: &Seed) -> Self {
        let thresholds = w
            .iter()
            .map(|(a, _)| unit_hash(seed, a.as_bytes(), DEPENDENT_INDEX))
            .collect();
        DependentThresholds { thresholds }
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// Reduces `factor * w` with the stored thresholds. Identical to
    /// `reduce_to_unwtd_dep(&w.scaled(factor)?, seed)` without rehashing.
    ///
    /// `w` must be the set the thresholds were computed from.
    pub fn reduce_scaled(&self, w: &WeightedSet, factor: f64) -> Result<UnweightedSet> {
        if w.len() != self.thresholds.len() {
            return Err(Error::InvalidParams(
                "thresholds were computed for a different set".into(),
            ));
        }
        let mut counts = Vec::with_capacity(w.len());
        for ((a, weight), &h) in w.iter().zip(&self.thresholds) {
            let scaled = weight * factor;
            let (mut j, frac) = split_weight(a, scaled)?;
            if frac > 0.0 && h < frac {
                j += 1;
            }
            counts.push((a.clone(), j));
        }
        Ok(UnweightedSet::from_counts(counts))
    }
}
