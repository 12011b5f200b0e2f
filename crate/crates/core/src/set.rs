//! Weighted and unweighted sets, plus the exact Jaccard computations every
//! estimator in this crate is checked against.
//!
//! Similarity of two empty sets is defined as 1 (identical inputs), and as 0
//! when exactly one side is empty.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Opaque element identifier. Ordered lexicographically on bytes.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElementId(Box<[u8]>);

impl ElementId {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        ElementId(bytes.into().into_boxed_slice())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl From<&str> for ElementId {
    fn from(s: &str) -> Self {
        ElementId::new(s.as_bytes())
    }
}

impl From<String> for ElementId {
    fn from(s: String) -> Self {
        ElementId::new(s.into_bytes())
    }
}

impl From<&[u8]> for ElementId {
    fn from(b: &[u8]) -> Self {
        ElementId::new(b)
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.0))
    }
}

impl fmt::Debug for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", String::from_utf8_lossy(&self.0))
    }
}

/// Sparse map from element to a strictly positive, finite weight.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedSet {
    entries: BTreeMap<ElementId, f64>,
}

impl WeightedSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from `(element, weight)` pairs; repeated elements are an error.
    pub fn from_entries<I, E>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (E, f64)>,
        E: Into<ElementId>,
    {
        let mut set = Self::new();
        for (e, w) in entries {
            set.insert(e.into(), w)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, element: ElementId, weight: f64) -> Result<()> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidWeight {
                element: element.to_string(),
                weight,
            });
        }
        if self.entries.contains_key(&element) {
            return Err(Error::DuplicateElement(element.to_string()));
        }
        self.entries.insert(element, weight);
        Ok(())
    }

    pub fn get(&self, element: &ElementId) -> Option<f64> {
        self.entries.get(element).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in ascending element order.
    pub fn iter(&self) -> impl Iterator<Item = (&ElementId, f64)> + '_ {
        self.entries.iter().map(|(e, &w)| (e, w))
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Multiplies every weight by `factor`. Entries that underflow to zero are dropped.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidParams(format!(
                "scale factor must be finite and > 0, got {factor}"
            )));
        }
        let mut out = BTreeMap::new();
        for (e, &w) in &self.entries {
            let v = w * factor;
            if !v.is_finite() {
                return Err(Error::InvalidWeight {
                    element: e.to_string(),
                    weight: v,
                });
            }
            if v > 0.0 {
                out.insert(e.clone(), v);
            }
        }
        Ok(WeightedSet { entries: out })
    }

    /// Pointwise minimum; elements missing from either side are absent.
    pub fn pointwise_min(&self, other: &WeightedSet) -> WeightedSet {
        let entries = self
            .entries
            .iter()
            .filter_map(|(e, &w)| other.get(e).map(|v| (e.clone(), w.min(v))))
            .collect();
        WeightedSet { entries }
    }

    pub fn pointwise_max(&self, other: &WeightedSet) -> WeightedSet {
        let mut entries = self.entries.clone();
        for (e, &v) in &other.entries {
            entries
                .entry(e.clone())
                .and_modify(|w| *w = w.max(v))
                .or_insert(v);
        }
        WeightedSet { entries }
    }

    /// Parses the `<element>\t<weight>` line format. Blank lines are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut set = WeightedSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let (element, weight) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse_err("expected <element>\\t<weight>".into()))?;
            let weight: f64 = weight
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad weight {weight:?}: {e}")))?;
            set.insert(ElementId::from(element), weight)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(set)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (e, w) in self.iter() {
            out.push_str(&format!("{e}\t{w}\n"));
        }
        out
    }
}

/// Unweighted set over `(element, index)` pairs.
///
/// Indices for an element always form the prefix `1..=count`, so the set is
/// stored as per-element counts and pairs are produced on demand.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UnweightedSet {
    counts: BTreeMap<ElementId, u64>,
}

impl UnweightedSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from per-element counts; zero counts are dropped.
    pub fn from_counts<I>(counts: I) -> Self
    where
        I: IntoIterator<Item = (ElementId, u64)>,
    {
        let counts = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        UnweightedSet { counts }
    }

    /// Builds from explicit pairs, checking that each element's indices are `1..=j`.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (ElementId, u64)>,
    {
        let mut indices: BTreeMap<ElementId, Vec<u64>> = BTreeMap::new();
        for (e, i) in pairs {
            indices.entry(e).or_default().push(i);
        }
        let mut counts = BTreeMap::new();
        for (e, mut idx) in indices {
            idx.sort_unstable();
            idx.dedup();
            let contiguous = idx.iter().enumerate().all(|(p, &i)| i == p as u64 + 1);
            if !contiguous {
                return Err(Error::InvalidParams(format!(
                    "indices for {e} are not the prefix 1..=j"
                )));
            }
            counts.insert(e, idx.len() as u64);
        }
        Ok(UnweightedSet { counts })
    }

    /// Total number of `(element, index)` pairs.
    pub fn len(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, element: &ElementId) -> u64 {
        self.counts.get(element).copied().unwrap_or(0)
    }

    pub fn contains(&self, element: &ElementId, index: u64) -> bool {
        index >= 1 && index <= self.count(element)
    }

    /// Per-element counts in ascending element order.
    pub fn counts(&self) -> impl Iterator<Item = (&ElementId, u64)> + '_ {
        self.counts.iter().map(|(e, &c)| (e, c))
    }

    /// Every `(element, index)` pair, indices starting at 1.
    pub fn pairs(&self) -> impl Iterator<Item = (&ElementId, u64)> + '_ {
        self.counts
            .iter()
            .flat_map(|(e, &c)| (1..=c).map(move |i| (e, i)))
    }

    pub fn intersection(&self, other: &UnweightedSet) -> UnweightedSet {
        UnweightedSet::from_counts(
            self.counts
                .iter()
                .map(|(e, &c)| (e.clone(), c.min(other.count(e)))),
        )
    }

    pub fn union(&self, other: &UnweightedSet) -> UnweightedSet {
        let mut counts = self.counts.clone();
        for (e, &c) in &other.counts {
            counts
                .entry(e.clone())
                .and_modify(|v| *v = (*v).max(c))
                .or_insert(c);
        }
        UnweightedSet { counts }
    }
}

/// Result of comparing two weighted sketches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EstimateResult {
    Estimate {
        value: f64,
        scales_used: usize,
    },
    /// No common scale: the true similarity is known to be below `alpha`.
    BelowThreshold {
        alpha: f64,
    },
}

impl EstimateResult {
    pub fn value(&self) -> Option<f64> {
        match *self {
            EstimateResult::Estimate { value, .. } => Some(value),
            EstimateResult::BelowThreshold { .. } => None,
        }
    }
}

pub fn l1_norm(w: &WeightedSet) -> f64 {
    w.l1_norm()
}

/// `|min(w1, w2)|_1 / |max(w1, w2)|_1`.
pub fn weighted_jaccard(w1: &WeightedSet, w2: &WeightedSet) -> f64 {
    match (w1.is_empty(), w2.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    // Both maps are sorted, so a merge walk visits the union once.
    let mut num = 0.0;
    let mut den = 0.0;
    let mut a = w1.entries.iter().peekable();
    let mut b = w2.entries.iter().peekable();
    loop {
        match (a.peek(), b.peek()) {
            (Some((ka, &va)), Some((kb, &vb))) => match ka.cmp(kb) {
                std::cmp::Ordering::Less => {
                    den += va;
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    den += vb;
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    num += va.min(vb);
                    den += va.max(vb);
                    a.next();
                    b.next();
                }
            },
            (Some((_, &va)), None) => {
                den += va;
                a.next();
            }
            (None, Some((_, &vb))) => {
                den += vb;
                b.next();
            }
            (None, None) => break,
        }
    }
    (num / den).clamp(0.0, 1.0)
}

/// `|S1 ∩ S2| / |S1 ∪ S2|` over `(element, index)` pairs.
pub fn unweighted_jaccard(s1: &UnweightedSet, s2: &UnweightedSet) -> f64 {
    let mut inter = 0u64;
    for (e, c) in s1.counts() {
        inter += c.min(s2.count(e));
    }
    let union = s1.len() + s2.len() - inter;
    if union == 0 {
        return 1.0;
    }
    inter as f64 / union as f64
}
