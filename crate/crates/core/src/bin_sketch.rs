//! One-permutation sketch of an unweighted set with b-bit storage.
//!
//! Item `(a, i)` reads chunk `i - 1` of element `a`'s stream and lands in the
//! bin given by its top `log2 k'` bits; inside a bin the smallest 13-bit rank
//! wins. Equal ranks are settled by a 64-bit hash under the child seed
//! `"tiebreak"`, then by `(element, index)`. Only the winner's stored bits
//! are kept.
//!
//! Empty bins hold 0. A sketch either carries an explicit empty mask or is
//! compact: compact sketches treat every bin as occupied, so two empty bins
//! count as a (spurious) match.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Range;

use crate::codec::{pack_bits, packed_len, put_string, unpack_bits, Reader};
use crate::error::{Error, Result};
use crate::hashing::{BitChunk, Seed, DEFAULT_RANK_BITS, PRF_ID};
use crate::set::{ElementId, UnweightedSet};

pub const MAGIC: &[u8; 4] = b"UWSK";
pub const FORMAT_VERSION: u16 = 1;

const MODE_MASKED: u8 = 0;
const MODE_COMPACT: u8 = 1;

/// Bits kept per bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BitWidth {
    /// b-bit storage, b in {1, 2, 4, 8, 16}.
    Bits(u8),
    /// The full `64 - log2 k'` bits of the winning word (rank included).
    Full,
    /// 1-bit bins XOR-folded in pairs.
    Half,
}

impl BitWidth {
    pub fn validate(self) -> Result<Self> {
        match self {
            BitWidth::Bits(1 | 2 | 4 | 8 | 16) | BitWidth::Full | BitWidth::Half => Ok(self),
            BitWidth::Bits(b) => Err(Error::InvalidParams(format!(
                "bit width must be 1, 2, 4, 8, 16, full or half; got {b}"
            ))),
        }
    }

    /// Byte used in the binary formats: b itself, 64 for full, 0 for half.
    pub fn code(self) -> u8 {
        match self {
            BitWidth::Bits(b) => b,
            BitWidth::Full => 64,
            BitWidth::Half => 0,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(BitWidth::Half),
            64 => Ok(BitWidth::Full),
            b => BitWidth::Bits(b).validate(),
        }
    }

    /// Width of one packed bin value in the serialized form.
    fn packed_width(self) -> u32 {
        match self {
            BitWidth::Bits(b) => b as u32,
            BitWidth::Full => 64,
            BitWidth::Half => 1,
        }
    }
}

impl fmt::Display for BitWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BitWidth::Bits(b) => write!(f, "{b}"),
            BitWidth::Full => f.write_str("full"),
            BitWidth::Half => f.write_str("half"),
        }
    }
}

impl std::str::FromStr for BitWidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" | "64" => Ok(BitWidth::Full),
            "half" | "0.5" => Ok(BitWidth::Half),
            other => other
                .parse::<u8>()
                .map_err(|_| Error::InvalidParams(format!("bad bit width {s:?}")))
                .and_then(|b| BitWidth::Bits(b).validate()),
        }
    }
}

impl serde::Serialize for BitWidth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for BitWidth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Float(f64),
            Str(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Int(v) => v.to_string().parse(),
            Raw::Float(v) => v.to_string().parse(),
            Raw::Str(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Hash evaluations spent while sketching.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SketchStats {
    pub chunks: u64,
    pub tiebreaks: u64,
}

/// The item that won a bin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Winner {
    pub element: ElementId,
    pub index: u64,
    pub rank: u64,
    pub stored: u64,
}

struct Contender<'a> {
    element: &'a ElementId,
    index: u64,
    rank: u64,
    stored: u64,
    tiebreak: Option<u64>,
}

struct TieBreaker {
    seed: Seed,
}

impl TieBreaker {
    fn value(&self, c: &mut Contender<'_>, stats: &mut SketchStats) -> u64 {
        *c.tiebreak.get_or_insert_with(|| {
            stats.tiebreaks += 1;
            self.seed.hash64(c.element.as_bytes(), c.index)
        })
    }

    /// True when `new` beats `cur`.
    fn beats(
        &self,
        new: &mut Contender<'_>,
        cur: &mut Contender<'_>,
        stats: &mut SketchStats,
    ) -> bool {
        match new.rank.cmp(&cur.rank) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => {
                let (a, b) = (self.value(new, stats), self.value(cur, stats));
                match a.cmp(&b) {
                    Ordering::Equal => (new.element, new.index) < (cur.element, cur.index),
                    o => o == Ordering::Less,
                }
            }
        }
    }
}

fn layout_for(bin_count: usize, width: BitWidth) -> Result<BitChunk> {
    if bin_count == 0 || !bin_count.is_power_of_two() {
        return Err(Error::InvalidParams(format!(
            "bin count must be a power of two, got {bin_count}"
        )));
    }
    let bin_bits = bin_count.trailing_zeros();
    let store_bits = match width.validate()? {
        BitWidth::Bits(b) => b as u32,
        BitWidth::Full => 64u32.saturating_sub(bin_bits + DEFAULT_RANK_BITS),
        BitWidth::Half => {
            return Err(Error::InvalidParams(
                "half width is produced by xor_fold of a 1-bit sketch".into(),
            ))
        }
    };
    BitChunk::new(bin_bits, DEFAULT_RANK_BITS, store_bits)
}

/// Winner of each of `bin_count` bins (`None` for empty bins).
pub fn bin_winners(
    set: &UnweightedSet,
    bin_count: usize,
    width: BitWidth,
    seed: &Seed,
    stats: &mut SketchStats,
) -> Result<Vec<Option<Winner>>> {
    let layout = layout_for(bin_count, width)?;
    let ties = TieBreaker {
        seed: seed.derive("tiebreak"),
    };
    let mut bins: Vec<Option<Contender<'_>>> = (0..bin_count).map(|_| None).collect();
    for (element, count) in set.counts() {
        let bytes = element.as_bytes();
        for i in 1..=count {
            let word = seed.hash64(bytes, i - 1);
            stats.chunks += 1;
            let chunk = layout.split(word);
            let stored = match width {
                BitWidth::Full => (chunk.rank << layout.store_bits()) | chunk.stored,
                _ => chunk.stored,
            };
            let mut new = Contender {
                element,
                index: i,
                rank: chunk.rank,
                stored,
                tiebreak: None,
            };
            let slot = &mut bins[chunk.bin as usize];
            match slot {
                None => *slot = Some(new),
                Some(cur) => {
                    if ties.beats(&mut new, cur, stats) {
                        *slot = Some(new);
                    }
                }
            }
        }
    }
    Ok(bins
        .into_iter()
        .map(|c| {
            c.map(|c| Winner {
                element: c.element.clone(),
                index: c.index,
                rank: c.rank,
                stored: c.stored,
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinSketch {
    bins: Vec<u64>,
    /// `None` for compact sketches, which carry no emptiness information.
    empty: Option<Vec<bool>>,
    width: BitWidth,
    prf_id: String,
}

/// Matching statistics between two sketches over a bin range.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MatchCount {
    pub matches: usize,
    pub compared: usize,
}

pub fn unwtd_sketch(
    set: &UnweightedSet,
    bin_count: usize,
    width: BitWidth,
    seed: &Seed,
) -> Result<BinSketch> {
    unwtd_sketch_counted(set, bin_count, width, seed, &mut SketchStats::default())
}

pub fn unwtd_sketch_counted(
    set: &UnweightedSet,
    bin_count: usize,
    width: BitWidth,
    seed: &Seed,
    stats: &mut SketchStats,
) -> Result<BinSketch> {
    let winners = bin_winners(set, bin_count, width, seed, stats)?;
    let bins = winners
        .iter()
        .map(|w| w.as_ref().map_or(0, |w| w.stored))
        .collect();
    let empty = winners.iter().map(Option::is_none).collect();
    Ok(BinSketch {
        bins,
        empty: Some(empty),
        width,
        prf_id: PRF_ID.to_string(),
    })
}

impl BinSketch {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bins(&self) -> &[u64] {
        &self.bins
    }

    pub fn width(&self) -> BitWidth {
        self.width
    }

    pub fn prf_id(&self) -> &str {
        &self.prf_id
    }

    pub fn is_compact(&self) -> bool {
        self.empty.is_none()
    }

    /// Known-empty bin. Always false for compact sketches.
    pub fn is_empty_bin(&self, i: usize) -> bool {
        self.empty.as_ref().is_some_and(|m| m[i])
    }

    pub fn empty_count(&self) -> usize {
        self.empty
            .as_ref()
            .map_or(0, |m| m.iter().filter(|&&e| e).count())
    }

    /// Same bins without the empty mask.
    pub fn to_compact(&self) -> BinSketch {
        BinSketch {
            empty: None,
            ..self.clone()
        }
    }

    fn check_comparable(&self, other: &BinSketch) -> Result<()> {
        if self.prf_id != other.prf_id {
            return Err(Error::Incomparable(format!(
                "PRF {} vs {}",
                self.prf_id, other.prf_id
            )));
        }
        if self.width != other.width {
            return Err(Error::Incomparable(format!(
                "bit width {} vs {}",
                self.width, other.width
            )));
        }
        if self.bins.len() != other.bins.len() {
            return Err(Error::Incomparable(format!(
                "bin count {} vs {}",
                self.bins.len(),
                other.bins.len()
            )));
        }
        Ok(())
    }

    /// Counts equal bins in `range`. Bins empty on both sides are skipped;
    /// bins empty on one side are mismatches.
    pub fn match_count(&self, other: &BinSketch, range: Range<usize>) -> Result<MatchCount> {
        self.check_comparable(other)?;
        if range.end > self.bins.len() {
            return Err(Error::InvalidParams(format!(
                "bin range {range:?} exceeds {} bins",
                self.bins.len()
            )));
        }
        let mut mc = MatchCount::default();
        for i in range {
            match (self.is_empty_bin(i), other.is_empty_bin(i)) {
                (true, true) => {}
                (false, false) => {
                    mc.compared += 1;
                    if self.bins[i] == other.bins[i] {
                        mc.matches += 1;
                    }
                }
                _ => mc.compared += 1,
            }
        }
        Ok(mc)
    }

    /// XOR of adjacent 1-bit bins: `k'` bins become `k'/2` half-width bins.
    /// A folded bin is empty only when both source bins are. Empty bins hold
    /// 0, so a folded bin with one empty source carries the other source's
    /// bit, which matches the other sketch with chance 1/2, as a mismatched
    /// sample should.
    pub fn xor_fold(&self) -> Result<BinSketch> {
        if self.width != BitWidth::Bits(1) {
            return Err(Error::InvalidParams(format!(
                "xor_fold needs a 1-bit sketch, got width {}",
                self.width
            )));
        }
        if self.bins.len() < 2 || !self.bins.len().is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "xor_fold needs an even bin count, got {}",
                self.bins.len()
            )));
        }
        let empty = self
            .empty
            .as_ref()
            .map(|m| m.chunks_exact(2).map(|p| p[0] && p[1]).collect::<Vec<_>>());
        let bins = self.bins.chunks_exact(2).map(|p| p[0] ^ p[1]).collect();
        Ok(BinSketch {
            bins,
            empty,
            width: BitWidth::Half,
            prf_id: self.prf_id.clone(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out);
        out
    }

    pub(crate) fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_string(out, &self.prf_id);
        out.extend_from_slice(&(self.bins.len() as u32).to_le_bytes());
        out.push(self.width.code());
        out.push(if self.empty.is_some() {
            MODE_MASKED
        } else {
            MODE_COMPACT
        });
        pack_bits(self.bins.iter().copied(), self.width.packed_width(), out);
        if let Some(mask) = &self.empty {
            pack_bits(mask.iter().map(|&e| e as u64), 1, out);
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<BinSketch> {
        let mut r = Reader::new(bytes);
        let sk = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(sk)
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<BinSketch> {
        r.expect_magic(MAGIC)?;
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::Decode(format!("unsupported UWSK version {version}")));
        }
        let prf_id = r.string()?;
        let len = r.u32()? as usize;
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::Decode(format!(
                "bin count {len} is not a power of two"
            )));
        }
        let width = BitWidth::from_code(r.u8()?).map_err(|e| Error::Decode(e.to_string()))?;
        let mode = r.u8()?;
        let w = width.packed_width();
        let bins = unpack_bits(r.take(packed_len(len, w))?, w, len);
        let empty = match mode {
            MODE_MASKED => {
                let mask: Vec<bool> = unpack_bits(r.take(packed_len(len, 1))?, 1, len)
                    .into_iter()
                    .map(|b| b == 1)
                    .collect();
                if mask.iter().zip(&bins).any(|(&e, &v)| e && v != 0) {
                    return Err(Error::Decode("empty bin with non-zero value".into()));
                }
                Some(mask)
            }
            MODE_COMPACT => None,
            m => return Err(Error::Decode(format!("unknown mode {m}"))),
        };
        Ok(BinSketch {
            bins,
            empty,
            width,
            prf_id,
        })
    }
}

/// Collision-corrected similarity from the bin match rate.
///
/// With `m` the match rate over compared bins: b-bit sketches return
/// `(m - 2^-b) / (1 - 2^-b)`, full-width sketches `m`, and folded sketches
/// `sqrt(2m - 1)`; all clamped to `[0, 1]`. Two sketches with no comparable
/// bin (both sets empty) have similarity 1.
pub fn unwtd_estimate(sk1: &BinSketch, sk2: &BinSketch) -> Result<f64> {
    let mc = sk1.match_count(sk2, 0..sk1.len())?;
    if mc.compared == 0 {
        return Ok(1.0);
    }
    let m = mc.matches as f64 / mc.compared as f64;
    let est = match sk1.width {
        BitWidth::Full => m,
        BitWidth::Bits(b) => {
            let chance = (-(b as f64)).exp2();
            (m - chance) / (1.0 - chance)
        }
        BitWidth::Half => (2.0 * m - 1.0).clamp(0.0, 1.0).sqrt(),
    };
    Ok(est.clamp(0.0, 1.0))
}

pub fn xor_fold(sk: &BinSketch) -> Result<BinSketch> {
    sk.xor_fold()
}
