//! Seeded pseudorandom primitives.
//!
//! Every random decision in the crate is a pure function of a [`Seed`] and the
//! canonical encoding `element bytes || index (u64, big-endian) || seed label`.
//! The PRF is SipHash-2-4 keyed with the first 128 bits of the seed key; seed
//! keys are chained with SHA-256. Sketches record [`PRF_ID`] so that sketches
//! built with a different PRF are refused at comparison time.

use std::hash::Hasher;

use sha2::{Digest, Sha256};
use siphasher::sip::SipHasher24;

use crate::error::{Error, Result};

/// Name and version of the keyed PRF and seed derivation.
pub const PRF_ID: &str = "siphash24-sha256kdf/v1";

/// Default number of rank bits used to pick a bin winner.
pub const DEFAULT_RANK_BITS: u32 = 13;

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

/// A 256-bit key plus a domain-separation label.
#[derive(Clone, PartialEq, Eq)]
pub struct Seed {
    key: [u8; 32],
    label: Vec<u8>,
    k0: u64,
    k1: u64,
}

impl Seed {
    /// Root seed with an empty label.
    pub fn from_master(key: [u8; 32]) -> Self {
        Self::with_label(key, Vec::new())
    }

    /// Convenience for tests and simulations: a root seed from a small integer.
    pub fn from_u64(v: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&v.to_le_bytes());
        Self::from_master(key)
    }

    /// Root seed from up to 64 hex digits, zero-padded on the left.
    pub fn from_hex(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches("0x");
        if s.is_empty() || s.len() > 64 {
            return Err(Error::InvalidParams(format!(
                "seed must be 1 to 64 hex digits, got {} characters",
                s.len()
            )));
        }
        let padded = format!("{s:0>64}");
        let mut key = [0u8; 32];
        hex::decode_to_slice(&padded, &mut key)
            .map_err(|e| Error::InvalidParams(format!("bad seed hex: {e}")))?;
        Ok(Self::from_master(key))
    }

    fn with_label(key: [u8; 32], label: Vec<u8>) -> Self {
        let k0 = u64::from_le_bytes(key[..8].try_into().unwrap());
        let k1 = u64::from_le_bytes(key[8..16].try_into().unwrap());
        Seed { key, label, k0, k1 }
    }

    pub fn key(&self) -> &[u8; 32] {
        &self.key
    }

    pub fn label(&self) -> &[u8] {
        &self.label
    }

    /// Child seed for `label`. See [`derive_seed`].
    pub fn derive(&self, label: impl AsRef<[u8]>) -> Seed {
        derive_seed(self, label.as_ref())
    }

    /// Raw 64-bit PRF output for `(element, index)`.
    #[inline]
    pub fn hash64(&self, element: &[u8], index: u64) -> u64 {
        let mut h = SipHasher24::new_with_keys(self.k0, self.k1);
        h.write(element);
        h.write(&index.to_be_bytes());
        h.write(&self.label);
        h.finish()
    }
}

impl std::fmt::Debug for Seed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Seed")
            .field("key", &format_args!("{:02x?}", &self.key[..4]))
            .field("label", &String::from_utf8_lossy(&self.label))
            .finish()
    }
}

/// Domain-separated child seed.
///
/// `key' = SHA-256("wjacc/derive" || key || len(label) || label || len(child) || child)`
/// with lengths as u32 big-endian; the child carries `child` as its label.
pub fn derive_seed(master: &Seed, label: &[u8]) -> Seed {
    let mut h = Sha256::new();
    h.update(b"wjacc/derive");
    h.update(master.key);
    h.update((master.label.len() as u32).to_be_bytes());
    h.update(&master.label);
    h.update((label.len() as u32).to_be_bytes());
    h.update(label);
    let key: [u8; 32] = h.finalize().into();
    Seed::with_label(key, label.to_vec())
}

/// Uniform value in `[0, 1)` built from the top 53 bits of the PRF output.
#[inline]
pub fn unit_hash(seed: &Seed, element: &[u8], index: u64) -> f64 {
    (seed.hash64(element, index) >> 11) as f64 * TWO_POW_NEG_53
}

/// Split of one 64-bit PRF word into `bin | rank | stored` fields, taken from
/// the most significant end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitChunk {
    bin_bits: u32,
    rank_bits: u32,
    store_bits: u32,
}

/// One decoded chunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub bin: u64,
    pub rank: u64,
    pub stored: u64,
}

impl BitChunk {
    pub fn new(bin_bits: u32, rank_bits: u32, store_bits: u32) -> Result<Self> {
        let total = bin_bits + rank_bits + store_bits;
        if total > 64 {
            return Err(Error::LayoutOverflow(total));
        }
        Ok(BitChunk {
            bin_bits,
            rank_bits,
            store_bits,
        })
    }

    pub fn bin_bits(&self) -> u32 {
        self.bin_bits
    }

    pub fn rank_bits(&self) -> u32 {
        self.rank_bits
    }

    pub fn store_bits(&self) -> u32 {
        self.store_bits
    }

    #[inline]
    pub fn split(&self, word: u64) -> Chunk {
        Chunk {
            bin: field(word, 0, self.bin_bits),
            rank: field(word, self.bin_bits, self.rank_bits),
            stored: field(word, self.bin_bits + self.rank_bits, self.store_bits),
        }
    }
}

#[inline]
fn field(word: u64, offset: u32, width: u32) -> u64 {
    if width == 0 {
        return 0;
    }
    (word << offset) >> (64 - width)
}

/// Chunk `i` of an element's stream. Depends only on `(seed, element, i)`.
#[inline]
pub fn chunk_at(seed: &Seed, element: &[u8], layout: &BitChunk, i: u64) -> Chunk {
    layout.split(seed.hash64(element, i))
}

/// The first `count` chunks of an element's stream.
pub fn chunk_stream<'a>(
    seed: &'a Seed,
    element: &'a [u8],
    layout: BitChunk,
    count: u64,
) -> impl Iterator<Item = Chunk> + 'a {
    (0..count).map(move |i| chunk_at(seed, element, &layout, i))
}
