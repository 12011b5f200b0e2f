//! Weighted Jaccard similarity sketches.
//!
//! A weighted set is first reduced to a family of unweighted sets at
//! geometrically spaced scales by randomized rounding, and each reduced set is
//! summarized by a one-permutation binned minhash sketch with `b`-bit
//! fingerprints. Estimates average the per-scale unweighted estimates over the
//! scales two sketches share.
//!
//! ```
//! use wjacc_core::{compute_sketch, estimate_jaccard, Seed, SketchParams, WeightedSet};
//!
//! let a = WeightedSet::from_entries([("x", 3.0), ("y", 1.5)]).unwrap();
//! let b = WeightedSet::from_entries([("x", 2.0), ("y", 1.5), ("z", 0.5)]).unwrap();
//! let params = SketchParams::default();
//! let seed = Seed::from_u64(1);
//! let est = estimate_jaccard(
//!     &compute_sketch(&a, &params, &seed).unwrap(),
//!     &compute_sketch(&b, &params, &seed).unwrap(),
//! )
//! .unwrap();
//! assert!(est.value().is_some());
//! ```

pub mod baseline;
pub mod bin_sketch;
mod codec;
pub mod error;
pub mod harness;
pub mod hashing;
pub mod reduction;
pub mod set;
pub mod weighted_sketch;

pub use baseline::{baseline_estimate, baseline_sketch, BaselineSketch};
pub use bin_sketch::{unwtd_estimate, unwtd_sketch, xor_fold, BinSketch, BitWidth};
pub use error::{Error, Result};
pub use hashing::{derive_seed, unit_hash, BitChunk, Seed, PRF_ID};
pub use reduction::{reduce, reduce_to_unwtd, reduce_to_unwtd_dep, ReductionVariant};
pub use set::{
    l1_norm, unweighted_jaccard, weighted_jaccard, ElementId, EstimateResult, UnweightedSet,
    WeightedSet,
};
pub use weighted_sketch::{compute_sketch, estimate_jaccard, SketchParams, WeightedSketch};
