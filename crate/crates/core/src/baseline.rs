//! Classic replication minhash, used as an independent reference estimator.
//!
//! Each element `a` is replaced by `⌈w(a)/Q⌉` unit items `(a, 1..)`, and
//! sample `j` keeps the smallest 64-bit hash of any item under the child seed
//! `"sample/j"`. Cost is `k · Σ⌈w/Q⌉` hash evaluations.

use crate::error::{Error, Result};
use crate::hashing::Seed;
use crate::set::WeightedSet;

/// Largest replication count accepted per element.
pub const MAX_REPLICAS: f64 = (1u64 << 40) as f64;

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineSketch {
    samples: Vec<u64>,
    quantum: f64,
    seed_key: [u8; 32],
}

impl BaselineSketch {
    pub fn samples(&self) -> &[u64] {
        &self.samples
    }

    pub fn k(&self) -> usize {
        self.samples.len()
    }

    pub fn quantum(&self) -> f64 {
        self.quantum
    }
}

pub fn baseline_sketch(
    w: &WeightedSet,
    k: usize,
    quantum: f64,
    seed: &Seed,
) -> Result<BaselineSketch> {
    baseline_sketch_counted(w, k, quantum, seed, &mut 0)
}

pub fn baseline_sketch_counted(
    w: &WeightedSet,
    k: usize,
    quantum: f64,
    seed: &Seed,
    hashes: &mut u64,
) -> Result<BaselineSketch> {
    if k == 0 {
        return Err(Error::InvalidParams("baseline needs k >= 1".into()));
    }
    if !(quantum.is_finite() && quantum > 0.0) {
        return Err(Error::InvalidParams(format!(
            "quantum must be finite and > 0, got {quantum}"
        )));
    }
    let mut items = Vec::with_capacity(w.len());
    for (a, weight) in w.iter() {
        let reps = (weight / quantum).ceil();
        if reps.is_nan() || reps > MAX_REPLICAS {
            return Err(Error::InvalidParams(format!(
                "element {a} would need {reps} replicas at quantum {quantum}"
            )));
        }
        items.push((a.as_bytes(), reps as u64));
    }
    let samples = (0..k)
        .map(|j| {
            let sj = seed.derive(format!("sample/{j}"));
            let mut best = u64::MAX;
            for &(a, reps) in &items {
                for i in 1..=reps {
                    best = best.min(sj.hash64(a, i));
                }
                *hashes += reps;
            }
            best
        })
        .collect();
    Ok(BaselineSketch {
        samples,
        quantum,
        seed_key: *seed.key(),
    })
}

/// Fraction of samples whose minimum hashes coincide.
pub fn baseline_estimate(b1: &BaselineSketch, b2: &BaselineSketch) -> Result<f64> {
    if b1.k() != b2.k() || b1.quantum != b2.quantum || b1.seed_key != b2.seed_key {
        return Err(Error::Incomparable(
            "baseline sketches differ in k, quantum or seed".into(),
        ));
    }
    let equal = b1
        .samples
        .iter()
        .zip(&b2.samples)
        .filter(|(a, b)| a == b)
        .count();
    Ok(equal as f64 / b1.k() as f64)
}
