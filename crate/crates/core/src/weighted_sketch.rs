//! Multi-scale weighted sketches and the threshold-aware estimator.
//!
//! A set is scaled by `t` consecutive powers `β^-i` (with `β = α^(1/τ)`)
//! starting at the first scale whose scaled norm reaches `L·k/(t-τ)`. Each
//! scaled set is rounded to an unweighted set and sketched into `k/(t-τ)`
//! bins. Two sketches are compared on the scales they share; when they share
//! none, the norm ratio alone proves the similarity is below `α`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bin_sketch::{unwtd_estimate, unwtd_sketch_counted, BinSketch, BitWidth, SketchStats};
use crate::codec::{put_string, Reader};
use crate::error::{Error, Result};
use crate::hashing::{Seed, PRF_ID};
use crate::reduction::{reduce_counted, DependentThresholds, ReductionVariant};
use crate::set::{EstimateResult, UnweightedSet, WeightedSet};

pub const MAGIC: &[u8; 4] = b"WJSK";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SketchParams {
    /// Interestingness threshold in (0, 1).
    pub alpha: f64,
    /// Comparable samples for two sets whose norms are within a factor α.
    pub k: usize,
    pub tau: u32,
    /// Number of scales kept per set.
    pub t: u32,
    /// Expected items per bin at the first scale.
    #[serde(rename = "l")]
    pub redundancy: u32,
    #[serde(rename = "b")]
    pub width: BitWidth,
    pub variant: ReductionVariant,
}

impl Default for SketchParams {
    fn default() -> Self {
        SketchParams {
            alpha: 0.5,
            k: 256,
            tau: 1,
            t: 3,
            redundancy: 5,
            width: BitWidth::Bits(2),
            variant: ReductionVariant::Dependent,
        }
    }
}

impl SketchParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must be in (0, 1), got {}", self.alpha));
        }
        if self.t < 2 {
            return bad(format!("t must be at least 2, got {}", self.t));
        }
        if self.tau < 1 || self.tau >= self.t {
            return bad(format!("tau must be in [1, t), got {}", self.tau));
        }
        if self.redundancy == 0 {
            return bad("L must be positive".into());
        }
        let shared = (self.t - self.tau) as usize;
        if self.k == 0 || !self.k.is_multiple_of(shared) || !(self.k / shared).is_power_of_two() {
            return bad(format!(
                "k / (t - tau) must be a power of two, got k={} t-tau={shared}",
                self.k
            ));
        }
        self.width.validate()?;
        let beta = self.beta();
        if !(beta > 0.0 && beta < 1.0) {
            return bad(format!("beta = alpha^(1/tau) = {beta} is not in (0, 1)"));
        }
        Ok(())
    }

    /// `α^(1/τ)`, evaluated as `exp(ln α / τ)`; exactly `α` when `τ = 1`.
    pub fn beta(&self) -> f64 {
        if self.tau == 1 {
            self.alpha
        } else {
            (self.alpha.ln() / self.tau as f64).exp()
        }
    }

    /// Stored bins per scale, `k / (t - τ)`.
    pub fn bins_per_scale(&self) -> usize {
        self.k / (self.t - self.tau) as usize
    }

    /// Lower end of the first-scale norm interval, `L·k / (t - τ)`.
    pub fn target_norm(&self) -> f64 {
        self.redundancy as f64 * self.k as f64 / (self.t - self.tau) as f64
    }

    /// `β^-i`, built by repeated multiplication so every party gets the same bits.
    pub fn scale_factor(&self, i: i32) -> f64 {
        let beta = self.beta();
        let step = if i >= 0 { 1.0 / beta } else { beta };
        let mut f = 1.0;
        for _ in 0..i.unsigned_abs() {
            f *= step;
        }
        f
    }
}

/// Index of the first scale: the smallest `s` with `β^-s · norm ≥ L·k/(t-τ)`,
/// so the scaled norm lies in `[L·k/(t-τ), β^-1 · L·k/(t-τ))`.
pub fn first_scale(w_norm: f64, params: &SketchParams) -> Result<i32> {
    params.validate()?;
    if !(w_norm.is_finite() && w_norm > 0.0) {
        return Err(Error::InvalidParams(format!(
            "norm must be finite and > 0, got {w_norm}"
        )));
    }
    let target = params.target_norm();
    let guess = ((target / w_norm).ln() / (1.0 / params.beta()).ln()).ceil();
    let mut s = guess.clamp(i32::MIN as f64 / 2.0, i32::MAX as f64 / 2.0) as i32;
    // The closed form can be off by one in floating point; settle it with the
    // same factors the sketch will use.
    while params.scale_factor(s) * w_norm < target {
        s += 1;
    }
    while params.scale_factor(s - 1) * w_norm >= target {
        s -= 1;
    }
    Ok(s)
}

/// Hash evaluations spent building one weighted sketch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HashStats {
    /// Rounding coins.
    pub rounding: u64,
    /// One per unweighted item sketched.
    pub chunks: u64,
    /// Extra hashes spent on rank ties.
    pub tiebreaks: u64,
}

impl HashStats {
    pub fn total(&self) -> u64 {
        self.rounding + self.chunks + self.tiebreaks
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSketch {
    params: SketchParams,
    prf_id: String,
    scales: Vec<(i32, BinSketch)>,
}

pub fn compute_sketch(
    w: &WeightedSet,
    params: &SketchParams,
    master: &Seed,
) -> Result<WeightedSketch> {
    compute_sketch_counted(w, params, master, &mut HashStats::default())
}

pub fn compute_sketch_counted(
    w: &WeightedSet,
    params: &SketchParams,
    master: &Seed,
    stats: &mut HashStats,
) -> Result<WeightedSketch> {
    let reduced = reduce_scales(w, params, master, &mut stats.rounding)?;
    let bins = params.bins_per_scale();
    let per_scale: Vec<Result<(i32, BinSketch, SketchStats)>> = reduced
        .into_par_iter()
        .map(|(i, set)| {
            let seed = master.derive(format!("sketch/{i}"));
            let mut st = SketchStats::default();
            let sk = match params.width {
                BitWidth::Half => {
                    unwtd_sketch_counted(&set, 2 * bins, BitWidth::Bits(1), &seed, &mut st)?
                        .xor_fold()?
                }
                width => unwtd_sketch_counted(&set, bins, width, &seed, &mut st)?,
            };
            Ok((i, sk, st))
        })
        .collect();

    let mut scales = Vec::with_capacity(per_scale.len());
    for r in per_scale {
        let (i, sk, st) = r?;
        stats.chunks += st.chunks;
        stats.tiebreaks += st.tiebreaks;
        scales.push((i, sk));
    }
    Ok(WeightedSketch {
        params: *params,
        prf_id: PRF_ID.to_string(),
        scales,
    })
}

/// The rounded unweighted set at each of the `t` scales of `w`, using the
/// same seeds as [`compute_sketch`]. Rounding hash evaluations are added to
/// `rounding_hashes`.
///
/// Dependent mode hashes each element once under `"round"` and reuses the
/// threshold at every scale; independent mode uses `"round/i"` per scale.
pub fn reduce_scales(
    w: &WeightedSet,
    params: &SketchParams,
    master: &Seed,
    rounding_hashes: &mut u64,
) -> Result<Vec<(i32, UnweightedSet)>> {
    params.validate()?;
    if w.is_empty() {
        return Err(Error::EmptyInput);
    }
    let s = first_scale(w.l1_norm(), params)?;
    let thresholds = match params.variant {
        ReductionVariant::Dependent => {
            *rounding_hashes += w.len() as u64;
            Some(DependentThresholds::new(w, &master.derive("round")))
        }
        ReductionVariant::Independent => None,
    };
    let mut out = Vec::with_capacity(params.t as usize);
    for i in s..s + params.t as i32 {
        let factor = params.scale_factor(i);
        if !factor.is_finite() || factor == 0.0 {
            return Err(Error::InvalidParams(format!(
                "scale factor for scale {i} is out of range"
            )));
        }
        let set = match &thresholds {
            Some(th) => th.reduce_scaled(w, factor)?,
            None => reduce_counted(
                &w.scaled(factor)?,
                &master.derive(format!("round/{i}")),
                ReductionVariant::Independent,
                rounding_hashes,
            )?,
        };
        out.push((i, set));
    }
    Ok(out)
}

/// Mean of the per-scale estimates over common scales, or `BelowThreshold`
/// when the sketches share no scale.
pub fn estimate_jaccard(sk1: &WeightedSketch, sk2: &WeightedSketch) -> Result<EstimateResult> {
    if sk1.params != sk2.params {
        return Err(Error::Incomparable(format!(
            "parameters differ: {:?} vs {:?}",
            sk1.params, sk2.params
        )));
    }
    if sk1.prf_id != sk2.prf_id {
        return Err(Error::Incomparable(format!(
            "PRF {} vs {}",
            sk1.prf_id, sk2.prf_id
        )));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (i, a) in &sk1.scales {
        if let Some((_, b)) = sk2.scales.iter().find(|(j, _)| j == i) {
            sum += unwtd_estimate(a, b)?;
            used += 1;
        }
    }
    if used == 0 {
        return Ok(EstimateResult::BelowThreshold {
            alpha: sk1.params.alpha,
        });
    }
    Ok(EstimateResult::Estimate {
        value: (sum / used as f64).clamp(0.0, 1.0),
        scales_used: used,
    })
}

impl WeightedSketch {
    pub fn params(&self) -> &SketchParams {
        &self.params
    }

    pub fn prf_id(&self) -> &str {
        &self.prf_id
    }

    pub fn scales(&self) -> &[(i32, BinSketch)] {
        &self.scales
    }

    pub fn first_scale(&self) -> i32 {
        self.scales[0].0
    }

    /// Same sketch with every per-scale empty mask dropped.
    pub fn to_compact(&self) -> WeightedSketch {
        WeightedSketch {
            scales: self
                .scales
                .iter()
                .map(|(i, s)| (*i, s.to_compact()))
                .collect(),
            ..self.clone()
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&p.alpha.to_le_bytes());
        out.extend_from_slice(&(p.k as u32).to_le_bytes());
        out.extend_from_slice(&p.tau.to_le_bytes());
        out.extend_from_slice(&p.t.to_le_bytes());
        out.extend_from_slice(&p.redundancy.to_le_bytes());
        out.push(p.width.code());
        out.push(match p.variant {
            ReductionVariant::Independent => 0,
            ReductionVariant::Dependent => 1,
        });
        put_string(&mut out, &self.prf_id);
        out.extend_from_slice(&(self.scales.len() as u32).to_le_bytes());
        for (i, sk) in &self.scales {
            out.extend_from_slice(&i.to_le_bytes());
            sk.write_to(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<WeightedSketch> {
        let mut r = Reader::new(bytes);
        r.expect_magic(MAGIC)?;
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::Decode(format!("unsupported WJSK version {version}")));
        }
        let alpha = r.f64()?;
        let k = r.u32()? as usize;
        let tau = r.u32()?;
        let t = r.u32()?;
        let redundancy = r.u32()?;
        let width = BitWidth::from_code(r.u8()?).map_err(|e| Error::Decode(e.to_string()))?;
        let variant = match r.u8()? {
            0 => ReductionVariant::Independent,
            1 => ReductionVariant::Dependent,
            v => return Err(Error::Decode(format!("unknown reduction variant {v}"))),
        };
        let params = SketchParams {
            alpha,
            k,
            tau,
            t,
            redundancy,
            width,
            variant,
        };
        params
            .validate()
            .map_err(|e| Error::Decode(e.to_string()))?;
        let prf_id = r.string()?;
        let count = r.u32()?;
        if count != t {
            return Err(Error::Decode(format!("expected {t} scales, found {count}")));
        }
        let mut scales = Vec::with_capacity(count as usize);
        for n in 0..count {
            let i = r.i32()?;
            let sk = BinSketch::read_from(&mut r)?;
            if let Some(&(first, _)) = scales.first() {
                if i != first + n as i32 {
                    return Err(Error::Decode("scale indices are not consecutive".into()));
                }
            }
            if sk.len() != params.bins_per_scale() || sk.width() != width || sk.prf_id() != prf_id {
                return Err(Error::Decode(format!(
                    "scale {i} does not match the header"
                )));
            }
            scales.push((i, sk));
        }
        r.finish()?;
        Ok(WeightedSketch {
            params,
            prf_id,
            scales,
        })
    }
}
