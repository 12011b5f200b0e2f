//! Synthetic accuracy experiments.
//!
//! Pairs of weighted sets are generated at controlled weighted Jaccard
//! levels, sketched with every configured `(k, b)` and method, and the error
//! against the exact value is summarized per cell.
//!
//! Seeds are derived from the master seed per `(target, trial)`, so results
//! are identical whatever order or thread count the trials run on.

use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_estimate, baseline_sketch};
use crate::bin_sketch::BitWidth;
use crate::error::{Error, Result};
use crate::hashing::Seed;
use crate::reduction::ReductionVariant;
use crate::set::{unweighted_jaccard, weighted_jaccard, EstimateResult, WeightedSet};
use crate::weighted_sketch::{compute_sketch, estimate_jaccard, reduce_scales, SketchParams};

/// Mean of the exponential base weights.
pub const DEFAULT_WEIGHT_MEAN: f64 = 10.0;
/// Generated pairs land within this distance of the requested Jaccard value.
pub const TARGET_TOLERANCE: f64 = 0.005;

const MAX_BRACKET_STEPS: usize = 200;
const MAX_BISECTION_STEPS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Full sketch pipeline.
    Wjacc,
    /// Rounding only; Jaccard of the rounded sets computed exactly.
    WjaccExactReduction,
    /// Replication minhash at a fine quantum.
    Baseline,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Wjacc => "wjacc",
            Method::WjaccExactReduction => "wjacc-exact-reduction",
            Method::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub jaccard_targets: Vec<f64>,
    pub k_values: Vec<usize>,
    pub b_values: Vec<BitWidth>,
    pub trials: usize,
    /// Elements per generated set.
    #[serde(alias = "n")]
    pub set_size: usize,
    /// Master seed, hex.
    #[serde(alias = "master_seed")]
    pub seed: String,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub tau: u32,
    pub t: u32,
    pub l: u32,
    pub variant: ReductionVariant,
    pub weight_mean: f64,
    /// Baseline quantum is `max(|w1|, |w2|) / (baseline_quantum_divisor · n)`.
    pub baseline_quantum_divisor: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            jaccard_targets: vec![0.95, 0.90, 0.85, 0.80, 0.70, 0.65, 0.60, 0.55, 0.50, 0.40],
            k_values: vec![64, 128, 256, 512],
            b_values: vec![
                BitWidth::Full,
                BitWidth::Bits(2),
                BitWidth::Bits(1),
                BitWidth::Half,
            ],
            trials: 200,
            set_size: 1000,
            seed: "0".into(),
            methods: vec![Method::Wjacc, Method::WjaccExactReduction],
            alpha: 0.5,
            tau: 1,
            t: 3,
            l: 5,
            variant: ReductionVariant::Dependent,
            weight_mean: DEFAULT_WEIGHT_MEAN,
            baseline_quantum_divisor: 1000.0,
        }
    }
}

impl ExperimentConfig {
    pub fn master_seed(&self) -> Result<Seed> {
        Seed::from_hex(&self.seed)
    }

    /// Sketch parameters for one `(k, b)` cell.
    pub fn params(&self, k: usize, width: BitWidth) -> SketchParams {
        SketchParams {
            alpha: self.alpha,
            k,
            tau: self.tau,
            t: self.t,
            redundancy: self.l,
            width,
            variant: self.variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.set_size < 2 {
            return bad("set_size must be >= 2".into());
        }
        if let Some(t) = self
            .jaccard_targets
            .iter()
            .find(|&&t| !(t > 0.0 && t < 1.0))
        {
            return bad(format!("jaccard target {t} is outside (0, 1)"));
        }
        if !(self.weight_mean.is_finite() && self.weight_mean > 0.0) {
            return bad("weight_mean must be > 0".into());
        }
        if !(self.baseline_quantum_divisor.is_finite() && self.baseline_quantum_divisor > 0.0) {
            return bad("baseline_quantum_divisor must be > 0".into());
        }
        self.master_seed()?;
        for &k in &self.k_values {
            for &b in &self.b_values {
                self.params(k, b).validate()?;
            }
        }
        Ok(())
    }
}

/// A generated pair and its exact weighted Jaccard similarity.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedPair {
    pub w1: WeightedSet,
    pub w2: WeightedSet,
    pub achieved: f64,
}

/// Generates a pair whose exact weighted Jaccard is within 0.005 of `target_j`.
///
/// Base weights are exponential with mean 10. A random subset of elements is
/// moved: "up" elements get weight `w(1 + λu)`, "down" elements `w(1 - λu)`
/// (dropped at zero), with `u ~ U(0, 1]`. Similarity falls monotonically in
/// `λ`, which is found by bisection.
pub fn gen_pair(target_j: f64, n: usize, seed: &Seed) -> Result<GeneratedPair> {
    gen_pair_with_mean(target_j, n, DEFAULT_WEIGHT_MEAN, seed)
}

pub fn gen_pair_with_mean(
    target_j: f64,
    n: usize,
    weight_mean: f64,
    seed: &Seed,
) -> Result<GeneratedPair> {
    if !(target_j > 0.0 && target_j < 1.0) {
        return Err(Error::InvalidParams(format!(
            "target {target_j} is outside (0, 1)"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidParams(
            "pairs need at least 2 elements".into(),
        ));
    }
    let mut rng = ChaCha8Rng::from_seed(*seed.derive("gen_pair").key());
    let exp = Exp::new(1.0 / weight_mean).map_err(|e| Error::InvalidParams(e.to_string()))?;

    let base: Vec<f64> = (0..n)
        .map(|_| loop {
            let w: f64 = exp.sample(&mut rng);
            if w > 0.0 {
                break w;
            }
        })
        .collect();
    // direction: 0 unmoved, +1 up, -1 down
    let mut dir: Vec<i8> = (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                0
            } else if rng.random_bool(0.5) {
                1
            } else {
                -1
            }
        })
        .collect();
    if !dir.contains(&1) {
        let i = rng.random_range(0..n);
        dir[i] = 1;
    }
    let amount: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();

    let moved = |i: usize, lambda: f64| -> f64 {
        match dir[i] {
            1 => base[i] * (1.0 + lambda * amount[i]),
            -1 => (base[i] * (1.0 - lambda * amount[i])).max(0.0),
            _ => base[i],
        }
    };
    let jaccard_at = |lambda: f64| -> f64 {
        let (mut lo, mut hi) = (0.0, 0.0);
        for (i, &b) in base.iter().enumerate() {
            let m = moved(i, lambda);
            lo += b.min(m);
            hi += b.max(m);
        }
        lo / hi
    };

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut steps = 0;
    while jaccard_at(hi) > target_j {
        lo = hi;
        hi *= 2.0;
        steps += 1;
        if steps > MAX_BRACKET_STEPS {
            return Err(Error::GenerationFailed {
                target: target_j,
                achieved: jaccard_at(hi),
            });
        }
    }
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if jaccard_at(mid) > target_j {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = if (jaccard_at(lo) - target_j).abs() <= (jaccard_at(hi) - target_j).abs() {
        lo
    } else {
        hi
    };

    let name = |i: usize| format!("e{i}");
    let w1 = WeightedSet::from_entries((0..n).map(|i| (name(i), base[i])))?;
    let w2 = WeightedSet::from_entries(
        (0..n)
            .map(|i| (name(i), moved(i, lambda)))
            .filter(|&(_, w)| w > 0.0),
    )?;
    let achieved = weighted_jaccard(&w1, &w2);
    if (achieved - target_j).abs() > TARGET_TOLERANCE {
        return Err(Error::GenerationFailed {
            target: target_j,
            achieved,
        });
    }
    Ok(GeneratedPair { w1, w2, achieved })
}

/// Summary of one `(target, k, b, method)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub target_j: f64,
    /// Mean exact similarity of the pairs that produced an estimate.
    pub achieved_j_mean: f64,
    pub method: Method,
    pub k: usize,
    pub b: BitWidth,
    pub mean_abs_error: f64,
    /// Sample standard deviation of `estimate - exact`.
    pub std_dev: f64,
    /// Trials that produced an estimate.
    pub trials: usize,
    pub mean_estimate: f64,
    pub l: u32,
    /// Trials reported as below the threshold (excluded from the error stats).
    pub below_threshold: usize,
    /// Trials whose pair could not be generated.
    pub failures: usize,
}

impl ResultRow {
    /// Standard error of the mean estimate.
    pub fn std_error(&self) -> f64 {
        if self.trials == 0 {
            f64::NAN
        } else {
            self.std_dev / (self.trials as f64).sqrt()
        }
    }
}

pub const CSV_HEADER: &str =
    "target_j,achieved_j_mean,method,k,b,mean_abs_error,std_dev,trials,mean_estimate,l,below_threshold,failures";

/// Outcome of one trial for one method.
#[derive(Clone, Copy, Debug)]
enum Outcome {
    Estimate { estimate: f64, exact: f64 },
    Below,
    Failed,
}

fn summarize(
    target: f64,
    method: Method,
    k: usize,
    b: BitWidth,
    l: u32,
    outcomes: &[Outcome],
) -> ResultRow {
    let mut errs = Vec::new();
    let mut exact_sum = 0.0;
    let mut est_sum = 0.0;
    let mut below = 0;
    let mut failures = 0;
    for o in outcomes {
        match *o {
            Outcome::Estimate { estimate, exact } => {
                errs.push(estimate - exact);
                exact_sum += exact;
                est_sum += estimate;
            }
            Outcome::Below => below += 1,
            Outcome::Failed => failures += 1,
        }
    }
    let n = errs.len();
    let nf = n as f64;
    let mean_err = errs.iter().sum::<f64>() / nf;
    let std_dev = if n > 1 {
        (errs.iter().map(|e| (e - mean_err).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
    } else if n == 1 {
        0.0
    } else {
        f64::NAN
    };
    ResultRow {
        target_j: target,
        achieved_j_mean: exact_sum / nf,
        method,
        k,
        b,
        mean_abs_error: errs.iter().map(|e| e.abs()).sum::<f64>() / nf,
        std_dev,
        trials: n,
        mean_estimate: est_sum / nf,
        l,
        below_threshold: below,
        failures,
    }
}

fn exact_reduction_estimate(
    pair: &GeneratedPair,
    params: &SketchParams,
    seed: &Seed,
) -> Result<Option<f64>> {
    let r1 = reduce_scales(&pair.w1, params, seed, &mut 0)?;
    let r2 = reduce_scales(&pair.w2, params, seed, &mut 0)?;
    let mut sum = 0.0;
    let mut used = 0;
    for (i, s1) in &r1 {
        if let Some((_, s2)) = r2.iter().find(|(j, _)| j == i) {
            sum += unweighted_jaccard(s1, s2);
            used += 1;
        }
    }
    Ok((used > 0).then(|| sum / used as f64))
}

fn to_outcome(r: EstimateResult, exact: f64) -> Outcome {
    match r {
        EstimateResult::Estimate { value, .. } => Outcome::Estimate {
            estimate: value,
            exact,
        },
        EstimateResult::BelowThreshold { .. } => Outcome::Below,
    }
}

/// Runs every `(target, k, b, method)` cell. Rows are ordered by target
/// (descending), then `k` (ascending), then `b` and method in config order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let master = cfg.master_seed()?;
    let mut targets = cfg.jaccard_targets.clone();
    targets.sort_by(|a, b| b.total_cmp(a));
    let mut ks = cfg.k_values.clone();
    ks.sort_unstable();
    ks.dedup();

    let mut rows = Vec::new();
    for &target in &targets {
        let trials: Vec<(Option<GeneratedPair>, Seed)> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let pair_seed = master.derive(format!("pair/{target}/{trial}"));
                let sketch_seed = master.derive(format!("sketch/{target}/{trial}"));
                let pair =
                    gen_pair_with_mean(target, cfg.set_size, cfg.weight_mean, &pair_seed).ok();
                (pair, sketch_seed)
            })
            .collect();

        for &k in &ks {
            let run = |method: Method, width: BitWidth| -> Result<Vec<Outcome>> {
                let params = cfg.params(k, width);
                trials
                    .par_iter()
                    .map(|(pair, seed)| {
                        let Some(pair) = pair else {
                            return Ok(Outcome::Failed);
                        };
                        Ok(match method {
                            Method::Wjacc => {
                                let a = compute_sketch(&pair.w1, &params, seed)?;
                                let b = compute_sketch(&pair.w2, &params, seed)?;
                                to_outcome(estimate_jaccard(&a, &b)?, pair.achieved)
                            }
                            Method::WjaccExactReduction => {
                                match exact_reduction_estimate(pair, &params, seed)? {
                                    Some(estimate) => Outcome::Estimate {
                                        estimate,
                                        exact: pair.achieved,
                                    },
                                    None => Outcome::Below,
                                }
                            }
                            Method::Baseline => {
                                let w = pair.w1.l1_norm().max(pair.w2.l1_norm());
                                let q = w / (cfg.baseline_quantum_divisor * cfg.set_size as f64);
                                let a = baseline_sketch(&pair.w1, k, q, seed)?;
                                let b = baseline_sketch(&pair.w2, k, q, seed)?;
                                Outcome::Estimate {
                                    estimate: baseline_estimate(&a, &b)?,
                                    exact: pair.achieved,
                                }
                            }
                        })
                    })
                    .collect()
            };

            // Methods that ignore b are computed once per k.
            let mut shared: Vec<(Method, Vec<Outcome>)> = Vec::new();
            for &m in &cfg.methods {
                if m != Method::Wjacc && !shared.iter().any(|(x, _)| *x == m) {
                    shared.push((m, run(m, BitWidth::Full)?));
                }
            }
            for &b in &cfg.b_values {
                for &m in &cfg.methods {
                    let outcomes = if m == Method::Wjacc {
                        run(m, b)?
                    } else {
                        shared.iter().find(|(x, _)| *x == m).unwrap().1.clone()
                    };
                    rows.push(summarize(target, m, k, b, cfg.l, &outcomes));
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[ResultRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{},{},{},{:.6},{:.6},{},{:.6},{},{},{}",
            r.target_j,
            r.achieved_j_mean,
            r.method,
            r.k,
            r.b,
            r.mean_abs_error,
            r.std_dev,
            r.trials,
            r.mean_estimate,
            r.l,
            r.below_threshold,
            r.failures
        )?;
    }
    Ok(())
}

/// One `(cell, metric, value)` record per line, for plotting tools.
pub fn write_long<W: Write>(rows: &[ResultRow], mut out: W) -> io::Result<()> {
    writeln!(out, "target_j,method,k,b,l,metric,value")?;
    for r in rows {
        for (metric, value) in [
            ("achieved_j_mean", r.achieved_j_mean),
            ("mean_abs_error", r.mean_abs_error),
            ("std_dev", r.std_dev),
            ("mean_estimate", r.mean_estimate),
            ("trials", r.trials as f64),
        ] {
            writeln!(
                out,
                "{},{},{},{},{},{metric},{value}",
                r.target_j, r.method, r.k, r.b, r.l
            )?;
        }
    }
    Ok(())
}
