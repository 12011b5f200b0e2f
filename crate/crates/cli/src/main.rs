use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use wjacc_core::harness::{run_experiment, write_csv, write_long, ExperimentConfig};
use wjacc_core::{
    compute_sketch, estimate_jaccard, reduce, BitWidth, EstimateResult, ReductionVariant, Seed,
    SketchParams, WeightedSet, WeightedSketch,
};

#[derive(Parser, Debug)]
#[command(
    name = "wjacc",
    version,
    about = "Weighted Jaccard similarity sketches."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Round a weighted set to unweighted items, one `<element>\t<index>` per line.
    ///
    /// Uses the same rounding seed as scale 0 of `sketch`.
    Reduce {
        #[arg(long, default_value = "dependent")]
        variant: ReductionVariant,
        /// Master seed, up to 64 hex digits.
        #[arg(long)]
        seed: String,
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Sketch a weighted set (TSV `<element>\t<weight>`).
    Sketch {
        /// Comma-separated `key=value` list, e.g. `alpha=0.5,k=256,tau=1,t=3,l=5,b=2,variant=dependent`.
        /// Missing keys take their defaults.
        #[arg(long, default_value = "")]
        params: String,
        #[arg(long)]
        seed: String,
        /// Drop the empty-bin masks from the output.
        #[arg(long)]
        compact: bool,
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Estimate the weighted Jaccard similarity of two sketch files.
    Estimate { a: PathBuf, b: PathBuf },
    /// Run a synthetic accuracy experiment and write a CSV table.
    Experiment {
        /// TOML file with experiment settings; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<String>,
        /// Also write one `(cell, metric, value)` record per line.
        #[arg(long)]
        long: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Reduce {
            variant,
            seed,
            input,
            output,
        } => {
            let w = read_set(&input)?;
            let master = Seed::from_hex(&seed)?;
            let round = match variant {
                ReductionVariant::Dependent => master.derive("round"),
                ReductionVariant::Independent => master.derive("round/0"),
            };
            let set = reduce(&w, &round, variant)?;
            let mut out = open_output(output.as_deref())?;
            for (element, index) in set.pairs() {
                writeln!(out, "{element}\t{index}")?;
            }
            out.flush()?;
        }
        Command::Sketch {
            params,
            seed,
            compact,
            input,
            output,
        } => {
            let params = parse_params(&params)?;
            let w = read_set(&input)?;
            let mut sketch = compute_sketch(&w, &params, &Seed::from_hex(&seed)?)
                .with_context(|| format!("sketching {}", input.display()))?;
            if compact {
                sketch = sketch.to_compact();
            }
            fs::write(&output, sketch.to_bytes())
                .with_context(|| format!("writing {}", output.display()))?;
        }
        Command::Estimate { a, b } => {
            let (a, b) = (read_sketch(&a)?, read_sketch(&b)?);
            match estimate_jaccard(&a, &b)? {
                EstimateResult::Estimate { value, scales_used } => {
                    println!("{value:.6} scales_used={scales_used}")
                }
                EstimateResult::BelowThreshold { alpha } => println!("below-threshold {alpha}"),
            }
        }
        Command::Experiment {
            config,
            output,
            trials,
            seed,
            long,
        } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    toml::from_str::<ExperimentConfig>(&text)
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                None => ExperimentConfig::default(),
            };
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let rows = run_experiment(&cfg)?;
            let failures: usize = rows.iter().map(|r| r.failures).sum();
            if failures > 0 {
                eprintln!("warning: {failures} trial(s) failed to generate a pair");
            }
            write_csv(&rows, BufWriter::new(create(&output)?))?;
            if let Some(path) = long {
                write_long(&rows, BufWriter::new(create(&path)?))?;
            }
        }
    }
    Ok(())
}

fn parse_params(list: &str) -> Result<SketchParams> {
    let mut p = SketchParams::default();
    for pair in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((key, value)) = pair.split_once('=') else {
            bail!("expected key=value, got {pair:?}");
        };
        let value = value.trim();
        let ctx = || format!("bad value for {key}: {value:?}");
        match key.trim() {
            "alpha" => p.alpha = value.parse().with_context(ctx)?,
            "k" => p.k = value.parse().with_context(ctx)?,
            "tau" => p.tau = value.parse().with_context(ctx)?,
            "t" => p.t = value.parse().with_context(ctx)?,
            "l" | "L" => p.redundancy = value.parse().with_context(ctx)?,
            "b" => p.width = value.parse::<BitWidth>().with_context(ctx)?,
            "variant" => p.variant = value.parse::<ReductionVariant>().with_context(ctx)?,
            other => bail!("unknown parameter {other:?}"),
        }
    }
    p.validate()?;
    Ok(p)
}

fn read_set(path: &Path) -> Result<WeightedSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    WeightedSet::parse_tsv(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_sketch(path: &Path) -> Result<WeightedSketch> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    WeightedSketch::from_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}
