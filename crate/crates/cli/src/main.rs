//! `daarep`: differential abundance runs and replicability benchmarks.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure.

mod bench;
mod input;
mod output;

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use daa_core::corpus::{counts_to_tsv, filter_prevalence, metadata_to_tsv, prepare_covariates, SeqType};
use daa_core::methods::{results_to_tsv, run_method, Direction};
use daa_core::metrics::{parse_metrics_tsv, rank_methods, rank_table_to_tsv, sign_accuracy, Fraction, RankWeights};
use daa_core::synth::{gen_absolute_truth, gen_dataset, Bloom, SynthParams, TruthRecord};
use log::warn;
use serde::Serialize;

use bench::{CrossArgs, SplitArgs};
use input::{digest, InputArgs, InputDigest, Manifest, ManifestEntry};
use output::{file_stem, Collector};

#[derive(Parser)]
#[command(name = "daarep", version, about = "Differential abundance analysis and replicability benchmarks")]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one dataset.
    Daa(DaaArgs),
    /// Benchmark methods on random half-splits of each dataset.
    SplitBench(SplitArgs),
    /// Benchmark methods on pairs of independent studies.
    CrossBench(CrossArgs),
    /// Generate synthetic datasets with known truth.
    Synth(SynthArgs),
    /// Rank methods from metrics tables of earlier benchmark runs.
    Rank(RankArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct DaaArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "orm")]
    method: String,
    #[arg(long, default_value = "tss")]
    normalization: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Recorded in results.json; the analysis itself is not random.
    #[arg(long)]
    seed: Option<u64>,
    /// Drop taxa present in fewer than this fraction of samples first.
    #[arg(long, default_value_t = 0.0)]
    prevalence: f64,
    /// Covariates missing in more than this fraction of samples are dropped.
    #[arg(long, default_value_t = 0.10)]
    max_missing: f64,
    /// truth.json from `synth`; adds a sign-accuracy audit to results.json.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Serialize)]
struct DaaRecord<'a> {
    command: &'static str,
    version: &'static str,
    method: String,
    normalization: String,
    alpha: f64,
    seed: Option<u64>,
    config: &'a DaaArgs,
    inputs: Vec<InputDigest>,
    n_taxa: usize,
    n_applicable: usize,
    n_significant: usize,
    sign_accuracy: Option<Fraction>,
    warnings: Vec<String>,
}

fn cmd_daa(args: &DaaArgs) -> Result<()> {
    let specs = bench::parse_methods(&args.method, &args.normalization)?;
    let [spec] = specs.as_slice() else {
        bail!(daa_core::Error::Invalid("daa runs exactly one method".into()));
    };
    if !(0.0..=1.0).contains(&args.prevalence) {
        bail!(daa_core::Error::Invalid(format!("--prevalence must lie in [0, 1], got {}", args.prevalence)));
    }
    let loaded = args.input.load()?;
    let [ds] = loaded.datasets.as_slice() else {
        bail!(daa_core::Error::Invalid("daa takes exactly one dataset".into()));
    };
    let mut warnings = loaded.warnings.clone();
    let before = ds.warnings.len();
    let mut ds = prepare_covariates(&filter_prevalence(ds, args.prevalence), args.max_missing);
    let study = ds.descriptor.study_id.clone();
    warnings.extend(ds.warnings.iter().skip(before).map(|w| format!("{study}: {w}")));
    if !spec.method.accepts_covariates() && !ds.covariates().is_empty() {
        warnings.push(format!("{}: covariates ignored, the method cannot adjust for them", spec.label()));
        ds = ds.without_covariates();
    }
    let res = run_method::<f64>(&ds, spec, args.alpha)?;
    let mut inputs = loaded.digests.clone();
    let accuracy = match &args.truth {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let truth: TruthRecord = serde_json::from_str(&text)
                .map_err(daa_core::Error::from)
                .with_context(|| format!("parsing {}", path.display()))?;
            inputs.push(digest(path)?);
            let signs: HashMap<String, Direction> = truth
                .taxa
                .iter()
                .filter_map(|t| {
                    let sign = t.truth_sign.or((t.true_log_fold != 0.0).then(|| Direction::of(t.true_log_fold)));
                    sign.map(|s| (t.taxon_id.clone(), s))
                })
                .collect();
            Some(sign_accuracy(&res, &signs))
        }
        None => None,
    };
    for w in &warnings {
        warn!("{w}");
    }
    let mut out = Collector::default();
    out.text("results.tsv", results_to_tsv(&res));
    out.json(
        "results.json",
        &DaaRecord {
            command: "daa",
            version: env!("CARGO_PKG_VERSION"),
            method: spec.label(),
            normalization: spec.normalization.to_string(),
            alpha: args.alpha,
            seed: args.seed,
            config: args,
            inputs,
            n_taxa: res.results.len(),
            n_applicable: res.results.iter().filter(|r| r.applicable).count(),
            n_significant: res.significant().count(),
            sign_accuracy: accuracy,
            warnings,
        },
    )?;
    out.write_to(&args.out)
}

#[derive(Debug, Clone, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    taxa: usize,
    /// Samples per group.
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    affected: usize,
    /// Smallest |log2 fold| of affected taxa.
    #[arg(long, default_value_t = 1.0)]
    fold_min: f64,
    #[arg(long, default_value_t = 2.0)]
    fold_max: f64,
    /// Spread (natural log) of the baseline abundance profile.
    #[arg(long, default_value_t = 1.0)]
    base_sd: f64,
    /// Dirichlet-multinomial intra-class correlation.
    #[arg(long, default_value_t = 0.002)]
    overdispersion: f64,
    #[arg(long, default_value_t = 5_000)]
    lib_min: u64,
    #[arg(long, default_value_t = 50_000)]
    lib_max: u64,
    /// Random effect signs instead of mass-balanced ones.
    #[arg(long)]
    unbalanced: bool,
    /// Number of datasets; each gets its own random stream.
    #[arg(long, default_value_t = 1)]
    datasets: usize,
    #[arg(long, default_value = "synth")]
    study_id: String,
    #[arg(long, default_value = "synthetic")]
    condition: String,
    #[arg(long, default_value = "16S")]
    seq_type: String,
    #[arg(long)]
    seed: u64,
    /// Also write absolute abundances and truth signs.
    #[arg(long)]
    absolute: bool,
    /// Multiply one taxon by this fold in cases (implies --absolute).
    #[arg(long)]
    bloom_fold: Option<f64>,
    /// Zero-based index of the bloom taxon.
    #[arg(long, default_value_t = 0)]
    bloom_taxon: usize,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if args.datasets == 0 {
        bail!(daa_core::Error::Invalid("--datasets must be at least 1".into()));
    }
    let seq_type: SeqType = args.seq_type.parse()?;
    let absolute = args.absolute || args.bloom_fold.is_some();
    let bloom = Bloom {
        taxon: args.bloom_taxon,
        fold: args.bloom_fold.unwrap_or(1.0),
    };
    let mut out = Collector::default();
    let mut manifest = Manifest::default();
    for i in 0..args.datasets {
        let study_id = if args.datasets == 1 {
            args.study_id.clone()
        } else {
            format!("{}{:0w$}", args.study_id, i + 1, w = args.datasets.to_string().len().max(2))
        };
        let params = SynthParams {
            n_taxa: args.taxa,
            n_per_group: args.n,
            n_affected: args.affected,
            log_fold_range: (args.fold_min, args.fold_max),
            base_log_sd: args.base_sd,
            overdispersion: args.overdispersion,
            library_size_range: (args.lib_min, args.lib_max),
            balanced_effects: !args.unbalanced,
            study_id: study_id.clone(),
            condition: args.condition.clone(),
            seq_type,
        };
        let prefix = if args.datasets == 1 { String::new() } else { format!("{}/", file_stem(&study_id)) };
        let (ds, truth) = if absolute {
            let (abs, ds, truth) = gen_absolute_truth(&params, bloom, args.seed, i as u64)?;
            out.text(format!("{prefix}absolute.tsv"), abs.to_tsv());
            (ds, truth)
        } else {
            gen_dataset(&params, args.seed, i as u64)?
        };
        out.text(format!("{prefix}counts.tsv"), counts_to_tsv(ds.table()));
        out.text(format!("{prefix}meta.tsv"), metadata_to_tsv(&ds));
        out.json(format!("{prefix}truth.json"), &truth)?;
        manifest.datasets.push(ManifestEntry {
            study_id,
            condition: args.condition.clone(),
            seq_type,
            counts: format!("{prefix}counts.tsv").into(),
            meta: format!("{prefix}meta.tsv").into(),
        });
    }
    out.json("manifest.json", &manifest)?;
    out.write_to(&args.out)
}

#[derive(Debug, Clone, Args, Serialize)]
struct RankArgs {
    /// metrics.tsv files from benchmark runs.
    #[arg(long, num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
    /// Weights for conflict, replication, opposite, ci and nhits.
    #[arg(long, default_value = "2,1,0.5,0.5,1")]
    weights: String,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

fn cmd_rank(args: &RankArgs) -> Result<()> {
    let w: Vec<f64> = args
        .weights
        .split(',')
        .map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0))
        .collect::<Option<_>>()
        .ok_or_else(|| daa_core::Error::Invalid(format!("invalid weights '{}'", args.weights)))?;
    let [conflict, replication, opposite, ci, nhits] = w[..] else {
        bail!(daa_core::Error::Invalid("--weights needs five values".into()));
    };
    let mut reports = Vec::new();
    let mut inputs = Vec::new();
    for path in &args.reports {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        reports.extend(parse_metrics_tsv(&text, &path.display().to_string())?);
        inputs.push(digest(path)?);
    }
    let table = rank_methods(&reports, RankWeights { conflict, replication, opposite, ci, nhits })?;
    #[derive(Serialize)]
    struct RankRecord<'a> {
        command: &'static str,
        version: &'static str,
        config: &'a RankArgs,
        inputs: Vec<InputDigest>,
        table: daa_core::metrics::RankTable,
    }
    let mut out = Collector::default();
    out.text("rank.tsv", rank_table_to_tsv(&table));
    out.json(
        "rank.json",
        &RankRecord {
            command: "rank",
            version: env!("CARGO_PKG_VERSION"),
            config: args,
            inputs,
            table,
        },
    )?;
    out.write_to(&args.out)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<daa_core::Error>())
        .any(|e| !e.is_input_error());
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match &cli.command {
        Command::Daa(a) => cmd_daa(a),
        Command::SplitBench(a) => bench::split_bench(a),
        Command::CrossBench(a) => bench::cross_bench(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Rank(a) => cmd_rank(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
