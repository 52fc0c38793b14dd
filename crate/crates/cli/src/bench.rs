//! Split-sample and cross-study benchmarks.

use std::collections::BTreeSet;

use anyhow::{bail, Result};
use daa_core::corpus::{filter_prevalence, prepare_covariates, Dataset, Group};
use daa_core::harness::{
    cross_pairs, evaluate_pair_alphas, outcomes_to_tsv, split_pairs, PairOptions, PairOutcome, PairSpec,
    SPLIT_MIN_PER_GROUP,
};
use daa_core::methods::{run_method, MethodSpec};
use daa_core::metrics::{
    compute_metrics, exploratory_counts, exploratory_counts_to_tsv, jaccard_mds, metrics_to_tsv, rank_methods,
    rank_table_to_tsv, weighted_aggregate, MetricsReport, RankWeights,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::input::{InputArgs, InputDigest};
use crate::output::{file_stem, Collector};

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated methods; `name/normalization` overrides --normalization.
    #[arg(long, alias = "method", default_value = "orm")]
    pub methods: String,
    #[arg(long, default_value = "tss")]
    pub normalization: String,
    /// Comma-separated significance levels.
    #[arg(long, alias = "alpha", default_value = "0.05")]
    pub alphas: String,
    /// Minimum prevalence for a taxon to be kept in each side of a pair.
    #[arg(long, default_value_t = 0.10)]
    pub prevalence: f64,
    /// Covariates missing in more than this fraction of samples are dropped.
    #[arg(long, default_value_t = 0.10)]
    pub max_missing: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: std::path::PathBuf,
}

pub fn parse_methods(list: &str, normalization: &str) -> Result<Vec<MethodSpec>> {
    let default_norm = normalization.parse()?;
    let mut specs: Vec<MethodSpec> = Vec::new();
    for token in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (name, norm) = match token.split_once('/') {
            Some((n, z)) => (n, z.parse()?),
            None => (token, default_norm),
        };
        let spec = MethodSpec::new(name.parse()?).with_normalization(norm);
        if specs.iter().any(|s| s.label() == spec.label()) {
            bail!(daa_core::Error::Invalid(format!("method '{}' listed twice", spec.label())));
        }
        specs.push(spec);
    }
    if specs.is_empty() {
        bail!(daa_core::Error::Invalid("no methods given".into()));
    }
    Ok(specs)
}

pub fn parse_alphas(list: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for t in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let a: f64 = t
            .parse()
            .map_err(|_| daa_core::Error::Invalid(format!("'{t}' is not a significance level")))?;
        if !(a > 0.0 && a < 1.0) {
            bail!(daa_core::Error::Invalid(format!("alpha {a} outside (0, 1)")));
        }
        if !out.contains(&a) {
            out.push(a);
        }
    }
    if out.is_empty() {
        bail!(daa_core::Error::Invalid("no significance level given".into()));
    }
    Ok(out)
}

impl BenchArgs {
    fn pair_options(&self) -> Result<PairOptions> {
        for (name, v) in [("prevalence", self.prevalence), ("max-missing", self.max_missing)] {
            if !(0.0..=1.0).contains(&v) {
                bail!(daa_core::Error::Invalid(format!("--{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(PairOptions {
            min_prevalence: self.prevalence,
            max_missing: self.max_missing,
        })
    }
}

/// Run-level audit record written next to the reports.
#[derive(Serialize)]
struct RunRecord<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a C,
    methods: Vec<String>,
    alphas: &'a [f64],
    inputs: &'a [InputDigest],
    n_pairs: usize,
    warnings: &'a [String],
}

/// Drops covariates for methods that cannot use them.
fn pair_for(pair: &PairSpec, spec: &MethodSpec) -> PairSpec {
    if spec.method.accepts_covariates()
        || (pair.exploratory.covariates().is_empty() && pair.validation.covariates().is_empty())
    {
        return pair.clone();
    }
    PairSpec {
        exploratory: pair.exploratory.without_covariates(),
        validation: pair.validation.without_covariates(),
        ..pair.clone()
    }
}

fn covariate_warnings(pairs: &[PairSpec], specs: &[MethodSpec]) -> Vec<String> {
    let with_cov = pairs
        .iter()
        .any(|p| !p.exploratory.covariates().is_empty() || !p.validation.covariates().is_empty());
    specs
        .iter()
        .filter(|s| with_cov && !s.method.accepts_covariates())
        .map(|s| format!("{}: covariates ignored, the method cannot adjust for them", s.label()))
        .collect()
}

/// Evaluates every (pair, method) unit in parallel; results come back in
/// pair-major, method-minor order with one outcome per α each.
fn evaluate(pairs: &[PairSpec], specs: &[MethodSpec], alphas: &[f64]) -> Result<Vec<Vec<Vec<PairOutcome>>>> {
    let units: Vec<(usize, usize)> = (0..pairs.len()).flat_map(|p| (0..specs.len()).map(move |m| (p, m))).collect();
    let flat: Vec<Vec<PairOutcome>> = units
        .par_iter()
        .map(|&(p, m)| evaluate_pair_alphas(&pair_for(&pairs[p], &specs[m]), &specs[m], alphas))
        .collect::<daa_core::Result<_>>()?;
    let mut it = flat.into_iter();
    Ok(pairs.iter().map(|_| specs.iter().map(|_| it.next().unwrap()).collect()).collect())
}

/// Significant `(study, taxon)` sets per method on the full datasets.
fn significance_sets(
    datasets: &[Dataset],
    specs: &[MethodSpec],
    alpha: f64,
    opts: &PairOptions,
) -> Result<Vec<(String, BTreeSet<(String, String)>)>> {
    let prepared: Vec<Dataset> = datasets
        .iter()
        .map(|d| prepare_covariates(&filter_prevalence(d, opts.min_prevalence), opts.max_missing))
        .collect();
    specs
        .par_iter()
        .map(|spec| {
            let mut set = BTreeSet::new();
            for ds in &prepared {
                let ds = if spec.method.accepts_covariates() { ds.clone() } else { ds.without_covariates() };
                let res = run_method::<f64>(&ds, spec, alpha)?;
                set.extend(res.significant().map(|r| (ds.descriptor.study_id.clone(), r.taxon_id.clone())));
            }
            Ok((spec.label(), set))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn write_common(
    out: &mut Collector,
    pairs: &[PairSpec],
    outcomes: &[Vec<Vec<PairOutcome>>],
    metrics: &[MetricsReport],
    specs: &[MethodSpec],
    datasets: &[Dataset],
    alphas: &[f64],
    opts: &PairOptions,
    warnings: &mut Vec<String>,
) -> Result<()> {
    for (pair, per_method) in pairs.iter().zip(outcomes) {
        let stem = file_stem(&pair.id);
        let flat: Vec<PairOutcome> = per_method.iter().flatten().cloned().collect();
        out.text(format!("pairs/{stem}.tsv"), outcomes_to_tsv(&flat));
        out.json(format!("pairs/{stem}.json"), &pair.manifest())?;
    }
    out.text("metrics.tsv", metrics_to_tsv(metrics));
    out.json("metrics.json", &metrics)?;
    if specs.len() >= 2 && !metrics.is_empty() {
        let table = rank_methods(metrics, RankWeights::default())?;
        out.text("rank.tsv", rank_table_to_tsv(&table));
        out.json("rank.json", &table)?;
    }
    if specs.len() >= 3 && !datasets.is_empty() {
        let alpha = alphas[0];
        let sets = significance_sets(datasets, specs, alpha, opts)?;
        match jaccard_mds(&sets, 2) {
            Ok(mds) => {
                #[derive(Serialize)]
                struct MdsOut<'a> {
                    alpha: f64,
                    #[serde(flatten)]
                    result: &'a daa_core::metrics::MdsResult,
                }
                out.json("mds.json", &MdsOut { alpha, result: &mds })?;
            }
            Err(e) => warnings.push(format!("scaling skipped: {e}")),
        }
    }
    Ok(())
}

fn group_sizes(ds: &Dataset) -> (usize, usize) {
    (ds.group_size(Group::Control), ds.group_size(Group::Case))
}

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct SplitArgs {
    #[command(flatten)]
    pub bench: BenchArgs,
    /// Random half-splits per dataset.
    #[arg(long, default_value_t = 5)]
    pub splits: usize,
    #[arg(long)]
    pub seed: u64,
    /// Treat datasets too small to split as errors instead of skipping them.
    #[arg(long)]
    pub strict: bool,
}

pub fn split_bench(args: &SplitArgs) -> Result<()> {
    let b = &args.bench;
    let specs = parse_methods(&b.methods, &b.normalization)?;
    let alphas = parse_alphas(&b.alphas)?;
    let opts = b.pair_options()?;
    if args.splits == 0 {
        bail!(daa_core::Error::Invalid("--splits must be at least 1".into()));
    }
    let loaded = b.input.load()?;
    let mut warnings = loaded.warnings.clone();
    let mut pairs = Vec::new();
    let mut used = Vec::new();
    for ds in &loaded.datasets {
        let (n0, n1) = group_sizes(ds);
        if n0.min(n1) < SPLIT_MIN_PER_GROUP {
            let msg = format!(
                "{}: {n0} control and {n1} case samples; splitting needs at least {SPLIT_MIN_PER_GROUP} per group",
                ds.descriptor.study_id
            );
            if args.strict {
                bail!(daa_core::Error::Invalid(msg));
            }
            warnings.push(format!("{msg}; skipped"));
            continue;
        }
        pairs.extend(split_pairs(ds, args.splits, args.seed, &opts)?);
        used.push(ds.clone());
    }
    if pairs.is_empty() {
        warnings.push("no dataset could be split; reports are empty".into());
    }
    warnings.extend(covariate_warnings(&pairs, &specs));
    info!("evaluating {} pairs with {} method(s)", pairs.len(), specs.len());
    let outcomes = evaluate(&pairs, &specs, &alphas)?;
    let mut metrics = Vec::new();
    for (m, spec) in specs.iter().enumerate() {
        for (a, _) in alphas.iter().enumerate() {
            let set: Vec<PairOutcome> = outcomes.iter().map(|per| per[m][a].clone()).collect();
            if !set.is_empty() {
                let mut r = compute_metrics(&set)?;
                r.method = spec.label();
                metrics.push(r);
            }
        }
    }
    let mut out = Collector::default();
    write_common(
        &mut out,
        &pairs,
        &outcomes,
        &metrics,
        &specs,
        &used,
        &alphas,
        &opts,
        &mut warnings,
    )?;
    finish(out, "split-bench", args, &b.out, &specs, &alphas, &loaded.digests, pairs.len(), &warnings)
}

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct CrossArgs {
    #[command(flatten)]
    pub bench: BenchArgs,
    /// Recorded in the run record; cross-study pairing is not random.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn cross_bench(args: &CrossArgs) -> Result<()> {
    let b = &args.bench;
    let specs = parse_methods(&b.methods, &b.normalization)?;
    let alphas = parse_alphas(&b.alphas)?;
    let opts = b.pair_options()?;
    let loaded = b.input.load()?;
    let mut warnings = loaded.warnings.clone();
    let (pairs, pair_warnings) = cross_pairs(&loaded.datasets, &loaded.exclusions, &opts);
    warnings.extend(pair_warnings);
    if pairs.is_empty() {
        warnings.push("no valid cross-study pairs; reports are empty".into());
    }
    warnings.extend(covariate_warnings(&pairs, &specs));
    let outcomes = evaluate(&pairs, &specs, &alphas)?;
    let mut metrics = Vec::new();
    let mut per_expl = Vec::new();
    for (m, spec) in specs.iter().enumerate() {
        for (a, _) in alphas.iter().enumerate() {
            let mut set: Vec<PairOutcome> = outcomes.iter().map(|per| per[m][a].clone()).collect();
            if set.is_empty() {
                continue;
            }
            for o in &mut set {
                o.method = spec.label();
            }
            metrics.push(weighted_aggregate(&set)?);
            per_expl.extend(exploratory_counts(&set));
        }
    }
    let mut out = Collector::default();
    out.text("exploratory_counts.tsv", exploratory_counts_to_tsv(&per_expl));
    out.json("exploratory_counts.json", &per_expl)?;
    let in_pairs: BTreeSet<&str> = pairs
        .iter()
        .flat_map(|p| [p.exploratory.descriptor.study_id.as_str(), p.validation.descriptor.study_id.as_str()])
        .collect();
    let used: Vec<Dataset> = loaded
        .datasets
        .iter()
        .filter(|d| in_pairs.contains(d.descriptor.study_id.as_str()))
        .cloned()
        .collect();
    write_common(
        &mut out,
        &pairs,
        &outcomes,
        &metrics,
        &specs,
        &used,
        &alphas,
        &opts,
        &mut warnings,
    )?;
    finish(out, "cross-bench", args, &b.out, &specs, &alphas, &loaded.digests, pairs.len(), &warnings)
}

#[allow(clippy::too_many_arguments)]
fn finish<C: Serialize>(
    mut out: Collector,
    command: &str,
    config: &C,
    dir: &std::path::Path,
    specs: &[MethodSpec],
    alphas: &[f64],
    inputs: &[InputDigest],
    n_pairs: usize,
    warnings: &[String],
) -> Result<()> {
    for w in warnings {
        warn!("{w}");
    }
    out.json(
        "run.json",
        &RunRecord {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            methods: specs.iter().map(MethodSpec::label).collect(),
            alphas,
            inputs,
            n_pairs,
            warnings,
        },
    )?;
    out.write_to(dir)
}
