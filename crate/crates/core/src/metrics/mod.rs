//! Consistency metrics over pair outcomes, their acceptability thresholds,
//! interval overlap, method ranking and auxiliary analyses.

mod mds;
mod rank;

use std::collections::{BTreeMap, HashMap};

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::harness::{OutcomeClass, PairOutcome};
use crate::methods::{format_number, DaaResultSet, Direction};
use crate::stats::two_sided_critical;

pub use mds::{classical_mds, jaccard_distance, jaccard_mds, Mds, MdsResult};
pub use rank::{rank_methods, rank_table_to_tsv, RankRow, RankTable, RankWeights, MetricKind};

/// Exact rational used for counts, weighted counts and thresholds.
pub type Q = Ratio<i128>;

/// Default confidence level for interval overlap: two independent estimates
/// with equal standard errors overlap with probability 0.95.
pub const OVERLAP_LEVEL: f64 = 0.834;

/// Converts a decimal probability such as 0.05 to the exact fraction it denotes.
pub fn decimal_ratio(x: f64) -> Q {
    let mut scale: i128 = 1;
    for _ in 0..=15 {
        let n = (x * scale as f64).round();
        if ((n / scale as f64) - x).abs() <= f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return Q::new(n as i128, scale);
        }
        scale *= 10;
    }
    Ratio::<i64>::approximate_float(x)
        .map(|r| Q::new(i128::from(*r.numer()), i128::from(*r.denom())))
        .unwrap_or_else(Q::zero)
}

fn ratio_f64(q: &Q) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

fn ser_ratio<S: Serializer>(q: &Q, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(ratio_f64(q))
}

/// `numerator / denominator`, with an undefined value when nothing was counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub numerator: Q,
    pub denominator: Q,
}

impl Fraction {
    pub fn new(numerator: Q, denominator: Q) -> Self {
        Self { numerator, denominator }
    }

    pub fn value(&self) -> Option<Q> {
        (!self.denominator.is_zero()).then(|| self.numerator / self.denominator)
    }

    pub fn to_f64(&self) -> Option<f64> {
        self.value().map(|v| ratio_f64(&v))
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View {
            numerator: f64,
            denominator: f64,
            value: Option<f64>,
            exact: Option<String>,
        }
        View {
            numerator: ratio_f64(&self.numerator),
            denominator: ratio_f64(&self.denominator),
            value: self.to_f64(),
            exact: self.value().map(|v| v.to_string()),
        }
        .serialize(s)
    }
}

/// Interval `estimate ± critical × se`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    /// Uses Student t when `df` is given and finite, else the normal.
    pub fn new(estimate: f64, se: f64, df: Option<f64>, level: f64) -> Result<Self> {
        if !(se > 0.0 && se.is_finite()) || !estimate.is_finite() {
            return Err(Error::invalid(format!(
                "interval needs a finite estimate and positive standard error (got {estimate}, {se})"
            )));
        }
        let c = two_sided_critical(level, df)?;
        Ok(Self {
            level,
            lower: estimate - c * se,
            upper: estimate + c * se,
        })
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

/// Point estimate with its uncertainty, as needed for an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateSe {
    pub estimate: f64,
    pub se: f64,
    pub df: Option<f64>,
}

/// True iff the two closed intervals at `level` intersect.
pub fn ci_overlap(a: &EstimateSe, b: &EstimateSe, level: f64) -> Result<bool> {
    let ia = ConfidenceInterval::new(a.estimate, a.se, a.df, level)?;
    let ib = ConfidenceInterval::new(b.estimate, b.se, b.df, level)?;
    Ok(ia.intersects(&ib))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Thresholds {
    /// `α × 0.05 × 0.5`
    #[serde(serialize_with = "ser_ratio")]
    pub conflict_max: Q,
    /// `α × 0.5`
    #[serde(serialize_with = "ser_ratio")]
    pub opposite_max: Q,
    #[serde(serialize_with = "ser_ratio")]
    pub ci_min_ok: Q,
    #[serde(serialize_with = "ser_ratio")]
    pub ci_ideal: Q,
}

impl Thresholds {
    pub fn for_alpha(alpha: Q) -> Self {
        let half = Q::new(1, 2);
        Self {
            conflict_max: alpha * Q::new(1, 20) * half,
            opposite_max: alpha * half,
            ci_min_ok: Q::new(9, 10),
            ci_ideal: Q::new(19, 20),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CiVerdict {
    Ideal,
    Acceptable,
    Insufficient,
}

/// Pass/fail per metric; missing when the metric is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Verdicts {
    pub conflict_ok: Option<bool>,
    pub opposite_ok: Option<bool>,
    pub ci: Option<CiVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub method: String,
    pub alpha: f64,
    pub n_pairs: usize,
    /// Significant exploratory taxa, including those absent from validation.
    pub nhits: u64,
    /// Candidate units entering the metric denominators.
    #[serde(serialize_with = "ser_ratio")]
    pub candidates: Q,
    /// Candidates the method could not test in validation (excluded above).
    #[serde(serialize_with = "ser_ratio")]
    pub not_applicable: Q,
    pub conflict: Fraction,
    pub replication: Fraction,
    pub opposite: Fraction,
    pub ci: Fraction,
    pub thresholds: Thresholds,
    pub verdicts: Verdicts,
}

#[derive(Default)]
struct Tally {
    candidates: Q,
    not_applicable: Q,
    conflicting: Q,
    replicated: Q,
    opposite: Q,
    ci_overlaps: Q,
    ci_evaluable: Q,
}

impl Tally {
    fn add_unit(&mut self, records: &[(OutcomeClass, Option<bool>)]) {
        let applicable: Vec<_> = records.iter().filter(|(c, _)| *c != OutcomeClass::NotApplicable).collect();
        if applicable.is_empty() {
            if !records.is_empty() {
                self.not_applicable += Q::from(1);
            }
            return;
        }
        let w = Q::new(1, applicable.len() as i128);
        self.candidates += Q::from(1);
        for (class, _) in &applicable {
            match class {
                OutcomeClass::Replicated => self.replicated += w,
                OutcomeClass::Conflicting => {
                    self.conflicting += w;
                    self.opposite += w;
                }
                OutcomeClass::OppositeNonsig => self.opposite += w,
                _ => {}
            }
        }
        let ci: Vec<bool> = applicable.iter().filter_map(|(_, o)| *o).collect();
        if !ci.is_empty() {
            self.ci_evaluable += Q::from(1);
            self.ci_overlaps += Q::new(ci.iter().filter(|&&o| o).count() as i128, ci.len() as i128);
        }
    }

    fn report(self, method: String, alpha: f64, n_pairs: usize, nhits: u64) -> MetricsReport {
        let thresholds = Thresholds::for_alpha(decimal_ratio(alpha));
        let conflict = Fraction::new(self.conflicting, self.candidates);
        let replication = Fraction::new(self.replicated, self.candidates);
        let opposite = Fraction::new(self.opposite, self.candidates);
        let ci = Fraction::new(self.ci_overlaps, self.ci_evaluable);
        let verdicts = Verdicts {
            conflict_ok: conflict.value().map(|v| v <= thresholds.conflict_max),
            opposite_ok: opposite.value().map(|v| v <= thresholds.opposite_max),
            ci: ci.value().map(|v| {
                if v >= thresholds.ci_ideal {
                    CiVerdict::Ideal
                } else if v >= thresholds.ci_min_ok {
                    CiVerdict::Acceptable
                } else {
                    CiVerdict::Insufficient
                }
            }),
        };
        MetricsReport {
            method,
            alpha,
            n_pairs,
            nhits,
            candidates: self.candidates,
            not_applicable: self.not_applicable,
            conflict,
            replication,
            opposite,
            ci,
            thresholds,
            verdicts,
        }
    }
}

fn common_labels(outcomes: &[PairOutcome]) -> Result<(String, f64)> {
    let Some(first) = outcomes.first() else {
        return Err(Error::invalid("no pair outcomes to summarize"));
    };
    for o in outcomes {
        if o.alpha != first.alpha || o.method != first.method {
            return Err(Error::invalid(format!(
                "outcomes mix settings: {} at α = {} and {} at α = {}",
                first.method, first.alpha, o.method, o.alpha
            )));
        }
    }
    Ok((first.method.clone(), first.alpha))
}

/// Pools all candidate taxa of all pairs, each candidate counting once.
pub fn compute_metrics(outcomes: &[PairOutcome]) -> Result<MetricsReport> {
    let (method, alpha) = common_labels(outcomes)?;
    let mut tally = Tally::default();
    let mut nhits = 0;
    for o in outcomes {
        nhits += o.nhits as u64;
        for r in &o.records {
            tally.add_unit(&[(r.class, r.ci_overlap)]);
        }
    }
    Ok(tally.report(method, alpha, outcomes.len(), nhits))
}

/// Pools pairs so that each candidate taxon of each exploratory dataset
/// carries one unit, split evenly over the validation datasets in which it
/// is present.
pub fn weighted_aggregate(outcomes: &[PairOutcome]) -> Result<MetricsReport> {
    let (method, alpha) = common_labels(outcomes)?;
    let mut by_expl: BTreeMap<&str, Vec<&PairOutcome>> = BTreeMap::new();
    for o in outcomes {
        by_expl.entry(o.exploratory_study.as_str()).or_default().push(o);
    }
    let mut tally = Tally::default();
    let mut nhits = 0;
    for pairs in by_expl.values() {
        nhits += pairs[0].nhits as u64;
        let mut per_taxon: BTreeMap<&str, Vec<(OutcomeClass, Option<bool>)>> = BTreeMap::new();
        for o in pairs {
            for r in &o.records {
                per_taxon.entry(r.taxon_id.as_str()).or_default().push((r.class, r.ci_overlap));
            }
        }
        for records in per_taxon.values() {
            tally.add_unit(records);
        }
    }
    Ok(tally.report(method, alpha, outcomes.len(), nhits))
}

/// Per-exploratory-dataset summary of weighted candidate counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExploratoryCounts {
    pub exploratory_study: String,
    pub method: String,
    pub alpha: f64,
    pub n_validations: usize,
    pub nhits: usize,
    #[serde(serialize_with = "ser_ratio")]
    pub candidates: Q,
    #[serde(serialize_with = "ser_ratio")]
    pub replicated: Q,
    #[serde(serialize_with = "ser_ratio")]
    pub conflicting: Q,
}

pub fn exploratory_counts(outcomes: &[PairOutcome]) -> Vec<ExploratoryCounts> {
    let mut groups: BTreeMap<(&str, &str, u64), Vec<&PairOutcome>> = BTreeMap::new();
    for o in outcomes {
        groups
            .entry((o.method.as_str(), o.exploratory_study.as_str(), o.alpha.to_bits()))
            .or_default()
            .push(o);
    }
    groups
        .into_iter()
        .map(|((method, expl, _), pairs)| {
            let owned: Vec<PairOutcome> = pairs.iter().map(|&p| p.clone()).collect();
            let r = weighted_aggregate(&owned).expect("grouped outcomes share settings");
            ExploratoryCounts {
                exploratory_study: expl.to_string(),
                method: method.to_string(),
                alpha: pairs[0].alpha,
                n_validations: pairs.len(),
                nhits: pairs[0].nhits,
                candidates: r.candidates,
                replicated: r.replication.numerator,
                conflicting: r.conflict.numerator,
            }
        })
        .collect()
}

pub fn exploratory_counts_to_tsv(rows: &[ExploratoryCounts]) -> String {
    let mut out = String::from("method\talpha\texploratory_study\tn_validations\tnhits\tcandidates\treplicated\tconflicting\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.method,
            format_number(r.alpha),
            r.exploratory_study,
            r.n_validations,
            r.nhits,
            format_number(ratio_f64(&r.candidates)),
            format_number(ratio_f64(&r.replicated)),
            format_number(ratio_f64(&r.conflicting)),
        ));
    }
    out
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), format_number)
}

fn opt_flag<T: std::fmt::Debug>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_string(), |b| format!("{b:?}").to_lowercase())
}

/// One row per report.
pub fn metrics_to_tsv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(
        "method\talpha\tn_pairs\tnhits\tcandidates\tnot_applicable\tconflicting\tconflict_pct\treplicated\treplication_pct\topposite\topposite_pct\tci_overlaps\tci_evaluable\tci_pct\tconflict_max\topposite_max\tconflict_ok\topposite_ok\tci_verdict\n",
    );
    for r in reports {
        let fields = [
            r.method.clone(),
            format_number(r.alpha),
            r.n_pairs.to_string(),
            r.nhits.to_string(),
            format_number(ratio_f64(&r.candidates)),
            format_number(ratio_f64(&r.not_applicable)),
            format_number(ratio_f64(&r.conflict.numerator)),
            opt_num(r.conflict.to_f64()),
            format_number(ratio_f64(&r.replication.numerator)),
            opt_num(r.replication.to_f64()),
            format_number(ratio_f64(&r.opposite.numerator)),
            opt_num(r.opposite.to_f64()),
            format_number(ratio_f64(&r.ci.numerator)),
            format_number(ratio_f64(&r.ci.denominator)),
            opt_num(r.ci.to_f64()),
            format_number(ratio_f64(&r.thresholds.conflict_max)),
            format_number(ratio_f64(&r.thresholds.opposite_max)),
            opt_flag(r.verdicts.conflict_ok),
            opt_flag(r.verdicts.opposite_ok),
            opt_flag(r.verdicts.ci),
        ];
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    out
}

/// Reads reports written by [`metrics_to_tsv`]. Counts pass through `f64`,
/// so weighted numerators come back as decimal approximations.
pub fn parse_metrics_tsv(text: &str, source: &str) -> Result<Vec<MetricsReport>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(parse_err(1, "empty metrics table".into()));
    };
    let cols: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
    let col = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| parse_err(1, format!("missing column '{name}'")))
    };
    let idx = [
        "method", "alpha", "n_pairs", "nhits", "candidates", "not_applicable", "conflicting", "replicated",
        "opposite", "ci_overlaps", "ci_evaluable",
    ]
    .map(col);
    let idx: Vec<usize> = idx.into_iter().collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if fields.len() != cols.len() {
            return Err(parse_err(i + 1, format!("expected {} fields, found {}", cols.len(), fields.len())));
        }
        let num = |k: usize| -> Result<f64> {
            let cell = fields[idx[k]];
            cell.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| parse_err(i + 1, format!("'{cell}' in column '{}' is not a count", cols[idx[k]])))
        };
        let alpha = num(1)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(parse_err(i + 1, format!("alpha {alpha} outside (0, 1)")));
        }
        let tally = Tally {
            candidates: decimal_ratio(num(4)?),
            not_applicable: decimal_ratio(num(5)?),
            conflicting: decimal_ratio(num(6)?),
            replicated: decimal_ratio(num(7)?),
            opposite: decimal_ratio(num(8)?),
            ci_overlaps: decimal_ratio(num(9)?),
            ci_evaluable: decimal_ratio(num(10)?),
        };
        out.push(tally.report(fields[idx[0]].to_string(), alpha, num(2)? as usize, num(3)? as u64));
    }
    Ok(out)
}

/// Fraction of truth-labelled taxa whose estimated direction matches the
/// true sign; zero-direction estimates and untested taxa count as misses.
pub fn sign_accuracy(estimated: &DaaResultSet, truth: &HashMap<String, Direction>) -> Fraction {
    let mut correct = 0i128;
    let mut total = 0i128;
    for r in &estimated.results {
        if let Some(&t) = truth.get(&r.taxon_id) {
            total += 1;
            if r.applicable && r.direction != Direction::Zero && r.direction == t {
                correct += 1;
            }
        }
    }
    Fraction::new(Q::from(correct), Q::from(total))
}
