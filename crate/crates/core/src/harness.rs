//! Exploratory/validation dataset pairs and per-candidate classification.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{filter_prevalence, prepare_covariates, Dataset, Group};
use crate::error::{Error, Result};
use crate::methods::{fit_taxa, run_method, DaaResult, DaaResultSet, Direction, MethodKind, MethodSpec};
use crate::metrics::{ci_overlap, EstimateSe, OVERLAP_LEVEL};

/// Minimum per-group size for splitting a dataset in two.
pub const SPLIT_MIN_PER_GROUP: usize = 20;
/// Minimum per-group size for a study to take part in cross-study pairs.
pub const CROSS_MIN_PER_GROUP: usize = 10;
/// Validation significance uses unadjusted p below this level.
pub const VALIDATION_P: f64 = 0.05;
/// Per-group prevalence required on both sides for interval comparison.
pub const CI_MIN_GROUP_PREVALENCE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOptions {
    pub min_prevalence: f64,
    pub max_missing: f64,
}

impl Default for PairOptions {
    fn default() -> Self {
        Self {
            min_prevalence: 0.10,
            max_missing: 0.10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairOrigin {
    Split,
    Cross,
}

/// Prepared exploratory and validation sides.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSpec {
    pub id: String,
    pub exploratory: Dataset,
    pub validation: Dataset,
    pub origin: PairOrigin,
    pub split_index: Option<usize>,
    pub seed: u64,
}

/// Audit record of how a pair was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairManifest {
    pub id: String,
    pub origin: PairOrigin,
    pub exploratory_study: String,
    pub validation_study: String,
    pub split_index: Option<usize>,
    pub seed: u64,
    pub exploratory_samples: Vec<String>,
    pub validation_samples: Vec<String>,
    pub exploratory_taxa: usize,
    pub validation_taxa: usize,
    pub warnings: Vec<String>,
}

impl PairSpec {
    pub fn manifest(&self) -> PairManifest {
        let mut warnings = self.exploratory.warnings.iter().map(|w| format!("exploratory: {w}")).collect::<Vec<_>>();
        warnings.extend(self.validation.warnings.iter().map(|w| format!("validation: {w}")));
        PairManifest {
            id: self.id.clone(),
            origin: self.origin,
            exploratory_study: self.exploratory.descriptor.study_id.clone(),
            validation_study: self.validation.descriptor.study_id.clone(),
            split_index: self.split_index,
            seed: self.seed,
            exploratory_samples: self.exploratory.table().sample_ids().to_vec(),
            validation_samples: self.validation.table().sample_ids().to_vec(),
            exploratory_taxa: self.exploratory.n_taxa(),
            validation_taxa: self.validation.n_taxa(),
            warnings,
        }
    }
}

fn prepare(ds: &Dataset, opts: &PairOptions) -> Dataset {
    prepare_covariates(&filter_prevalence(ds, opts.min_prevalence), opts.max_missing)
}

/// PRNG stream for one split of one study, independent of scheduling.
pub fn split_rng(seed: u64, study_id: &str, split_index: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((study_id.len() as u64).to_le_bytes());
    h.update(study_id.as_bytes());
    h.update((split_index as u64).to_le_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Splits a dataset `n_splits` times into two halves stratified by group.
///
/// Within each group the samples are shuffled and dealt into halves; an odd
/// sample goes to a randomly chosen half, and a random half becomes the
/// exploratory side. Each half is prevalence-filtered and has its covariates
/// prepared on its own.
pub fn split_pairs(ds: &Dataset, n_splits: usize, seed: u64, opts: &PairOptions) -> Result<Vec<PairSpec>> {
    for g in [Group::Control, Group::Case] {
        let n = ds.group_size(g);
        if n < SPLIT_MIN_PER_GROUP {
            return Err(Error::invalid(format!(
                "study '{}' has {n} {g} samples; splitting requires at least {SPLIT_MIN_PER_GROUP} samples per group",
                ds.descriptor.study_id
            )));
        }
    }
    let study = &ds.descriptor.study_id;
    (0..n_splits)
        .map(|s| {
            let mut rng = split_rng(seed, study, s);
            let mut halves: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
            for g in [Group::Control, Group::Case] {
                let mut members: Vec<usize> = (0..ds.n_samples()).filter(|&j| ds.groups()[j] == g).collect();
                members.shuffle(&mut rng);
                let half = members.len() / 2;
                let extra_to_first = members.len() % 2 == 1 && rng.random_bool(0.5);
                let cut = half + usize::from(extra_to_first);
                halves[0].extend_from_slice(&members[..cut]);
                halves[1].extend_from_slice(&members[cut..]);
            }
            for h in &mut halves {
                h.sort_unstable();
            }
            let expl_first = rng.random_bool(0.5);
            let (e, v) = if expl_first { (0, 1) } else { (1, 0) };
            Ok(PairSpec {
                id: format!("{study}#split{s}"),
                exploratory: prepare(&ds.select_samples(&halves[e]), opts),
                validation: prepare(&ds.select_samples(&halves[v]), opts),
                origin: PairOrigin::Split,
                split_index: Some(s),
                seed,
            })
        })
        .collect()
}

/// All same-condition, same-sequencing-type study pairs; the smaller study
/// (ties: lexicographically smaller id) is exploratory. Studies below the
/// size rule are skipped with a returned warning. `exclusions` lists study
/// pairs, in either order, that must not be paired.
pub fn cross_pairs(
    studies: &[Dataset],
    exclusions: &[(String, String)],
    opts: &PairOptions,
) -> (Vec<PairSpec>, Vec<String>) {
    let mut warnings = Vec::new();
    let eligible: Vec<&Dataset> = studies
        .iter()
        .filter(|ds| {
            let ok = [Group::Control, Group::Case]
                .iter()
                .all(|&g| ds.group_size(g) >= CROSS_MIN_PER_GROUP);
            if !ok {
                warnings.push(format!(
                    "study '{}' skipped: fewer than {CROSS_MIN_PER_GROUP} samples in a group",
                    ds.descriptor.study_id
                ));
            }
            ok
        })
        .collect();
    let excluded = |a: &str, b: &str| {
        exclusions
            .iter()
            .any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    };
    let mut pairs = Vec::new();
    for i in 0..eligible.len() {
        for j in i + 1..eligible.len() {
            let (a, b) = (eligible[i], eligible[j]);
            if a.descriptor.condition != b.descriptor.condition || a.descriptor.seq_type != b.descriptor.seq_type {
                continue;
            }
            if excluded(&a.descriptor.study_id, &b.descriptor.study_id) {
                continue;
            }
            let a_first = (a.n_samples(), &a.descriptor.study_id) <= (b.n_samples(), &b.descriptor.study_id);
            let (e, v) = if a_first { (a, b) } else { (b, a) };
            pairs.push(PairSpec {
                id: format!("{}~{}", e.descriptor.study_id, v.descriptor.study_id),
                exploratory: prepare(e, opts),
                validation: prepare(v, opts),
                origin: PairOrigin::Cross,
                split_index: None,
                seed: 0,
            });
        }
    }
    (pairs, warnings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    Replicated,
    Conflicting,
    OppositeNonsig,
    SameDirNonsig,
    NotApplicable,
}

impl OutcomeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeClass::Replicated => "replicated",
            OutcomeClass::Conflicting => "conflicting",
            OutcomeClass::OppositeNonsig => "opposite_nonsig",
            OutcomeClass::SameDirNonsig => "same_dir_nonsig",
            OutcomeClass::NotApplicable => "not_applicable",
        }
    }
}

/// Classifies a candidate by its validation result. A zero direction on
/// either side never counts as opposite.
pub fn classify(expl: Direction, valid: &DaaResult) -> OutcomeClass {
    let Some(p) = valid.p.filter(|_| valid.applicable) else {
        return OutcomeClass::NotApplicable;
    };
    let opposite = matches!(
        (expl, valid.direction),
        (Direction::Positive, Direction::Negative) | (Direction::Negative, Direction::Positive)
    );
    let same = expl == valid.direction && expl != Direction::Zero;
    match (p < VALIDATION_P, opposite, same) {
        (true, true, _) => OutcomeClass::Conflicting,
        (true, _, true) => OutcomeClass::Replicated,
        (false, true, _) => OutcomeClass::OppositeNonsig,
        _ => OutcomeClass::SameDirNonsig,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRecord {
    pub taxon_id: String,
    pub expl: DaaResult,
    pub valid: DaaResult,
    pub class: OutcomeClass,
    pub ci_eligible: bool,
    pub ci_overlap: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairOutcome {
    pub pair_id: String,
    pub exploratory_study: String,
    pub validation_study: String,
    pub method: String,
    pub alpha: f64,
    /// Significant exploratory taxa, present in validation or not.
    pub nhits: usize,
    pub records: Vec<CandidateRecord>,
}

impl PairOutcome {
    pub fn count(&self, class: OutcomeClass) -> usize {
        self.records.iter().filter(|r| r.class == class).count()
    }
}

fn ci_eligible(pair: &PairSpec, taxon: &str) -> bool {
    [&pair.exploratory, &pair.validation].iter().all(|ds| {
        ds.taxon_index().get(taxon).is_some_and(|&i| {
            [Group::Control, Group::Case]
                .iter()
                .all(|&g| ds.group_prevalence(i, g) >= CI_MIN_GROUP_PREVALENCE - 1e-12)
        })
    })
}

fn estimate_se(r: &DaaResult) -> Option<EstimateSe> {
    let se = r.se?;
    (r.applicable && se > 0.0 && se.is_finite() && r.estimate.is_finite()).then_some(EstimateSe {
        estimate: r.estimate,
        se,
        df: r.df,
    })
}

/// Interval inputs per candidate; Wilcoxon borrows the ordinal model's.
fn interval_inputs(ds: &Dataset, spec: &MethodSpec, set: &DaaResultSet, taxa: &[&str]) -> Result<Vec<Option<EstimateSe>>> {
    if spec.method == MethodKind::Wilcoxon && spec.options.pair_orm_ci {
        let index = ds.taxon_index();
        let rows: Vec<usize> = taxa.iter().map(|t| index[t]).collect();
        let orm = MethodSpec {
            method: MethodKind::Orm,
            ..*spec
        };
        let fits = fit_taxa::<f64>(ds, &orm, &rows)?;
        Ok(fits.iter().map(estimate_se).collect())
    } else {
        Ok(taxa.iter().map(|t| set.get(t).and_then(estimate_se)).collect())
    }
}

/// Runs the method on both sides once and classifies candidates at each α.
pub fn evaluate_pair_alphas(pair: &PairSpec, spec: &MethodSpec, alphas: &[f64]) -> Result<Vec<PairOutcome>> {
    let Some(&first) = alphas.first() else {
        return Ok(Vec::new());
    };
    let expl_set = run_method::<f64>(&pair.exploratory, spec, first)?;
    let valid_set = run_method::<f64>(&pair.validation, spec, VALIDATION_P)?;
    let valid_index = pair.validation.taxon_index();

    // interval inputs for every taxon that is a candidate at some α
    let max_alpha = alphas.iter().copied().fold(f64::MIN, f64::max);
    let pool: Vec<&str> = expl_set
        .at_alpha(max_alpha)
        .results
        .iter()
        .filter(|r| r.significant && valid_index.contains_key(r.taxon_id.as_str()))
        .map(|r| expl_set.get(&r.taxon_id).unwrap().taxon_id.as_str())
        .collect();
    let eligible: Vec<bool> = pool.iter().map(|t| ci_eligible(pair, t)).collect();
    let need: Vec<&str> = pool.iter().zip(&eligible).filter(|(_, &e)| e).map(|(t, _)| *t).collect();
    let expl_ci = interval_inputs(&pair.exploratory, spec, &expl_set, &need)?;
    let valid_ci = interval_inputs(&pair.validation, spec, &valid_set, &need)?;
    let overlaps: Vec<(&str, Option<bool>)> = need
        .iter()
        .zip(expl_ci.iter().zip(&valid_ci))
        .map(|(t, (a, b))| {
            let o = match (a, b) {
                (Some(a), Some(b)) => ci_overlap(a, b, OVERLAP_LEVEL).ok(),
                _ => None,
            };
            (*t, o)
        })
        .collect();

    Ok(alphas
        .iter()
        .map(|&alpha| {
            let expl = expl_set.at_alpha(alpha);
            let hits: Vec<&DaaResult> = expl.significant().collect();
            let records = hits
                .iter()
                .filter(|r| valid_index.contains_key(r.taxon_id.as_str()))
                .map(|&r| {
                    let valid = valid_set.get(&r.taxon_id).unwrap().clone();
                    let class = classify(r.direction, &valid);
                    let ci_eligible = need.contains(&r.taxon_id.as_str());
                    let ci_overlap = if class == OutcomeClass::NotApplicable {
                        None
                    } else {
                        overlaps.iter().find(|(t, _)| *t == r.taxon_id).and_then(|(_, o)| *o)
                    };
                    CandidateRecord {
                        taxon_id: r.taxon_id.clone(),
                        expl: r.clone(),
                        valid,
                        class,
                        ci_eligible,
                        ci_overlap,
                    }
                })
                .collect();
            PairOutcome {
                pair_id: pair.id.clone(),
                exploratory_study: pair.exploratory.descriptor.study_id.clone(),
                validation_study: pair.validation.descriptor.study_id.clone(),
                method: spec.label(),
                alpha,
                nhits: hits.len(),
                records,
            }
        })
        .collect())
}

pub fn evaluate_pair(pair: &PairSpec, spec: &MethodSpec, alpha: f64) -> Result<PairOutcome> {
    Ok(evaluate_pair_alphas(pair, spec, &[alpha])?.remove(0))
}

/// Candidate records as a table, one row per pair and candidate.
pub fn outcomes_to_tsv(outcomes: &[PairOutcome]) -> String {
    use crate::methods::format_number;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), format_number);
    let mut out = String::from(
        "pair_id\tmethod\talpha\ttaxon_id\texpl_estimate\texpl_q\tvalid_estimate\tvalid_p\tclass\tci_eligible\tci_overlap\n",
    );
    for o in outcomes {
        for r in &o.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                o.pair_id,
                o.method,
                format_number(o.alpha),
                r.taxon_id,
                format_number(r.expl.estimate),
                opt(r.expl.q),
                format_number(r.valid.estimate),
                opt(r.valid.p),
                r.class.as_str(),
                r.ci_eligible,
                r.ci_overlap.map_or_else(|| "NA".to_string(), |b| b.to_string()),
            ));
        }
    }
    out
}
