//! Synthetic count data with known effects, for testing methods and the
//! benchmark end to end.
//!
//! A baseline composition is drawn once from a log-normal profile. In the
//! case group the affected taxa are multiplied by `2^log_fold` and the
//! composition is renormalized. Each sample's counts are Dirichlet-multinomial
//! around its group composition.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CountTable, Dataset, Descriptor, Group, SeqType};
use crate::error::{Error, Result};
use crate::methods::Direction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n_taxa: usize,
    pub n_per_group: usize,
    pub n_affected: usize,
    /// Range of `|log2 fold|` for affected taxa; signs are random.
    pub log_fold_range: (f64, f64),
    /// Standard deviation of the natural-log baseline abundance profile.
    pub base_log_sd: f64,
    /// Dirichlet-multinomial intra-class correlation ρ in `[0, 1)`;
    /// 0 gives plain multinomial counts.
    pub overdispersion: f64,
    pub library_size_range: (u64, u64),
    /// Choose effect signs so that the affected taxa roughly preserve the
    /// total mass of the case composition. Unbalanced random signs shift
    /// every unaffected taxon's relative abundance.
    #[serde(default = "default_true")]
    pub balanced_effects: bool,
    pub study_id: String,
    pub condition: String,
    pub seq_type: SeqType,
}

fn default_true() -> bool {
    true
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_taxa: 200,
            n_per_group: 50,
            n_affected: 20,
            log_fold_range: (1.0, 2.0),
            base_log_sd: 1.0,
            overdispersion: 0.002,
            library_size_range: (5_000, 50_000),
            balanced_effects: true,
            study_id: "synth".into(),
            condition: "synthetic".into(),
            seq_type: SeqType::Amplicon16S,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.n_taxa == 0 || self.n_per_group == 0 {
            return bad("need at least one taxon and one sample per group".into());
        }
        if self.n_affected > self.n_taxa {
            return bad(format!("{} affected taxa out of {}", self.n_affected, self.n_taxa));
        }
        let (lo, hi) = self.log_fold_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("invalid log-fold range [{lo}, {hi}]"));
        }
        if !(self.base_log_sd > 0.0 && self.base_log_sd.is_finite()) {
            return bad(format!("baseline profile needs positive spread, got {}", self.base_log_sd));
        }
        if !(0.0..1.0).contains(&self.overdispersion) {
            return bad(format!("overdispersion must lie in [0, 1), got {}", self.overdispersion));
        }
        let (a, b) = self.library_size_range;
        if a == 0 || b < a {
            return bad(format!("invalid library size range [{a}, {b}]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonTruth {
    pub taxon_id: String,
    /// Case versus control, log2 scale, before renormalization.
    pub true_log_fold: f64,
    pub affected: bool,
    /// Sign of the difference of mean absolute abundances (absolute variant only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub truth_sign: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTruth {
    pub sample_id: String,
    pub group: Group,
    pub library_size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub seed: u64,
    pub params: SynthParams,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bloom: Option<Bloom>,
    pub taxa: Vec<TaxonTruth>,
    pub samples: Vec<SampleTruth>,
}

/// One taxon multiplied by `fold` in cases on top of any other effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bloom {
    pub taxon: usize,
    pub fold: f64,
}

/// Absolute abundances, taxa × samples row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsoluteTable {
    pub taxon_ids: Vec<String>,
    pub sample_ids: Vec<String>,
    pub values: Vec<f64>,
}

impl AbsoluteTable {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("taxon_id");
        for s in &self.sample_ids {
            out.push('\t');
            out.push_str(s);
        }
        out.push('\n');
        let n = self.sample_ids.len();
        for (i, t) in self.taxon_ids.iter().enumerate() {
            out.push_str(t);
            for v in &self.values[i * n..(i + 1) * n] {
                out.push('\t');
                out.push_str(&crate::methods::format_number(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// PRNG stream for dataset `index` under a master seed.
pub fn dataset_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"synth");
    h.update(seed.to_le_bytes());
    h.update(index.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn ids(prefix: char, n: usize) -> Vec<String> {
    let width = n.to_string().len().max(3);
    (1..=n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// Draws the group weights: baseline profile and per-taxon effects.
struct Design {
    base: Vec<f64>,
    log_fold: Vec<f64>,
    affected: Vec<bool>,
}

fn draw_design(p: &SynthParams, rng: &mut ChaCha8Rng) -> Design {
    let normal = Normal::new(0.0, p.base_log_sd).expect("validated spread");
    let raw: Vec<f64> = (0..p.n_taxa).map(|_| normal.sample(rng).exp()).collect();
    let total: f64 = raw.iter().sum();
    let base: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let mut order: Vec<usize> = (0..p.n_taxa).collect();
    order.shuffle(rng);
    let mut log_fold = vec![0.0; p.n_taxa];
    let mut affected = vec![false; p.n_taxa];
    let (lo, hi) = p.log_fold_range;
    let mut chosen: Vec<(usize, f64)> = order[..p.n_affected]
        .iter()
        .map(|&i| (i, if hi > lo { rng.random_range(lo..=hi) } else { lo }))
        .collect();
    if p.balanced_effects {
        // largest mass changes first; each sign is picked to pull the case
        // total back towards the control total
        let swing = |&(i, m): &(usize, f64)| base[i] * (m.exp2() - 1.0);
        chosen.sort_by(|a, b| swing(b).total_cmp(&swing(a)).then(a.0.cmp(&b.0)));
        let mut imbalance = 0.0;
        for &(i, m) in &chosen {
            let up = base[i] * (m.exp2() - 1.0);
            let down = base[i] * ((-m).exp2() - 1.0);
            let sign = if imbalance == 0.0 {
                if rng.random_bool(0.5) { 1.0 } else { -1.0 }
            } else if (imbalance + up).abs() <= (imbalance + down).abs() {
                1.0
            } else {
                -1.0
            };
            imbalance += if sign > 0.0 { up } else { down };
            log_fold[i] = sign * m;
            affected[i] = true;
        }
    } else {
        for &(i, m) in &chosen {
            log_fold[i] = if rng.random_bool(0.5) { m } else { -m };
            affected[i] = true;
        }
    }
    Design { base, log_fold, affected }
}

/// One Dirichlet draw around `pi` with intra-class correlation `rho`
/// (returned unchanged for `rho = 0`), plus multinomial counts.
fn draw_sample(pi: &[f64], rho: f64, library: u64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u64>) {
    let comp = if rho > 0.0 {
        let alpha0 = (1.0 - rho) / rho;
        loop {
            let g: Vec<f64> = pi
                .iter()
                .map(|&p| Gamma::new(alpha0 * p, 1.0).expect("positive shape").sample(rng))
                .collect();
            let s: f64 = g.iter().sum();
            if s > 0.0 && s.is_finite() {
                break g.iter().map(|v| v / s).collect::<Vec<_>>();
            }
        }
    } else {
        pi.to_vec()
    };
    let mut counts = Vec::with_capacity(comp.len());
    let mut left = library;
    let mut mass = 1.0;
    for (i, &c) in comp.iter().enumerate() {
        let x = if i + 1 == comp.len() || left == 0 {
            left
        } else {
            let p = (c / mass).clamp(0.0, 1.0);
            Binomial::new(left, p).expect("probability in range").sample(rng)
        };
        counts.push(x);
        left -= x;
        mass = (mass - c).max(0.0);
    }
    (comp, counts)
}

fn normalize(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

struct Drawn {
    dataset: Dataset,
    truth: TruthRecord,
    absolute: AbsoluteTable,
}

fn generate(p: &SynthParams, bloom: Option<Bloom>, seed: u64, index: u64) -> Result<Drawn> {
    p.validate()?;
    if let Some(b) = bloom {
        if !(b.fold > 0.0 && b.fold.is_finite()) || b.taxon >= p.n_taxa {
            return Err(Error::invalid(format!(
                "bloom needs a taxon index below {} and a positive fold",
                p.n_taxa
            )));
        }
    }
    let mut rng = dataset_rng(seed, index);
    let design = draw_design(p, &mut rng);
    let control_w = design.base.clone();
    let mut case_w: Vec<f64> = design
        .base
        .iter()
        .zip(&design.log_fold)
        .map(|(b, lf)| b * lf.exp2())
        .collect();
    if let Some(b) = bloom {
        case_w[b.taxon] *= b.fold;
    }
    let pis = [normalize(&control_w), normalize(&case_w)];
    let sums = [control_w.iter().sum::<f64>(), case_w.iter().sum::<f64>()];
    let load = Normal::new(0.0, 0.3).expect("fixed spread");

    let n = 2 * p.n_per_group;
    let taxon_ids = ids('T', p.n_taxa);
    let sample_ids = ids('S', n);
    let mut columns = Vec::with_capacity(n);
    let mut absolute_cols = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for j in 0..n {
        let gi = usize::from(j >= p.n_per_group);
        let group = if gi == 0 { Group::Control } else { Group::Case };
        let (lo, hi) = p.library_size_range;
        let library = rng.random_range(lo..=hi);
        let (comp, counts) = draw_sample(&pis[gi], p.overdispersion, library, &mut rng);
        let scale = 1e6 * Distribution::<f64>::sample(&load, &mut rng).exp() * sums[gi];
        absolute_cols.push(comp.iter().map(|c| c * scale).collect::<Vec<_>>());
        columns.push(counts);
        samples.push(SampleTruth {
            sample_id: sample_ids[j].clone(),
            group,
            library_size: library,
        });
        groups.push(group);
    }
    let mut counts = Vec::with_capacity(p.n_taxa * n);
    let mut absolute = Vec::with_capacity(p.n_taxa * n);
    for i in 0..p.n_taxa {
        for j in 0..n {
            counts.push(columns[j][i]);
            absolute.push(absolute_cols[j][i]);
        }
    }
    let table = CountTable::new(taxon_ids.clone(), sample_ids.clone(), counts)?;
    let dataset = Dataset::new(
        table,
        groups,
        Vec::new(),
        Descriptor {
            study_id: p.study_id.clone(),
            condition: p.condition.clone(),
            seq_type: p.seq_type,
        },
    )?;
    let taxa = (0..p.n_taxa)
        .map(|i| {
            let bloom_fold = bloom.filter(|b| b.taxon == i).map_or(0.0, |b| b.fold.log2());
            let row = &absolute[i * n..(i + 1) * n];
            let mean = |range: std::ops::Range<usize>| {
                let len = range.len() as f64;
                row[range].iter().sum::<f64>() / len
            };
            let sign = if mean(p.n_per_group..n) > mean(0..p.n_per_group) {
                Direction::Positive
            } else {
                Direction::Negative
            };
            TaxonTruth {
                taxon_id: taxon_ids[i].clone(),
                true_log_fold: design.log_fold[i] + bloom_fold,
                affected: design.affected[i] || bloom_fold != 0.0,
                truth_sign: bloom.is_some().then_some(sign),
            }
        })
        .collect();
    Ok(Drawn {
        dataset,
        truth: TruthRecord {
            seed,
            params: p.clone(),
            bloom,
            taxa,
            samples,
        },
        absolute: AbsoluteTable {
            taxon_ids,
            sample_ids,
            values: absolute,
        },
    })
}

/// Dataset `index` of the stream for `seed`.
pub fn gen_dataset(params: &SynthParams, seed: u64, index: u64) -> Result<(Dataset, TruthRecord)> {
    generate(params, None, seed, index).map(|d| (d.dataset, d.truth))
}

/// Like [`gen_dataset`] with a compositional bloom, also returning absolute
/// abundances; truth signs come from mean absolute abundances per group.
pub fn gen_absolute_truth(
    params: &SynthParams,
    bloom: Bloom,
    seed: u64,
    index: u64,
) -> Result<(AbsoluteTable, Dataset, TruthRecord)> {
    generate(params, Some(bloom), seed, index).map(|d| (d.absolute, d.dataset, d.truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn small() -> SynthParams {
        SynthParams {
            n_taxa: 30,
            n_per_group: 10,
            n_affected: 5,
            ..SynthParams::default()
        }
    }

    #[test]
    fn deterministic_per_seed_and_index() {
        let (a, ta) = gen_dataset(&small(), 7, 0).unwrap();
        let (b, tb) = gen_dataset(&small(), 7, 0).unwrap();
        let (c, _) = gen_dataset(&small(), 7, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_ne!(a.table(), c.table());
    }

    #[test]
    fn counts_match_library_sizes() {
        let p = small();
        let (ds, truth) = gen_dataset(&p, 1, 0).unwrap();
        let libs = ds.table().library_sizes();
        for (s, l) in truth.samples.iter().zip(libs) {
            assert_eq!(s.library_size, l);
            assert!((p.library_size_range.0..=p.library_size_range.1).contains(&l));
        }
        assert_eq!(truth.taxa.iter().filter(|t| t.affected).count(), 5);
        for t in &truth.taxa {
            if !t.affected {
                assert_eq!(t.true_log_fold, 0.0);
            } else {
                assert!((1.0..=2.0).contains(&t.true_log_fold.abs()));
            }
        }
    }

    #[test]
    fn null_has_all_zero_folds() {
        let p = SynthParams { n_affected: 0, ..small() };
        let (_, truth) = gen_dataset(&p, 3, 0).unwrap();
        assert!(truth.taxa.iter().all(|t| t.true_log_fold == 0.0 && !t.affected));
    }

    #[test]
    fn degenerate_parameters_rejected() {
        for p in [
            SynthParams { base_log_sd: 0.0, ..small() },
            SynthParams { n_affected: 31, ..small() },
            SynthParams { overdispersion: 1.0, ..small() },
            SynthParams { library_size_range: (10, 5), ..small() },
            SynthParams { n_per_group: 0, ..small() },
        ] {
            assert!(gen_dataset(&p, 1, 0).is_err());
        }
    }

    #[test]
    fn zero_overdispersion_is_multinomial() {
        // pooled goodness of fit over 1000 samples of the control composition
        let p = SynthParams {
            n_taxa: 5,
            n_per_group: 500,
            n_affected: 0,
            overdispersion: 0.0,
            library_size_range: (200, 200),
            base_log_sd: 0.5,
            ..SynthParams::default()
        };
        let mut rng = dataset_rng(11, 0);
        let design = draw_design(&p, &mut rng);
        let (ds, _) = gen_dataset(&p, 11, 0).unwrap();
        let t = ds.table();
        let mut stat = 0.0;
        for j in 0..t.n_samples() {
            for i in 0..t.n_taxa() {
                let e = 200.0 * design.base[i];
                stat += (t.count(i, j) as f64 - e).powi(2) / e;
            }
        }
        // each sample contributes k − 1 degrees of freedom
        let df = (t.n_samples() * (t.n_taxa() - 1)) as f64;
        let pval = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
        assert!(pval > 0.01, "p = {pval}");
    }

    #[test]
    fn bloom_shrinks_other_taxa_relative_abundance() {
        let p = SynthParams {
            n_taxa: 20,
            n_per_group: 40,
            n_affected: 0,
            overdispersion: 0.0,
            ..SynthParams::default()
        };
        let bloom = Bloom { taxon: 3, fold: 50.0 };
        let (abs, ds, truth) = gen_absolute_truth(&p, bloom, 5, 0).unwrap();
        assert_eq!(truth.taxa[3].truth_sign, Some(Direction::Positive));
        let t = ds.table();
        let lib = t.library_sizes();
        let n = t.n_samples();
        let mean_rel = |i: usize, range: std::ops::Range<usize>| {
            let len = range.len() as f64;
            range.map(|j| t.count(i, j) as f64 / lib[j] as f64).sum::<f64>() / len
        };
        for i in (0..20).filter(|&i| i != 3) {
            assert!(mean_rel(i, 40..80) < mean_rel(i, 0..40), "taxon {i}");
            assert_eq!(truth.taxa[i].true_log_fold, 0.0);
        }
        assert_eq!(abs.values.len(), 20 * n);
    }

    #[test]
    fn unit_bloom_matches_plain_generator_composition() {
        let p = SynthParams { n_affected: 3, ..small() };
        let (_, ds, _) = gen_absolute_truth(&p, Bloom { taxon: 0, fold: 1.0 }, 9, 0).unwrap();
        let (plain, _) = gen_dataset(&p, 9, 0).unwrap();
        // same stream and same compositions give identical draws
        assert_eq!(ds.table(), plain.table());
    }
}
