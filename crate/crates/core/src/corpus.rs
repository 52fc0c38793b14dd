//! Count tables, sample metadata and datasets: TSV ingestion, prevalence
//! filtering, covariate preparation and externally produced results.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Taxa × samples matrix of non-negative integer counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    taxon_ids: Vec<String>,
    sample_ids: Vec<String>,
    /// Row-major: `counts[taxon * n_samples + sample]`.
    counts: Vec<u64>,
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    let dups: Vec<&str> = ids
        .iter()
        .filter(|id| !seen.insert(id.as_str()))
        .map(String::as_str)
        .collect();
    if dups.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid(format!("duplicate {what} ids: {}", dups.join(", "))))
    }
}

impl CountTable {
    pub fn new(taxon_ids: Vec<String>, sample_ids: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        check_unique(&taxon_ids, "taxon")?;
        check_unique(&sample_ids, "sample")?;
        if counts.len() != taxon_ids.len() * sample_ids.len() {
            return Err(Error::invalid(format!(
                "count matrix has {} entries, expected {} taxa × {} samples",
                counts.len(),
                taxon_ids.len(),
                sample_ids.len()
            )));
        }
        Ok(Self {
            taxon_ids,
            sample_ids,
            counts,
        })
    }

    pub fn taxon_ids(&self) -> &[String] {
        &self.taxon_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// All counts, row-major (`taxon * n_samples + sample`).
    pub fn row_major(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_taxa(&self) -> usize {
        self.taxon_ids.len()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn count(&self, taxon: usize, sample: usize) -> u64 {
        self.counts[taxon * self.n_samples() + sample]
    }

    pub fn row(&self, taxon: usize) -> &[u64] {
        let n = self.n_samples();
        &self.counts[taxon * n..(taxon + 1) * n]
    }

    pub fn column(&self, sample: usize) -> Vec<u64> {
        (0..self.n_taxa()).map(|i| self.count(i, sample)).collect()
    }

    pub fn library_sizes(&self) -> Vec<u64> {
        let n = self.n_samples();
        let mut sizes = vec![0u64; n];
        for row in self.counts.chunks(n.max(1)) {
            for (s, &c) in sizes.iter_mut().zip(row) {
                *s += c;
            }
        }
        sizes
    }

    /// Fraction of samples with a nonzero count.
    pub fn prevalence(&self, taxon: usize) -> f64 {
        let n = self.n_samples();
        if n == 0 {
            return 0.0;
        }
        self.row(taxon).iter().filter(|&&c| c > 0).count() as f64 / n as f64
    }

    pub fn select_taxa(&self, keep: &[usize]) -> Self {
        let n = self.n_samples();
        let mut counts = Vec::with_capacity(keep.len() * n);
        for &i in keep {
            counts.extend_from_slice(self.row(i));
        }
        Self {
            taxon_ids: keep.iter().map(|&i| self.taxon_ids[i].clone()).collect(),
            sample_ids: self.sample_ids.clone(),
            counts,
        }
    }

    pub fn select_samples(&self, keep: &[usize]) -> Self {
        let mut counts = Vec::with_capacity(keep.len() * self.n_taxa());
        for i in 0..self.n_taxa() {
            let row = self.row(i);
            counts.extend(keep.iter().map(|&j| row[j]));
        }
        Self {
            taxon_ids: self.taxon_ids.clone(),
            sample_ids: keep.iter().map(|&j| self.sample_ids[j].clone()).collect(),
            counts,
        }
    }

    /// 1 where the count is positive, 0 elsewhere.
    pub fn presence(&self) -> Self {
        Self {
            taxon_ids: self.taxon_ids.clone(),
            sample_ids: self.sample_ids.clone(),
            counts: self.counts.iter().map(|&c| u64::from(c > 0)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Control,
    Case,
}

impl Group {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "control" | "0" => Some(Group::Control),
            "case" | "1" => Some(Group::Case),
            _ => None,
        }
    }

    pub fn indicator(self) -> f64 {
        match self {
            Group::Control => 0.0,
            Group::Case => 1.0,
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            Group::Control => Group::Case,
            Group::Case => Group::Control,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Control => "control",
            Group::Case => "case",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovariateKind {
    Continuous,
    /// Two-level covariate coded 0/1; `levels[k]` is the label of code `k`.
    Binary { levels: [String; 2] },
}

/// One covariate column, aligned with the dataset's sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
    pub values: Vec<Option<f64>>,
}

impl Covariate {
    pub fn missing_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|v| v.is_none()).count() as f64 / self.values.len() as f64
    }

    fn label(&self, j: usize) -> String {
        match (self.values[j], &self.kind) {
            (None, _) => "NA".to_string(),
            (Some(v), CovariateKind::Continuous) => format!("{v}"),
            (Some(v), CovariateKind::Binary { levels }) => levels[usize::from(v != 0.0)].clone(),
        }
    }
}

/// Per-sample view of the metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleMetadata {
    pub sample_id: String,
    pub group: Group,
    pub covariates: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeqType {
    #[serde(rename = "16S")]
    Amplicon16S,
    #[serde(rename = "shotgun")]
    Shotgun,
}

impl std::str::FromStr for SeqType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "16s" => Ok(SeqType::Amplicon16S),
            "shotgun" => Ok(SeqType::Shotgun),
            other => Err(Error::invalid(format!(
                "unknown sequencing type '{other}' (expected 16S or shotgun)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Descriptor {
    pub study_id: String,
    pub condition: String,
    pub seq_type: SeqType,
}

/// A count table bound to per-sample groups and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    table: CountTable,
    groups: Vec<Group>,
    covariates: Vec<Covariate>,
    pub descriptor: Descriptor,
    /// Non-fatal issues found while building or transforming the dataset.
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn new(
        table: CountTable,
        groups: Vec<Group>,
        covariates: Vec<Covariate>,
        descriptor: Descriptor,
    ) -> Result<Self> {
        let n = table.n_samples();
        if groups.len() != n {
            return Err(Error::invalid(format!(
                "{} group labels for {n} samples",
                groups.len()
            )));
        }
        for c in &covariates {
            if c.values.len() != n {
                return Err(Error::invalid(format!(
                    "covariate '{}' has {} values for {n} samples",
                    c.name,
                    c.values.len()
                )));
            }
        }
        Ok(Self {
            table,
            groups,
            covariates,
            descriptor,
            warnings: Vec::new(),
        })
    }

    pub fn table(&self) -> &CountTable {
        &self.table
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn n_taxa(&self) -> usize {
        self.table.n_taxa()
    }

    pub fn n_samples(&self) -> usize {
        self.table.n_samples()
    }

    pub fn group_size(&self, g: Group) -> usize {
        self.groups.iter().filter(|&&x| x == g).count()
    }

    pub fn sample_metadata(&self, j: usize) -> SampleMetadata {
        SampleMetadata {
            sample_id: self.table.sample_ids[j].clone(),
            group: self.groups[j],
            covariates: self
                .covariates
                .iter()
                .map(|c| (c.name.clone(), c.values[j]))
                .collect(),
        }
    }

    /// Prevalence of a taxon restricted to one group.
    pub fn group_prevalence(&self, taxon: usize, g: Group) -> f64 {
        let row = self.table.row(taxon);
        let (mut nz, mut n) = (0usize, 0usize);
        for (&c, &gj) in row.iter().zip(&self.groups) {
            if gj == g {
                n += 1;
                nz += usize::from(c > 0);
            }
        }
        if n == 0 {
            0.0
        } else {
            nz as f64 / n as f64
        }
    }

    pub fn taxon_index(&self) -> HashMap<&str, usize> {
        self.table
            .taxon_ids
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect()
    }

    pub fn select_samples(&self, keep: &[usize]) -> Self {
        Self {
            table: self.table.select_samples(keep),
            groups: keep.iter().map(|&j| self.groups[j]).collect(),
            covariates: self
                .covariates
                .iter()
                .map(|c| Covariate {
                    name: c.name.clone(),
                    kind: c.kind.clone(),
                    values: keep.iter().map(|&j| c.values[j]).collect(),
                })
                .collect(),
            descriptor: self.descriptor.clone(),
            warnings: self.warnings.clone(),
        }
    }

    pub fn select_taxa(&self, keep: &[usize]) -> Self {
        Self {
            table: self.table.select_taxa(keep),
            ..self.clone()
        }
    }

    /// Same dataset with case and control labels exchanged.
    pub fn with_swapped_groups(&self) -> Self {
        Self {
            groups: self.groups.iter().map(|g| g.swapped()).collect(),
            ..self.clone()
        }
    }

    pub fn without_covariates(&self) -> Self {
        Self {
            covariates: Vec::new(),
            ..self.clone()
        }
    }

    /// Keeps only the named covariates.
    pub fn retain_covariates(&self, names: &[String]) -> Result<Self> {
        for n in names {
            if !self.covariates.iter().any(|c| &c.name == n) {
                return Err(Error::invalid(format!("unknown covariate '{n}'")));
            }
        }
        Ok(Self {
            covariates: self
                .covariates
                .iter()
                .filter(|c| names.contains(&c.name))
                .cloned()
                .collect(),
            ..self.clone()
        })
    }

    fn warn(&mut self, msg: String) {
        warn!("{}: {msg}", self.descriptor.study_id);
        self.warnings.push(msg);
    }

    /// Drops samples whose library size is zero, recording a warning.
    fn drop_empty_samples(mut self) -> Self {
        let sizes = self.table.library_sizes();
        if sizes.iter().all(|&s| s > 0) {
            return self;
        }
        let empty: Vec<String> = sizes
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0)
            .map(|(j, _)| self.table.sample_ids[j].clone())
            .collect();
        let keep: Vec<usize> = (0..sizes.len()).filter(|&j| sizes[j] > 0).collect();
        self = self.select_samples(&keep);
        self.warn(format!(
            "dropped {} sample(s) with zero library size: {}",
            empty.len(),
            empty.join(", ")
        ));
        self
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA"
}

fn tsv_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i, l.split('\t').collect()))
}

fn parse_count(cell: &str) -> Option<u64> {
    let t = cell.trim();
    if let Ok(v) = t.parse::<u64>() {
        return Some(v);
    }
    // integer-valued decimals such as "12.0" are accepted
    let v: f64 = t.parse().ok()?;
    (v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64).then_some(v as u64)
}

/// Parses a taxa-by-samples count TSV (first column taxon id, header row of sample ids).
pub fn parse_counts_tsv(text: &str, source: &str) -> Result<CountTable> {
    let mut lines = tsv_lines(text);
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::invalid(format!("{source}: empty counts file")))?;
    let sample_ids: Vec<String> = header[1..].iter().map(|s| s.trim().to_string()).collect();
    let mut taxon_ids = Vec::new();
    let mut counts = Vec::new();
    for (line, cells) in lines {
        if cells.len() != sample_ids.len() + 1 {
            return Err(Error::Parse {
                path: source.to_string(),
                line,
                message: format!(
                    "expected {} fields, found {}",
                    sample_ids.len() + 1,
                    cells.len()
                ),
            });
        }
        taxon_ids.push(cells[0].trim().to_string());
        for (k, cell) in cells[1..].iter().enumerate() {
            let v = parse_count(cell).ok_or_else(|| Error::Parse {
                path: source.to_string(),
                line,
                message: format!(
                    "count '{}' for sample '{}' is not a non-negative integer",
                    cell.trim(),
                    sample_ids[k]
                ),
            })?;
            counts.push(v);
        }
    }
    CountTable::new(taxon_ids, sample_ids, counts)
}

struct ParsedMeta {
    ids: Vec<String>,
    groups: Vec<Group>,
    covariates: Vec<Covariate>,
}

fn infer_covariate(name: &str, raw: &[Option<String>]) -> Result<Covariate> {
    let present: Vec<&str> = raw.iter().flatten().map(String::as_str).collect();
    let numeric: Option<Vec<f64>> = present.iter().map(|s| s.parse::<f64>().ok()).collect();
    let mut distinct: Vec<&str> = present.clone();
    distinct.sort_unstable();
    distinct.dedup();
    match numeric {
        Some(nums) => {
            let mut dn = nums.clone();
            dn.sort_by(f64::total_cmp);
            dn.dedup();
            if dn.len() == 2 {
                let levels = [format!("{}", dn[0]), format!("{}", dn[1])];
                let values = raw
                    .iter()
                    .map(|v| {
                        v.as_ref()
                            .map(|s| f64::from(s.parse::<f64>().unwrap() == dn[1]))
                    })
                    .collect();
                Ok(Covariate {
                    name: name.to_string(),
                    kind: CovariateKind::Binary { levels },
                    values,
                })
            } else {
                let values = raw
                    .iter()
                    .map(|v| v.as_ref().map(|s| s.parse::<f64>().unwrap()))
                    .collect();
                Ok(Covariate {
                    name: name.to_string(),
                    kind: CovariateKind::Continuous,
                    values,
                })
            }
        }
        None if distinct.len() <= 2 => {
            let levels = [
                distinct.first().copied().unwrap_or("").to_string(),
                distinct.get(1).copied().unwrap_or("").to_string(),
            ];
            let values = raw
                .iter()
                .map(|v| v.as_ref().map(|s| f64::from(*s == levels[1])))
                .collect();
            Ok(Covariate {
                name: name.to_string(),
                kind: CovariateKind::Binary { levels },
                values,
            })
        }
        None => Err(Error::invalid(format!(
            "covariate '{name}' is neither numeric nor two-level ({} levels)",
            distinct.len()
        ))),
    }
}

fn parse_meta_tsv(text: &str, source: &str) -> Result<ParsedMeta> {
    let mut lines = tsv_lines(text);
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::invalid(format!("{source}: empty metadata file")))?;
    if header.len() < 2
        || header[0].trim() != "sample_id"
        || header[1].trim() != "group"
    {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 1,
            message: "metadata header must start with 'sample_id<TAB>group'".into(),
        });
    }
    let cov_names: Vec<String> = header[2..].iter().map(|s| s.trim().to_string()).collect();
    let mut ids = Vec::new();
    let mut groups = Vec::new();
    let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); cov_names.len()];
    for (line, cells) in lines {
        if cells.len() != header.len() {
            return Err(Error::Parse {
                path: source.to_string(),
                line,
                message: format!("expected {} fields, found {}", header.len(), cells.len()),
            });
        }
        ids.push(cells[0].trim().to_string());
        let g = Group::parse(cells[1]).ok_or_else(|| Error::Parse {
            path: source.to_string(),
            line,
            message: format!("group '{}' is not 'control' or 'case'", cells[1].trim()),
        })?;
        groups.push(g);
        for (k, cell) in cells[2..].iter().enumerate() {
            raw[k].push((!is_missing(cell)).then(|| cell.trim().to_string()));
        }
    }
    check_unique(&ids, "metadata sample")?;
    let covariates = cov_names
        .iter()
        .zip(&raw)
        .map(|(n, r)| infer_covariate(n, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(ParsedMeta {
        ids,
        groups,
        covariates,
    })
}

/// Binds parsed counts and metadata, reordering metadata to the count columns.
pub fn bind_dataset(table: CountTable, meta_text: &str, meta_source: &str, descriptor: Descriptor) -> Result<Dataset> {
    let meta = parse_meta_tsv(meta_text, meta_source)?;
    let pos: HashMap<&str, usize> = meta
        .ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let missing: Vec<&str> = table
        .sample_ids()
        .iter()
        .filter(|s| !pos.contains_key(s.as_str()))
        .map(String::as_str)
        .collect();
    let count_ids: HashSet<&str> = table.sample_ids().iter().map(String::as_str).collect();
    let extra: Vec<&str> = meta
        .ids
        .iter()
        .filter(|s| !count_ids.contains(s.as_str()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = String::from("sample ids differ between counts and metadata");
        if !missing.is_empty() {
            msg.push_str(&format!("; missing from metadata: {}", missing.join(", ")));
        }
        if !extra.is_empty() {
            msg.push_str(&format!("; missing from counts: {}", extra.join(", ")));
        }
        return Err(Error::invalid(msg));
    }
    let order: Vec<usize> = table.sample_ids().iter().map(|s| pos[s.as_str()]).collect();
    let groups = order.iter().map(|&i| meta.groups[i]).collect();
    let covariates = meta
        .covariates
        .into_iter()
        .map(|c| Covariate {
            values: order.iter().map(|&i| c.values[i]).collect(),
            ..c
        })
        .collect();
    Ok(Dataset::new(table, groups, covariates, descriptor)?.drop_empty_samples())
}

/// Reads and validates a dataset from a counts TSV and a metadata TSV.
pub fn load_dataset(counts_path: &Path, meta_path: &Path, descriptor: Descriptor) -> Result<Dataset> {
    let counts_src = counts_path.display().to_string();
    let table = parse_counts_tsv(&read_text(counts_path)?, &counts_src)?;
    bind_dataset(
        table,
        &read_text(meta_path)?,
        &meta_path.display().to_string(),
        descriptor,
    )
}

pub fn counts_to_tsv(table: &CountTable) -> String {
    let mut out = String::from("taxon_id");
    for s in table.sample_ids() {
        out.push('\t');
        out.push_str(s);
    }
    out.push('\n');
    for (i, t) in table.taxon_ids().iter().enumerate() {
        out.push_str(t);
        for c in table.row(i) {
            out.push('\t');
            out.push_str(&c.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn metadata_to_tsv(ds: &Dataset) -> String {
    let mut out = String::from("sample_id\tgroup");
    for c in &ds.covariates {
        out.push('\t');
        out.push_str(&c.name);
    }
    out.push('\n');
    for (j, s) in ds.table.sample_ids().iter().enumerate() {
        out.push_str(s);
        out.push('\t');
        out.push_str(&ds.groups[j].to_string());
        for c in &ds.covariates {
            out.push('\t');
            out.push_str(&c.label(j));
        }
        out.push('\n');
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the dataset in the same TSV formats [`load_dataset`] reads.
pub fn write_dataset(ds: &Dataset, counts_path: &Path, meta_path: &Path) -> Result<()> {
    write_text(counts_path, &counts_to_tsv(&ds.table))?;
    write_text(meta_path, &metadata_to_tsv(ds))
}

/// Keeps taxa present (count > 0) in at least `min_prev` of the samples.
///
/// Samples left with an empty library afterwards are dropped with a warning.
pub fn filter_prevalence(ds: &Dataset, min_prev: f64) -> Dataset {
    let n = ds.n_samples();
    let keep: Vec<usize> = (0..ds.n_taxa())
        .filter(|&i| {
            let nz = ds.table.row(i).iter().filter(|&&c| c > 0).count();
            // exact rational comparison nz / n ≥ min_prev, with a rounding guard
            n > 0 && nz as f64 >= min_prev * n as f64 - 1e-9
        })
        .collect();
    if keep.len() == ds.n_taxa() {
        return ds.clone();
    }
    ds.select_taxa(&keep).drop_empty_samples()
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len();
    Some(if m % 2 == 1 {
        values[m / 2]
    } else {
        (values[m / 2 - 1] + values[m / 2]) / 2.0
    })
}

fn mode01(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let ones = values.iter().filter(|&&v| v != 0.0).count();
    Some(if ones * 2 > values.len() { 1.0 } else { 0.0 })
}

/// Drops covariates with too many missing values, imputes the rest group-wise
/// (median for continuous, mode for binary) and standardizes continuous ones
/// to mean 0 and sample standard deviation 1.
pub fn prepare_covariates(ds: &Dataset, max_missing: f64) -> Dataset {
    let mut out = ds.clone();
    let mut kept = Vec::new();
    for cov in &ds.covariates {
        let frac = cov.missing_fraction();
        if frac > max_missing + 1e-12 {
            out.warn(format!(
                "covariate '{}' dropped: {:.1}% missing",
                cov.name,
                100.0 * frac
            ));
            continue;
        }
        let mut values = cov.values.clone();
        for g in [Group::Control, Group::Case] {
            let observed: Vec<f64> = values
                .iter()
                .zip(&ds.groups)
                .filter(|(_, &gj)| gj == g)
                .filter_map(|(v, _)| *v)
                .collect();
            let all: Vec<f64> = values.iter().flatten().copied().collect();
            let fill = match cov.kind {
                CovariateKind::Continuous => {
                    median(&mut observed.clone()).or_else(|| median(&mut all.clone()))
                }
                CovariateKind::Binary { .. } => mode01(&observed).or_else(|| mode01(&all)),
            };
            for (v, &gj) in values.iter_mut().zip(&ds.groups) {
                if gj == g && v.is_none() {
                    *v = fill;
                }
            }
        }
        let filled: Vec<f64> = values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        if filled.iter().any(|v| v.is_nan()) || filled.iter().all(|&v| v == filled[0]) {
            out.warn(format!(
                "covariate '{}' dropped: constant after imputation",
                cov.name
            ));
            continue;
        }
        let values = match cov.kind {
            CovariateKind::Continuous => {
                let n = filled.len() as f64;
                let mean = filled.iter().sum::<f64>() / n;
                let sd = (filled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                filled.iter().map(|v| Some((v - mean) / sd)).collect()
            }
            CovariateKind::Binary { .. } => filled.into_iter().map(Some).collect(),
        };
        kept.push(Covariate {
            name: cov.name.clone(),
            kind: cov.kind.clone(),
            values,
        });
    }
    out.covariates = kept;
    out
}

/// Presence/absence view of the counts.
pub fn presence_matrix(ds: &Dataset) -> CountTable {
    ds.table.presence()
}

/// One row of a third-party result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRow {
    pub taxon_id: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub df: Option<f64>,
    /// Missing when the tool reported no test for the taxon.
    pub p: Option<f64>,
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalResultSet {
    pub method_name: String,
    pub rows: Vec<ExternalRow>,
    pub warnings: Vec<String>,
}

/// Parses a result TSV with columns `taxon_id, estimate, se, df, p, q`
/// (`se`, `df` and `q` optional; `direction` and `applicable` accepted and
/// recomputed; any other column ignored with a warning).
pub fn parse_external_results(text: &str, source: &str, method_name: &str) -> Result<ExternalResultSet> {
    let mut lines = tsv_lines(text);
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::invalid(format!("{source}: empty result file")))?;
    let header: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let required = |name: &str| {
        col(name).ok_or_else(|| Error::Parse {
            path: source.to_string(),
            line: 1,
            message: format!("missing required column '{name}'"),
        })
    };
    let (c_taxon, c_est, c_p) = (required("taxon_id")?, required("estimate")?, required("p")?);
    let (c_se, c_df, c_q) = (col("se"), col("df"), col("q"));
    let known = ["taxon_id", "estimate", "se", "df", "p", "q", "direction", "applicable"];
    let mut warnings = Vec::new();
    for h in &header {
        if !known.contains(&h.as_str()) {
            let msg = format!("{source}: ignoring unknown column '{h}'");
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let mut rows = Vec::new();
    for (line, cells) in lines {
        if cells.len() != header.len() {
            return Err(Error::Parse {
                path: source.to_string(),
                line,
                message: format!("expected {} fields, found {}", header.len(), cells.len()),
            });
        }
        let taxon_id = cells[c_taxon].trim().to_string();
        let num = |c: Option<usize>, what: &str| -> Result<Option<f64>> {
            match c {
                None => Ok(None),
                Some(c) if is_missing(cells[c]) => Ok(None),
                Some(c) => {
                    let v = cells[c].trim();
                    let v = match v {
                        "Inf" | "inf" => f64::INFINITY,
                        _ => v.parse::<f64>().map_err(|_| Error::Parse {
                            path: source.to_string(),
                            line,
                            message: format!("{what} '{v}' for taxon '{taxon_id}' is not a number"),
                        })?,
                    };
                    Ok(Some(v))
                }
            }
        };
        let estimate = num(Some(c_est), "estimate")?.unwrap_or(0.0);
        let p = num(Some(c_p), "p")?;
        let q = num(c_q, "q")?;
        for (name, v) in [("p", p), ("q", q)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!(
                        "{source}: {name} = {v} for taxon '{taxon_id}' is outside [0, 1]"
                    )));
                }
            }
        }
        rows.push(ExternalRow {
            se: num(c_se, "se")?,
            df: num(c_df, "df")?.filter(|d| d.is_finite()),
            estimate,
            p,
            q,
            taxon_id,
        });
    }
    let ids: Vec<String> = rows.iter().map(|r| r.taxon_id.clone()).collect();
    check_unique(&ids, "result taxon")?;
    Ok(ExternalResultSet {
        method_name: method_name.to_string(),
        rows,
        warnings,
    })
}

/// Reads an external result file; the method name is taken from the file stem.
pub fn import_external_results(path: &Path) -> Result<ExternalResultSet> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "external".into());
    parse_external_results(&read_text(path)?, &path.display().to_string(), &name)
}
