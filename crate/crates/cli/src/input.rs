//! Dataset loading, manifests, covariate policy and input digests.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use daa_core::corpus::{load_dataset, Dataset, Descriptor, SeqType};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Taxa-by-samples count table (TSV).
    #[arg(long, requires = "meta", conflicts_with = "manifest")]
    pub counts: Option<PathBuf>,
    /// Sample metadata (TSV with sample_id, group and optional covariates).
    #[arg(long, requires = "counts")]
    pub meta: Option<PathBuf>,
    /// JSON listing several datasets with their descriptors.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Study id for --counts/--meta input (default: the counts file stem).
    #[arg(long)]
    pub study_id: Option<String>,
    #[arg(long, default_value = "unspecified")]
    pub condition: String,
    #[arg(long, default_value = "16S")]
    pub seq_type: String,
    /// `auto` keeps every metadata covariate, `none` drops them, otherwise a
    /// comma-separated list of covariate names to keep.
    #[arg(long, default_value = "auto")]
    pub covariates: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub study_id: String,
    pub condition: String,
    pub seq_type: SeqType,
    pub counts: PathBuf,
    pub meta: PathBuf,
}

/// Multi-dataset input; relative paths are resolved against the manifest's
/// directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub datasets: Vec<ManifestEntry>,
    /// Study pairs never to be paired in cross-study benchmarks.
    #[serde(default)]
    pub exclusions: Vec<(String, String)>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut m: Manifest = serde_json::from_str(&text)
            .map_err(daa_core::Error::from)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut m.datasets {
            e.counts = base.join(&e.counts);
            e.meta = base.join(&e.meta);
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn digest(path: &Path) -> Result<InputDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let hash = Sha256::digest(&bytes);
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

pub struct Loaded {
    pub datasets: Vec<Dataset>,
    pub exclusions: Vec<(String, String)>,
    pub digests: Vec<InputDigest>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum CovariatePolicy {
    Auto,
    None,
    Keep(Vec<String>),
}

fn covariate_policy(s: &str) -> Result<CovariatePolicy> {
    Ok(match s.trim() {
        "auto" => CovariatePolicy::Auto,
        "none" => CovariatePolicy::None,
        list => {
            let names: Vec<String> = list.split(',').map(|n| n.trim().to_string()).filter(|n| !n.is_empty()).collect();
            if names.is_empty() {
                bail!(daa_core::Error::Invalid("--covariates needs auto, none or a list of names".into()));
            }
            CovariatePolicy::Keep(names)
        }
    })
}

impl InputArgs {
    pub fn load(&self) -> Result<Loaded> {
        let policy = covariate_policy(&self.covariates)?;
        let (entries, exclusions, mut digests) = match (&self.counts, &self.meta, &self.manifest) {
            (Some(counts), Some(meta), None) => {
                let study_id = self.study_id.clone().unwrap_or_else(|| {
                    counts
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "study".into())
                });
                let entry = ManifestEntry {
                    study_id,
                    condition: self.condition.clone(),
                    seq_type: self.seq_type.parse::<SeqType>()?,
                    counts: counts.clone(),
                    meta: meta.clone(),
                };
                (vec![entry], Vec::new(), Vec::new())
            }
            (None, None, Some(path)) => {
                let m = Manifest::read(path)?;
                (m.datasets, m.exclusions, vec![digest(path)?])
            }
            _ => bail!(daa_core::Error::Invalid(
                "give either --counts with --meta, or --manifest".into()
            )),
        };
        if entries.is_empty() {
            bail!(daa_core::Error::Invalid("the manifest lists no datasets".into()));
        }
        let mut seen = std::collections::HashSet::new();
        let mut datasets = Vec::with_capacity(entries.len());
        let mut warnings = Vec::new();
        for e in entries {
            if !seen.insert(e.study_id.clone()) {
                bail!(daa_core::Error::Invalid(format!("study id '{}' appears twice", e.study_id)));
            }
            digests.push(digest(&e.counts)?);
            digests.push(digest(&e.meta)?);
            let descriptor = Descriptor {
                study_id: e.study_id.clone(),
                condition: e.condition.clone(),
                seq_type: e.seq_type,
            };
            let ds = load_dataset(&e.counts, &e.meta, descriptor)
                .with_context(|| format!("loading study '{}'", e.study_id))?;
            let ds = match &policy {
                CovariatePolicy::Auto => ds,
                CovariatePolicy::None => ds.without_covariates(),
                CovariatePolicy::Keep(names) => ds.retain_covariates(names)?,
            };
            warnings.extend(ds.warnings.iter().map(|w| format!("{}: {w}", e.study_id)));
            datasets.push(ds);
        }
        Ok(Loaded {
            datasets,
            exclusions,
            digests,
            warnings,
        })
    }
}
