//! Ranking of methods by a weighted average of standardized metrics.

use serde::Serialize;

use super::MetricsReport;
use crate::error::{Error, Result};
use crate::methods::format_number;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Conflict,
    Replication,
    Opposite,
    Ci,
    Nhits,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Conflict,
        MetricKind::Replication,
        MetricKind::Opposite,
        MetricKind::Ci,
        MetricKind::Nhits,
    ];

    fn name(self) -> &'static str {
        match self {
            MetricKind::Conflict => "conflict",
            MetricKind::Replication => "replication",
            MetricKind::Opposite => "opposite",
            MetricKind::Ci => "ci",
            MetricKind::Nhits => "nhits",
        }
    }

    /// Raw value oriented so that larger is better.
    fn oriented(self, r: &MetricsReport) -> Option<f64> {
        match self {
            MetricKind::Conflict => r.conflict.to_f64().map(|v| -v),
            MetricKind::Replication => r.replication.to_f64(),
            MetricKind::Opposite => r.opposite.to_f64().map(|v| -v),
            MetricKind::Ci => r.ci.to_f64(),
            MetricKind::Nhits => Some(r.nhits as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankWeights {
    pub conflict: f64,
    pub replication: f64,
    pub opposite: f64,
    pub ci: f64,
    pub nhits: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        Self {
            conflict: 2.0,
            replication: 1.0,
            opposite: 0.5,
            ci: 0.5,
            nhits: 1.0,
        }
    }
}

impl RankWeights {
    fn get(&self, m: MetricKind) -> f64 {
        match m {
            MetricKind::Conflict => self.conflict,
            MetricKind::Replication => self.replication,
            MetricKind::Opposite => self.opposite,
            MetricKind::Ci => self.ci,
            MetricKind::Nhits => self.nhits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaScores {
    pub alpha: f64,
    /// Standardized, better-is-larger values in [`MetricKind::ALL`] order.
    pub z: [Option<f64>; 5],
    pub composite: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub rank: usize,
    pub method: String,
    /// Mean of the per-α composites.
    pub score: f64,
    pub per_alpha: Vec<AlphaScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTable {
    pub alphas: Vec<f64>,
    pub weights: RankWeights,
    pub rows: Vec<RankRow>,
}

/// z-scores with the sample standard deviation; all zero when the values
/// do not vary.
fn standardize(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.len() < 2 {
        return vec![None; values.len()];
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let sd = (present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    values
        .iter()
        .map(|v| v.map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 }))
        .collect()
}

/// Standardizes each metric across methods within each α, combines them
/// with `weights` (metrics missing for a method are left out of its
/// average) and orders methods by the mean composite over α, best first.
pub fn rank_methods(reports: &[MetricsReport], weights: RankWeights) -> Result<RankTable> {
    let mut methods: Vec<&str> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        if !alphas.contains(&r.alpha) {
            alphas.push(r.alpha);
        }
    }
    if methods.len() < 2 {
        return Err(Error::invalid(
            "ranking needs at least two methods: standardization undefined",
        ));
    }
    alphas.sort_by(f64::total_cmp);
    let mut per_method: Vec<Vec<AlphaScores>> = vec![Vec::new(); methods.len()];
    for &alpha in &alphas {
        let row_of = |m: &str| reports.iter().find(|r| r.method == m && r.alpha == alpha);
        let mut z_cols = Vec::new();
        for metric in MetricKind::ALL {
            let raw: Vec<Option<f64>> = methods
                .iter()
                .map(|m| row_of(m).and_then(|r| metric.oriented(r)))
                .collect();
            z_cols.push(standardize(&raw));
        }
        for (mi, scores) in per_method.iter_mut().enumerate() {
            let z: [Option<f64>; 5] = std::array::from_fn(|k| z_cols[k][mi]);
            let (mut num, mut den) = (0.0, 0.0);
            for (k, metric) in MetricKind::ALL.iter().enumerate() {
                if let Some(v) = z[k] {
                    num += weights.get(*metric) * v;
                    den += weights.get(*metric);
                }
            }
            scores.push(AlphaScores {
                alpha,
                z,
                composite: (den > 0.0).then(|| num / den),
            });
        }
    }
    let mut rows: Vec<RankRow> = methods
        .iter()
        .zip(per_method)
        .map(|(m, per_alpha)| {
            let c: Vec<f64> = per_alpha.iter().filter_map(|a| a.composite).collect();
            let score = if c.is_empty() { 0.0 } else { c.iter().sum::<f64>() / c.len() as f64 };
            RankRow {
                rank: 0,
                method: m.to_string(),
                score,
                per_alpha,
            }
        })
        .collect();
    // stable: equal scores keep input order
    rows.sort_by(|a, b| b.score.total_cmp(&a.score));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(RankTable { alphas, weights, rows })
}

/// Methods in rank order with the standardized metric values per α.
pub fn rank_table_to_tsv(table: &RankTable) -> String {
    let mut header = vec!["rank".to_string(), "method".to_string(), "score".to_string()];
    for a in &table.alphas {
        let a = format_number(*a);
        for m in MetricKind::ALL {
            header.push(format!("{}_z@{a}", m.name()));
        }
        header.push(format!("composite@{a}"));
    }
    let mut out = header.join("\t");
    out.push('\n');
    let f = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
    for r in &table.rows {
        let mut fields = vec![r.rank.to_string(), r.method.clone(), format!("{:.6}", r.score)];
        for a in &r.per_alpha {
            fields.extend(a.z.iter().map(|&z| f(z)));
            fields.push(f(a.composite));
        }
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    out
}
