//! Cluster-level summaries of unit covariates (peer composition).
//!
//! Continuous covariates are summarized by quantiles, binary ones by their
//! mean. Every unit inherits the summaries of its own cluster, computed over
//! all of the cluster's units including itself.

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::{ClusteredDataset, CovariateKind};
use crate::error::{Error, Result};

/// Sample quantile conventions, named after their plotting positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantileMethod {
    /// `(k - 1) / (n - 1)`, the usual default of statistics packages.
    #[default]
    Linear,
    /// `k / (n + 1)`.
    Weibull,
    /// `(k - 1/2) / n`.
    Hazen,
}

impl fmt::Display for QuantileMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantileMethod::Linear => "linear",
            QuantileMethod::Weibull => "weibull",
            QuantileMethod::Hazen => "hazen",
        })
    }
}

impl std::str::FromStr for QuantileMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "type7" => Ok(QuantileMethod::Linear),
            "weibull" | "type6" => Ok(QuantileMethod::Weibull),
            "hazen" | "type5" => Ok(QuantileMethod::Hazen),
            _ => Err(format!("unknown quantile method '{s}' (expected linear, weibull, or hazen)")),
        }
    }
}

/// Quantile of an ascending slice by interpolating between order statistics.
///
/// Positions outside the sample clamp to the extreme order statistics.
/// Panics on an empty slice.
pub fn quantile_sorted(sorted: &[f64], p: f64, method: QuantileMethod) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let n = sorted.len() as f64;
    // zero-based fractional rank
    let h = match method {
        QuantileMethod::Linear => (n - 1.0) * p,
        QuantileMethod::Weibull => (n + 1.0) * p - 1.0,
        QuantileMethod::Hazen => n * p - 0.5,
    };
    let h = h.clamp(0.0, n - 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Linear-interpolation quantile of an unsorted sample.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p, QuantileMethod::Linear)
}

/// A single summary function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregate {
    Quantile(f64),
    Mean,
}

impl Aggregate {
    /// Column suffix: `mean`, `q25`, `q12.5`, ...
    pub fn label(&self) -> String {
        match self {
            Aggregate::Mean => "mean".to_string(),
            Aggregate::Quantile(p) => {
                let pct = (p * 100.0 * 1e9).round() / 1e9;
                format!("q{pct}")
            }
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl std::str::FromStr for Aggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("mean") {
            return Ok(Aggregate::Mean);
        }
        let pct = s
            .strip_prefix('q')
            .and_then(|p| p.parse::<f64>().ok())
            .ok_or_else(|| Error::BadAggregateRule(s.to_string()))?;
        let p = pct / 100.0;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::BadQuantileLevel(p));
        }
        Ok(Aggregate::Quantile(p))
    }
}

fn validate_rules(rules: &[Aggregate]) -> Result<()> {
    let mut last = f64::NEG_INFINITY;
    let mut means = 0;
    for r in rules {
        match *r {
            Aggregate::Quantile(p) => {
                if !(p > 0.0 && p < 1.0) || p <= last {
                    return Err(Error::BadQuantileLevel(p));
                }
                last = p;
            }
            Aggregate::Mean => means += 1,
        }
    }
    if means > 1 {
        return Err(Error::BadAggregateRule("mean listed twice".into()));
    }
    Ok(())
}

/// Which summaries to compute for each unit covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSpec {
    levels: Vec<f64>,
    overrides: IndexMap<String, Vec<Aggregate>>,
    method: QuantileMethod,
}

impl Default for AggregateSpec {
    fn default() -> Self {
        Self {
            levels: vec![0.25, 0.50, 0.75],
            overrides: IndexMap::new(),
            method: QuantileMethod::Linear,
        }
    }
}

impl AggregateSpec {
    /// Quantile levels used for continuous covariates without an override.
    /// Levels must be sorted, distinct, and strictly inside (0, 1).
    pub fn with_levels(mut self, levels: Vec<f64>) -> Result<Self> {
        let rules: Vec<_> = levels.iter().map(|&p| Aggregate::Quantile(p)).collect();
        validate_rules(&rules)?;
        self.levels = levels;
        Ok(self)
    }

    /// Explicit summaries for one covariate. An empty list drops it.
    pub fn with_override(mut self, covariate: impl Into<String>, rules: Vec<Aggregate>) -> Result<Self> {
        validate_rules(&rules)?;
        self.overrides.insert(covariate.into(), rules);
        Ok(self)
    }

    pub fn with_method(mut self, method: QuantileMethod) -> Self {
        self.method = method;
        self
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn method(&self) -> QuantileMethod {
        self.method
    }

    pub fn overrides(&self) -> &IndexMap<String, Vec<Aggregate>> {
        &self.overrides
    }

    /// Rules applied to a covariate of the given kind.
    pub fn rules_for(&self, name: &str, kind: CovariateKind) -> Vec<Aggregate> {
        if let Some(r) = self.overrides.get(name) {
            return r.clone();
        }
        match kind {
            CovariateKind::Binary => vec![Aggregate::Mean],
            CovariateKind::Continuous => self.levels.iter().map(|&p| Aggregate::Quantile(p)).collect(),
        }
    }
}

/// Per-cluster aggregate values, one row per cluster in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTable {
    names: Vec<String>,
    kinds: Vec<CovariateKind>,
    cluster_ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl AggregateTable {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Kind of each aggregate column, inferred from its values over clusters.
    pub fn kinds(&self) -> &[CovariateKind] {
        &self.kinds
    }

    pub fn cluster_ids(&self) -> &[String] {
        &self.cluster_ids
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, cluster_id: &str) -> Option<&[f64]> {
        let j = self.cluster_ids.iter().position(|c| c == cluster_id)?;
        Some(&self.rows[j])
    }

    /// Values of one aggregate across clusters.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Summaries of `values` within each group of unit indices.
///
/// An empty group yields NaN for every summary.
pub fn aggregate_groups(
    values: &[f64],
    groups: &[Vec<usize>],
    rules: &[Aggregate],
    method: QuantileMethod,
) -> Vec<Vec<f64>> {
    let mut buf = Vec::new();
    groups
        .iter()
        .map(|g| {
            if g.is_empty() {
                return vec![f64::NAN; rules.len()];
            }
            buf.clear();
            buf.extend(g.iter().map(|&i| values[i]));
            // sorted before summing too, so means do not depend on unit order
            buf.sort_by(f64::total_cmp);
            rules
                .iter()
                .map(|r| match *r {
                    Aggregate::Quantile(p) => quantile_sorted(&buf, p, method),
                    Aggregate::Mean => buf.iter().sum::<f64>() / buf.len() as f64,
                })
                .collect()
        })
        .collect()
}

pub fn compute_aggregates(dataset: &ClusteredDataset, spec: &AggregateSpec) -> Result<AggregateTable> {
    for name in spec.overrides.keys() {
        if dataset.unit_column(name).is_none() {
            return Err(Error::UnknownCovariate(name.clone()));
        }
    }
    let groups: Vec<Vec<usize>> = (0..dataset.n_clusters()).map(|j| dataset.members(j).to_vec()).collect();
    let m = dataset.n_clusters();
    let mut names = Vec::new();
    let mut rows = vec![Vec::new(); m];
    for (cov, values) in dataset.unit_schema().iter().zip(dataset.unit_columns()) {
        let rules = spec.rules_for(&cov.name, cov.kind);
        if rules.is_empty() {
            continue;
        }
        names.extend(rules.iter().map(|r| format!("{}_{}", cov.name, r.label())));
        for (row, part) in rows.iter_mut().zip(aggregate_groups(values, &groups, &rules, spec.method)) {
            row.extend(part);
        }
    }
    let kinds = (0..names.len())
        .map(|k| CovariateKind::infer(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect();
    Ok(AggregateTable {
        names,
        kinds,
        cluster_ids: dataset.cluster_ids().to_vec(),
        rows,
    })
}

/// Aggregates expanded to unit level: one column per aggregate, one entry
/// per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitAggregates {
    pub names: Vec<String>,
    pub kinds: Vec<CovariateKind>,
    pub columns: Vec<Vec<f64>>,
}

impl UnitAggregates {
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}

/// Gives every unit the aggregate row of its own cluster.
pub fn attach_aggregates(dataset: &ClusteredDataset, table: &AggregateTable) -> Result<UnitAggregates> {
    // fast path: table computed on this very dataset
    let cluster_rows: Vec<&[f64]> = if table.cluster_ids == dataset.cluster_ids() {
        table.rows.iter().map(Vec::as_slice).collect()
    } else {
        let index: HashMap<&str, usize> =
            table.cluster_ids.iter().enumerate().map(|(j, c)| (c.as_str(), j)).collect();
        dataset
            .cluster_ids()
            .iter()
            .map(|c| {
                index
                    .get(c.as_str())
                    .map(|&j| table.rows[j].as_slice())
                    .ok_or_else(|| Error::MissingClusterRow(c.clone()))
            })
            .collect::<Result<_>>()?
    };
    let columns = (0..table.names.len())
        .map(|k| dataset.unit_cluster().iter().map(|&j| cluster_rows[j][k]).collect())
        .collect();
    Ok(UnitAggregates {
        names: table.names.clone(),
        kinds: table.kinds.clone(),
        columns,
    })
}
