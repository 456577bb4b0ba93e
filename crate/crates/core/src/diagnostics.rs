//! Covariate balance between treated and control clusters.

use std::fmt;

use serde::Serialize;

use crate::aggregates::AggregateTable;
use crate::bootstrap::mean_sd;
use crate::data::ClusteredDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Unit,
    Cluster,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Unit => "unit",
            Level::Cluster => "cluster",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub level: Level,
    pub mean_treated: f64,
    pub mean_control: f64,
    /// `None` when both arms are constant (zero pooled SD).
    pub std_diff: Option<f64>,
}

/// `(mean_t - mean_c) / sqrt((var_t + var_c) / 2)` with `n - 1` sample
/// variances. A single-observation arm contributes zero variance.
pub fn standardized_difference(treated: &[f64], control: &[f64]) -> Result<f64> {
    if treated.is_empty() || control.is_empty() {
        return Err(Error::EmptySample);
    }
    let (mt, sdt) = mean_sd(treated);
    let (mc, sdc) = mean_sd(control);
    let pooled = ((sdt * sdt + sdc * sdc) / 2.0).sqrt();
    if pooled == 0.0 {
        return Err(Error::ZeroPooledSd);
    }
    Ok((mt - mc) / pooled)
}

fn row(covariate: &str, level: Level, values: &[f64], arm: impl Fn(usize) -> bool) -> Result<BalanceRow> {
    let mut t = Vec::new();
    let mut c = Vec::new();
    for (k, &v) in values.iter().enumerate() {
        if arm(k) {
            t.push(v);
        } else {
            c.push(v);
        }
    }
    let std_diff = match standardized_difference(&t, &c) {
        Ok(d) => Some(d),
        Err(Error::ZeroPooledSd) => None,
        Err(e) => return Err(e),
    };
    Ok(BalanceRow {
        covariate: covariate.to_string(),
        level,
        mean_treated: mean_sd(&t).0,
        mean_control: mean_sd(&c).0,
        std_diff,
    })
}

/// Balance rows: unit covariates over units, then cluster covariates over
/// clusters, then (if given) aggregates over clusters.
pub fn balance_table(dataset: &ClusteredDataset, aggregates: Option<&AggregateTable>) -> Result<Vec<BalanceRow>> {
    dataset.require_both_arms()?;
    let mut rows = Vec::new();
    for cov in dataset.unit_schema() {
        let values = dataset.unit_column(&cov.name).expect("schema column");
        rows.push(row(&cov.name, Level::Unit, values, |i| dataset.unit_treated(i))?);
    }
    for cov in dataset.cluster_schema() {
        let values = dataset.cluster_column(&cov.name).expect("schema column");
        rows.push(row(&cov.name, Level::Cluster, values, |j| dataset.treated()[j])?);
    }
    if let Some(table) = aggregates {
        let treated: Vec<bool> = table
            .cluster_ids()
            .iter()
            .map(|id| {
                dataset
                    .cluster_ids()
                    .iter()
                    .position(|c| c == id)
                    .map(|j| dataset.treated()[j])
                    .ok_or_else(|| Error::MissingClusterRow(id.clone()))
            })
            .collect::<Result<_>>()?;
        for name in table.names() {
            let values = table.column(name).expect("table column");
            rows.push(row(name, Level::Cluster, &values, |j| treated[j])?);
        }
    }
    Ok(rows)
}
