//! Parametric g-formula (standardization) estimators.
//!
//! Separate linear outcome models are fit to the treated-cluster units and
//! the control-cluster units. Both models then predict every unit in the
//! study, and the estimate is the difference of the two prediction means.
//! The regressors depend on the adjustment set:
//!
//! | set   | regressors                                   |
//! |-------|----------------------------------------------|
//! | `W`   | cluster covariates                           |
//! | `WH`  | cluster covariates, cluster aggregates       |
//! | `WHX` | cluster covariates, aggregates, unit covariates |
//!
//! An intercept is always included. With `quadratic` set, the square of
//! every continuous regressor is appended.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::aggregates::{attach_aggregates, compute_aggregates, AggregateSpec, AggregateTable};
use crate::data::{ClusteredDataset, CovariateKind};
use crate::error::{Error, Result};
use crate::ols::least_squares;

pub const INTERCEPT: &str = "(intercept)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustmentSet {
    W,
    WH,
    WHX,
}

impl AdjustmentSet {
    pub const ALL: [AdjustmentSet; 3] = [AdjustmentSet::W, AdjustmentSet::WH, AdjustmentSet::WHX];

    pub fn uses_aggregates(self) -> bool {
        self != AdjustmentSet::W
    }

    pub fn uses_unit_covariates(self) -> bool {
        self == AdjustmentSet::WHX
    }
}

impl fmt::Display for AdjustmentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdjustmentSet::W => "w",
            AdjustmentSet::WH => "wh",
            AdjustmentSet::WHX => "whx",
        })
    }
}

impl FromStr for AdjustmentSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "w" => Ok(AdjustmentSet::W),
            "wh" => Ok(AdjustmentSet::WH),
            "whx" => Ok(AdjustmentSet::WHX),
            _ => Err(format!("unknown adjustment set '{s}' (expected w, wh, or whx)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub adjustment: AdjustmentSet,
    pub quadratic: bool,
}

impl ModelSpec {
    pub fn new(adjustment: AdjustmentSet) -> Self {
        Self {
            adjustment,
            quadratic: false,
        }
    }

    pub fn quadratic(mut self, on: bool) -> Self {
        self.quadratic = on;
        self
    }
}

/// Which units a design should contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    All,
    Treated,
    Control,
}

/// Unit-level regressor columns (without the intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignColumns {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl DesignColumns {
    pub fn build(
        dataset: &ClusteredDataset,
        aggregates: Option<&AggregateTable>,
        spec: &ModelSpec,
    ) -> Result<Self> {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        let mut columns: Vec<Vec<f64>> = Vec::new();

        for (cov, col) in dataset.cluster_schema().iter().zip(dataset.cluster_columns()) {
            names.push(cov.name.clone());
            kinds.push(cov.kind);
            columns.push(dataset.unit_cluster().iter().map(|&j| col[j]).collect());
        }
        if spec.adjustment.uses_aggregates() {
            let table = aggregates.ok_or(Error::MissingAggregates)?;
            let attached = attach_aggregates(dataset, table)?;
            names.extend(attached.names);
            kinds.extend(attached.kinds);
            columns.extend(attached.columns);
        }
        if spec.adjustment.uses_unit_covariates() {
            for (cov, col) in dataset.unit_schema().iter().zip(dataset.unit_columns()) {
                names.push(cov.name.clone());
                kinds.push(cov.kind);
                columns.push(col.clone());
            }
        }
        if spec.quadratic {
            let squares: Vec<(String, Vec<f64>)> = names
                .iter()
                .zip(&kinds)
                .zip(&columns)
                .filter(|((_, kind), _)| **kind == CovariateKind::Continuous)
                .map(|((name, _), col)| (format!("{name}^2"), col.iter().map(|v| v * v).collect()))
                .collect();
            for (name, col) in squares {
                names.push(name);
                columns.push(col);
            }
        }
        Ok(Self { names, columns })
    }

    /// Design matrix (intercept first) for the given units.
    pub fn matrix(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.columns.len() + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                self.columns[c - 1][rows[r]]
            }
        })
    }
}

/// Design for one arm (or all units): regressor names including the
/// intercept, the matrix, and the matching response.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub rows: Vec<usize>,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

pub fn build_design(
    dataset: &ClusteredDataset,
    aggregates: Option<&AggregateTable>,
    spec: &ModelSpec,
    arm: Arm,
) -> Result<Design> {
    let cols = DesignColumns::build(dataset, aggregates, spec)?;
    let rows = arm_rows(dataset, arm);
    let mut names = vec![INTERCEPT.to_string()];
    names.extend(cols.names.iter().cloned());
    Ok(Design {
        x: cols.matrix(&rows),
        y: rows.iter().map(|&i| dataset.outcome()[i]).collect(),
        names,
        rows,
    })
}

fn arm_rows(dataset: &ClusteredDataset, arm: Arm) -> Vec<usize> {
    (0..dataset.n_units())
        .filter(|&i| match arm {
            Arm::All => true,
            Arm::Treated => dataset.unit_treated(i),
            Arm::Control => !dataset.unit_treated(i),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedArmModel {
    pub treated: bool,
    /// Aligned with the regressor names; the intercept comes first.
    pub coefficients: Vec<f64>,
    pub rank_deficient: bool,
    pub n_rows: usize,
}

impl FittedArmModel {
    /// Linear prediction for unit `i` of the design columns.
    pub fn predict(&self, cols: &DesignColumns, i: usize) -> f64 {
        self.coefficients[0]
            + cols
                .columns
                .iter()
                .zip(&self.coefficients[1..])
                .map(|(c, b)| c[i] * b)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GFormulaFit {
    pub estimate: f64,
    /// Mean over all units of the treated-model predictions.
    pub mean_treated: f64,
    /// Mean over all units of the control-model predictions.
    pub mean_control: f64,
    pub regressors: Vec<String>,
    pub treated_model: FittedArmModel,
    pub control_model: FittedArmModel,
}

impl GFormulaFit {
    pub fn rank_deficient(&self) -> bool {
        self.treated_model.rank_deficient || self.control_model.rank_deficient
    }
}

/// G-formula estimate of the average treatment effect.
///
/// `aggregates` must be given for the `WH` and `WHX` sets and must cover
/// every cluster of `dataset`.
pub fn g_formula(
    dataset: &ClusteredDataset,
    aggregates: Option<&AggregateTable>,
    spec: &ModelSpec,
) -> Result<GFormulaFit> {
    dataset.require_both_arms()?;
    let cols = DesignColumns::build(dataset, aggregates, spec)?;
    g_formula_on(dataset, &cols)
}

pub(crate) fn g_formula_on(dataset: &ClusteredDataset, cols: &DesignColumns) -> Result<GFormulaFit> {
    let fit_arm = |arm: Arm| -> Result<FittedArmModel> {
        let rows = arm_rows(dataset, arm);
        let y: Vec<f64> = rows.iter().map(|&i| dataset.outcome()[i]).collect();
        let fit = least_squares(&cols.matrix(&rows), &y)?;
        Ok(FittedArmModel {
            treated: arm == Arm::Treated,
            rank_deficient: fit.rank_deficient(),
            n_rows: fit.n_rows,
            coefficients: fit.coefficients,
        })
    };
    let treated_model = fit_arm(Arm::Treated)?;
    let control_model = fit_arm(Arm::Control)?;

    let n = dataset.n_units();
    let (mut sum1, mut sum0) = (0.0, 0.0);
    for i in 0..n {
        sum1 += treated_model.predict(cols, i);
        sum0 += control_model.predict(cols, i);
    }
    let mean_treated = sum1 / n as f64;
    let mean_control = sum0 / n as f64;

    let mut regressors = vec![INTERCEPT.to_string()];
    regressors.extend(cols.names.iter().cloned());
    Ok(GFormulaFit {
        estimate: mean_treated - mean_control,
        mean_treated,
        mean_control,
        regressors,
        treated_model,
        control_model,
    })
}

/// Computes aggregates when the adjustment set needs them, then runs the
/// g-formula.
pub fn estimate_effect(
    dataset: &ClusteredDataset,
    aggregate_spec: &AggregateSpec,
    spec: &ModelSpec,
) -> Result<GFormulaFit> {
    let table = if spec.adjustment.uses_aggregates() {
        Some(compute_aggregates(dataset, aggregate_spec)?)
    } else {
        None
    };
    g_formula(dataset, table.as_ref(), spec)
}
