//! Units, clusters, and the validated join of the two.
//!
//! A [`ClusteredDataset`] is built once from row records ([`Unit`],
//! [`Cluster`]) and is immutable afterwards. Internally it is stored by
//! column so that resampling and design-matrix construction avoid per-row
//! map lookups.

use std::collections::HashMap;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Continuous,
    Binary,
}

impl CovariateKind {
    /// A column is binary iff every value is exactly 0 or 1.
    pub fn infer(values: &[f64]) -> Self {
        if values.iter().all(|&v| v == 0.0 || v == 1.0) {
            CovariateKind::Binary
        } else {
            CovariateKind::Continuous
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
}

/// One observed unit (student, patient).
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub unit_id: String,
    pub cluster_id: String,
    pub outcome: f64,
    pub covariates: IndexMap<String, f64>,
}

/// One cluster (school, hospital) with its treatment and baseline covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub cluster_id: String,
    pub treated: bool,
    pub covariates: IndexMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredDataset {
    unit_ids: Vec<Arc<str>>,
    unit_cluster: Vec<usize>,
    outcome: Vec<f64>,
    unit_schema: Vec<Covariate>,
    unit_columns: Vec<Vec<f64>>,
    cluster_ids: Vec<String>,
    treated: Vec<bool>,
    cluster_schema: Vec<Covariate>,
    cluster_columns: Vec<Vec<f64>>,
    members: Vec<Vec<usize>>,
}

/// Validates and joins unit and cluster records.
///
/// Covariate kinds are inferred per column. A dataset with only one arm is
/// accepted (see [`ClusteredDataset::is_one_armed`]) but cannot be used for
/// estimation.
pub fn build_dataset(units: Vec<Unit>, clusters: Vec<Cluster>) -> Result<ClusteredDataset> {
    if units.is_empty() || clusters.is_empty() {
        return Err(Error::EmptyInput);
    }

    let mut index: HashMap<&str, usize> = HashMap::with_capacity(clusters.len());
    for (j, c) in clusters.iter().enumerate() {
        if index.insert(c.cluster_id.as_str(), j).is_some() {
            return Err(Error::DuplicateClusterId(c.cluster_id.clone()));
        }
    }

    let cluster_names: Vec<String> = clusters[0].covariates.keys().cloned().collect();
    let mut cluster_columns = vec![Vec::with_capacity(clusters.len()); cluster_names.len()];
    for c in &clusters {
        check_keys(&cluster_names, &c.covariates, "cluster", &c.cluster_id)?;
        for (k, name) in cluster_names.iter().enumerate() {
            let v = c.covariates[name.as_str()];
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "cluster '{}' covariate '{name}'",
                    c.cluster_id
                )));
            }
            cluster_columns[k].push(v);
        }
    }

    let unit_names: Vec<String> = units[0].covariates.keys().cloned().collect();
    let mut unit_columns = vec![Vec::with_capacity(units.len()); unit_names.len()];
    let mut unit_cluster = Vec::with_capacity(units.len());
    let mut outcome = Vec::with_capacity(units.len());
    let mut unit_ids = Vec::with_capacity(units.len());
    for u in &units {
        let j = *index
            .get(u.cluster_id.as_str())
            .ok_or_else(|| Error::DanglingClusterRef {
                unit_id: u.unit_id.clone(),
                cluster_id: u.cluster_id.clone(),
            })?;
        check_keys(&unit_names, &u.covariates, "unit", &u.unit_id)?;
        if !u.outcome.is_finite() {
            return Err(Error::NonFinite(format!("outcome of unit '{}'", u.unit_id)));
        }
        for (k, name) in unit_names.iter().enumerate() {
            let v = u.covariates[name.as_str()];
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "unit '{}' covariate '{name}'",
                    u.unit_id
                )));
            }
            unit_columns[k].push(v);
        }
        unit_cluster.push(j);
        outcome.push(u.outcome);
        unit_ids.push(Arc::from(u.unit_id.as_str()));
    }

    ClusteredDataset::from_columns(
        unit_ids,
        unit_cluster,
        outcome,
        unit_names,
        unit_columns,
        clusters.into_iter().map(|c| (c.cluster_id, c.treated)).unzip(),
        cluster_names,
        cluster_columns,
    )
}

fn check_keys(
    expected: &[String],
    got: &IndexMap<String, f64>,
    what: &str,
    id: &str,
) -> Result<()> {
    if got.len() != expected.len() || expected.iter().any(|k| !got.contains_key(k)) {
        let got: Vec<&str> = got.keys().map(String::as_str).collect();
        return Err(Error::InconsistentSchema(format!(
            "{what} '{id}' has covariates {got:?}, expected {expected:?}"
        )));
    }
    Ok(())
}

impl ClusteredDataset {
    /// Column-oriented constructor shared by ingestion, simulation and the
    /// bootstrap. Validates lengths, membership, and non-empty clusters.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_columns(
        unit_ids: Vec<Arc<str>>,
        unit_cluster: Vec<usize>,
        outcome: Vec<f64>,
        unit_names: Vec<String>,
        unit_columns: Vec<Vec<f64>>,
        (cluster_ids, treated): (Vec<String>, Vec<bool>),
        cluster_names: Vec<String>,
        cluster_columns: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = unit_ids.len();
        let m = cluster_ids.len();
        if n == 0 || m == 0 {
            return Err(Error::EmptyInput);
        }
        if unit_cluster.len() != n
            || outcome.len() != n
            || unit_columns.iter().any(|c| c.len() != n)
            || unit_columns.len() != unit_names.len()
            || treated.len() != m
            || cluster_columns.iter().any(|c| c.len() != m)
            || cluster_columns.len() != cluster_names.len()
        {
            return Err(Error::DimensionMismatch(
                "column lengths disagree with unit/cluster counts".into(),
            ));
        }
        check_unique_names(&unit_names, "unit")?;
        check_unique_names(&cluster_names, "cluster")?;

        let mut members = vec![Vec::new(); m];
        for (i, &j) in unit_cluster.iter().enumerate() {
            members
                .get_mut(j)
                .ok_or_else(|| Error::DanglingClusterRef {
                    unit_id: unit_ids[i].to_string(),
                    cluster_id: format!("#{j}"),
                })?
                .push(i);
        }
        if let Some(j) = members.iter().position(Vec::is_empty) {
            return Err(Error::EmptyCluster(cluster_ids[j].clone()));
        }

        let unit_schema = unit_names
            .into_iter()
            .zip(&unit_columns)
            .map(|(name, col)| Covariate {
                name,
                kind: CovariateKind::infer(col),
            })
            .collect();
        let cluster_schema = cluster_names
            .into_iter()
            .zip(&cluster_columns)
            .map(|(name, col)| Covariate {
                name,
                kind: CovariateKind::infer(col),
            })
            .collect();

        Ok(Self {
            unit_ids,
            unit_cluster,
            outcome,
            unit_schema,
            unit_columns,
            cluster_ids,
            treated,
            cluster_schema,
            cluster_columns,
            members,
        })
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_ids.len()
    }

    pub fn unit_ids(&self) -> &[Arc<str>] {
        &self.unit_ids
    }

    pub fn cluster_ids(&self) -> &[String] {
        &self.cluster_ids
    }

    /// Cluster index (into [`cluster_ids`](Self::cluster_ids)) of every unit.
    pub fn unit_cluster(&self) -> &[usize] {
        &self.unit_cluster
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn treated(&self) -> &[bool] {
        &self.treated
    }

    /// Whether unit `i` belongs to a treated cluster.
    pub fn unit_treated(&self, i: usize) -> bool {
        self.treated[self.unit_cluster[i]]
    }

    pub fn unit_schema(&self) -> &[Covariate] {
        &self.unit_schema
    }

    pub fn cluster_schema(&self) -> &[Covariate] {
        &self.cluster_schema
    }

    pub fn unit_column(&self, name: &str) -> Option<&[f64]> {
        let k = self.unit_schema.iter().position(|c| c.name == name)?;
        Some(&self.unit_columns[k])
    }

    pub fn cluster_column(&self, name: &str) -> Option<&[f64]> {
        let k = self.cluster_schema.iter().position(|c| c.name == name)?;
        Some(&self.cluster_columns[k])
    }

    pub(crate) fn unit_columns(&self) -> &[Vec<f64>] {
        &self.unit_columns
    }

    pub(crate) fn cluster_columns(&self) -> &[Vec<f64>] {
        &self.cluster_columns
    }

    /// Unit indices of cluster `j`, in dataset order.
    pub fn members(&self, j: usize) -> &[usize] {
        &self.members[j]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn treated_clusters(&self) -> usize {
        self.treated.iter().filter(|&&t| t).count()
    }

    pub fn control_clusters(&self) -> usize {
        self.n_clusters() - self.treated_clusters()
    }

    /// Warning flag: the dataset lacks either a treated or a control cluster.
    pub fn is_one_armed(&self) -> bool {
        self.treated_clusters() == 0 || self.control_clusters() == 0
    }

    /// Fails with [`Error::OneArmEmpty`] unless both arms are present.
    pub fn require_both_arms(&self) -> Result<()> {
        if self.is_one_armed() {
            return Err(Error::OneArmEmpty {
                treated: self.treated_clusters(),
                control: self.control_clusters(),
            });
        }
        Ok(())
    }

    /// Materializes unit records, e.g. for serialization.
    pub fn to_units(&self) -> Vec<Unit> {
        (0..self.n_units())
            .map(|i| Unit {
                unit_id: self.unit_ids[i].to_string(),
                cluster_id: self.cluster_ids[self.unit_cluster[i]].clone(),
                outcome: self.outcome[i],
                covariates: self
                    .unit_schema
                    .iter()
                    .zip(&self.unit_columns)
                    .map(|(c, col)| (c.name.clone(), col[i]))
                    .collect(),
            })
            .collect()
    }

    pub fn to_clusters(&self) -> Vec<Cluster> {
        (0..self.n_clusters())
            .map(|j| Cluster {
                cluster_id: self.cluster_ids[j].clone(),
                treated: self.treated[j],
                covariates: self
                    .cluster_schema
                    .iter()
                    .zip(&self.cluster_columns)
                    .map(|(c, col)| (c.name.clone(), col[j]))
                    .collect(),
            })
            .collect()
    }

    /// Same dataset with a replaced outcome vector.
    pub fn with_outcome(&self, outcome: Vec<f64>) -> Result<Self> {
        if outcome.len() != self.n_units() {
            return Err(Error::DimensionMismatch(format!(
                "outcome has {} entries, dataset has {} units",
                outcome.len(),
                self.n_units()
            )));
        }
        if outcome.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("outcome".into()));
        }
        Ok(Self {
            outcome,
            ..self.clone()
        })
    }

    /// Same dataset with a replaced cluster treatment vector.
    pub fn with_treatment(&self, treated: Vec<bool>) -> Result<Self> {
        if treated.len() != self.n_clusters() {
            return Err(Error::DimensionMismatch(format!(
                "treatment has {} entries, dataset has {} clusters",
                treated.len(),
                self.n_clusters()
            )));
        }
        Ok(Self {
            treated,
            ..self.clone()
        })
    }

    /// Builds a dataset from the given clusters, in order, each carrying all
    /// of its units. Repeated clusters become distinct clusters whose ids are
    /// suffixed with their draw position.
    pub(crate) fn gather_clusters(&self, draws: &[usize]) -> Result<Self> {
        let n: usize = draws.iter().map(|&j| self.members[j].len()).sum();
        let mut unit_ids = Vec::with_capacity(n);
        let mut unit_cluster = Vec::with_capacity(n);
        let mut outcome = Vec::with_capacity(n);
        let mut unit_columns = vec![Vec::with_capacity(n); self.unit_columns.len()];
        let mut cluster_ids = Vec::with_capacity(draws.len());
        let mut treated = Vec::with_capacity(draws.len());
        let mut cluster_columns = vec![Vec::with_capacity(draws.len()); self.cluster_columns.len()];

        for (pos, &j) in draws.iter().enumerate() {
            cluster_ids.push(format!("{}~{pos}", self.cluster_ids[j]));
            treated.push(self.treated[j]);
            for (dst, src) in cluster_columns.iter_mut().zip(&self.cluster_columns) {
                dst.push(src[j]);
            }
            for &i in &self.members[j] {
                unit_ids.push(Arc::clone(&self.unit_ids[i]));
                unit_cluster.push(pos);
                outcome.push(self.outcome[i]);
                for (dst, src) in unit_columns.iter_mut().zip(&self.unit_columns) {
                    dst.push(src[i]);
                }
            }
        }

        Self::from_columns(
            unit_ids,
            unit_cluster,
            outcome,
            self.unit_schema.iter().map(|c| c.name.clone()).collect(),
            unit_columns,
            (cluster_ids, treated),
            self.cluster_schema.iter().map(|c| c.name.clone()).collect(),
            cluster_columns,
        )
    }
}

fn check_unique_names(names: &[String], what: &str) -> Result<()> {
    for (k, name) in names.iter().enumerate() {
        if names[..k].contains(name) {
            return Err(Error::InconsistentSchema(format!(
                "{what} covariate '{name}' listed twice"
            )));
        }
    }
    Ok(())
}

/// Splits unit indices by the treatment of their cluster.
pub fn arm_partition(dataset: &ClusteredDataset) -> (Vec<usize>, Vec<usize>) {
    (0..dataset.n_units()).partition(|&i| dataset.unit_treated(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: &str, cluster: &str, y: f64, x: &[(&str, f64)]) -> Unit {
        Unit {
            unit_id: id.into(),
            cluster_id: cluster.into(),
            outcome: y,
            covariates: x.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn cluster(id: &str, treated: bool, w: &[(&str, f64)]) -> Cluster {
        Cluster {
            cluster_id: id.into(),
            treated,
            covariates: w.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn minimal_dataset_is_one_armed() {
        let ds = build_dataset(
            vec![unit("u1", "c1", 1.0, &[]), unit("u2", "c1", 2.0, &[])],
            vec![cluster("c1", true, &[])],
        )
        .unwrap();
        assert_eq!(ds.n_clusters(), 1);
        assert_eq!(ds.n_units(), 2);
        assert!(ds.is_one_armed());
        assert!(matches!(
            ds.require_both_arms(),
            Err(Error::OneArmEmpty {
                treated: 1,
                control: 0
            })
        ));
    }

    #[test]
    fn dangling_reference() {
        let err = build_dataset(
            vec![unit("u1", "c9", 1.0, &[])],
            vec![cluster("c1", true, &[])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DanglingClusterRef { .. }));
    }

    #[test]
    fn duplicate_cluster() {
        let err = build_dataset(
            vec![unit("u1", "c1", 1.0, &[])],
            vec![cluster("c1", true, &[]), cluster("c1", false, &[])],
        )
        .unwrap_err();
        assert_eq!(err, Error::DuplicateClusterId("c1".into()));
    }

    #[test]
    fn empty_cluster_rejected() {
        let err = build_dataset(
            vec![unit("u1", "c1", 1.0, &[])],
            vec![cluster("c1", true, &[]), cluster("c2", false, &[])],
        )
        .unwrap_err();
        assert_eq!(err, Error::EmptyCluster("c2".into()));
    }

    #[test]
    fn inconsistent_unit_schema() {
        let err = build_dataset(
            vec![
                unit("u1", "c1", 1.0, &[("x1", 0.5)]),
                unit("u2", "c1", 1.0, &[("x2", 0.5)]),
            ],
            vec![cluster("c1", true, &[])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InconsistentSchema(_)));
    }

    #[test]
    fn key_order_may_differ_between_rows() {
        let ds = build_dataset(
            vec![
                unit("u1", "c1", 1.0, &[("b", 1.0), ("a", 2.0)]),
                unit("u2", "c1", 1.0, &[("a", 3.0), ("b", 0.0)]),
            ],
            vec![cluster("c1", true, &[])],
        )
        .unwrap();
        assert_eq!(ds.unit_column("a").unwrap(), &[2.0, 3.0]);
        assert_eq!(ds.unit_schema()[0].name, "b");
    }

    #[test]
    fn non_finite_rejected() {
        let err = build_dataset(
            vec![unit("u1", "c1", f64::NAN, &[])],
            vec![cluster("c1", true, &[])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn kinds_are_inferred() {
        let ds = build_dataset(
            vec![
                unit("u1", "c1", 1.0, &[("x", 0.0), ("z", 0.5)]),
                unit("u2", "c1", 1.0, &[("x", 1.0), ("z", 1.0)]),
            ],
            vec![cluster("c1", true, &[("w", 1.0)])],
        )
        .unwrap();
        assert_eq!(ds.unit_schema()[0].kind, CovariateKind::Binary);
        assert_eq!(ds.unit_schema()[1].kind, CovariateKind::Continuous);
        assert_eq!(ds.cluster_schema()[0].kind, CovariateKind::Binary);
    }

    #[test]
    fn partition_counts() {
        let ds = build_dataset(
            vec![
                unit("u1", "t", 1.0, &[]),
                unit("u2", "c", 1.0, &[]),
                unit("u3", "t", 1.0, &[]),
                unit("u4", "c", 1.0, &[]),
                unit("u5", "c", 1.0, &[]),
            ],
            vec![cluster("t", true, &[]), cluster("c", false, &[])],
        )
        .unwrap();
        let (t, c) = arm_partition(&ds);
        assert_eq!(t, vec![0, 2]);
        assert_eq!(c, vec![1, 3, 4]);

        let all_control = ds.with_treatment(vec![false, false]).unwrap();
        let (t, c) = arm_partition(&all_control);
        assert!(t.is_empty());
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn records_round_trip() {
        let units = vec![
            unit("u1", "c1", 1.5, &[("x1", 0.25), ("x2", 1.0)]),
            unit("u2", "c2", -2.0, &[("x1", 3.0), ("x2", 0.0)]),
        ];
        let clusters = vec![
            cluster("c1", true, &[("w", 0.1)]),
            cluster("c2", false, &[("w", -0.3)]),
        ];
        let ds = build_dataset(units.clone(), clusters.clone()).unwrap();
        assert_eq!(ds.to_units(), units);
        assert_eq!(ds.to_clusters(), clusters);
    }

    #[test]
    fn gather_relabels_duplicates() {
        let ds = build_dataset(
            vec![
                unit("u1", "a", 1.0, &[("x", 1.0)]),
                unit("u2", "b", 2.0, &[("x", 2.0)]),
                unit("u3", "b", 3.0, &[("x", 3.0)]),
            ],
            vec![cluster("a", true, &[]), cluster("b", false, &[])],
        )
        .unwrap();
        let rep = ds.gather_clusters(&[1, 1, 0]).unwrap();
        assert_eq!(rep.cluster_ids(), &["b~0", "b~1", "a~2"]);
        assert_eq!(rep.n_units(), 5);
        assert_eq!(rep.outcome(), &[2.0, 3.0, 2.0, 3.0, 1.0]);
        assert_eq!(rep.treated(), &[false, false, true]);
    }
}
