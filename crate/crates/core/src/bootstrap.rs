//! Cluster (block) bootstrap.
//!
//! Each replicate draws `m` clusters with replacement and carries every unit
//! of each drawn cluster. Repeated clusters become distinct clusters in the
//! replicate. Replicates that end up with only one arm are discarded and
//! redrawn, up to `MAX_ATTEMPTS_FACTOR * B` attempts in total.
//!
//! Attempt `k` is seeded with `substream(seed, k)`, and successes are kept in
//! attempt order, so results do not depend on the thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::aggregates::{compute_aggregates, quantile_sorted, AggregateSpec, QuantileMethod};
use crate::data::ClusteredDataset;
use crate::error::{Error, Result};
use crate::estimators::{g_formula_on, DesignColumns, ModelSpec};
use crate::rng::{rng_from_seed, substream};

pub const MAX_ATTEMPTS_FACTOR: usize = 10;
/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

/// One bootstrap draw of the clusters.
pub fn resample_clusters(dataset: &ClusteredDataset, seed: u64) -> ClusteredDataset {
    let mut rng = rng_from_seed(seed);
    let m = dataset.n_clusters();
    let draws: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
    dataset
        .gather_clusters(&draws)
        .expect("every cluster of a valid dataset is non-empty")
}

/// A statistic evaluated on one replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateValue {
    pub value: f64,
    pub rank_deficient: bool,
}

/// Raw replicate values of `k` statistics evaluated on the same resamples.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateDraws {
    /// `values[s]` holds the replicates of statistic `s`, in attempt order.
    pub values: Vec<Vec<ReplicateValue>>,
    pub attempts: usize,
    pub discarded: usize,
}

enum Attempt {
    Degenerate,
    Done(Vec<ReplicateValue>),
}

/// Runs the resampling loop for `k` statistics computed by `statistic`.
///
/// `statistic` must return exactly `k` values. An error from it aborts the
/// bootstrap.
pub fn bootstrap_replicates<F>(
    dataset: &ClusteredDataset,
    k: usize,
    replicates: usize,
    seed: u64,
    statistic: F,
) -> Result<ReplicateDraws>
where
    F: Fn(&ClusteredDataset) -> Result<Vec<ReplicateValue>> + Sync,
{
    if replicates < 2 {
        return Err(Error::TooFewReplicates(replicates));
    }
    let cap = MAX_ATTEMPTS_FACTOR * replicates;
    let mut values: Vec<Vec<ReplicateValue>> = vec![Vec::with_capacity(replicates); k];
    let mut done = 0;
    let mut attempts = 0;

    while done < replicates && attempts < cap {
        let batch = (replicates - done).min(cap - attempts);
        let results: Vec<Result<Attempt>> = (attempts..attempts + batch)
            .into_par_iter()
            .map(|a| {
                let rep = resample_clusters(dataset, substream(seed, a as u64));
                if rep.is_one_armed() {
                    return Ok(Attempt::Degenerate);
                }
                let vals = statistic(&rep)?;
                if vals.len() != k {
                    return Err(Error::DimensionMismatch(format!(
                        "statistic returned {} values, expected {k}",
                        vals.len()
                    )));
                }
                Ok(Attempt::Done(vals))
            })
            .collect();
        attempts += batch;
        for r in results {
            if let Attempt::Done(vals) = r? {
                for (dst, v) in values.iter_mut().zip(vals) {
                    dst.push(v);
                }
                done += 1;
            }
        }
    }

    if done < replicates {
        return Err(Error::TooManyDegenerateReplicates {
            requested: replicates,
            successful: done,
            attempts,
        });
    }
    Ok(ReplicateDraws {
        values,
        attempts,
        discarded: attempts - done,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// Full-data estimate the Wald interval is centered on.
    pub point: f64,
    pub replicates: Vec<f64>,
    pub requested: usize,
    pub attempts: usize,
    pub discarded: usize,
    /// Replicates in which either arm's fit was rank deficient.
    pub rank_flags: usize,
    /// Sample standard deviation of the replicates.
    pub se: f64,
    pub wald_ci: (f64, f64),
    pub percentile_ci: (f64, f64),
}

/// Sample mean and standard deviation (`n - 1` denominator). Deviations are
/// taken from the first value, so a constant sample has exactly zero spread.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let shift = values[0];
    let dmean = values.iter().map(|v| v - shift).sum::<f64>() / n as f64;
    if n == 1 {
        return (shift + dmean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - shift - dmean).powi(2)).sum();
    (shift + dmean, (ss / (n - 1) as f64).sqrt())
}

impl BootstrapResult {
    pub fn summarize(point: f64, draws: &[ReplicateValue], attempts: usize, discarded: usize) -> Self {
        let replicates: Vec<f64> = draws.iter().map(|d| d.value).collect();
        let (_, se) = mean_sd(&replicates);
        let mut sorted = replicates.clone();
        sorted.sort_by(f64::total_cmp);
        let percentile_ci = (
            quantile_sorted(&sorted, 0.025, QuantileMethod::Linear),
            quantile_sorted(&sorted, 0.975, QuantileMethod::Linear),
        );
        Self {
            point,
            requested: replicates.len(),
            attempts,
            discarded,
            rank_flags: draws.iter().filter(|d| d.rank_deficient).count(),
            se,
            wald_ci: (point - Z_95 * se, point + Z_95 * se),
            percentile_ci,
            replicates,
        }
    }

    pub fn wald_covers(&self, value: f64) -> bool {
        self.wald_ci.0 <= value && value <= self.wald_ci.1
    }
}

/// Point estimate and bootstrap summary for one model specification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub spec: ModelSpec,
    pub estimate: f64,
    /// Whether the full-data fit was rank deficient.
    pub rank_deficient: bool,
    pub bootstrap: BootstrapResult,
}

/// G-formula estimates for several specifications, all bootstrapped over the
/// same resamples. Aggregates are recomputed on every replicate.
pub fn block_bootstrap_many(
    dataset: &ClusteredDataset,
    aggregate_spec: &AggregateSpec,
    specs: &[ModelSpec],
    replicates: usize,
    seed: u64,
) -> Result<Vec<EstimateResult>> {
    if replicates < 2 {
        return Err(Error::TooFewReplicates(replicates));
    }
    dataset.require_both_arms()?;
    let needs_h = specs.iter().any(|s| s.adjustment.uses_aggregates());
    let fit_all = |ds: &ClusteredDataset| -> Result<Vec<(f64, bool)>> {
        let table = if needs_h {
            Some(compute_aggregates(ds, aggregate_spec)?)
        } else {
            None
        };
        specs
            .iter()
            .map(|spec| {
                let cols = DesignColumns::build(ds, table.as_ref(), spec)?;
                let fit = g_formula_on(ds, &cols)?;
                Ok((fit.estimate, fit.rank_deficient()))
            })
            .collect()
    };

    let full = fit_all(dataset)?;
    let draws = bootstrap_replicates(dataset, specs.len(), replicates, seed, |rep| {
        Ok(fit_all(rep)?
            .into_iter()
            .map(|(value, rank_deficient)| ReplicateValue { value, rank_deficient })
            .collect())
    })?;

    Ok(specs
        .iter()
        .zip(full)
        .zip(&draws.values)
        .map(|((spec, (estimate, rank_deficient)), vals)| EstimateResult {
            spec: *spec,
            estimate,
            rank_deficient,
            bootstrap: BootstrapResult::summarize(estimate, vals, draws.attempts, draws.discarded),
        })
        .collect())
}

/// G-formula estimate with block-bootstrap standard error and intervals.
pub fn block_bootstrap(
    dataset: &ClusteredDataset,
    aggregate_spec: &AggregateSpec,
    spec: &ModelSpec,
    replicates: usize,
    seed: u64,
) -> Result<EstimateResult> {
    let mut out = block_bootstrap_many(dataset, aggregate_spec, std::slice::from_ref(spec), replicates, seed)?;
    Ok(out.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_dataset, Cluster, Unit};
    use crate::estimators::AdjustmentSet;

    fn dataset(sizes: &[(bool, usize)]) -> ClusteredDataset {
        let mut units = Vec::new();
        let mut cs = Vec::new();
        for (j, &(a, size)) in sizes.iter().enumerate() {
            cs.push(Cluster {
                cluster_id: format!("c{}", j + 1),
                treated: a,
                covariates: [("w".to_string(), j as f64 * 0.3)].into_iter().collect(),
            });
            for k in 0..size {
                units.push(Unit {
                    unit_id: format!("u{j}_{k}"),
                    cluster_id: format!("c{}", j + 1),
                    outcome: (j * 7 + k) as f64 * 0.1 + f64::from(u8::from(a)),
                    covariates: [("x".to_string(), (k as f64).sin())].into_iter().collect(),
                });
            }
        }
        build_dataset(units, cs).unwrap()
    }

    #[test]
    fn single_cluster_replicate_is_a_copy() {
        let ds = dataset(&[(true, 4)]);
        let rep = resample_clusters(&ds, 3);
        assert_eq!(rep.cluster_ids(), &["c1~0"]);
        assert_eq!(rep.outcome(), ds.outcome());
        assert_eq!(rep.unit_column("x"), ds.unit_column("x"));
    }

    #[test]
    fn replicate_size_is_sum_of_drawn_blocks() {
        let ds = dataset(&[(true, 2), (false, 3), (true, 5)]);
        for seed in 0..50 {
            let rep = resample_clusters(&ds, seed);
            let expected: usize = rep
                .cluster_ids()
                .iter()
                .map(|id| match id.split('~').next().unwrap() {
                    "c1" => 2,
                    "c2" => 3,
                    _ => 5,
                })
                .sum();
            assert_eq!(rep.n_units(), expected);
            assert_eq!(rep.n_clusters(), 3);
        }
    }

    #[test]
    fn constant_statistic_has_zero_se() {
        let ds = dataset(&[(true, 2), (false, 3), (true, 2), (false, 2)]);
        let draws = bootstrap_replicates(&ds, 1, 50, 1, |_| {
            Ok(vec![ReplicateValue {
                value: 0.1,
                rank_deficient: false,
            }])
        })
        .unwrap();
        let r = BootstrapResult::summarize(0.1, &draws.values[0], draws.attempts, draws.discarded);
        assert_eq!(r.se, 0.0);
        assert_eq!(r.wald_ci, (0.1, 0.1));
        assert_eq!(r.percentile_ci, (0.1, 0.1));
    }

    #[test]
    fn degenerate_draws_are_discarded() {
        // one treated and one control cluster: half of all draws are one-armed
        let ds = dataset(&[(true, 2), (false, 3)]);
        let draws = bootstrap_replicates(&ds, 1, 400, 9, |_| {
            Ok(vec![ReplicateValue {
                value: 1.0,
                rank_deficient: false,
            }])
        })
        .unwrap();
        assert_eq!(draws.values[0].len(), 400);
        assert_eq!(draws.attempts, 400 + draws.discarded);
        let rate = draws.discarded as f64 / draws.attempts as f64;
        assert!((rate - 0.5).abs() < 0.06, "discard rate {rate}");
    }

    #[test]
    fn one_armed_design_exhausts_attempts() {
        let ds = dataset(&[(true, 1), (true, 2), (true, 1)]);
        let err = bootstrap_replicates(&ds, 1, 5, 0, |_| Ok(vec![])).unwrap_err();
        assert_eq!(
            err,
            Error::TooManyDegenerateReplicates {
                requested: 5,
                successful: 0,
                attempts: 50
            }
        );
    }

    #[test]
    fn too_few_replicates() {
        let ds = dataset(&[(true, 2), (false, 3)]);
        let err = block_bootstrap(&ds, &AggregateSpec::default(), &ModelSpec::new(AdjustmentSet::W), 1, 0);
        assert_eq!(err.unwrap_err(), Error::TooFewReplicates(1));
    }

    #[test]
    fn deterministic_and_shared_across_specs() {
        let ds = dataset(&[(true, 3), (false, 4), (true, 2), (false, 5), (true, 4), (false, 3)]);
        let specs: Vec<_> = AdjustmentSet::ALL.iter().map(|&a| ModelSpec::new(a)).collect();
        let agg = AggregateSpec::default();
        let many = block_bootstrap_many(&ds, &agg, &specs, 40, 77).unwrap();
        assert_eq!(many, block_bootstrap_many(&ds, &agg, &specs, 40, 77).unwrap());
        for (spec, joint) in specs.iter().zip(&many) {
            let alone = block_bootstrap(&ds, &agg, spec, 40, 77).unwrap();
            assert_eq!(&alone, joint);
        }
    }

    #[test]
    fn intervals_are_ordered_and_percentiles_bracketed() {
        let ds = dataset(&[(true, 3), (false, 4), (true, 2), (false, 5), (true, 4), (false, 3)]);
        let r = block_bootstrap(&ds, &AggregateSpec::default(), &ModelSpec::new(AdjustmentSet::W), 101, 5)
            .unwrap()
            .bootstrap;
        assert!(r.se >= 0.0);
        assert!(r.wald_ci.0 <= r.wald_ci.1);
        assert!(r.percentile_ci.0 <= r.percentile_ci.1);
        // B = 101: 0.025 * 100 and 0.975 * 100 fall on order statistics 2.5 and 97.5
        let mut s = r.replicates.clone();
        s.sort_by(f64::total_cmp);
        assert!(s[2] <= r.percentile_ci.0 && r.percentile_ci.0 <= s[3]);
        assert!(s[97] <= r.percentile_ci.1 && r.percentile_ci.1 <= s[98]);
    }

    #[test]
    fn mean_sd_basics() {
        assert_eq!(mean_sd(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_sd(&[5.0]), (5.0, 0.0));
    }
}
