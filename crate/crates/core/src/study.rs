//! Monte Carlo study over target trials, sample sizes, and adjustment sets.
//!
//! One repetition simulates a dataset, estimates the effect under each
//! requested adjustment set, bootstraps all of them over the same cluster
//! resamples, and records whether the Wald interval covers the true effect.
//! Adjustment sets within a repetition share the simulated dataset.

use rayon::prelude::*;
use serde::Serialize;

use crate::aggregates::AggregateSpec;
use crate::bootstrap::{block_bootstrap_many, mean_sd};
use crate::dgp::{simulate, SimulationConfig, Trial, TRUE_ATE};
use crate::error::{Error, Result};
use crate::estimators::{AdjustmentSet, ModelSpec};
use crate::rng::{derive_seed, substream};

/// Cluster/unit counts of the replication grid.
pub const TABLE1_SIZES: [(usize, usize); 3] = [(50, 4000), (100, 4000), (50, 8000)];

const BOOTSTRAP_STREAM: u64 = 0xB007;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Scenario {
    pub trial: Trial,
    pub m: usize,
    pub n: usize,
    pub adjustment: AdjustmentSet,
    pub reps: usize,
    pub boot: usize,
    pub seed: u64,
}

/// Scenarios that differ only in their adjustment set; they are run on
/// shared datasets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioGroup {
    pub trial: Trial,
    pub m: usize,
    pub n: usize,
    pub adjustments: Vec<AdjustmentSet>,
    pub reps: usize,
    pub boot: usize,
    pub seed: u64,
}

impl ScenarioGroup {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::InvalidConfig("need at least one repetition".into()));
        }
        if self.boot < 2 {
            return Err(Error::TooFewReplicates(self.boot));
        }
        SimulationConfig::new(self.trial, self.m, self.n, self.seed).validate()
    }

    /// Seed of repetition `rep`; depends on the master seed, trial, sizes,
    /// and the repetition index only.
    pub fn rep_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, &[self.trial.code(), self.m as u64, self.n as u64, rep as u64])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    pub estimate: f64,
    pub se: f64,
    pub covered: bool,
    pub discarded: usize,
    pub rank_flags: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub mean: f64,
    /// Zero by convention when fewer than two repetitions succeeded; see
    /// `sd_defined`.
    pub sd: f64,
    pub sd_defined: bool,
    pub avg_se: f64,
    /// Fraction of repetitions whose 95% Wald interval covers the truth.
    pub cp: f64,
    pub failures: usize,
    pub records: Vec<RepRecord>,
}

impl ScenarioResult {
    fn from_records(scenario: Scenario, records: Vec<RepRecord>, failures: usize) -> Self {
        let estimates: Vec<f64> = records.iter().map(|r| r.estimate).collect();
        let (mean, sd) = mean_sd(&estimates);
        let k = records.len() as f64;
        let (avg_se, cp) = if records.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                records.iter().map(|r| r.se).sum::<f64>() / k,
                records.iter().filter(|r| r.covered).count() as f64 / k,
            )
        };
        Self {
            scenario,
            mean,
            sd: if records.len() >= 2 { sd } else { 0.0 },
            sd_defined: records.len() >= 2,
            avg_se,
            cp,
            failures,
            records,
        }
    }
}

/// One repetition: simulated data, then one record per adjustment set.
pub fn run_repetition(group: &ScenarioGroup, rep: usize) -> Result<Vec<RepRecord>> {
    let seed = group.rep_seed(rep);
    let sim = simulate(&SimulationConfig::new(group.trial, group.m, group.n, seed))?;
    let specs: Vec<ModelSpec> = group.adjustments.iter().map(|&a| ModelSpec::new(a)).collect();
    let results = block_bootstrap_many(
        &sim.dataset,
        &AggregateSpec::default(),
        &specs,
        group.boot,
        substream(seed, BOOTSTRAP_STREAM),
    )?;
    Ok(results
        .into_iter()
        .map(|r| RepRecord {
            rep,
            estimate: r.estimate,
            se: r.bootstrap.se,
            covered: r.bootstrap.wald_covers(TRUE_ATE),
            discarded: r.bootstrap.discarded,
            rank_flags: r.bootstrap.rank_flags,
        })
        .collect())
}

/// Runs every repetition of a group. A repetition that errors counts as a
/// failure for every adjustment set and is left out of the summaries.
pub fn run_scenario_group(group: &ScenarioGroup) -> Result<Vec<ScenarioResult>> {
    group.validate()?;
    let outcomes: Vec<Result<Vec<RepRecord>>> = (0..group.reps)
        .into_par_iter()
        .map(|rep| run_repetition(group, rep))
        .collect();
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    let mut per_set: Vec<Vec<RepRecord>> = vec![Vec::with_capacity(group.reps); group.adjustments.len()];
    for recs in outcomes.into_iter().flatten() {
        for (dst, r) in per_set.iter_mut().zip(recs) {
            dst.push(r);
        }
    }
    Ok(group
        .adjustments
        .iter()
        .zip(per_set)
        .map(|(&adjustment, records)| {
            let scenario = Scenario {
                trial: group.trial,
                m: group.m,
                n: group.n,
                adjustment,
                reps: group.reps,
                boot: group.boot,
                seed: group.seed,
            };
            ScenarioResult::from_records(scenario, records, failures)
        })
        .collect())
}

pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioResult> {
    let group = ScenarioGroup {
        trial: scenario.trial,
        m: scenario.m,
        n: scenario.n,
        adjustments: vec![scenario.adjustment],
        reps: scenario.reps,
        boot: scenario.boot,
        seed: scenario.seed,
    };
    Ok(run_scenario_group(&group)?.remove(0))
}

/// The nine (trial, size) groups of the replication grid, in table order.
pub fn table1_groups(seed: u64, reps: usize, boot: usize) -> Vec<ScenarioGroup> {
    Trial::ALL
        .iter()
        .flat_map(|&trial| {
            TABLE1_SIZES.iter().map(move |&(m, n)| ScenarioGroup {
                trial,
                m,
                n,
                adjustments: AdjustmentSet::ALL.to_vec(),
                reps,
                boot,
                seed,
            })
        })
        .collect()
}

/// All 27 rows: trial, then size, then adjustment set.
pub fn run_table1(seed: u64, reps: usize, boot: usize) -> Result<Vec<ScenarioResult>> {
    let mut out = Vec::with_capacity(27);
    for group in table1_groups(seed, reps, boot) {
        out.extend(run_scenario_group(&group)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(trial: Trial, reps: usize) -> ScenarioGroup {
        ScenarioGroup {
            trial,
            m: 10,
            n: 200,
            adjustments: AdjustmentSet::ALL.to_vec(),
            reps,
            boot: 5,
            seed: 99,
        }
    }

    #[test]
    fn single_repetition_has_flagged_zero_sd() {
        let s = Scenario {
            trial: Trial::Trial2a,
            m: 10,
            n: 200,
            adjustment: AdjustmentSet::W,
            reps: 1,
            boot: 5,
            seed: 4,
        };
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.records.len() + r.failures, 1);
        if r.failures == 0 {
            assert_eq!(r.mean, r.records[0].estimate);
        }
        assert_eq!(r.sd, 0.0);
        assert!(!r.sd_defined);
    }

    #[test]
    fn scenario_matches_its_group_row() {
        let g = small(Trial::Trial1, 3);
        let rows = run_scenario_group(&g).unwrap();
        let alone = run_scenario(&rows[1].scenario).unwrap();
        assert_eq!(alone, rows[1]);
        assert_eq!(rows, run_scenario_group(&g).unwrap());
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.cp));
            assert!(r.sd >= 0.0);
        }
    }

    #[test]
    fn grid_layout() {
        let groups = table1_groups(1, 10, 10);
        assert_eq!(groups.len() * 3, 27);
        assert_eq!((groups[0].trial, groups[0].m, groups[0].n), (Trial::Trial1, 50, 4000));
        assert_eq!((groups[8].trial, groups[8].m, groups[8].n), (Trial::Trial2b, 50, 8000));
    }

    #[test]
    fn rejects_bad_group() {
        let mut g = small(Trial::Trial1, 0);
        assert!(run_scenario_group(&g).is_err());
        g.reps = 1;
        g.boot = 1;
        assert!(run_scenario_group(&g).is_err());
    }
}
