//! Synthetic clustered populations for the three target trials.
//!
//! Baseline covariates: `W_j ~ N(0,1)`, `X_i1 ~ N(0,1)`, `X_i2 ~ Bernoulli(0.4)`.
//! Units choose clusters through a softmax over clusters with score
//! `0.2 W_j (1 + X_i1 + X_i2)`; under [`Trial::Trial2b`] the score becomes
//! `(0.2 W_j + 0.2 A_j)(1 + X_i1 + X_i2)`, so units with large covariates
//! drift toward treated clusters. Cluster aggregates `h_j1..h_j4` are the
//! quartiles of `X_1` and the mean of `X_2` in the realized clusters.
//!
//! Outcomes:
//!
//! ```text
//! Y_i = X_i1 + X_i2 + 0.4 A (X_i1 + X_i2)
//!       + 0.5 (W + h_1 + h_2 + h_3 + h_4) + 0.1 e_j + eps_i
//! ```
//!
//! with `e_j, eps_i ~ N(0,1)`. The true average effect is
//! `0.4 E[X_i1 + X_i2] = 0.16`.
//!
//! Stage order differs by trial. Trial 1 pairs units first and assigns
//! treatment from `W` and the aggregates; trials 2(a) and 2(b) assign
//! treatment from `W` alone and pair afterwards. [`assign_units`] and
//! [`assign_treatment`] reject inputs that would break that order.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::aggregates::{aggregate_groups, Aggregate, QuantileMethod};
use crate::data::ClusteredDataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Population average treatment effect of every trial.
pub const TRUE_ATE: f64 = 0.16;

const PAIRING_COEF: f64 = 0.2;
const PAIRING_TREATMENT_COEF: f64 = 0.2;
const TREATMENT_COEF: f64 = 0.2;
const X2_RATE: f64 = 0.4;
const EFFECT_COEF: f64 = 0.4;
const CONTEXT_COEF: f64 = 0.5;
const CLUSTER_EFFECT_SD: f64 = 0.1;

/// Which hypothetical randomized experiment generates the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trial {
    /// Unit-cluster pairing fixed before treatment; treatment depends on `W`
    /// and the aggregates.
    #[serde(rename = "1")]
    Trial1,
    /// Treatment first; pairing blind to treatment.
    #[serde(rename = "2a")]
    Trial2a,
    /// Treatment first; pairing depends on treatment (differential selection).
    #[serde(rename = "2b")]
    Trial2b,
}

impl Trial {
    pub const ALL: [Trial; 3] = [Trial::Trial1, Trial::Trial2a, Trial::Trial2b];

    pub fn code(self) -> u64 {
        match self {
            Trial::Trial1 => 1,
            Trial::Trial2a => 2,
            Trial::Trial2b => 3,
        }
    }

    fn pairing_sees_treatment(self) -> bool {
        self == Trial::Trial2b
    }

    fn treatment_after_pairing(self) -> bool {
        self == Trial::Trial1
    }
}

impl fmt::Display for Trial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trial::Trial1 => "1",
            Trial::Trial2a => "2a",
            Trial::Trial2b => "2b",
        })
    }
}

impl FromStr for Trial {
    type Err = Error;

    /// Accepts `1`, `2a`, `2b`; `2` and `3` are the older names for 2(a)
    /// and 2(b).
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Ok(Trial::Trial1),
            "2a" | "2" => Ok(Trial::Trial2a),
            "2b" | "3" => Ok(Trial::Trial2b),
            other => Err(Error::InvalidConfig(format!("unknown trial '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub trial: Trial,
    /// Number of clusters.
    pub m: usize,
    /// Number of units.
    pub n: usize,
    pub seed: u64,
    pub quantile_method: QuantileMethod,
}

impl SimulationConfig {
    pub fn new(trial: Trial, m: usize, n: usize, seed: u64) -> Self {
        Self {
            trial,
            m,
            n,
            seed,
            quantile_method: QuantileMethod::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidConfig(format!("need m >= 2 clusters, got {}", self.m)));
        }
        if self.n < self.m {
            return Err(Error::InvalidConfig(format!(
                "need n >= m, got n = {}, m = {}",
                self.n, self.m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub w: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

/// Cluster aggregates `(h_1, h_2, h_3, h_4)`: quartiles of `X_1`, mean of `X_2`.
pub type ClusterSummary = [f64; 4];

/// Draws `W` for all clusters, then `X_1`, then `X_2` for all units.
pub fn gen_baseline<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Baseline {
    let w = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let x1 = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let coin = Bernoulli::new(X2_RATE).expect("valid probability");
    let x2 = (0..n).map(|_| if coin.sample(rng) { 1.0 } else { 0.0 }).collect();
    Baseline { w, x1, x2 }
}

/// Cluster-choice probabilities for one unit.
///
/// `treated` must be given exactly when the pairing model is allowed to see
/// treatment; the caller is responsible for that (see [`assign_units`]).
pub fn pairing_probabilities(w: &[f64], treated: Option<&[bool]>, x1: f64, x2: f64) -> Vec<f64> {
    let mut p = pairing_scores(w, treated, 1.0 + x1 + x2);
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in p.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in p.iter_mut() {
        *v /= total;
    }
    p
}

fn pairing_scores(w: &[f64], treated: Option<&[bool]>, strength: f64) -> Vec<f64> {
    match treated {
        None => w.iter().map(|&wj| PAIRING_COEF * wj * strength).collect(),
        Some(a) => w
            .iter()
            .zip(a)
            .map(|(&wj, &aj)| (PAIRING_COEF * wj + PAIRING_TREATMENT_COEF * f64::from(u8::from(aj))) * strength)
            .collect(),
    }
}

/// Samples the realized cluster of every unit by inverse CDF over the
/// softmax weights.
///
/// Trial 2(b) requires the cluster treatments; trials 1 and 2(a) must not
/// receive them.
pub fn assign_units<R: Rng + ?Sized>(
    baseline: &Baseline,
    treated: Option<&[bool]>,
    trial: Trial,
    rng: &mut R,
) -> Result<Vec<usize>> {
    match (trial.pairing_sees_treatment(), treated) {
        (true, None) => {
            return Err(Error::StageOrderViolation(
                "trial 2b pairing needs cluster treatments".into(),
            ))
        }
        (false, Some(_)) => {
            return Err(Error::StageOrderViolation(format!(
                "trial {trial} pairing must not see cluster treatments"
            )))
        }
        (true, Some(a)) if a.len() != baseline.w.len() => {
            return Err(Error::DimensionMismatch("treatment length differs from cluster count".into()))
        }
        _ => {}
    }
    let m = baseline.w.len();
    let mut cdf = vec![0.0; m];
    let assignment = baseline
        .x1
        .iter()
        .zip(&baseline.x2)
        .map(|(&x1, &x2)| {
            let scores = pairing_scores(&baseline.w, treated, 1.0 + x1 + x2);
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (c, s) in cdf.iter_mut().zip(&scores) {
                total += (s - max).exp();
                *c = total;
            }
            let u: f64 = rng.random::<f64>() * total;
            cdf.partition_point(|&c| c <= u).min(m - 1)
        })
        .collect();
    Ok(assignment)
}

/// Realized cluster aggregates under a pairing; empty clusters get NaN.
pub fn cluster_summaries(baseline: &Baseline, pairing: &[usize], method: QuantileMethod) -> Vec<ClusterSummary> {
    let m = baseline.w.len();
    let mut groups = vec![Vec::new(); m];
    for (i, &j) in pairing.iter().enumerate() {
        groups[j].push(i);
    }
    let quartiles = [Aggregate::Quantile(0.25), Aggregate::Quantile(0.5), Aggregate::Quantile(0.75)];
    let q = aggregate_groups(&baseline.x1, &groups, &quartiles, method);
    let mean = aggregate_groups(&baseline.x2, &groups, &[Aggregate::Mean], method);
    q.into_iter()
        .zip(mean)
        .map(|(q, mean)| [q[0], q[1], q[2], mean[0]])
        .collect()
}

/// `P(A_j = 1)` for one cluster.
///
/// Trial 1 needs the cluster's aggregates; trials 2(a)/2(b) must not get
/// them. A non-finite aggregate (empty cluster) contributes nothing.
pub fn treatment_probability(trial: Trial, w: f64, summary: Option<&ClusterSummary>) -> Result<f64> {
    let eta = match (trial.treatment_after_pairing(), summary) {
        (true, Some(h)) => {
            let agg = if h.iter().all(|v| v.is_finite()) {
                TREATMENT_COEF * (h[0] + h[1] + h[2]) + TREATMENT_COEF * (h[3] - X2_RATE)
            } else {
                0.0
            };
            TREATMENT_COEF * w + agg
        }
        (false, None) => TREATMENT_COEF * w,
        (true, None) => {
            return Err(Error::StageOrderViolation(
                "trial 1 treatment needs aggregates from the realized pairing".into(),
            ))
        }
        (false, Some(_)) => {
            return Err(Error::StageOrderViolation(format!(
                "trial {trial} treatment is assigned before pairing and cannot use aggregates"
            )))
        }
    };
    Ok(1.0 / (1.0 + (-eta).exp()))
}

/// Independent Bernoulli treatment draws, one per cluster.
pub fn assign_treatment<R: Rng + ?Sized>(
    w: &[f64],
    summaries: Option<&[ClusterSummary]>,
    trial: Trial,
    rng: &mut R,
) -> Result<Vec<bool>> {
    if let Some(h) = summaries {
        if h.len() != w.len() {
            return Err(Error::DimensionMismatch("aggregates length differs from cluster count".into()));
        }
    }
    w.iter()
        .enumerate()
        .map(|(j, &wj)| {
            let p = treatment_probability(trial, wj, summaries.map(|h| &h[j]))?;
            Ok(rng.random::<f64>() < p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    pub y: Vec<f64>,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    /// `0.4 (X_i1 + X_i2)`, stored exactly as computed.
    pub ite: Vec<f64>,
}

/// Draws `e_j` for all clusters, then `eps_i` for all units. Both arms share
/// every draw, the pairing, and the aggregates; only the treatment term
/// differs.
pub fn gen_outcomes<R: Rng + ?Sized>(
    baseline: &Baseline,
    pairing: &[usize],
    treated: &[bool],
    summaries: &[ClusterSummary],
    rng: &mut R,
) -> PotentialOutcomes {
    let e: Vec<f64> = (0..baseline.w.len()).map(|_| rng.sample(StandardNormal)).collect();
    let n = baseline.x1.len();
    let mut out = PotentialOutcomes {
        y: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
        y0: Vec::with_capacity(n),
        ite: Vec::with_capacity(n),
    };
    for i in 0..n {
        let eps: f64 = rng.sample(StandardNormal);
        let j = pairing[i];
        let xs = baseline.x1[i] + baseline.x2[i];
        let h = &summaries[j];
        let context = CONTEXT_COEF * (baseline.w[j] + h[0] + h[1] + h[2] + h[3]);
        let y0 = xs + context + CLUSTER_EFFECT_SD * e[j] + eps;
        let ite = EFFECT_COEF * xs;
        let y1 = y0 + ite;
        out.y.push(if treated[j] { y1 } else { y0 });
        out.y1.push(y1);
        out.y0.push(y0);
        out.ite.push(ite);
    }
    out
}

/// A simulated study plus its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub config: SimulationConfig,
    /// Observed data: units `u1..un` with `x1, x2`; clusters `c1..cm` with `w`.
    pub dataset: ClusteredDataset,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    pub ite: Vec<f64>,
    /// Clusters that received no units; they are left out of `dataset`.
    pub empty_clusters: usize,
}

impl SimulatedDataset {
    /// Mean of the unit-level effects at the realized pairing.
    pub fn sample_ate(&self) -> f64 {
        self.ite.iter().sum::<f64>() / self.ite.len() as f64
    }

    /// `unit_id,y1,y0,ite`
    pub fn write_truth<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut rows = || -> csv::Result<()> {
            w.write_record(["unit_id", "y1", "y0", "ite"])?;
            for (i, id) in self.dataset.unit_ids().iter().enumerate() {
                w.write_record([
                    id.to_string(),
                    self.y1[i].to_string(),
                    self.y0[i].to_string(),
                    self.ite[i].to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        };
        rows().map_err(|e| Error::Io {
            file: "truth".into(),
            message: e.to_string(),
        })
    }

    pub fn write_truth_file(&self, path: impl AsRef<Path>, comments: &[String]) -> Result<()> {
        let path = path.as_ref();
        let io_err = |e: std::io::Error| Error::Io {
            file: path.display().to_string(),
            message: e.to_string(),
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        crate::io::write_comments(&mut f, comments).map_err(io_err)?;
        self.write_truth(&mut f)?;
        f.flush().map_err(io_err)
    }
}

// Stage substreams, so trials sharing a seed share their baseline draws.
const STAGE_BASELINE: u64 = 1;
const STAGE_PAIRING: u64 = 2;
const STAGE_TREATMENT: u64 = 3;
const STAGE_OUTCOME: u64 = 4;

/// Runs the stages of `config.trial` in order.
pub fn simulate(config: &SimulationConfig) -> Result<SimulatedDataset> {
    config.validate()?;
    let stage = |s| rng_from_seed(derive_seed(config.seed, &[s]));
    let baseline = gen_baseline(config.m, config.n, &mut stage(STAGE_BASELINE));

    let (pairing, treated, summaries) = if config.trial.treatment_after_pairing() {
        let pairing = assign_units(&baseline, None, config.trial, &mut stage(STAGE_PAIRING))?;
        let summaries = cluster_summaries(&baseline, &pairing, config.quantile_method);
        let treated = assign_treatment(&baseline.w, Some(&summaries), config.trial, &mut stage(STAGE_TREATMENT))?;
        (pairing, treated, summaries)
    } else {
        let treated = assign_treatment(&baseline.w, None, config.trial, &mut stage(STAGE_TREATMENT))?;
        let seen = config.trial.pairing_sees_treatment().then_some(treated.as_slice());
        let pairing = assign_units(&baseline, seen, config.trial, &mut stage(STAGE_PAIRING))?;
        let summaries = cluster_summaries(&baseline, &pairing, config.quantile_method);
        (pairing, treated, summaries)
    };

    let po = gen_outcomes(&baseline, &pairing, &treated, &summaries, &mut stage(STAGE_OUTCOME));

    // compact away clusters nobody joined
    let mut occupied = vec![false; config.m];
    for &j in &pairing {
        occupied[j] = true;
    }
    let mut remap = vec![usize::MAX; config.m];
    let mut cluster_ids = Vec::new();
    let mut kept_treated = Vec::new();
    let mut kept_w = Vec::new();
    for j in (0..config.m).filter(|&j| occupied[j]) {
        remap[j] = cluster_ids.len();
        cluster_ids.push(format!("c{}", j + 1));
        kept_treated.push(treated[j]);
        kept_w.push(baseline.w[j]);
    }
    let empty_clusters = config.m - cluster_ids.len();

    let dataset = ClusteredDataset::from_columns(
        (1..=config.n).map(|i| Arc::from(format!("u{i}"))).collect(),
        pairing.iter().map(|&j| remap[j]).collect(),
        po.y,
        vec!["x1".into(), "x2".into()],
        vec![baseline.x1, baseline.x2],
        (cluster_ids, kept_treated),
        vec!["w".into()],
        vec![kept_w],
    )?;

    Ok(SimulatedDataset {
        config: *config,
        dataset,
        y1: po.y1,
        y0: po.y0,
        ite: po.ite,
        empty_clusters,
    })
}
