use cos_core::dgp::{assign_treatment, gen_baseline};
use cos_core::rng::rng_from_seed;
use cos_core::{bootstrap::mean_sd, simulate, SimulationConfig, Trial};

/// Per-unit average of `(A_J - P(A_J = 1 | W_J)) * X_1`.
///
/// Treatment depends on `W` only under trials 2(a)/2(b), so the residual is
/// independent of everything else unless pairing reacts to it. Under 2(a)
/// the moment has expectation zero; the raw treated/control gap in `X_1` does
/// not, since pairing tilts units toward clusters by `W`.
fn residual_moment(trial: Trial, seed: u64) -> f64 {
    let sim = simulate(&SimulationConfig::new(trial, 20, 400, seed)).unwrap();
    let ds = &sim.dataset;
    let (x1, w) = (ds.unit_column("x1").unwrap(), ds.cluster_column("w").unwrap());
    let total: f64 = (0..ds.n_units())
        .map(|i| {
            let wj = w[ds.unit_cluster()[i]];
            let p = 1.0 / (1.0 + (-0.2 * wj).exp());
            (f64::from(u8::from(ds.unit_treated(i))) - p) * x1[i]
        })
        .sum();
    total / ds.n_units() as f64
}

fn moments(trial: Trial, reps: u64) -> (f64, f64) {
    let v: Vec<f64> = (0..reps).map(|r| residual_moment(trial, 1000 + r)).collect();
    let (mean, sd) = mean_sd(&v);
    (mean, sd / (reps as f64).sqrt())
}

#[test]
fn blind_pairing_leaves_covariates_unrelated_to_treatment_given_w() {
    let (mean, se) = moments(Trial::Trial2a, 500);
    assert!(mean.abs() < 3.0 * se, "moment {mean}, se {se}");
}

#[test]
fn reactive_pairing_draws_high_covariates_to_treated_clusters() {
    let (mean, se) = moments(Trial::Trial2b, 200);
    assert!(mean > 10.0 * se, "moment {mean}, se {se}");
}

#[test]
fn x2_rate_and_effect_mean() {
    let sim = simulate(&SimulationConfig::new(Trial::Trial1, 10, 100_000, 5)).unwrap();
    let (x2, _) = mean_sd(sim.dataset.unit_column("x2").unwrap());
    assert!((x2 - 0.4).abs() < 0.01, "{x2}");
    // sd of ite is 0.4 * sqrt(1.24), so the mean has se ~0.0014
    assert!((sim.sample_ate() - 0.16).abs() < 0.006, "{}", sim.sample_ate());
}

#[test]
fn cluster_covariate_and_treatment_rate() {
    let m = 100_000;
    let base = gen_baseline(m, m, &mut rng_from_seed(8));
    let (w, sd) = mean_sd(&base.w);
    assert!(w.abs() < 0.01 && (sd - 1.0).abs() < 0.01, "{w} {sd}");
    let (x1, _) = mean_sd(&base.x1);
    assert!(x1.abs() < 0.01);

    let a = assign_treatment(&base.w, None, Trial::Trial2a, &mut rng_from_seed(9)).unwrap();
    let frac = a.iter().filter(|&&t| t).count() as f64 / m as f64;
    assert!((frac - 0.5).abs() < 0.005, "{frac}");
}

#[test]
fn effect_identity_holds_unit_by_unit() {
    for trial in Trial::ALL {
        let sim = simulate(&SimulationConfig::new(trial, 30, 3000, 17)).unwrap();
        let ds = &sim.dataset;
        let (x1, x2) = (ds.unit_column("x1").unwrap(), ds.unit_column("x2").unwrap());
        for i in 0..ds.n_units() {
            assert_eq!(sim.ite[i], 0.4 * (x1[i] + x2[i]));
            assert!((sim.y1[i] - sim.y0[i] - sim.ite[i]).abs() < 1e-12);
            let y = if ds.unit_treated(i) { sim.y1[i] } else { sim.y0[i] };
            assert_eq!(ds.outcome()[i], y);
        }
    }
}

#[test]
fn trials_share_baseline_draws_under_one_seed() {
    let a = simulate(&SimulationConfig::new(Trial::Trial1, 10, 200, 3)).unwrap();
    let b = simulate(&SimulationConfig::new(Trial::Trial2b, 10, 200, 3)).unwrap();
    assert_eq!(a.dataset.unit_column("x1"), b.dataset.unit_column("x1"));
    assert_ne!(a.dataset.outcome(), b.dataset.outcome());
}
