use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cos")).args(args).output().expect("run cos")
}

fn ok(args: &[&str]) -> Output {
    let out = cos(args);
    assert!(
        out.status.success(),
        "cos {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn simulate(dir: &Path, trial: &str, seed: &str) {
    ok(&[
        "simulate",
        "--trial",
        trial,
        "--m",
        "20",
        "--n",
        "600",
        "--seed",
        seed,
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_three_files_with_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "2b", "11");
    for name in ["units.csv", "clusters.csv", "truth.csv"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.starts_with("# cos "), "{name}");
        assert!(text.contains("# trial=2b\n# m=20\n# n=600\n# seed=11\n"), "{name}");
    }
    let truth = fs::read_to_string(dir.path().join("truth.csv")).unwrap();
    assert!(truth.contains("\nunit_id,y1,y0,ite\nu1,"));
}

#[test]
fn simulated_files_feed_estimate_and_balance() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "2b", "12");
    let (u, c) = (p(dir.path(), "units.csv"), p(dir.path(), "clusters.csv"));

    let out = ok(&[
        "estimate", "--units", &u, "--clusters", &c, "--adjust", "w,wh,whx", "--bootstrap", "20", "--seed", "1",
        "--format", "csv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(body[0].starts_with("adjust,quadratic,estimate,se,ci_wald_lo,ci_wald_hi,ci_percentile_lo"));
    assert_eq!(body.len(), 4);
    assert!(body[3].starts_with("whx,false,"));
    assert!(text.contains("# seed=1\n# seed_source=given\n"));

    let out = ok(&["balance", "--units", &u, "--clusters", &c]);
    let text = String::from_utf8(out.stdout).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "covariate,level,mean_t,mean_c,std_diff");
    // 2 unit + 1 cluster + 4 aggregate rows
    assert_eq!(body.len(), 8);
    assert!(body[7].starts_with("x2_mean,cluster,"));

    let out = ok(&["balance", "--units", &u, "--clusters", &c, "--no-aggregates"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn pretty_and_jsonl_outputs() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "1", "13");
    let (u, c) = (p(dir.path(), "units.csv"), p(dir.path(), "clusters.csv"));
    let out = ok(&[
        "estimate", "--units", &u, "--clusters", &c, "--adjust", "wh", "--quadratic", "--bootstrap", "10", "--seed",
        "2", "--format", "jsonl",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0]["config"].is_array());
    assert_eq!(lines[1]["adjust"], "wh");
    assert_eq!(lines[1]["quadratic"], true);
    assert_eq!(lines[1]["ci_wald"].as_array().unwrap().len(), 2);

    let out = ok(&[
        "estimate", "--units", &u, "--clusters", &c, "--adjust", "w", "--bootstrap", "10", "--seed", "2",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("wald 95% CI"));
    assert!(text.contains("percentile 95% CI"));
}

#[test]
fn out_file_plus_summary() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "2a", "14");
    let (u, c, o) = (p(dir.path(), "units.csv"), p(dir.path(), "clusters.csv"), p(dir.path(), "est.csv"));
    let out = ok(&[
        "estimate", "--units", &u, "--clusters", &c, "--adjust", "whx", "--bootstrap", "10", "--seed", "3",
        "--format", "csv", "--out", &o,
    ]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("estimate"));
    assert!(fs::read_to_string(&o).unwrap().contains("\nwhx,false,"));
}

#[test]
fn missing_seed_is_drawn_and_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["simulate", "--trial", "1", "--m", "5", "--n", "50", "--out-dir", dir.path().to_str().unwrap()]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    let seed: u64 = stderr
        .strip_prefix("seed: ")
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .expect("seed on stderr");
    let units = fs::read_to_string(dir.path().join("units.csv")).unwrap();
    assert!(units.contains(&format!("# seed={seed}\n# seed_source=random\n")));

    // the echoed seed reproduces the run
    let again = tempfile::tempdir().unwrap();
    simulate_sized(again.path(), &seed.to_string());
    let units2 = fs::read_to_string(again.path().join("units.csv")).unwrap();
    assert_eq!(
        units.replace("seed_source=random", "seed_source=given"),
        units2
    );
}

fn simulate_sized(dir: &Path, seed: &str) {
    ok(&["simulate", "--trial", "1", "--m", "5", "--n", "50", "--seed", seed, "--out-dir", dir.to_str().unwrap()]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "2a", "15");
    let (u, c) = (p(dir.path(), "units.csv"), p(dir.path(), "clusters.csv"));

    assert_eq!(cos(&["estimate", "--units", &u, "--clusters", &c, "--adjust", "foo"]).status.code(), Some(2));
    assert_eq!(cos(&["estimate", "--units", &u, "--clusters", &c]).status.code(), Some(2));
    assert_eq!(cos(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        cos(&["estimate", "--units", &u, "--clusters", &c, "--adjust", "w", "--bootstrap", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(cos(&["simulate", "--trial", "1", "--m", "1", "--n", "10", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(cos(&["--help"]).status.code(), Some(0));

    let missing = p(dir.path(), "nope.csv");
    assert_eq!(cos(&["balance", "--units", &missing, "--clusters", &c]).status.code(), Some(3));

    let bad = p(dir.path(), "bad.csv");
    fs::write(&bad, "unit_id,cluster_id,y\nu1,c1,notanumber\n").unwrap();
    let out = cos(&["balance", "--units", &bad, "--clusters", &c]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let cfg = p(dir.path(), "agg.toml");
    fs::write(&cfg, "[aggregates]\nx1 = [\"q250\"]\n").unwrap();
    assert_eq!(
        cos(&["balance", "--units", &u, "--clusters", &c, "--config", &cfg]).status.code(),
        Some(2)
    );
    fs::write(&cfg, "[aggregates]\nzzz = [\"mean\"]\n").unwrap();
    assert_eq!(
        cos(&["balance", "--units", &u, "--clusters", &c, "--config", &cfg]).status.code(),
        Some(3)
    );
}

#[test]
fn one_armed_data_is_an_estimation_error() {
    let dir = tempfile::tempdir().unwrap();
    let (u, c) = (p(dir.path(), "u.csv"), p(dir.path(), "c.csv"));
    fs::write(&u, "unit_id,cluster_id,y,x\na,k1,1,0.5\nb,k2,2,1.5\nc,k2,0,0.1\n").unwrap();
    fs::write(&c, "cluster_id,a,w\nk1,1,0.3\nk2,1,0.1\n").unwrap();
    let out = cos(&["estimate", "--units", &u, "--clusters", &c, "--adjust", "w", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("estimation error"), "{err}");
    assert!(err.contains("one treated and one control"), "{err}");
}

#[test]
fn custom_aggregates_change_the_design() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "1", "16");
    let (u, c, cfg) = (p(dir.path(), "units.csv"), p(dir.path(), "clusters.csv"), p(dir.path(), "a.toml"));
    fs::write(&cfg, "quantile_method = \"hazen\"\n[aggregates]\nx1 = [\"q50\"]\nx2 = [\"mean\"]\n").unwrap();
    let out = ok(&["balance", "--units", &u, "--clusters", &c, "--config", &cfg]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# quantile_method=hazen\n"));
    assert!(text.contains("# aggregate_override=x1:[q50]\n"));
    assert!(text.contains("\nx1_q50,cluster,"));
    assert!(!text.contains("x1_q25"));
}

#[test]
fn replicate_small_grid() {
    let out = ok(&["replicate-table1", "--reps", "2", "--boot", "5", "--seed", "4", "--trial", "2a"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "trial,m,n,adjust,mean,sd,avg_se,cp,failures");
    assert_eq!(body.len(), 10);
    assert!(body[1].starts_with("2a,50,4000,w,"));
    assert!(body[9].starts_with("2a,50,8000,whx,"));
    assert!(String::from_utf8(out.stderr).unwrap().contains("[3/3]"));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "2b", "17");
    let (u, c) = (p(dir.path(), "units.csv"), p(dir.path(), "clusters.csv"));
    let run = |threads: &str| {
        ok(&[
            "--threads", threads, "estimate", "--units", &u, "--clusters", &c, "--adjust", "w,whx", "--bootstrap",
            "40", "--seed", "9", "--format", "csv",
        ])
        .stdout
    };
    assert_eq!(run("1"), run("3"));
}
