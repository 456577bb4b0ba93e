//! Text renderings of results. Every rendering starts with the run header:
//! `#` comment lines for csv and pretty, a `{"config": [...]}` line for jsonl.

use std::fmt::Write;

use cos_core::{BalanceRow, EstimateResult, ScenarioResult};
use serde_json::json;

use crate::args::Format;

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(fields).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn push_header(out: &mut String, head: &[String], format: Format) {
    if head.is_empty() {
        return;
    }
    match format {
        Format::Csv | Format::Pretty => {
            for line in head {
                let _ = writeln!(out, "# {line}");
            }
        }
        Format::Jsonl => {
            let _ = writeln!(out, "{}", json!({ "config": head }));
        }
    }
}

/// Floats round-trip exactly in csv and jsonl; pretty uses four decimals.
fn num(v: f64) -> String {
    v.to_string()
}

fn opt_json(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

fn table(out: &mut String, columns: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = columns.iter().map(|c| c.len()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| -> String {
        let parts: Vec<String> = cells
            .zip(&widths)
            .enumerate()
            .map(|(k, (c, &w))| if k == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let _ = writeln!(out, "{}", line(&mut columns.iter().copied()));
    for r in rows {
        let _ = writeln!(out, "{}", line(&mut r.iter().map(String::as_str)));
    }
}

pub fn estimates(head: &[String], results: &[EstimateResult], format: Format) -> String {
    let mut out = String::new();
    push_header(&mut out, head, format);
    match format {
        Format::Csv => {
            out.push_str(&csv_line(
                &[
                    "adjust",
                    "quadratic",
                    "estimate",
                    "se",
                    "ci_wald_lo",
                    "ci_wald_hi",
                    "ci_percentile_lo",
                    "ci_percentile_hi",
                    "replicates",
                    "attempts",
                    "discarded",
                    "rank_deficient",
                    "rank_flags",
                ]
                .map(String::from),
            ));
            for r in results {
                let b = &r.bootstrap;
                out.push_str(&csv_line(&[
                    r.spec.adjustment.to_string(),
                    r.spec.quadratic.to_string(),
                    num(r.estimate),
                    num(b.se),
                    num(b.wald_ci.0),
                    num(b.wald_ci.1),
                    num(b.percentile_ci.0),
                    num(b.percentile_ci.1),
                    b.requested.to_string(),
                    b.attempts.to_string(),
                    b.discarded.to_string(),
                    r.rank_deficient.to_string(),
                    b.rank_flags.to_string(),
                ]));
            }
        }
        Format::Jsonl => {
            for r in results {
                let b = &r.bootstrap;
                let row = json!({
                    "adjust": r.spec.adjustment.to_string(),
                    "quadratic": r.spec.quadratic,
                    "estimate": opt_json(r.estimate),
                    "se": opt_json(b.se),
                    "ci_wald": [opt_json(b.wald_ci.0), opt_json(b.wald_ci.1)],
                    "ci_percentile": [opt_json(b.percentile_ci.0), opt_json(b.percentile_ci.1)],
                    "replicates": b.requested,
                    "attempts": b.attempts,
                    "discarded": b.discarded,
                    "rank_deficient": r.rank_deficient,
                    "rank_flags": b.rank_flags,
                });
                let _ = writeln!(out, "{row}");
            }
        }
        Format::Pretty => {
            let rows: Vec<Vec<String>> = results
                .iter()
                .map(|r| {
                    let b = &r.bootstrap;
                    let adjust = if r.spec.quadratic {
                        format!("{} (quadratic)", r.spec.adjustment)
                    } else {
                        r.spec.adjustment.to_string()
                    };
                    vec![
                        adjust,
                        format!("{:.4}", r.estimate),
                        format!("{:.4}", b.se),
                        format!("[{:.4}, {:.4}]", b.wald_ci.0, b.wald_ci.1),
                        format!("[{:.4}, {:.4}]", b.percentile_ci.0, b.percentile_ci.1),
                        format!("{}/{}", b.discarded, b.attempts),
                        format!(
                            "{}{}",
                            b.rank_flags,
                            if r.rank_deficient { " (full data)" } else { "" }
                        ),
                    ]
                })
                .collect();
            table(
                &mut out,
                &["adjust", "estimate", "se", "wald 95% CI", "percentile 95% CI", "discarded", "rank flags"],
                &rows,
            );
        }
    }
    out
}

pub fn balance(head: &[String], rows: &[BalanceRow], format: Format) -> String {
    let mut out = String::new();
    push_header(&mut out, head, format);
    let std_diff = |r: &BalanceRow| r.std_diff.map(num).unwrap_or_default();
    match format {
        Format::Csv => {
            out.push_str(&csv_line(&["covariate", "level", "mean_t", "mean_c", "std_diff"].map(String::from)));
            for r in rows {
                out.push_str(&csv_line(&[
                    r.covariate.clone(),
                    r.level.to_string(),
                    num(r.mean_treated),
                    num(r.mean_control),
                    std_diff(r),
                ]));
            }
        }
        Format::Jsonl => {
            for r in rows {
                let row = json!({
                    "covariate": r.covariate,
                    "level": r.level.to_string(),
                    "mean_t": opt_json(r.mean_treated),
                    "mean_c": opt_json(r.mean_control),
                    "std_diff": r.std_diff,
                });
                let _ = writeln!(out, "{row}");
            }
        }
        Format::Pretty => {
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.covariate.clone(),
                        r.level.to_string(),
                        format!("{:.4}", r.mean_treated),
                        format!("{:.4}", r.mean_control),
                        r.std_diff.map(|d| format!("{d:.3}")).unwrap_or_else(|| "-".into()),
                    ]
                })
                .collect();
            table(&mut out, &["covariate", "level", "mean_t", "mean_c", "std_diff"], &cells);
        }
    }
    out
}

pub fn table1(head: &[String], rows: &[ScenarioResult], format: Format) -> String {
    let mut out = String::new();
    push_header(&mut out, head, format);
    match format {
        Format::Csv => {
            out.push_str(&csv_line(
                &["trial", "m", "n", "adjust", "mean", "sd", "avg_se", "cp", "failures"].map(String::from),
            ));
            for r in rows {
                let s = &r.scenario;
                out.push_str(&csv_line(&[
                    s.trial.to_string(),
                    s.m.to_string(),
                    s.n.to_string(),
                    s.adjustment.to_string(),
                    num(r.mean),
                    num(r.sd),
                    num(r.avg_se),
                    num(r.cp),
                    r.failures.to_string(),
                ]));
            }
        }
        Format::Jsonl => {
            for r in rows {
                let s = &r.scenario;
                let row = json!({
                    "trial": s.trial.to_string(),
                    "m": s.m,
                    "n": s.n,
                    "adjust": s.adjustment.to_string(),
                    "mean": opt_json(r.mean),
                    "sd": opt_json(r.sd),
                    "sd_defined": r.sd_defined,
                    "avg_se": opt_json(r.avg_se),
                    "cp": opt_json(r.cp),
                    "failures": r.failures,
                });
                let _ = writeln!(out, "{row}");
            }
        }
        Format::Pretty => {
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let s = &r.scenario;
                    vec![
                        s.trial.to_string(),
                        format!("m={}, n={}", s.m, s.n),
                        s.adjustment.to_string(),
                        format!("{:.3}", r.mean),
                        format!("{:.3}", r.sd),
                        format!("{:.3}", r.avg_se),
                        format!("{:.3}", r.cp),
                        r.failures.to_string(),
                    ]
                })
                .collect();
            table(&mut out, &["trial", "sizes", "adjust", "mean", "sd", "se", "cp", "failures"], &cells);
        }
    }
    out
}
