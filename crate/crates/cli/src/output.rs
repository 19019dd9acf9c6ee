//! Summary tables: CSV for machines, aligned text for people.

use std::fmt::Write as _;

use plasmode_core::datamodel::fmt_f64;
use plasmode_core::harness::CrossSourceAggregate;
use plasmode_core::oracle::{BiasReport, OracleReport};
use plasmode_core::{EstimateRecord, Estimand, EstimatorId, Framework, MetricsSummary, TruthSet};

pub const SUMMARY_COLUMNS: [&str; 13] = [
    "estimand",
    "framework",
    "estimator",
    "truth",
    "mean",
    "bias",
    "pct_bias",
    "se",
    "rmse",
    "bias_se",
    "coverage",
    "n_replicates",
    "n_converged",
];

pub const AGGREGATE_COLUMNS: [&str; 8] = [
    "estimand",
    "framework",
    "estimator",
    "median_bias_se",
    "q25_bias_se",
    "q75_bias_se",
    "min_bias_se",
    "max_bias_se",
];

pub const ORACLE_COLUMNS: [&str; 7] = [
    "arm",
    "psi_n",
    "iptw_target",
    "b_n",
    "sqrt_n_b_n",
    "predicted_mean",
    "identity_residual",
];

/// Summaries for each estimand, restricted to the estimators that report
/// it (an ATE-only estimator has no rr row, for instance). Estimands
/// without a truth are skipped.
pub fn summarize_all(
    records: &[EstimateRecord],
    truths: &TruthSet,
    estimands: &[Estimand],
) -> plasmode_core::Result<Vec<MetricsSummary>> {
    let mut out = Vec::new();
    for &e in estimands {
        if truths.value(e).is_none() {
            continue;
        }
        let reporting: Vec<EstimatorId> = {
            let mut ids: Vec<EstimatorId> = records.iter().filter(|r| r.value(e).is_some()).map(|r| r.estimator).collect();
            ids.sort();
            ids.dedup();
            ids
        };
        let kept: Vec<EstimateRecord> = records.iter().filter(|r| reporting.contains(&r.estimator)).copied().collect();
        if !kept.is_empty() {
            out.extend(plasmode_core::summarize(&kept, truths, e)?);
        }
    }
    Ok(out)
}

fn csv_line(cells: &[String]) -> String {
    let mut s = cells.join(",");
    s.push('\n');
    s
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn summary_csv(rows: &[MetricsSummary]) -> String {
    let mut s = csv_line(&SUMMARY_COLUMNS.map(String::from));
    for m in rows {
        s += &csv_line(&[
            m.estimand.to_string(),
            m.framework.to_string(),
            m.estimator.to_string(),
            fmt_f64(m.truth),
            fmt_f64(m.mean),
            fmt_f64(m.bias),
            opt(m.pct_bias),
            fmt_f64(m.se),
            fmt_f64(m.rmse),
            fmt_f64(m.bias_se),
            fmt_f64(m.coverage),
            m.n_replicates.to_string(),
            m.n_converged.to_string(),
        ]);
    }
    s
}

pub fn aggregate_csv(rows: &[CrossSourceAggregate]) -> String {
    let mut s = csv_line(&AGGREGATE_COLUMNS.map(String::from));
    for a in rows {
        s += &csv_line(&[
            a.estimand.to_string(),
            a.framework.to_string(),
            a.estimator.to_string(),
            fmt_f64(a.median_bias_se),
            fmt_f64(a.q25_bias_se),
            fmt_f64(a.q75_bias_se),
            fmt_f64(a.min_bias_se),
            fmt_f64(a.max_bias_se),
        ]);
    }
    s
}

fn oracle_row(arm: &str, r: &BiasReport) -> Vec<String> {
    vec![
        arm.to_string(),
        fmt_f64(r.psi_n),
        fmt_f64(r.iptw_target),
        fmt_f64(r.b_n),
        fmt_f64(r.scaled),
        fmt_f64(r.predicted_mean()),
        fmt_f64(r.identity_residual),
    ]
}

pub fn oracle_csv(o: &OracleReport) -> String {
    let mut s = csv_line(&ORACLE_COLUMNS.map(String::from));
    s += &csv_line(&oracle_row("treated", &o.treated));
    s += &csv_line(&oracle_row("control", &o.control));
    s += &csv_line(&oracle_row("ate", &o.ate));
    s
}

/// Fixed-point with `d` decimals; NaN prints as `NA`.
fn fixed(x: f64, d: usize) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x:.d$}")
    }
}

fn framework_label(f: Framework) -> &'static str {
    match f {
        Framework::SampleTreatment => "Sample Treatment",
        Framework::GenerateTreatment => "Generate Treatment",
    }
}

fn widths(header: &[String], rows: &[Vec<String>]) -> Vec<usize> {
    let mut width = vec![0; header.len()];
    for r in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    width
}

/// Right-aligns every column but the first.
fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let width = widths(header, rows);
    let line = |r: &[String]| {
        let mut s = String::new();
        for (j, c) in r.iter().enumerate() {
            if j == 0 {
                let _ = write!(s, "{c:<w$}", w = width[0]);
            } else {
                let _ = write!(s, "  {c:>w$}", w = width[j]);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out += &line(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for r in rows {
        out += &line(r);
    }
    out
}

/// Estimator rows under one column group per framework. `cell` yields the
/// group's columns for one summary.
fn grouped_table(
    rows: &[MetricsSummary],
    frameworks: &[Framework],
    sub: &[&str],
    cell: impl Fn(&MetricsSummary) -> Vec<String>,
) -> String {
    let mut estimators: Vec<EstimatorId> = rows.iter().map(|m| m.estimator).collect();
    estimators.sort();
    estimators.dedup();
    let mut header = vec!["Estimator".to_string()];
    for _ in frameworks {
        header.extend(sub.iter().map(|s| s.to_string()));
    }
    let body: Vec<Vec<String>> = estimators
        .iter()
        .map(|&id| {
            let mut r = vec![id.to_string()];
            for &f in frameworks {
                match rows.iter().find(|m| m.estimator == id && m.framework == f) {
                    Some(m) => r.extend(cell(m)),
                    None => r.extend(sub.iter().map(|_| "-".to_string())),
                }
            }
            r
        })
        .collect();
    let width = widths(&header, &body);
    let mut groups = " ".repeat(width[0]);
    for (g, &f) in frameworks.iter().enumerate() {
        let span: usize = width[1 + g * sub.len()..1 + (g + 1) * sub.len()].iter().map(|w| w + 2).sum::<usize>() - 2;
        let _ = write!(groups, "  {:^span$}", framework_label(f));
    }
    format!("{}\n{}", groups.trim_end(), render(&header, &body))
}

/// Markdown-friendly text report: one bias table and one coverage table
/// per estimand.
pub fn summary_markdown(title: &str, truths: &TruthSet, rows: &[MetricsSummary]) -> String {
    let mut frameworks: Vec<Framework> = rows.iter().map(|m| m.framework).collect();
    frameworks.sort();
    frameworks.dedup();
    let mut estimands: Vec<Estimand> = rows.iter().map(|m| m.estimand).collect();
    estimands.sort();
    estimands.dedup();

    let mut s = format!("# {title}\n");
    for e in estimands {
        let cell: Vec<MetricsSummary> = rows.iter().filter(|m| m.estimand == e).copied().collect();
        let truth = truths.value(e).unwrap_or(f64::NAN);
        let _ = write!(s, "\n## {e} (truth {})\n\n```\n", fixed(truth, 5));
        s += &grouped_table(&cell, &frameworks, &["%Bias", "SE", "RMSE", "Bias:SE"], |m| {
            let bias = match m.pct_bias {
                Some(p) => fixed(p, 3),
                None => format!("{}*", fixed(m.bias, 3)),
            };
            vec![bias, fixed(m.se, 3), fixed(m.rmse, 3), fixed(m.bias_se, 3)]
        });
        s += "```\n";
        if truth == 0.0 {
            s += "\n`*` absolute bias; the truth is zero.\n";
        }
        s += "\nCoverage of the Wald interval (%):\n\n```\n";
        s += &grouped_table(&cell, &frameworks, &["Coverage", "Converged"], |m| {
            vec![fixed(m.coverage, 2), format!("{}/{}", m.n_converged, m.n_replicates)]
        });
        s += "```\n";
    }
    s
}

/// Text report of cross-source bias:SE distributions.
pub fn aggregate_markdown(title: &str, rows: &[CrossSourceAggregate]) -> String {
    let mut s = format!("# {title}\n\n```\n");
    let header: Vec<String> = ["Estimand", "Framework", "Estimator", "Median", "Q25", "Q75", "Min", "Max"]
        .map(String::from)
        .to_vec();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|a| {
            vec![
                a.estimand.to_string(),
                framework_label(a.framework).to_string(),
                a.estimator.to_string(),
                fixed(a.median_bias_se, 3),
                fixed(a.q25_bias_se, 3),
                fixed(a.q75_bias_se, 3),
                fixed(a.min_bias_se, 3),
                fixed(a.max_bias_se, 3),
            ]
        })
        .collect();
    s += &render(&header, &body);
    s += "```\n";
    s
}
