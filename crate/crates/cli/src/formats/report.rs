//! Evaluation reports: a human-readable text summary and a flat CSV with
//! the same numbers. Metrics are collected per run (one run per
//! checkpoint) and reported as mean ± population standard deviation
//! across runs.

use keydet_core::evaluation::{aggregate, Aggregate};

/// Metrics for one image pair, with one entry per run. `None` marks a pair
/// where the metric was undefined for that run (no shared detections).
#[derive(Debug, Clone)]
pub struct PairMetrics {
    pub sequence: String,
    /// Pair label within the sequence, e.g. `1-3`.
    pub pair: String,
    pub repeatability: Vec<Option<f64>>,
    pub matching: Vec<Option<f64>>,
}

/// Everything a report renders.
#[derive(Debug, Clone)]
pub struct ReportData {
    pub config_hash: String,
    /// Checkpoint paths, one per run, in run order.
    pub checkpoints: Vec<String>,
    pub overlap_threshold: f64,
    /// One entry per detection budget: `(k, rows)`.
    pub sections: Vec<(usize, Vec<PairMetrics>)>,
}

fn aggregate_defined(values: &[Option<f64>]) -> Option<Aggregate> {
    let defined: Vec<f64> = values.iter().copied().flatten().collect();
    aggregate(&defined)
}

/// Aggregates each run's mean over the pairs where the metric is defined,
/// then summarizes those per-run means across runs.
fn overall(rows: &[PairMetrics], metric: impl Fn(&PairMetrics) -> &[Option<f64>]) -> Option<Aggregate> {
    let runs = rows.iter().map(|r| metric(r).len()).max()?;
    let mut per_run = Vec::with_capacity(runs);
    for run in 0..runs {
        let values: Vec<f64> = rows
            .iter()
            .filter_map(|r| metric(r).get(run).copied().flatten())
            .collect();
        if let Some(agg) = aggregate(&values) {
            per_run.push(agg.mean);
        }
    }
    aggregate(&per_run)
}

fn fmt_agg(agg: Option<Aggregate>) -> String {
    match agg {
        Some(a) if a.runs > 1 => format!("{:.4} \u{b1} {:.4}", a.mean, a.std_dev),
        Some(a) => format!("{:.4}", a.mean),
        None => "undefined".to_string(),
    }
}

/// Renders the human-readable report.
pub fn render_text(data: &ReportData) -> String {
    let mut out = String::new();
    out.push_str("keypoint detector evaluation\n");
    out.push_str(&format!("config: sha256:{}\n", data.config_hash));
    out.push_str(&format!(
        "runs: {} ({})\n",
        data.checkpoints.len(),
        data.checkpoints.join(", ")
    ));
    out.push_str(&format!(
        "overlap threshold: {}\n",
        data.overlap_threshold
    ));
    out.push_str(
        "note: matching scores use this tool's built-in gradient-histogram \
         descriptor;\nthey are comparable between runs of this tool, not with \
         scores from other detectors' descriptors.\n",
    );
    for (k, rows) in &data.sections {
        out.push_str(&format!("\n[k = {k}]\n"));
        let mut current_seq = None;
        for row in rows {
            if current_seq != Some(&row.sequence) {
                out.push_str(&format!("  sequence {}\n", row.sequence));
                current_seq = Some(&row.sequence);
            }
            out.push_str(&format!(
                "    pair {}: repeatability {}, matching {}\n",
                row.pair,
                fmt_agg(aggregate_defined(&row.repeatability)),
                fmt_agg(aggregate_defined(&row.matching)),
            ));
        }
        out.push_str(&format!(
            "  overall: repeatability {} | matching {}\n",
            fmt_agg(overall(rows, |r| &r.repeatability)),
            fmt_agg(overall(rows, |r| &r.matching)),
        ));
    }
    out
}

/// Renders the CSV twin: one row per (k, pair, metric).
pub fn render_csv(data: &ReportData) -> String {
    let mut out = String::from("k,sequence,pair,metric,mean,std,runs\n");
    for (k, rows) in &data.sections {
        for row in rows {
            for (name, values) in [
                ("repeatability", &row.repeatability),
                ("matching", &row.matching),
            ] {
                match aggregate_defined(values) {
                    Some(a) => out.push_str(&format!(
                        "{k},{},{},{name},{},{},{}\n",
                        row.sequence, row.pair, a.mean, a.std_dev, a.runs
                    )),
                    None => out.push_str(&format!(
                        "{k},{},{},{name},,,0\n",
                        row.sequence, row.pair
                    )),
                }
            }
        }
    }
    out
}

/// Columnar dump for external plotting: one line per (k, pair, run,
/// metric, value), tab-separated, runs identified by checkpoint path.
pub fn render_plot_data(data: &ReportData) -> String {
    let mut out = String::from("k\tsequence\tpair\trun\tmetric\tvalue\n");
    for (k, rows) in &data.sections {
        for row in rows {
            for (name, values) in [
                ("repeatability", &row.repeatability),
                ("matching", &row.matching),
            ] {
                for (run, value) in values.iter().enumerate() {
                    if let Some(v) = value {
                        let ckpt = data
                            .checkpoints
                            .get(run)
                            .map(String::as_str)
                            .unwrap_or("?");
                        out.push_str(&format!(
                            "{k}\t{}\t{}\t{ckpt}\t{name}\t{v}\n",
                            row.sequence, row.pair
                        ));
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ReportData {
        ReportData {
            config_hash: "77".repeat(32),
            checkpoints: vec!["a.kdck".to_string(), "b.kdck".to_string()],
            overlap_threshold: 0.4,
            sections: vec![(
                200,
                vec![
                    PairMetrics {
                        sequence: "seq-1".to_string(),
                        pair: "1-2".to_string(),
                        repeatability: vec![Some(0.60), Some(0.64)],
                        matching: vec![Some(0.30), Some(0.32)],
                    },
                    PairMetrics {
                        sequence: "seq-1".to_string(),
                        pair: "1-3".to_string(),
                        repeatability: vec![Some(0.40), Some(0.44)],
                        matching: vec![None, None],
                    },
                ],
            )],
        }
    }

    #[test]
    fn text_report_carries_summary_and_banner() {
        let text = render_text(&sample());
        assert!(text.contains("[k = 200]"));
        assert!(text.contains("pair 1-2"));
        // Mean of {0.60, 0.64} = 0.62, population std 0.02.
        assert!(text.contains("0.6200 \u{b1} 0.0200"), "{text}");
        // Per-run means {0.50, 0.54} -> 0.52 overall.
        assert!(text.contains("overall: repeatability 0.5200"), "{text}");
        assert!(text.contains("undefined"));
        assert!(text.contains("built-in"));
    }

    #[test]
    fn csv_has_one_row_per_pair_metric() {
        let csv = render_csv(&sample());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 2);
        assert_eq!(lines[0], "k,sequence,pair,metric,mean,std,runs");
        assert!(lines[1].starts_with("200,seq-1,1-2,repeatability,0.62,"));
        assert!(lines[4].ends_with(",,0"), "{}", lines[4]);
    }

    #[test]
    fn plot_data_lists_runs_separately() {
        let tsv = render_plot_data(&sample());
        assert!(tsv.contains("a.kdck\trepeatability\t0.6"));
        assert!(tsv.contains("b.kdck\trepeatability\t0.64"));
        // Undefined metrics are omitted rather than written as NaN, so the
        // all-None matching rows of pair 1-3 leave only pair 1-2's two runs.
        assert_eq!(tsv.matches("matching").count(), 2);
    }
}
