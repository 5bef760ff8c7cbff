use super::{EvalReport, OverheadReport};
use crate::models::{MetricStat, MetricsReport};

const UNDEFINED: &str = "\u{2014}";

/// `"mean ± SD (lo - hi)"` in percent with two decimals.
pub fn format_stat(s: &MetricStat) -> String {
    format!(
        "{:.2} \u{00b1} {:.2} ({:.2} - {:.2})",
        s.mean * 100.0,
        s.sd * 100.0,
        s.ci_low * 100.0,
        s.ci_high * 100.0
    )
}

fn opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or(UNDEFINED.to_string(), |x| format!("{x:.decimals$}"))
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(header.to_vec());
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn metric_cells(m: Option<&MetricsReport>) -> [String; 4] {
    match m {
        Some(m) => [
            format_stat(&m.accuracy),
            format_stat(&m.precision),
            format_stat(&m.recall),
            format_stat(&m.f1),
        ],
        None => std::array::from_fn(|_| UNDEFINED.to_string()),
    }
}

/// Text tables: one metrics row per (classifier, technique), then the
/// overhead of every obfuscation leg.
pub fn render_report(r: &EvalReport) -> String {
    let mut out = format!("Scenario {} (plan {}, seed {})\n\n", r.scenario, r.plan, r.seed);
    let rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|row| {
            let mut cells = vec![row.classifier.title().to_string(), row.technique.clone()];
            cells.extend(metric_cells(row.metrics.as_ref()));
            cells
        })
        .collect();
    out.push_str(&table(
        &["Classifier", "Technique", "Accuracy", "Precision", "Recall", "F1"],
        &rows,
    ));
    if !r.overhead.is_empty() {
        out.push('\n');
        out.push_str(&render_overhead(&r.overhead));
    }
    if !r.metadata.is_empty() {
        out.push('\n');
        for (k, v) in &r.metadata {
            out.push_str(&format!("{k}: {v}\n"));
        }
    }
    out
}

/// Overhead table alone, as printed by the obfuscation command.
pub fn render_overhead(reports: &[OverheadReport]) -> String {
    let rows: Vec<Vec<String>> = reports.iter().map(overhead_cells).collect();
    table(
        &[
            "Technique",
            "Packets",
            "Bytes added/pkt",
            "Latency added (s)",
            "Skipped",
            "Exec time/pkt (s)",
        ],
        &rows,
    )
}

fn overhead_cells(o: &OverheadReport) -> Vec<String> {
    vec![
        o.technique.clone(),
        o.packets.to_string(),
        opt(o.mean_bytes_added(), 3),
        opt(o.mean_latency_s(), 6),
        o.skipped.to_string(),
        opt(o.mean_wall_time_s(), 9),
    ]
}

/// Column names of [`report_csv`]. Wall-clock time is last so that
/// determinism checks can drop it.
pub const REPORT_CSV_HEADER: [&str; 25] = [
    "scenario",
    "plan",
    "classifier",
    "technique",
    "accuracy_mean",
    "accuracy_sd",
    "accuracy_ci_low",
    "accuracy_ci_high",
    "precision_mean",
    "precision_sd",
    "precision_ci_low",
    "precision_ci_high",
    "recall_mean",
    "recall_sd",
    "recall_ci_low",
    "recall_ci_high",
    "f1_mean",
    "f1_sd",
    "f1_ci_low",
    "f1_ci_high",
    "packets",
    "bytes_added_per_pkt",
    "latency_added_s",
    "skipped",
    "exec_time_per_pkt_s",
];

/// Machine-readable twin of [`render_report`]: metrics in `[0, 1]` with six
/// decimals, joined with the overhead of the row's technique. Undefined
/// values are empty fields.
pub fn report_csv(r: &EvalReport) -> String {
    reports_csv(std::slice::from_ref(r))
}

/// Several reports under one header.
pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(REPORT_CSV_HEADER).expect("in-memory write");
    let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for (r, row) in reports.iter().flat_map(|r| r.rows.iter().map(move |row| (r, row))) {
        let mut rec = vec![
            r.scenario.clone(),
            r.plan.to_string(),
            row.classifier.short_name().to_string(),
            row.technique.clone(),
        ];
        for i in 0..4 {
            let s = row.metrics.as_ref().map(|m| [m.accuracy, m.precision, m.recall, m.f1][i]);
            rec.extend([
                f(s.map(|s| s.mean)),
                f(s.map(|s| s.sd)),
                f(s.map(|s| s.ci_low)),
                f(s.map(|s| s.ci_high)),
            ]);
        }
        let o = r.overhead.iter().find(|o| o.technique == row.technique);
        rec.extend([
            o.map_or(String::new(), |o| o.packets.to_string()),
            f(o.and_then(OverheadReport::mean_bytes_added)),
            f(o.and_then(OverheadReport::mean_latency_s)),
            o.map_or(String::new(), |o| o.skipped.to_string()),
            o.and_then(OverheadReport::mean_wall_time_s)
                .map_or(String::new(), |x| format!("{x:.9}")),
        ]);
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 fields")
}
