//! Deterministic metrics, summary, and plot-series export.
//!
//! All real numbers are written with six significant digits, no locale
//! dependence, and every file begins with a version comment so outputs are
//! reproducible byte-for-byte given (config, seed, crate version).

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::drl::TrainReport;
use crate::sim::{ComparisonReport, EpisodeResult, MetricsRecord, Summary, ViolationCounts};
use crate::VERSION;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("write failed: {0}")]
    Io(#[from] io::Error),
    #[error("malformed metrics CSV {path} line {line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
    #[error("no metrics files found under {0}")]
    NoInputs(String),
}

/// Format a real with six significant digits, trimming trailing zeros.
/// Magnitudes outside `[1e-4, 1e6)` switch to exponent notation.
pub fn format_real(value: f64) -> String {
    debug_assert!(value.is_finite(), "exported values must be finite");
    if value == 0.0 {
        return "0".to_string();
    }
    let exp = value.abs().log10().floor() as i32;
    let mut s = if !(-4..6).contains(&exp) {
        format!("{value:.5e}")
    } else {
        let decimals = (5 - exp).max(0) as usize;
        format!("{value:.decimals$}")
    };
    if s.contains('.') {
        let (mantissa, suffix) = match s.find('e') {
            Some(pos) => (s[..pos].to_string(), s[pos..].to_string()),
            None => (s.clone(), String::new()),
        };
        let trimmed = mantissa.trim_end_matches('0').trim_end_matches('.');
        s = format!("{trimmed}{suffix}");
    }
    s
}

pub const METRICS_HEADER: &str = "t,stream_id,delivered_mbps,latency_ms,loss_rate,qos,utility,assigned_paths";

fn version_comment() -> String {
    format!("# acmptc {VERSION}\n")
}

/// Write per-step metrics as CSV: a version comment, the header, then one
/// row per (t, stream), ordered by t then stream id.
pub fn write_metrics_csv(records: &[MetricsRecord], mut sink: impl Write) -> Result<(), ExportError> {
    sink.write_all(version_comment().as_bytes())?;
    writeln!(sink, "{METRICS_HEADER}")?;
    for r in records {
        let paths = r
            .assigned_paths
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join("|");
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.stream_id,
            format_real(r.delivered_mbps),
            format_real(r.latency_ms),
            format_real(r.loss_rate),
            format_real(r.qos),
            format_real(r.utility),
            paths
        )?;
    }
    Ok(())
}

/// Write the episode summary as TOML-style structured text.
pub fn write_summary(summary: &Summary, violations: &ViolationCounts, mut sink: impl Write) -> Result<(), ExportError> {
    let mut out = String::new();
    out.push_str(&version_comment());
    let agg = &summary.aggregate;
    let _ = writeln!(out, "version = \"{VERSION}\"");
    let _ = writeln!(out, "mean_throughput_mbps = {}", format_real(agg.mean_delivered_mbps));
    let _ = writeln!(out, "p95_latency_ms = {}", format_real(agg.p95_latency_ms));
    let _ = writeln!(out, "mean_loss = {}", format_real(agg.mean_loss));
    let _ = writeln!(out, "mean_qos = {}", format_real(agg.mean_qos));
    let _ = writeln!(out, "mean_utility = {}", format_real(agg.mean_utility));
    let _ = writeln!(out, "cumulative_throughput = {}", format_real(agg.cumulative_delivered_mbit));
    let _ = writeln!(out, "violations = {}", violations.hard_total());
    for (stream_id, stats) in &summary.per_stream {
        let _ = writeln!(out, "\n[stream.{stream_id}]");
        let _ = writeln!(out, "mean_throughput_mbps = {}", format_real(stats.mean_delivered_mbps));
        let _ = writeln!(out, "p95_latency_ms = {}", format_real(stats.p95_latency_ms));
        let _ = writeln!(out, "mean_loss = {}", format_real(stats.mean_loss));
        let _ = writeln!(out, "mean_qos = {}", format_real(stats.mean_qos));
        let _ = writeln!(out, "mean_utility = {}", format_real(stats.mean_utility));
        let _ = writeln!(out, "cumulative_throughput = {}", format_real(stats.cumulative_delivered_mbit));
    }
    sink.write_all(out.as_bytes())?;
    Ok(())
}

/// Write an episode (metrics + summary) into a directory.
pub fn export_episode(result: &EpisodeResult, dir: &Path) -> Result<(), ExportError> {
    fs::create_dir_all(dir)?;
    let metrics = fs::File::create(dir.join("metrics.csv"))?;
    write_metrics_csv(&result.records, io::BufWriter::new(metrics))?;
    let summary = fs::File::create(dir.join("summary.toml"))?;
    write_summary(&result.summary, &result.violations, io::BufWriter::new(summary))?;
    Ok(())
}

/// Write per-episode training rewards as CSV (`episode,reward,td_error`).
pub fn write_reward_series(report: &TrainReport, mut sink: impl Write) -> Result<(), ExportError> {
    sink.write_all(version_comment().as_bytes())?;
    writeln!(sink, "episode,reward,td_error")?;
    for (episode, (reward, td)) in report
        .episode_rewards
        .iter()
        .zip(&report.episode_td_errors)
        .enumerate()
    {
        writeln!(sink, "{episode},{},{}", format_real(*reward), format_real(*td))?;
    }
    Ok(())
}

/// Export a comparison: per-cell metrics files, a per-scheduler overlay
/// series (mean delivered across streams and seeds per step), and a
/// summary with paired sign tests against the first scheduler.
pub fn export_comparison(report: &ComparisonReport, dir: &Path) -> Result<(), ExportError> {
    fs::create_dir_all(dir)?;
    for column in &report.columns {
        for episode in &column.episodes {
            let name = format!("metrics_{}_seed{}.csv", column.scheduler.name(), episode.seed);
            let file = fs::File::create(dir.join(name))?;
            write_metrics_csv(&episode.records, io::BufWriter::new(file))?;
        }
    }

    let overlay = fs::File::create(dir.join("overlay.csv"))?;
    let mut overlay = io::BufWriter::new(overlay);
    overlay.write_all(version_comment().as_bytes())?;
    writeln!(overlay, "series,t,value")?;
    for column in &report.columns {
        // mean delivered across streams and seeds, per step
        let mut by_t: std::collections::BTreeMap<u64, (f64, u64)> = std::collections::BTreeMap::new();
        for episode in &column.episodes {
            for r in &episode.records {
                let cell = by_t.entry(r.t).or_insert((0.0, 0));
                cell.0 += r.delivered_mbps;
                cell.1 += 1;
            }
        }
        for (t, (sum, n)) in by_t {
            writeln!(overlay, "{},{t},{}", column.scheduler.name(), format_real(sum / n as f64))?;
        }
    }
    drop(overlay);

    let summary = fs::File::create(dir.join("summary.toml"))?;
    let mut out = String::new();
    out.push_str(&version_comment());
    let _ = writeln!(out, "version = \"{VERSION}\"");
    let _ = writeln!(out, "seeds = {:?}", report.seeds);
    let _ = writeln!(out, "trajectories_paired = {}", report.trajectories_paired);
    for column in &report.columns {
        let _ = writeln!(out, "\n[scheduler.{}]", column.scheduler.name());
        let _ = writeln!(out, "mean_throughput_mbps = {}", format_real(column.mean_delivered_mbps()));
        let _ = writeln!(out, "mean_latency_ms = {}", format_real(column.mean_latency_ms()));
        let _ = writeln!(out, "mean_loss = {}", format_real(column.mean_loss()));
        let _ = writeln!(out, "mean_qos = {}", format_real(column.mean_qos()));
        let _ = writeln!(out, "mean_utility = {}", format_real(column.mean_utility()));
    }
    let baseline = report.columns[0].scheduler;
    for column in &report.columns[1..] {
        let _ = writeln!(out, "\n[paired.{}_vs_{}]", column.scheduler.name(), baseline.name());
        for (diffs, name) in [
            (
                report.paired_diff(column.scheduler, baseline, |s| s.mean_delivered_mbps),
                "throughput",
            ),
            (report.paired_diff(column.scheduler, baseline, |s| s.mean_utility), "utility"),
        ] {
            let wins = diffs.iter().filter(|&&d| d > 0.0).count();
            let ties = diffs.iter().filter(|&&d| d == 0.0).count();
            let n = diffs.len() - ties;
            let mean = diffs.iter().sum::<f64>() / diffs.len().max(1) as f64;
            let p = crate::sim::sign_test_p_value(wins, n.max(1));
            let _ = writeln!(out, "{name}_mean_diff = {}", format_real(mean));
            let _ = writeln!(out, "{name}_wins = {wins}");
            let _ = writeln!(out, "{name}_sign_test_p = {}", format_real(p));
        }
    }
    io::BufWriter::new(summary).write_all(out.as_bytes())?;
    Ok(())
}

struct ParsedMetrics {
    label: String,
    rows: Vec<MetricsRecord>,
}

fn read_metrics_file(path: &Path) -> Result<ParsedMetrics, ExportError> {
    let content = fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line.trim() != METRICS_HEADER {
                return Err(ExportError::Malformed {
                    path: display,
                    line: line_no,
                    reason: format!("expected header `{METRICS_HEADER}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(ExportError::Malformed {
                path: display,
                line: line_no,
                reason: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, name: &str| -> Result<f64, ExportError> {
            s.parse::<f64>().map_err(|_| ExportError::Malformed {
                path: path.display().to_string(),
                line: line_no,
                reason: format!("invalid {name}: `{s}`"),
            })
        };
        rows.push(MetricsRecord {
            t: parse(fields[0], "t")? as u64,
            stream_id: parse(fields[1], "stream_id")? as u32,
            delivered_mbps: parse(fields[2], "delivered_mbps")?,
            latency_ms: parse(fields[3], "latency_ms")?,
            loss_rate: parse(fields[4], "loss_rate")?,
            qos: parse(fields[5], "qos")?,
            utility: parse(fields[6], "utility")?,
            assigned_paths: fields[7]
                .split('|')
                .filter(|s| !s.is_empty())
                .filter_map(|s| s.parse().ok())
                .collect(),
        });
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "run".into());
    let label = stem
        .strip_prefix("metrics_")
        .map(|s| s.to_string())
        .unwrap_or_else(|| stem.strip_prefix("metrics").unwrap_or(&stem).to_string());
    let label = if label.is_empty() { "run".to_string() } else { label };
    Ok(ParsedMetrics { label, rows })
}

/// Read every `metrics*.csv` under `in_dir` and emit plot-ready series:
/// throughput over time, latency distribution, loss over time (all in
/// `series,t,value` long format), and a throughput-vs-latency scatter
/// (`series,throughput_mbps,latency_ms`).
pub fn export_plots(in_dir: &Path, out_dir: &Path) -> Result<(), ExportError> {
    let mut paths: Vec<_> = fs::read_dir(in_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .map(|n| {
                    let n = n.to_string_lossy();
                    n.starts_with("metrics") && n.ends_with(".csv")
                })
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(ExportError::NoInputs(in_dir.display().to_string()));
    }
    let inputs: Vec<ParsedMetrics> = paths.iter().map(|p| read_metrics_file(p)).collect::<Result<_, _>>()?;

    fs::create_dir_all(out_dir)?;
    let mut throughput = String::from("series,t,value\n");
    let mut loss = String::from("series,t,value\n");
    let mut latency_dist = String::from("series,t,value\n");
    let mut scatter = String::from("series,throughput_mbps,latency_ms\n");
    for input in &inputs {
        let mut by_t: std::collections::BTreeMap<u64, (f64, f64, u64)> = std::collections::BTreeMap::new();
        for r in &input.rows {
            let cell = by_t.entry(r.t).or_insert((0.0, 0.0, 0));
            cell.0 += r.delivered_mbps;
            cell.1 += r.loss_rate;
            cell.2 += 1;
        }
        for (t, (delivered, loss_sum, n)) in &by_t {
            let _ = writeln!(throughput, "{},{t},{}", input.label, format_real(*delivered));
            let _ = writeln!(loss, "{},{t},{}", input.label, format_real(loss_sum / *n as f64));
        }
        let mut latencies: Vec<f64> = input.rows.iter().map(|r| r.latency_ms).collect();
        latencies.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (rank, l) in latencies.iter().enumerate() {
            let _ = writeln!(latency_dist, "{},{rank},{}", input.label, format_real(*l));
        }
        for r in &input.rows {
            let _ = writeln!(
                scatter,
                "{},{},{}",
                input.label,
                format_real(r.delivered_mbps),
                format_real(r.latency_ms)
            );
        }
    }
    for (name, body) in [
        ("throughput_over_time.csv", throughput),
        ("loss_over_time.csv", loss),
        ("latency_distribution.csv", latency_dist),
        ("throughput_vs_latency.csv", scatter),
    ] {
        let mut content = version_comment();
        content.push_str(&body);
        fs::write(out_dir.join(name), content)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_formatting_is_g_style() {
        assert_eq!(format_real(0.0), "0");
        assert_eq!(format_real(50.0), "50");
        assert_eq!(format_real(10.5), "10.5");
        assert_eq!(format_real(51.030_927_835_051_54), "51.0309");
        assert_eq!(format_real(0.0001), "0.0001");
        assert_eq!(format_real(123456.0), "123456");
        assert_eq!(format_real(-2.5), "-2.5");
        assert_eq!(format_real(0.999999949), "1");
    }

    fn record(t: u64) -> MetricsRecord {
        MetricsRecord {
            t,
            stream_id: 0,
            delivered_mbps: 9.5,
            latency_ms: 20.25,
            loss_rate: 0.01,
            qos: 0.9,
            utility: 0.55,
            assigned_paths: vec![0, 2],
        }
    }

    #[test]
    fn metrics_csv_shape() {
        let mut buf = Vec::new();
        write_metrics_csv(&[record(1)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3); // version comment, header, one row
        assert!(lines[0].starts_with("# acmptc "));
        assert_eq!(lines[1], METRICS_HEADER);
        assert_eq!(lines[2], "1,0,9.5,20.25,0.01,0.9,0.55,0|2");
    }

    #[test]
    fn export_is_byte_deterministic() {
        let records = vec![record(1), record(2)];
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_metrics_csv(&records, &mut a).unwrap();
        write_metrics_csv(&records, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_contains_required_keys() {
        let summary = crate::sim::summarize(&[record(1)]).unwrap();
        let mut buf = Vec::new();
        write_summary(&summary, &ViolationCounts::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for key in [
            "mean_throughput_mbps",
            "p95_latency_ms",
            "mean_loss",
            "mean_qos",
            "mean_utility",
            "cumulative_throughput",
            "violations",
        ] {
            assert!(text.contains(key), "missing {key} in {text}");
        }
    }

    proptest::proptest! {
        #[test]
        fn formatted_reals_reparse_to_six_digits(
            mantissa in -1.0f64..1.0,
            exponent in -6i32..7,
        ) {
            let value = mantissa * 10f64.powi(exponent);
            let text = format_real(value);
            let reparsed: f64 = text.parse().unwrap();
            // six significant digits: relative error at most 5e-6
            let tolerance = 5e-6 * value.abs().max(1e-300);
            proptest::prop_assert!(
                (reparsed - value).abs() <= tolerance,
                "{value} -> `{text}` -> {reparsed}"
            );
        }
    }

    #[test]
    fn plot_export_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let in_dir = dir.path().join("in");
        std::fs::create_dir_all(&in_dir).unwrap();
        let file = std::fs::File::create(in_dir.join("metrics.csv")).unwrap();
        write_metrics_csv(&[record(1), record(2)], io::BufWriter::new(file)).unwrap();
        let out_dir = dir.path().join("out");
        export_plots(&in_dir, &out_dir).unwrap();
        for name in [
            "throughput_over_time.csv",
            "loss_over_time.csv",
            "latency_distribution.csv",
            "throughput_vs_latency.csv",
        ] {
            let content = std::fs::read_to_string(out_dir.join(name)).unwrap();
            assert!(content.lines().count() >= 3, "{name} too short:\n{content}");
        }
        assert!(matches!(
            export_plots(&dir.path().join("missing"), &out_dir),
            Err(ExportError::Io(_)) | Err(ExportError::NoInputs(_))
        ));
    }
}
