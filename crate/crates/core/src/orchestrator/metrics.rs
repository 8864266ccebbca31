use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CSV_HEADER: &str =
    "round,selected,tier_assignment,tau,delta_tc,total_time,r1,r2,acc_lite,acc_small,acc_large,weights";

/// Everything recorded about one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// 1-based, counted across episodes.
    pub round: usize,
    pub episode: usize,
    pub selected: Vec<usize>,
    pub tiers: Vec<usize>,
    pub tau: Vec<usize>,
    pub assess_times: Vec<f64>,
    pub local_times: Vec<f64>,
    /// Assessment plus local training per client.
    pub compute_times: Vec<f64>,
    /// Slowest minus fastest compute time.
    pub delta_tc: f64,
    /// Slowest minus fastest local training time.
    pub delta_tl: f64,
    /// Slowest compute time plus communication.
    pub total_time: f64,
    pub r1: f64,
    pub r2: f64,
    pub acc_lite: f64,
    /// Global model accuracy per tier, tier 1 first.
    pub acc_tiers: Vec<f64>,
    /// LiteModel aggregation weights, in selection order.
    pub weights: Vec<f64>,
}

/// The columns persisted to `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    pub selected: Vec<usize>,
    pub tiers: Vec<usize>,
    pub tau: Vec<usize>,
    pub delta_tc: f64,
    pub total_time: f64,
    pub r1: f64,
    pub r2: f64,
    pub acc_lite: f64,
    pub acc_small: f64,
    pub acc_large: f64,
    pub weights: Vec<f64>,
}

impl From<&RoundMetrics> for MetricsRow {
    fn from(m: &RoundMetrics) -> Self {
        Self {
            round: m.round,
            selected: m.selected.clone(),
            tiers: m.tiers.clone(),
            tau: m.tau.clone(),
            delta_tc: m.delta_tc,
            total_time: m.total_time,
            r1: m.r1,
            r2: m.r2,
            acc_lite: m.acc_lite,
            acc_small: m.acc_tiers.first().copied().unwrap_or(f64::NAN),
            acc_large: m.acc_tiers.last().copied().unwrap_or(f64::NAN),
            weights: m.weights.clone(),
        }
    }
}

/// Six significant digits, `%g` style.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(";")
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        [
            self.round.to_string(),
            join(&self.selected, |v| v.to_string()),
            join(&self.tiers, |v| v.to_string()),
            join(&self.tau, |v| v.to_string()),
            format_sig(self.delta_tc),
            format_sig(self.total_time),
            format_sig(self.r1),
            format_sig(self.r2),
            format_sig(self.acc_lite),
            format_sig(self.acc_small),
            format_sig(self.acc_large),
            join(&self.weights, |v| format_sig(*v)),
        ]
        .join(",")
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != 12 {
            return Err(Error::Parse(format!("expected 12 columns, found {}", cells.len())));
        }
        fn num<T: std::str::FromStr>(cell: &str, column: &str) -> Result<T> {
            cell.parse()
                .map_err(|_| Error::Parse(format!("bad {column} value {cell:?}")))
        }
        fn list<T: std::str::FromStr>(cell: &str, column: &str) -> Result<Vec<T>> {
            if cell.is_empty() {
                return Ok(Vec::new());
            }
            cell.split(';').map(|c| num(c, column)).collect()
        }
        Ok(Self {
            round: num(cells[0], "round")?,
            selected: list(cells[1], "selected")?,
            tiers: list(cells[2], "tier_assignment")?,
            tau: list(cells[3], "tau")?,
            delta_tc: num(cells[4], "delta_tc")?,
            total_time: num(cells[5], "total_time")?,
            r1: num(cells[6], "r1")?,
            r2: num(cells[7], "r2")?,
            acc_lite: num(cells[8], "acc_lite")?,
            acc_small: num(cells[9], "acc_small")?,
            acc_large: num(cells[10], "acc_large")?,
            weights: list(cells[11], "weights")?,
        })
    }
}

/// Appends rows to a metrics CSV, writing the header first.
pub struct MetricsWriter<W: Write> {
    out: W,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{CSV_HEADER}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, metrics: &RoundMetrics) -> Result<()> {
        writeln!(self.out, "{}", MetricsRow::from(metrics).to_csv_line())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn write_metrics_csv<W: Write>(out: W, metrics: &[RoundMetrics]) -> Result<()> {
    let mut w = MetricsWriter::new(out)?;
    for m in metrics {
        w.write(m)?;
    }
    w.flush()
}

pub fn read_metrics_csv<R: BufRead>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != CSV_HEADER {
        return Err(Error::Parse("missing or unexpected metrics header".into()));
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            rows.push(MetricsRow::parse_csv_line(&line)?);
        }
    }
    Ok(rows)
}

/// A named series of rows, e.g. one run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub name: String,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub mean_delta_tc: f64,
    pub median_delta_tc: f64,
    pub total_time: f64,
    pub final_acc_lite: f64,
    pub final_acc_small: f64,
    pub final_acc_large: f64,
    /// Reduction of mean straggling latency versus the first run, in percent.
    pub straggling_latency_reduction_pct: f64,
    pub total_time_reduction_pct: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn reduction_pct(baseline: f64, value: f64) -> f64 {
    if baseline == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            f64::NAN
        }
    } else {
        100.0 * (baseline - value) / baseline
    }
}

/// Per-run latency, time and accuracy summary, with reductions relative to
/// the first run.
pub fn compare_runs(runs: &[RunSeries]) -> Result<Vec<RunSummary>> {
    if runs.len() < 2 {
        return Err(Error::Contract("comparison needs at least two runs".into()));
    }
    let rounds = runs[0].rows.len();
    if rounds == 0 {
        return Err(Error::Contract(format!("run {} has no rounds", runs[0].name)));
    }
    if let Some(bad) = runs.iter().find(|r| r.rows.len() != rounds) {
        return Err(Error::Contract(format!(
            "run {} has {} rounds, expected {rounds}",
            bad.name,
            bad.rows.len()
        )));
    }
    let mut out: Vec<RunSummary> = runs
        .iter()
        .map(|run| {
            let deltas: Vec<f64> = run.rows.iter().map(|r| r.delta_tc).collect();
            let last = run.rows.last().expect("non-empty");
            RunSummary {
                name: run.name.clone(),
                mean_delta_tc: mean(&deltas),
                median_delta_tc: median(&deltas),
                total_time: run.rows.iter().map(|r| r.total_time).sum(),
                final_acc_lite: last.acc_lite,
                final_acc_small: last.acc_small,
                final_acc_large: last.acc_large,
                straggling_latency_reduction_pct: 0.0,
                total_time_reduction_pct: 0.0,
            }
        })
        .collect();
    let (base_delta, base_total) = (out[0].mean_delta_tc, out[0].total_time);
    for s in &mut out {
        s.straggling_latency_reduction_pct = reduction_pct(base_delta, s.mean_delta_tc);
        s.total_time_reduction_pct = reduction_pct(base_total, s.total_time);
    }
    Ok(out)
}

/// A summary metric's name and accessor.
pub type SummaryField = (&'static str, fn(&RunSummary) -> f64);

/// Metric names in table order, paired with their accessor.
pub fn summary_fields() -> Vec<SummaryField> {
    vec![
        ("mean_delta_tc", |s| s.mean_delta_tc),
        ("median_delta_tc", |s| s.median_delta_tc),
        ("total_time", |s| s.total_time),
        ("final_acc_lite", |s| s.final_acc_lite),
        ("final_acc_small", |s| s.final_acc_small),
        ("final_acc_large", |s| s.final_acc_large),
        ("straggling_latency_reduction_pct", |s| {
            s.straggling_latency_reduction_pct
        }),
        ("total_time_reduction_pct", |s| s.total_time_reduction_pct),
    ]
}

/// One row per metric, one column per run.
pub fn summary_csv(summaries: &[RunSummary]) -> String {
    let mut out = String::from("metric");
    for s in summaries {
        out.push(',');
        out.push_str(&s.name);
    }
    out.push('\n');
    for (name, get) in summary_fields() {
        out.push_str(name);
        for s in summaries {
            out.push(',');
            out.push_str(&format_sig(get(s)));
        }
        out.push('\n');
    }
    out
}

/// The same table with padded columns for terminals.
pub fn summary_text(summaries: &[RunSummary]) -> String {
    let mut table: Vec<Vec<String>> = vec![std::iter::once("metric".to_string())
        .chain(summaries.iter().map(|s| s.name.clone()))
        .collect()];
    for (name, get) in summary_fields() {
        table.push(
            std::iter::once(name.to_string())
                .chain(summaries.iter().map(|s| format_sig(get(s))))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == 0 {
                    format!("{cell:<w$}", w = widths[c])
                } else {
                    format!("{cell:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(round: usize, delta: f64, total: f64) -> MetricsRow {
        MetricsRow {
            round,
            selected: vec![3, 1],
            tiers: vec![1, 2],
            tau: vec![7, 5],
            delta_tc: delta,
            total_time: total,
            r1: 8.5,
            r2: -delta,
            acc_lite: 0.5,
            acc_small: 0.75,
            acc_large: 0.875,
            weights: vec![0.25, 0.75],
        }
    }

    fn series(name: &str, deltas: &[f64]) -> RunSeries {
        RunSeries {
            name: name.into(),
            rows: deltas
                .iter()
                .enumerate()
                .map(|(i, &d)| row(i + 1, d, 2.0 * d))
                .collect(),
        }
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(0.5), "0.5");
        assert_eq!(format_sig(123.456789), "123.457");
        assert_eq!(format_sig(-4.0), "-4");
        assert_eq!(format_sig(1234567.0), "1.23457e+06");
        assert_eq!(format_sig(0.000012345678), "1.23457e-05");
        assert_eq!(format_sig(0.00012345678), "0.000123457");
        assert_eq!(format_sig(9999996.0), "1e+07");
        assert_eq!(format_sig(2.0 / 3.0), "0.666667");
    }

    #[test]
    fn csv_line_round_trips() {
        let r = row(4, 12.5, 30.0);
        let line = r.to_csv_line();
        assert_eq!(line, "4,3;1,1;2,7;5,12.5,30,8.5,-12.5,0.5,0.75,0.875,0.25;0.75");
        assert_eq!(MetricsRow::parse_csv_line(&line).unwrap(), r);
        assert!(MetricsRow::parse_csv_line("1,2,3").is_err());
    }

    #[test]
    fn reader_requires_header() {
        let text = format!("{CSV_HEADER}\n{}\n", row(1, 2.0, 3.0).to_csv_line());
        assert_eq!(read_metrics_csv(text.as_bytes()).unwrap().len(), 1);
        assert!(read_metrics_csv("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn identical_runs_reduce_nothing() {
        let s = compare_runs(&[series("a", &[1.0, 3.0]), series("b", &[1.0, 3.0])]).unwrap();
        assert_eq!(s[1].straggling_latency_reduction_pct, 0.0);
        assert_eq!(s[1].total_time_reduction_pct, 0.0);
    }

    #[test]
    fn half_the_latency_is_fifty_percent() {
        let s = compare_runs(&[series("base", &[4.0, 8.0, 6.0]), series("half", &[2.0, 4.0, 3.0])]).unwrap();
        assert!((s[1].straggling_latency_reduction_pct - 50.0).abs() < 1e-12);
        assert!((s[1].total_time_reduction_pct - 50.0).abs() < 1e-12);
        assert_eq!(s[0].median_delta_tc, 6.0);
        assert_eq!(s[1].mean_delta_tc, 3.0);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(compare_runs(&[series("a", &[1.0]), series("b", &[1.0, 2.0])]).is_err());
        assert!(compare_runs(&[series("a", &[1.0])]).is_err());
    }

    #[test]
    fn tables_list_every_metric() {
        let s = compare_runs(&[series("fedavg", &[4.0]), series("hapfl", &[3.0])]).unwrap();
        let csv = summary_csv(&s);
        assert!(csv.starts_with("metric,fedavg,hapfl\n"));
        assert!(csv.contains("straggling_latency_reduction_pct,0,25\n"));
        let text = summary_text(&s);
        assert_eq!(text.lines().count(), 1 + summary_fields().len());
        assert!(text.lines().all(|l| l.starts_with(|c: char| c.is_ascii_lowercase())));
    }

    proptest! {
        #[test]
        fn formatted_values_stay_within_six_digits(x in -1e9f64..1e9) {
            let back: f64 = format_sig(x).parse().unwrap();
            prop_assert!((back - x).abs() <= 5e-6 * x.abs() + 1e-300);
        }
    }
}
