use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Per-clip score in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub clip_id: String,
    pub metric: String,
    pub delay_s: f64,
    pub score: f64,
    pub n_peaks_ref: usize,
    pub n_peaks_rec: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub metric: String,
    pub delay: f64,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    /// Half-width of the normal-approximation 95% interval, `1.96 std / sqrt(n)`.
    pub ci95: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub rows: Vec<ScoreRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Mean, sample standard deviation and 95% CI half-width.
pub fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    (mean, std, 1.96 * std / (n as f64).sqrt())
}

impl SyncReport {
    /// Sorts rows by (metric, delay, clip) and aggregates each group.
    pub fn from_rows(mut rows: Vec<ScoreRow>) -> Self {
        rows.sort_by(|a, b| {
            a.metric
                .cmp(&b.metric)
                .then(a.delay_s.total_cmp(&b.delay_s))
                .then(a.clip_id.cmp(&b.clip_id))
        });
        let mut aggregates = Vec::new();
        let mut start = 0;
        while start < rows.len() {
            let end = rows[start..]
                .iter()
                .position(|r| r.metric != rows[start].metric || r.delay_s != rows[start].delay_s)
                .map_or(rows.len(), |p| start + p);
            let scores: Vec<f64> = rows[start..end].iter().map(|r| r.score).collect();
            let (mean, std, ci95) = summarize(&scores);
            aggregates.push(Aggregate {
                metric: rows[start].metric.clone(),
                delay: rows[start].delay_s,
                n: scores.len(),
                mean,
                std,
                ci95,
            });
            start = end;
        }
        SyncReport { rows, aggregates }
    }

    pub fn aggregate(&self, metric: &str, delay: f64) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.metric == metric && (a.delay - delay).abs() < 1e-9)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("clip_id,metric,delay_s,score_x100\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.3},{:.4}", r.clip_id, r.metric, r.delay_s, r.score * 100.0);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Aggregates as a JSON array of `{metric, delay, mean, ci95, std, n}`
    /// on the x100 scale.
    pub fn aggregates_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .aggregates
            .iter()
            .map(|a| {
                serde_json::json!({
                    "metric": a.metric,
                    "delay": round6(a.delay),
                    "mean": round6(a.mean * 100.0),
                    "ci95": round6(a.ci95 * 100.0),
                    "std": round6(a.std * 100.0),
                    "n": a.n,
                })
            })
            .collect();
        serde_json::Value::Array(rows)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.aggregates_json())? + "\n")?;
        Ok(())
    }
}

/// Rounds to 6 decimals so serialized floats are stable across platforms.
pub fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(clip: &str, metric: &str, delay: f64, score: f64) -> ScoreRow {
        ScoreRow {
            clip_id: clip.into(),
            metric: metric.into(),
            delay_s: delay,
            score,
            n_peaks_ref: 1,
            n_peaks_rec: 1,
        }
    }

    #[test]
    fn ci_is_196_std_over_sqrt_n() {
        let (mean, std, ci) = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mean, 2.5);
        assert!((std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((ci - 1.96 * std / 2.0).abs() < 1e-12);
    }

    #[test]
    fn grouping_is_order_independent() {
        let rows = vec![
            row("b", "cyclesync", 0.1, 0.5),
            row("a", "cyclesync", 0.0, 1.0),
            row("a", "cyclesync", 0.1, 0.2),
            row("b", "cyclesync", 0.0, 0.8),
        ];
        let mut rev = rows.clone();
        rev.reverse();
        let r1 = SyncReport::from_rows(rows);
        let r2 = SyncReport::from_rows(rev);
        assert_eq!(r1.to_csv(), r2.to_csv());
        assert_eq!(r1.aggregates.len(), 2);
        assert!((r1.aggregate("cyclesync", 0.0).unwrap().mean - 0.9).abs() < 1e-12);
        assert!(r1.to_csv().starts_with("clip_id,metric,delay_s,score_x100\na,cyclesync,0.000,100.0000\n"));
    }
}
