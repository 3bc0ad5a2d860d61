//! CSV output.

use std::io::Write;
use std::path::Path;

use crate::error::{DsaError, Result};

use super::metrics::{IterationMetrics, RateSummary};

pub const METRICS_HEADER: [&str; 8] = [
    "iteration",
    "su",
    "epsilon",
    "success_rate",
    "pu_collision_rate",
    "su_collision_rate",
    "idle_rate",
    "mean_reward",
];

pub const SUMMARY_HEADER: [&str; 13] = [
    "iteration",
    "su",
    "n_seeds",
    "success_mean",
    "success_std",
    "pu_collision_mean",
    "pu_collision_std",
    "su_collision_mean",
    "su_collision_std",
    "idle_mean",
    "idle_std",
    "mean_reward_mean",
    "mean_reward_std",
];

fn csv_err(e: csv::Error) -> DsaError {
    DsaError::Parse {
        what: "csv output".into(),
        message: e.to_string(),
    }
}

/// Streams per-iteration rows: one per SU, then an `all` row with the mean.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(METRICS_HEADER).map_err(csv_err)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, m: &IterationMetrics) -> Result<()> {
        let row = |su: String, eps: f64, r: &RateSummary| {
            vec![
                m.iteration.to_string(),
                su,
                eps.to_string(),
                r.success.to_string(),
                r.pu_collision.to_string(),
                r.su_collision.to_string(),
                r.idle.to_string(),
                r.mean_reward.to_string(),
            ]
        };
        for (l, r) in m.per_su.iter().enumerate() {
            let eps = m.epsilon.get(l).copied().unwrap_or(0.0);
            self.inner.write_record(row(l.to_string(), eps, r)).map_err(csv_err)?;
        }
        let mean_eps = if m.epsilon.is_empty() {
            0.0
        } else {
            m.epsilon.iter().sum::<f64>() / m.epsilon.len() as f64
        };
        self.inner
            .write_record(row("all".into(), mean_eps, &m.aggregate))
            .map_err(csv_err)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| DsaError::Parse {
            what: "csv output".into(),
            message: e.to_string(),
        })
    }
}

pub fn write_metrics_csv(path: &Path, metrics: &[IterationMetrics]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| DsaError::io(path, e))?;
    let mut w = MetricsWriter::new(file)?;
    for m in metrics {
        w.write(m)?;
    }
    w.flush()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation across replicates, per iteration and SU.
pub fn write_summary_csv<W: Write>(w: W, runs: &[&[IterationMetrics]]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    let Some(first) = runs.first() else {
        return out.flush().map_err(|e| DsaError::io("summary", e));
    };
    if runs.iter().any(|r| r.len() != first.len()) {
        return Err(DsaError::Contract("replicates differ in length".into()));
    }
    for (i, m0) in first.iter().enumerate() {
        let n_sus = m0.per_su.len();
        for su in (0..n_sus).map(Some).chain(std::iter::once(None)) {
            let pick = |m: &IterationMetrics| match su {
                Some(l) => m.per_su[l],
                None => m.aggregate,
            };
            let col = |f: fn(&RateSummary) -> f64| -> Vec<f64> { runs.iter().map(|r| f(&pick(&r[i]))).collect() };
            let mut rec = vec![
                m0.iteration.to_string(),
                su.map_or("all".into(), |l| l.to_string()),
                runs.len().to_string(),
            ];
            for f in [
                (|r: &RateSummary| r.success) as fn(&RateSummary) -> f64,
                |r| r.pu_collision,
                |r| r.su_collision,
                |r| r.idle,
                |r| r.mean_reward,
            ] {
                let (m, s) = mean_std(&col(f));
                rec.push(m.to_string());
                rec.push(s.to_string());
            }
            out.write_record(rec).map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| DsaError::io("summary", e))
}
