//! Training metrics records and their serialization.
//!
//! Records are written as CSV or JSON Lines with every float rendered at 17
//! significant digits (`{:.16e}`), enough for bit-exact reparsing, so two
//! runs of the same seeded configuration produce byte-identical files.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// One logged snapshot of a training run at a probe step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Training step the snapshot was taken at (parameters as they enter
    /// this step).
    pub step: usize,
    /// Objective value: the exact expected objective for the toy problem,
    /// or the probe-batch ELBO for the autoencoder.
    pub objective: f64,
    /// Total variance of the gradient estimator measured by the probe.
    pub grad_variance: f64,
    /// Control-variate strength in use at this step.
    pub alpha: f64,
    /// Mean of sigmoid(eta_i) over coordinates (and probe examples).
    pub mean_sigma_eta: f64,
    /// Seconds elapsed since training started.
    pub wall_secs: f64,
}

/// Output format for [`write_metrics`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsFormat {
    Csv,
    Jsonl,
}

impl MetricsFormat {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "csv" => Some(MetricsFormat::Csv),
            "jsonl" => Some(MetricsFormat::Jsonl),
            _ => None,
        }
    }
}

pub const CSV_HEADER: &str = "step,objective,grad_variance,alpha,mean_sigma_eta,wall_secs";

fn push_float(out: &mut String, value: f64) {
    use std::fmt::Write as _;
    write!(out, "{value:.16e}").unwrap();
}

/// Render records to a single string in the given format.
pub fn render_metrics(records: &[StepRecord], format: MetricsFormat) -> String {
    let mut out = String::new();
    match format {
        MetricsFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for r in records {
                out.push_str(&r.step.to_string());
                for value in [r.objective, r.grad_variance, r.alpha, r.mean_sigma_eta, r.wall_secs]
                {
                    out.push(',');
                    push_float(&mut out, value);
                }
                out.push('\n');
            }
        }
        MetricsFormat::Jsonl => {
            for r in records {
                out.push_str("{\"step\":");
                out.push_str(&r.step.to_string());
                for (key, value) in [
                    ("objective", r.objective),
                    ("grad_variance", r.grad_variance),
                    ("alpha", r.alpha),
                    ("mean_sigma_eta", r.mean_sigma_eta),
                    ("wall_secs", r.wall_secs),
                ] {
                    out.push_str(",\"");
                    out.push_str(key);
                    out.push_str("\":");
                    push_float(&mut out, value);
                }
                out.push_str("}\n");
            }
        }
    }
    out
}

/// Write records to `path` in the given format.
pub fn write_metrics(records: &[StepRecord], path: &Path, format: MetricsFormat) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(render_metrics(records, format).as_bytes())?;
    Ok(())
}
