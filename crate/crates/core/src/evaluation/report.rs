use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{GsecError, Result};
use crate::evaluation::{AblationRow, BVReport};

fn csv_error(path: &Path, e: csv::Error) -> GsecError {
    GsecError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| GsecError::io(path, e))?);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| GsecError::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        out.write_all(b"\n").map_err(|e| GsecError::io(path, e))?;
    }
    out.flush().map_err(|e| GsecError::io(path, e))
}

/// Columns: configuration, bias, variance, soft_variance, run_count, mean_acc.
pub fn write_bv_csv(report: &BVReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["configuration", "bias", "variance", "soft_variance", "run_count", "mean_acc"])
        .map_err(|e| csv_error(path, e))?;
    for e in &report.entries {
        let mean_acc = e.run_accuracies.iter().sum::<f64>() / e.run_accuracies.len().max(1) as f64;
        w.write_record([
            e.configuration.to_string(),
            e.bias.to_string(),
            e.variance.to_string(),
            e.soft_variance.map(|v| v.to_string()).unwrap_or_default(),
            e.run_count.to_string(),
            mean_acc.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| GsecError::io(path, e))
}

/// Columns: configuration, seed, acc, nmi, ari.
pub fn write_ablation_csv(rows: &[AblationRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["configuration", "seed", "acc", "nmi", "ari"])
        .map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            r.configuration.to_string(),
            r.seed.to_string(),
            r.acc.to_string(),
            r.nmi.to_string(),
            r.ari.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| GsecError::io(path, e))
}
