//! Output directory helpers and the metric log.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dpgds::data::MatrixFormat;
use serde_json::json;

use crate::error::CliError;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

pub fn parse_format(s: &str) -> Result<MatrixFormat, CliError> {
    s.parse().map_err(|e: dpgds::Error| CliError::Config(e.to_string()))
}

pub fn extension(format: MatrixFormat) -> &'static str {
    match format {
        MatrixFormat::DenseCsv => "csv",
        MatrixFormat::SparseTriplet => "triplets",
    }
}

/// Line-delimited `{"iteration", "metric", "value"}` records. Wall-clock
/// timings go to a separate file so that metric logs stay reproducible.
pub struct MetricLog {
    metrics: BufWriter<File>,
    timings: BufWriter<File>,
}

impl MetricLog {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        let open = |p: PathBuf| {
            File::create(&p)
                .map(BufWriter::new)
                .map_err(|e| CliError::Data(format!("cannot create {}: {e}", p.display())))
        };
        Ok(Self {
            metrics: open(dir.join("metrics.jsonl"))?,
            timings: open(dir.join("timings.jsonl"))?,
        })
    }

    pub fn record(&mut self, iteration: u64, metric: &str, value: f64) -> Result<(), CliError> {
        let rec = json!({ "iteration": iteration, "metric": metric, "value": value });
        writeln!(self.metrics, "{rec}")?;
        Ok(())
    }

    pub fn time(&mut self, iteration: u64, seconds: f64) -> Result<(), CliError> {
        let rec = json!({ "iteration": iteration, "seconds": seconds });
        writeln!(self.timings, "{rec}")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), CliError> {
        self.metrics.flush()?;
        self.timings.flush()?;
        Ok(())
    }
}
