use std::io::Write;

use serde::Serialize;

use super::engine::{MonteCarloSummary, PowerPoint};
use super::experiments::{ConsistencyPoint, DecompositionPoint, MembershipSummary};
use crate::error::Result;

/// Version tag written on the first line of every CSV and in every JSON
/// document.
pub const SCHEMA: &str = "v1";

/// A record with a fixed column layout.
pub trait CsvRow {
    fn header() -> &'static [&'static str];
    fn values(&self) -> Vec<String>;
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `# schema=v1`, the header and one line per row, each row closed by
/// the config hash.
pub fn write_csv<R: CsvRow>(out: impl Write, rows: &[R], config_hash: &str) -> Result<()> {
    let mut out = out;
    writeln!(out, "# schema={SCHEMA}").map_err(|e| crate::Error::io("<output>", e))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = R::header().to_vec();
    header.push("config_hash");
    w.write_record(&header)?;
    for row in rows {
        let mut values = row.values();
        values.push(config_hash.to_string());
        w.write_record(&values)?;
    }
    w.flush().map_err(|e| crate::Error::io("<output>", e))?;
    Ok(())
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    schema: &'static str,
    config_hash: &'a str,
    rows: &'a [T],
}

/// Pretty JSON `{schema, config_hash, rows}` followed by a newline.
pub fn write_json<T: Serialize>(mut out: impl Write, rows: &[T], config_hash: &str) -> Result<()> {
    serde_json::to_writer_pretty(
        &mut out,
        &Document {
            schema: SCHEMA,
            config_hash,
            rows,
        },
    )?;
    writeln!(out).map_err(|e| crate::Error::io("<output>", e))
}

impl CsvRow for MonteCarloSummary {
    fn header() -> &'static [&'static str] {
        &[
            "experiment",
            "reps",
            "rejections",
            "rate",
            "std_err",
            "drift",
            "predicted_type2",
            "seed",
        ]
    }

    fn values(&self) -> Vec<String> {
        vec![
            self.experiment.clone(),
            self.reps.to_string(),
            self.rejections.to_string(),
            self.rate.to_string(),
            self.std_err.to_string(),
            opt(self.drift),
            opt(self.predicted_type2),
            self.seed.to_string(),
        ]
    }
}

impl CsvRow for PowerPoint {
    fn header() -> &'static [&'static str] {
        &[
            "scale",
            "n",
            "reps",
            "rejections",
            "power",
            "std_err",
            "drift",
            "predicted_type2",
            "gap",
            "seed",
        ]
    }

    fn values(&self) -> Vec<String> {
        vec![
            self.scale.to_string(),
            self.n.to_string(),
            self.reps.to_string(),
            self.rejections.to_string(),
            self.power.to_string(),
            self.std_err.to_string(),
            opt(self.drift),
            opt(self.predicted_type2),
            opt(self.gap),
            self.seed.to_string(),
        ]
    }
}

impl CsvRow for ConsistencyPoint {
    fn header() -> &'static [&'static str] {
        &[
            "c",
            "m",
            "n",
            "tuning",
            "norm",
            "reps",
            "rejections",
            "power",
            "std_err",
            "drift",
            "seed",
        ]
    }

    fn values(&self) -> Vec<String> {
        vec![
            self.c.to_string(),
            self.m.to_string(),
            self.n.to_string(),
            self.tuning.to_string(),
            self.norm.to_string(),
            self.reps.to_string(),
            self.rejections.to_string(),
            self.power.to_string(),
            self.std_err.to_string(),
            opt(self.drift),
            self.seed.to_string(),
        ]
    }
}

impl CsvRow for DecompositionPoint {
    fn header() -> &'static [&'static str] {
        &[
            "gamma",
            "frozen_head",
            "residual_norm_sq",
            "reps",
            "power_full",
            "power_projected",
            "power_residual",
            "gap",
            "gap_std_err",
            "residual_std_err",
            "seed",
        ]
    }

    fn values(&self) -> Vec<String> {
        vec![
            self.gamma.to_string(),
            self.frozen_head.to_string(),
            self.residual_norm_sq.to_string(),
            self.reps.to_string(),
            self.power_full.to_string(),
            self.power_projected.to_string(),
            self.power_residual.to_string(),
            self.gap.to_string(),
            self.gap_std_err.to_string(),
            self.residual_std_err.to_string(),
            self.seed.to_string(),
        ]
    }
}

impl CsvRow for MembershipSummary {
    fn header() -> &'static [&'static str] {
        &[
            "draws",
            "inside",
            "rate",
            "std_err",
            "norm_ok",
            "seminorm_ok",
            "k_n",
            "seed",
        ]
    }

    fn values(&self) -> Vec<String> {
        vec![
            self.draws.to_string(),
            self.inside.to_string(),
            self.rate.to_string(),
            self.std_err.to_string(),
            self.norm_ok.to_string(),
            self.seminorm_ok.to_string(),
            self.k_n.to_string(),
            self.seed.to_string(),
        ]
    }
}
