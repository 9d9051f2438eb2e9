//! Plot-ready serialization of results.
//!
//! Every JSON document carries a `schema_version` field so downstream plot
//! scripts can detect format changes. CSV output is deterministic: row
//! order follows the input order and floats are printed with `{}` (shortest
//! round-trip representation).

use serde::Serialize;
use std::fmt::Write as _;

use crate::calibration::{NullCalibration, WdPair};
use crate::error::Result;
use crate::model::{Dims, RatioSet, TestOutcome};
use crate::simulate::{histogram, NullRunResult, PowerTable};

pub const SCHEMA_VERSION: u32 = 1;

/// Calibration constants for one dimension triple, in serializable form.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub schema_version: u32,
    pub dims: Dims,
    pub ratios: RatioSet,
    pub wd: WdPair,
    pub calibrations: Vec<NullCalibration>,
}

impl CalibrationReport {
    pub fn new(
        dims: Dims,
        ratios: RatioSet,
        wd: WdPair,
        calibrations: Vec<NullCalibration>,
    ) -> Self {
        CalibrationReport {
            schema_version: SCHEMA_VERSION,
            dims,
            ratios,
            wd,
            calibrations,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self).map_err(std::io::Error::other)?)
    }

    /// Aligned text table of the constants.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "n = {}, p = {}, p1 = {}",
            self.dims.n, self.dims.p, self.dims.p1
        );
        let _ = writeln!(
            out,
            "gamma1 = {:.6}, gamma2 = {:.6}, h = {:.6}, c1 = {:.6}, c = {:.6}",
            self.ratios.gamma1, self.ratios.gamma2, self.ratios.h, self.ratios.c1, self.ratios.c
        );
        let _ = writeln!(out, "w = {:.10}, d = {:.10}", self.wd.w, self.wd.d);
        let _ = writeln!(
            out,
            "{:<10} {:>16} {:>16} {:>16}",
            "statistic", "mu", "sigma2", "s"
        );
        for cal in &self.calibrations {
            let _ = writeln!(
                out,
                "{:<10} {:>16.10} {:>16.10} {:>16.10}",
                cal.statistic_id.to_string(),
                cal.mu,
                cal.sigma2,
                cal.s
            );
        }
        out
    }
}

/// Wrapper adding the schema version to a JSON payload.
#[derive(Debug, Serialize)]
struct Versioned<T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    payload: T,
}

pub fn outcomes_to_json(outcomes: &[TestOutcome]) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a> {
        schema_version: u32,
        outcomes: &'a [TestOutcome],
    }
    Ok(serde_json::to_string_pretty(&Doc {
        schema_version: SCHEMA_VERSION,
        outcomes,
    })
    .map_err(std::io::Error::other)?)
}

pub fn outcomes_to_csv(outcomes: &[TestOutcome]) -> String {
    let mut out = String::from("statistic,raw,standardized,p_value,reject,alpha\n");
    for o in outcomes {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            o.statistic_id, o.raw, o.standardized, o.p_value, o.reject, o.alpha
        );
    }
    out
}

pub fn null_run_to_json(result: &NullRunResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        payload: result,
    })
    .map_err(std::io::Error::other)?)
}

/// Long-format CSV of a null run: one row per statistic.
pub fn null_run_to_csv(result: &NullRunResult) -> String {
    let mut out = String::from("statistic,level,se,mean,sd,ks_to_normal,failures\n");
    for s in &result.stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.statistic_id, s.level, s.se, s.mean, s.sd, s.ks_to_normal, result.failures
        );
    }
    out
}

/// Standardized-draw histograms as `(statistic, bin_center, count)` rows.
pub fn null_run_hist_csv(result: &NullRunResult, bins: usize) -> String {
    let mut out = String::from("statistic,bin_center,count\n");
    for s in &result.stats {
        for (center, count) in histogram(&s.draws, bins) {
            let _ = writeln!(out, "{},{},{}", s.statistic_id, center, count);
        }
    }
    out
}

pub fn power_table_to_json(table: &PowerTable) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        payload: table,
    })
    .map_err(std::io::Error::other)?)
}

/// Long-format CSV of a power run: `statistic,rho,power,se`.
pub fn power_table_to_csv(table: &PowerTable) -> String {
    let mut out = String::from("statistic,rho,power,se\n");
    for row in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.statistic_id, row.rho, row.power, row.se
        );
    }
    out
}

/// `(x, value)` pairs as CSV with custom column names.
pub fn xy_csv(header: (&str, &str), pairs: &[(f64, f64)]) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (x, y) in pairs {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}
