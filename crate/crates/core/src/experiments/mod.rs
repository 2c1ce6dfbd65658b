//! Experiment drivers behind the `nla` binary.
//!
//! Every experiment produces a list of [`SummaryRow`]s. A row carries the measured
//! value and the bounds it is held to, so the verdict can be recomputed from
//! `summary.csv` alone. Rows without bounds are reported, not judged.

mod config;
mod drivers;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

pub use config::{ExperimentConfig, ExperimentKind, RawConfig, KNOWN_KEYS};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Report,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Report => "report",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub check: String,
    pub parameter: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub status: Status,
}

impl SummaryRow {
    /// A judged row: passes iff `lower <= value <= upper` (missing bounds are open).
    pub fn bounded(
        check: impl Into<String>,
        parameter: impl Into<String>,
        value: f64,
        lower: Option<f64>,
        upper: Option<f64>,
    ) -> Self {
        let ok = !value.is_nan()
            && lower.is_none_or(|l| value >= l)
            && upper.is_none_or(|u| value <= u);
        SummaryRow {
            check: check.into(),
            parameter: parameter.into(),
            value,
            lower,
            upper,
            status: if ok { Status::Pass } else { Status::Fail },
        }
    }

    pub fn at_most(check: impl Into<String>, parameter: impl Into<String>, value: f64, upper: f64) -> Self {
        SummaryRow::bounded(check, parameter, value, None, Some(upper))
    }

    pub fn at_least(check: impl Into<String>, parameter: impl Into<String>, value: f64, lower: f64) -> Self {
        SummaryRow::bounded(check, parameter, value, Some(lower), None)
    }

    /// An informational row.
    pub fn report(check: impl Into<String>, parameter: impl Into<String>, value: f64) -> Self {
        SummaryRow {
            check: check.into(),
            parameter: parameter.into(),
            value,
            lower: None,
            upper: None,
            status: Status::Report,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

/// A file produced by a driver, written by [`run`] into the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub experiment: ExperimentKind,
    pub rows: Vec<SummaryRow>,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(SummaryRow::passed)
    }

    /// First row with the given check name and parameter.
    pub fn row(&self, check: &str, parameter: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.check == check && r.parameter == parameter)
    }

    /// All rows with the given check name.
    pub fn rows_for<'a>(&'a self, check: &'a str) -> impl Iterator<Item = &'a SummaryRow> + 'a {
        self.rows.iter().filter(move |r| r.check == check)
    }

    pub fn verdict_line(&self) -> String {
        let judged = self.rows.iter().filter(|r| r.status != Status::Report).count();
        let failed = self.rows.iter().filter(|r| r.status == Status::Fail).count();
        format!(
            "{} {}: {} of {} bounds hold",
            if failed == 0 { "PASS" } else { "FAIL" },
            self.experiment,
            judged - failed,
            judged
        )
    }

    pub fn write_summary<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "check,parameter,value,lower,upper,status")?;
        let bound = |b: Option<f64>| b.map(|v| format!("{v:.10e}")).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.10e},{},{},{}",
                r.check,
                r.parameter,
                r.value,
                bound(r.lower),
                bound(r.upper),
                r.status
            )?;
        }
        Ok(())
    }

    /// Writes `summary.csv`, `verdict.txt` and every artifact into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)
            .map_err(|e| LabError::config("out_dir", format!("{}: {e}", dir.display())))?;
        let mut summary = Vec::new();
        self.write_summary(&mut summary)?;
        fs::write(dir.join("summary.csv"), summary)?;
        fs::write(dir.join("verdict.txt"), format!("{}\n", self.verdict_line()))?;
        for a in &self.artifacts {
            fs::write(dir.join(&a.name), &a.contents)?;
        }
        Ok(())
    }
}

/// Runs the configured experiment without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (rows, artifacts) = match cfg.experiment {
        ExperimentKind::Decay => drivers::decay(cfg)?,
        ExperimentKind::Asymptotics => drivers::asymptotics(cfg)?,
        ExperimentKind::ScalingIdentity => drivers::scaling_identity(cfg)?,
        ExperimentKind::KernelLimits => drivers::kernel_limits(cfg)?,
        ExperimentKind::EnergyBounds => drivers::energy_bounds(cfg)?,
        ExperimentKind::TailBounds => drivers::tail_bounds(cfg)?,
        ExperimentKind::CompactnessFunctionals => drivers::compactness_functionals(cfg)?,
        ExperimentKind::ProfileResiduals => drivers::profile_residuals(cfg)?,
    };
    Ok(Outcome {
        experiment: cfg.experiment,
        rows,
        artifacts,
    })
}

/// Runs the experiment and writes its outputs into `cfg.out_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let outcome = execute(cfg)?;
    outcome.write_to(&cfg.out_dir)?;
    Ok(outcome)
}

/// Process exit code: 0 pass, 1 bound violated, 2 configuration error, 3 runtime failure.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) if o.passed() => 0,
        Ok(_) => 1,
        Err(LabError::Config { .. } | LabError::Parse(_)) => 2,
        Err(_) => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_judge_bounds() {
        assert!(SummaryRow::at_most("a", "", 1.0, 1.0).passed());
        assert!(!SummaryRow::at_most("a", "", 1.1, 1.0).passed());
        assert!(!SummaryRow::at_least("a", "", f64::NAN, 0.0).passed());
        assert!(SummaryRow::report("a", "", f64::NAN).passed());
        assert!(SummaryRow::bounded("a", "", 0.5, Some(0.0), Some(1.0)).passed());
    }

    #[test]
    fn summary_and_verdict() {
        let o = Outcome {
            experiment: ExperimentKind::Decay,
            rows: vec![
                SummaryRow::at_most("mass_drift", "", 1e-12, 1e-10),
                SummaryRow::report("linf_slope", "p=inf", -0.5),
            ],
            artifacts: vec![],
        };
        assert!(o.passed());
        assert_eq!(o.verdict_line(), "PASS decay: 1 of 1 bounds hold");
        let mut out = Vec::new();
        o.write_summary(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("check,parameter,value,lower,upper,status\n"));
        assert!(text.contains(",,1.0000000000e-10,pass"));
        assert_eq!(exit_code(&Ok(o)), 0);
        assert_eq!(exit_code(&Err(LabError::config("q", "bad"))), 2);
        assert_eq!(
            exit_code(&Err(LabError::StabilityViolation { time: 0.0, before: 1.0, after: 2.0 })),
            3
        );
    }
}
