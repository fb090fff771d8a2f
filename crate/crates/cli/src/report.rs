//! JSON run reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use qttf::analysis::SkippedBlock;
use qttf::twoway::StabilityCurve;
use serde::Serialize;

use crate::config::Config;

/// Where a number comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    /// Closed-form physics.
    Analytic,
    MonteCarlo,
    /// Quoted from the published experiment.
    Published,
    /// Built-in default with no published counterpart.
    Assumed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Value {
    pub name: String,
    pub value: f64,
    pub unit: &'static str,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// Tolerance the simulation is expected to meet.
    Acceptance,
    /// Band around published measurements; informational.
    PublishedBand,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub measured: f64,
    pub lower: f64,
    pub upper: f64,
    pub unit: &'static str,
    pub passed: bool,
}

impl Check {
    pub fn within(
        name: &str,
        kind: CheckKind,
        measured: f64,
        lower: f64,
        upper: f64,
        unit: &'static str,
    ) -> Check {
        Check {
            name: name.into(),
            kind,
            measured,
            lower,
            upper,
            unit,
            passed: measured >= lower && measured <= upper,
        }
    }

    /// `measured` within `tolerance` (relative) of `target`.
    pub fn relative(
        name: &str,
        kind: CheckKind,
        measured: f64,
        target: f64,
        tolerance: f64,
        unit: &'static str,
    ) -> Check {
        let span = (target * tolerance).abs();
        Check::within(name, kind, measured, target - span, target + span, unit)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedCurve {
    /// Which series: `t0`, `t21` or `t43`.
    pub series: String,
    pub curve: StabilityCurve,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub tool_version: &'static str,
    pub preset: String,
    pub seed: u64,
    /// Fully resolved configuration; rerunning with it reproduces the report.
    pub config: Config,
    pub values: Vec<Value>,
    pub stability: Vec<NamedCurve>,
    pub checks: Vec<Check>,
    pub skipped_blocks: Vec<SkippedBlock>,
    pub degraded: bool,
    pub warnings: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Report {
    pub fn new(command: &str, config: &Config) -> Report {
        let mut report = Report {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION"),
            preset: config.preset.clone(),
            seed: config.seed,
            config: config.clone(),
            values: Vec::new(),
            stability: Vec::new(),
            checks: Vec::new(),
            skipped_blocks: Vec::new(),
            degraded: false,
            warnings: Vec::new(),
            files: Vec::new(),
        };
        report.push(
            "temperature_coefficient",
            qttf::clock::DEFAULT_TEMPERATURE_COEFFICIENT,
            "s/(K*m)",
            Origin::Assumed,
        );
        report
    }

    pub fn push(&mut self, name: &str, value: f64, unit: &'static str, origin: Origin) {
        self.values.push(Value {
            name: name.into(),
            value,
            unit,
            origin,
        });
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|v| v.name == name).map(|v| v.value)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn curve(&self, series: &str) -> Option<&StabilityCurve> {
        self.stability
            .iter()
            .find(|c| c.series == series)
            .map(|c| &c.curve)
    }

    /// Writes `report.json` and the resolved `config.toml` into `dir`.
    pub fn write(&mut self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let config_path = dir.join("config.toml");
        std::fs::write(&config_path, self.config.to_toml())
            .with_context(|| format!("writing {}", config_path.display()))?;
        self.files.push(config_path);
        let report_path = dir.join("report.json");
        self.files.push(report_path.clone());
        let json = serde_json::to_string_pretty(self).context("serializing report")?;
        std::fs::write(&report_path, json)
            .with_context(|| format!("writing {}", report_path.display()))?;
        Ok(())
    }

    /// Plain-text digest for the terminal.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} [{}] seed {}", self.command, self.preset, self.seed);
        for v in &self.values {
            let (scaled, unit) = display_unit(v.value, v.unit);
            let _ = writeln!(
                out,
                "  {:<32} {:>14.4} {:<4} ({:?})",
                v.name, scaled, unit, v.origin
            );
        }
        for c in &self.stability {
            let _ = writeln!(out, "  TDEV of {}:", c.series);
            for (tau, t) in c.curve.taus.iter().zip(&c.curve.tdev) {
                let _ = writeln!(out, "    tau {:>8} s  {:>12.1} fs", tau, t * 1e15);
            }
        }
        for c in &self.checks {
            let (m, unit) = display_unit(c.measured, c.unit);
            let (lo, _) = display_unit(c.lower, c.unit);
            let (hi, _) = display_unit(c.upper, c.unit);
            let status = if c.passed { "PASS" } else { "FAIL" };
            let kind = match c.kind {
                CheckKind::Acceptance => "",
                CheckKind::PublishedBand => " (published band)",
            };
            let _ = writeln!(
                out,
                "  [{status}] {}{kind}: {m:.4} {unit} in [{lo:.4}, {hi:.4}]",
                c.name
            );
        }
        if !self.skipped_blocks.is_empty() {
            let _ = writeln!(out, "  skipped blocks: {}", self.skipped_blocks.len());
        }
        if self.degraded {
            let _ = writeln!(out, "  run DEGRADED: too many skipped blocks");
        }
        for w in &self.warnings {
            let _ = writeln!(out, "  warning: {w}");
        }
        for f in &self.files {
            let _ = writeln!(out, "  wrote {}", f.display());
        }
        out
    }
}

/// Seconds are shown in picoseconds.
fn display_unit(value: f64, unit: &'static str) -> (f64, &'static str) {
    match unit {
        "s" => (value * 1e12, "ps"),
        "s/km" => (value * 1e12, "ps/km"),
        other => (value, other),
    }
}
