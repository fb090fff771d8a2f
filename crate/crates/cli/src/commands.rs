//! The five subcommands, usable as library calls.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use qttf::analysis::{self, Analysis, BlockFits};
use qttf::clock::Direction;
use qttf::coincidence::{self, HistogramSpec};
use qttf::physics::{self, Prediction};
use qttf::simulator::Simulator;
use qttf::tagfile::{self, DirReader, DirWriter};
use qttf::twoway::{self, linear_fit, octave_factors, LinearFit, StabilityCurve};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::presets;
use crate::report::{Check, CheckKind, NamedCurve, Origin, Report};

/// Blocks held in memory at once when streaming through files.
const CHUNK: usize = 32;

pub fn prediction(config: &Config) -> anyhow::Result<Prediction> {
    Ok(physics::predict(
        &config.source_spec(),
        &config.link_config(),
        &config.jitter_spec(),
        config.block_duration(),
    )?)
}

fn histogram_spec(config: &Config) -> anyhow::Result<HistogramSpec> {
    let spec = config.histogram_spec(prediction(config)?.fwhm_observed);
    spec.validate().context("analysis section")?;
    Ok(spec)
}

fn push_prediction(report: &mut Report, config: &Config, p: &Prediction) {
    report.push(
        "sigma_dispersion",
        p.sigma_dispersion,
        "s",
        Origin::Analytic,
    );
    report.push("fwhm_bare", p.fwhm_bare, "s", Origin::Analytic);
    report.push("fwhm_observed", p.fwhm_observed, "s", Origin::Analytic);
    report.push(
        "sd_numerator",
        physics::sd_numerator(p.sigma_dispersion, &config.jitter_spec()),
        "s",
        Origin::Analytic,
    );
    report.push(
        "expected_coincidences",
        p.n_coincidences as f64,
        "count",
        Origin::Analytic,
    );
    report.push("sd_per_block", p.sd_per_block, "s", Origin::Analytic);
}

/// Closed-form quantities only.
pub fn predict(config: &Config) -> anyhow::Result<Report> {
    let mut report = Report::new("predict", config);
    let p = prediction(config)?;
    push_prediction(&mut report, config, &p);
    if let Some(s) = &config.scaling {
        let base = Prediction {
            sd_per_block: s.base_sd_ps * 1e-12,
            ..p.clone()
        };
        let scaled = physics::stability_vs_length(
            &base,
            s.base_length_km * 1e3,
            config.link.transmission_km * 1e3,
            s.loss_db_per_km,
            s.accounting,
        )?;
        report.push("scaling_base_sd", base.sd_per_block, "s", Origin::Published);
        report.push(
            "scaling_extra_loss",
            scaled.extra_loss_db,
            "dB",
            Origin::Analytic,
        );
        report.push(
            "scaling_throughput",
            scaled.throughput,
            "ratio",
            Origin::Analytic,
        );
        report.push(
            "scaled_sd_per_block",
            scaled.sd_per_block,
            "s",
            Origin::Analytic,
        );
    }
    Ok(report)
}

/// Simulates the configuration and writes the four tag files into `out`.
pub fn simulate(config: &Config, out: &Path) -> anyhow::Result<Report> {
    let mut report = Report::new("simulate", config);
    let sim = Simulator::new(&config.scenario())?;
    let n = config.simulation.n_blocks;
    let block_count =
        u32::try_from(n).context("simulation.n_blocks too large for the tag format")?;
    let mut writer = DirWriter::create(out, block_count)?;
    let mut counts = [0u64; 4];
    for start in (0..n).step_by(CHUNK) {
        let blocks: Vec<_> = (start..(start + CHUNK).min(n))
            .into_par_iter()
            .map(|k| sim.block(k, false))
            .collect();
        for b in &blocks {
            for (c, t) in counts.iter_mut().zip(&b.tags) {
                *c += t.len() as u64;
            }
            writer.write_block(b.epoch, [0, 1, 2, 3].map(|c| b.tags[c].as_slice()))?;
        }
    }
    report.files = writer.finish()?;
    let singles = config.source.singles_rate_hz + config.simulation.background_rate_hz;
    report.push(
        "expected_tags_per_block",
        singles * config.block_duration(),
        "count",
        Origin::Analytic,
    );
    for (c, total) in counts.iter().enumerate() {
        report.push(
            &format!("tags_per_block_d{}", c + 1),
            *total as f64 / n as f64,
            "count",
            Origin::MonteCarlo,
        );
    }
    report.write(out)?;
    Ok(report)
}

/// Analyzes the tag files in `tags` and writes CSVs and a report into `out`.
pub fn analyze(config: &Config, tags: &Path, out: &Path) -> anyhow::Result<Report> {
    let missing: Vec<String> = qttf::simulator::Channel::ALL
        .iter()
        .map(|&c| tagfile::file_name(c))
        .filter(|name| !tags.join(name).is_file())
        .collect();
    if missing.len() == 4 {
        bail!("no tag files in {}", tags.display());
    }
    if !missing.is_empty() {
        bail!("{} is missing {}", tags.display(), missing.join(", "));
    }
    let spec = histogram_spec(config)?;
    let mut reader = DirReader::open(tags)?;
    let mut fits: Vec<BlockFits> = Vec::with_capacity(reader.block_count() as usize);
    let mut histograms = Vec::new();
    loop {
        let mut chunk = Vec::with_capacity(CHUNK);
        while chunk.len() < CHUNK {
            match reader.next_block()? {
                Some(b) => chunk.push(b),
                None => break,
            }
        }
        if chunk.is_empty() {
            break;
        }
        for (epoch, t) in &chunk {
            if histograms.len() < config.analysis.histogram_blocks * 2 {
                for direction in [Direction::AToB, Direction::BToA] {
                    let (l, r) = qttf::simulator::Channel::pair(direction);
                    if let Ok(c) = coincidence::correlate(&t[l.index()], &t[r.index()], &spec) {
                        histograms.push((direction, *epoch, c.fine));
                    }
                }
            }
        }
        let batch: Vec<BlockFits> = chunk
            .par_iter()
            .map(|(epoch, t)| {
                analysis::fit_block(*epoch, [0, 1, 2, 3].map(|c| t[c].as_slice()), &spec)
            })
            .collect();
        fits.extend(batch);
    }
    let a = analysis::assemble(fits, config.block_duration())?;
    let mut report = Report::new("analyze", config);
    if let Some(gap) = a
        .series
        .records
        .windows(2)
        .map(|w| w[1].epoch - w[0].epoch)
        .find(|gap| gap % config.simulation.block_duration_s != 0)
    {
        report.warnings.push(format!(
            "epoch spacing {gap} s is not a multiple of simulation.block_duration_s = {}",
            config.simulation.block_duration_s
        ));
    }
    finish(&mut report, config, &a, Some(out))?;
    for (direction, epoch, h) in histograms {
        let name = match direction {
            Direction::AToB => format!("histogram_t21_epoch{epoch}.csv"),
            Direction::BToA => format!("histogram_t43_epoch{epoch}.csv"),
        };
        let path = out.join(name);
        h.write_csv(create(&path)?)
            .with_context(|| format!("writing {}", path.display()))?;
        report.files.push(path);
    }
    report.write(out)?;
    Ok(report)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Adds predictions, measurements and stability curves of an analysis to
/// the report and, with `out`, writes the series CSVs.
fn finish(
    report: &mut Report,
    config: &Config,
    a: &Analysis,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let p = prediction(config)?;
    push_prediction(report, config, &p);

    report.skipped_blocks = a.skipped.clone();
    report.degraded = a.skipped_fraction() > config.analysis.degraded_fraction;
    if a.series.records.is_empty() {
        bail!("no block produced a coincidence peak in both directions");
    }
    let fits = a.ab.iter().chain(&a.ba);
    let n = (a.ab.len() + a.ba.len()) as f64;
    let (fwhm, coinc) = fits.fold((0.0, 0.0), |(f, c), e| {
        (f + e.fit.fwhm, c + e.fit.n_coincidences)
    });
    report.push("fitted_fwhm", fwhm / n, "s", Origin::MonteCarlo);
    report.push("mean_coincidences", coinc / n, "count", Origin::MonteCarlo);

    let summary = twoway::summarize(&a.series);
    let blocks = a.series.records.len() as f64;
    report.push("blocks_used", blocks, "count", Origin::MonteCarlo);
    report.push("t0_mean", summary.mean, "s", Origin::MonteCarlo);
    report.push(
        "t0_mean_minus_injected",
        summary.mean - config.injected_offset(),
        "s",
        Origin::MonteCarlo,
    );
    report.push(
        "t0_mean_se",
        summary.sd / blocks.sqrt(),
        "s",
        Origin::MonteCarlo,
    );
    report.push("t0_sd", summary.sd, "s", Origin::MonteCarlo);
    report.push(
        "t0_drift_slope",
        summary.drift_slope,
        "s/s",
        Origin::MonteCarlo,
    );
    report.push(
        "t21_sd",
        sample_sd(&a.series.t21()),
        "s",
        Origin::MonteCarlo,
    );
    report.push(
        "t43_sd",
        sample_sd(&a.series.t43()),
        "s",
        Origin::MonteCarlo,
    );

    let tau0 = config.block_duration();
    for (name, x) in [
        ("t0", a.series.t0()),
        ("t21", a.series.t21()),
        ("t43", a.series.t43()),
    ] {
        let curve = twoway::tdev(
            &x,
            tau0,
            &octave_factors(x.len()),
            config.analysis.tdev_estimator,
        );
        report.warnings.extend(curve.warnings.iter().cloned());
        report.stability.push(NamedCurve {
            series: name.into(),
            curve,
        });
    }
    if let Some(first) = report.curve("t0").and_then(|c| c.tdev.first().copied()) {
        report.push("t0_tdev_tau0", first, "s", Origin::MonteCarlo);
    }

    if let Some(out) = out {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join("offsets.csv");
        a.series
            .write_csv(create(&path)?)
            .with_context(|| format!("writing {}", path.display()))?;
        report.files.push(path);
        for c in report.stability.clone() {
            let path = out.join(if c.series == "t0" {
                "stability.csv".to_string()
            } else {
                format!("stability_{}.csv", c.series)
            });
            c.curve
                .write_csv(create(&path)?)
                .with_context(|| format!("writing {}", path.display()))?;
            report.files.push(path);
        }
    }
    Ok(())
}

/// Simulates and analyzes in memory.
pub fn run(config: &Config) -> anyhow::Result<(Analysis, Report)> {
    let sim = Simulator::new(&config.scenario())?;
    let a = analysis::simulate_and_analyze(&sim, &histogram_spec(config)?)?;
    let mut report = Report::new("run", config);
    finish(&mut report, config, &a, None)?;
    Ok((a, report))
}

/// TDEV ratio `num / den` over the taus where the `den` curve is at least
/// three times its own white-noise level `TDEV(τ0)/√m`, restricted to
/// `m ≤ n/32` so every point averages many independent samples. Returns the
/// geometric mean and the factors used.
pub fn drift_ratio(
    num: &StabilityCurve,
    den: &StabilityCurve,
    n: usize,
) -> Option<(f64, Vec<usize>)> {
    let tau0 = *den.taus.first()?;
    let white = *den.tdev.first()?;
    let mut logs = Vec::new();
    let mut used = Vec::new();
    for (i, &tau) in den.taus.iter().enumerate() {
        let m = (tau / tau0).round() as usize;
        if m * 32 > n || den.tdev[i] < 3.0 * white / (m as f64).sqrt() {
            continue;
        }
        let other = num.tdev_at(tau)?;
        logs.push((other / den.tdev[i]).ln());
        used.push(m);
    }
    if logs.is_empty() {
        return None;
    }
    Some(((logs.iter().sum::<f64>() / logs.len() as f64).exp(), used))
}

/// Runs a named scenario end to end and checks it against the closed form
/// and the published values.
pub fn reproduce(config: &Config, out: Option<&Path>) -> anyhow::Result<Report> {
    let (a, mut report) = run(config)?;
    report.command = "reproduce".into();
    if let Some(out) = out {
        finish(&mut Report::new("reproduce", config), config, &a, Some(out))?;
        report.files = [
            "offsets.csv",
            "stability.csv",
            "stability_t21.csv",
            "stability_t43.csv",
        ]
        .iter()
        .map(|f| out.join(f))
        .collect();
    }
    let p = prediction(config)?;
    let published = presets::published_values(&config.preset);
    let value = |r: &Report, name: &str| r.value(name).expect("value present");
    let is_drift_free = config.drift.transmission == "none"
        && [
            &config.drift.dcf_a,
            &config.drift.dcf_a_residual,
            &config.drift.dcf_b,
            &config.drift.dcf_b_residual,
        ]
        .iter()
        .all(|d| d.as_str() == "none");

    if let Some(fwhm) = published.fwhm {
        report.checks.push(Check::relative(
            "fitted FWHM vs published",
            CheckKind::Acceptance,
            value(&report, "fitted_fwhm"),
            fwhm,
            0.10,
            "s",
        ));
    }
    if is_drift_free {
        report.checks.push(Check::relative(
            "t0 SD vs closed-form per-block SD",
            CheckKind::Acceptance,
            value(&report, "t0_sd"),
            p.sd_per_block,
            0.15,
            "s",
        ));
        let se = value(&report, "t0_mean_se");
        report.checks.push(Check::within(
            "mean t0 minus injected offset",
            CheckKind::Acceptance,
            value(&report, "t0_mean_minus_injected"),
            -3.0 * se,
            3.0 * se,
            "s",
        ));
    }
    if let Some((lo, hi)) = published.sd_band {
        report.checks.push(Check::within(
            "t0 SD in published band",
            CheckKind::PublishedBand,
            value(&report, "t0_sd"),
            lo,
            hi,
            "s",
        ));
    }
    if let Some(target) = published.scaled_sd {
        let scaled = predict(config)?
            .value("scaled_sd_per_block")
            .context("preset has no scaling section")?;
        report.push("scaled_sd_per_block", scaled, "s", Origin::Analytic);
        report.checks.push(Check::relative(
            "loss-scaled SD vs published",
            CheckKind::Acceptance,
            scaled,
            target,
            0.05,
            "s",
        ));
    }

    let compare_with = match config.preset.as_str() {
        "appendixA-two-dcf-colocated" => Some((
            "appendixA-shared-dcf",
            "co-located / shared TDEV ratio",
            2f64.sqrt(),
            0.20,
        )),
        "appendixA-two-dcf-remote" => Some((
            "appendixA-two-dcf-colocated",
            "remote / co-located TDEV ratio",
            f64::NAN,
            0.0,
        )),
        _ => None,
    };
    if let Some((other_name, label, target, tolerance)) = compare_with {
        let mut other = presets::preset(other_name).expect("known preset");
        other.seed = config.seed;
        other.simulation.n_blocks = config.simulation.n_blocks;
        let (b, other_report) = run(&other)?;
        let n = a.series.records.len().min(b.series.records.len());
        let ours = report.curve("t0").expect("t0 curve").clone();
        let theirs = other_report.curve("t0").expect("t0 curve");
        match drift_ratio(&ours, theirs, n) {
            Some((ratio, used)) => {
                report.push(
                    &format!("tdev_ratio_vs_{other_name}"),
                    ratio,
                    "ratio",
                    Origin::MonteCarlo,
                );
                report
                    .warnings
                    .push(format!("TDEV ratio averaged over m = {used:?}"));
                let check = if target.is_nan() {
                    Check::within(
                        label,
                        CheckKind::Acceptance,
                        ratio,
                        1.0,
                        f64::INFINITY,
                        "ratio",
                    )
                } else {
                    Check::relative(
                        label,
                        CheckKind::Acceptance,
                        ratio,
                        target,
                        tolerance,
                        "ratio",
                    )
                };
                report.checks.push(check);
            }
            None => report
                .warnings
                .push(format!("{label}: no drift-dominated tau; run more blocks")),
        }
    }
    if let Some(out) = out {
        report.write(out)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanPoint {
    pub length_km: f64,
    pub dcf_km: f64,
    pub mean_t0: f64,
    pub se: f64,
    pub sd: f64,
    pub blocks: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Scan {
    pub points: Vec<ScanPoint>,
    /// Spread of the per-length means, seconds.
    pub sd_across_lengths: f64,
    /// Weighted fit of mean `t0` against length; slope in s/km.
    pub fit: LinearFit,
}

/// Simulates and analyzes each transmission length with the DCF the scan
/// rules assign, all with the same seed.
pub fn scan_length(
    config: &Config,
    lengths_km: &[f64],
    out: Option<&Path>,
) -> anyhow::Result<(Scan, Report)> {
    if lengths_km.is_empty() {
        bail!("scan needs at least one length");
    }
    let mut points = Vec::new();
    for &length in lengths_km {
        let mut c = config.clone();
        c.link.transmission_km = length;
        c.link.compensation_km = config.dcf_for_length(length)?;
        let (a, _) = run(&c).with_context(|| format!("length {length} km"))?;
        let s = twoway::summarize(&a.series);
        let blocks = a.series.records.len();
        points.push(ScanPoint {
            length_km: length,
            dcf_km: c.link.compensation_km,
            mean_t0: s.mean,
            se: s.sd / (blocks as f64).sqrt(),
            sd: s.sd,
            blocks,
        });
    }
    let means: Vec<f64> = points.iter().map(|p| p.mean_t0).collect();
    let lengths: Vec<f64> = points.iter().map(|p| p.length_km).collect();
    let ses: Vec<f64> = points.iter().map(|p| p.se).collect();
    let fit = linear_fit(&lengths, &means, Some(&ses));
    let scan = Scan {
        sd_across_lengths: sample_sd(&means),
        fit,
        points,
    };

    let mut report = Report::new("scan-length", config);
    report.push(
        "sd_across_lengths",
        scan.sd_across_lengths,
        "s",
        Origin::MonteCarlo,
    );
    report.push("slope", fit.slope, "s/km", Origin::MonteCarlo);
    report.push("slope_se", fit.slope_std_error, "s/km", Origin::MonteCarlo);
    report.push(
        "expected_slope",
        config.link.k1_asymmetry_ps_per_km * 1e-12 / 2.0,
        "s/km",
        Origin::Analytic,
    );
    for p in &scan.points {
        report.push(
            &format!("mean_t0_{}km", p.length_km),
            p.mean_t0,
            "s",
            Origin::MonteCarlo,
        );
    }
    if let Some(out) = out {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path: PathBuf = out.join("scan.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record([
            "length_km",
            "dcf_km",
            "mean_t0_fs",
            "se_fs",
            "sd_fs",
            "blocks",
        ])?;
        for p in &scan.points {
            w.write_record([
                p.length_km.to_string(),
                p.dcf_km.to_string(),
                format!("{:.3}", p.mean_t0 * 1e15),
                format!("{:.3}", p.se * 1e15),
                format!("{:.3}", p.sd * 1e15),
                p.blocks.to_string(),
            ])?;
        }
        w.flush()?;
        report.files.push(path);
        report.write(out)?;
    }
    Ok((scan, report))
}
