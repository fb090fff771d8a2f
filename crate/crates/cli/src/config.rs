//! TOML configuration with unit-suffixed keys.
//!
//! A configuration file only needs the keys it changes: it is merged over a
//! named preset (`preset = "..."` at the top level, default
//! `paper-20km-dcf`) and then parsed strictly, so a misspelled key is an
//! error that names its path.

use std::path::Path;

use anyhow::{bail, Context};
use qttf::clock::{ClockModel, DcfCorrelation, DriftProcess, DriftTopology, SpoolDrift};
use qttf::coincidence::HistogramSpec;
use qttf::physics::{FiberSpec, JitterSpec, LinkConfig, LossAccounting, SourceSpec};
use qttf::simulator::{SimScenario, SpectralModel};
use qttf::twoway::TdevEstimator;
use serde::{Deserialize, Serialize};

use crate::presets;

const PS: f64 = 1e-12;
const KM: f64 = 1e3;
/// ps²/km in s²/m.
const PS2_PER_KM: f64 = 1e-27;
/// µs/km in s/m.
const US_PER_KM: f64 = 1e-9;
/// ps/km in s/m.
const PS_PER_KM: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Preset the file was merged over.
    pub preset: String,
    pub seed: u64,
    pub source: SourceSection,
    pub link: LinkSection,
    pub jitter: JitterSection,
    pub clocks: ClockSection,
    pub drift: DriftSection,
    pub simulation: SimulationSection,
    pub analysis: AnalysisSection,
    pub scan: ScanSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingSection>,
}

/// Both sites use the same source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub dl_product_ps: f64,
    pub gamma: f64,
    pub center_wavelength_nm: f64,
    pub pair_rate_hz: f64,
    pub singles_rate_hz: f64,
    pub heralding_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub transmission_km: f64,
    pub compensation_km: f64,
    pub smf_k1_us_per_km: f64,
    pub smf_k2_ps2_per_km: f64,
    pub smf_loss_db_per_km: f64,
    pub dcf_k1_us_per_km: f64,
    pub dcf_k2_ps2_per_km: f64,
    pub dcf_loss_db_per_km: f64,
    /// Extra B→A group delay per kilometer of transmission fiber.
    pub k1_asymmetry_ps_per_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterSection {
    pub detector_fwhm_ps: f64,
    pub timer_fwhm_ps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    pub offset_a_ps: f64,
    pub offset_b_ps: f64,
    pub frequency_offset_a: f64,
    pub frequency_offset_b: f64,
    pub random_walk_a_ps_per_sqrt_s: f64,
    pub random_walk_b_ps_per_sqrt_s: f64,
}

/// Drift processes by preset name, see [`DriftProcess::PRESET_NAMES`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    pub transmission: String,
    pub dcf_a: String,
    pub dcf_a_residual: String,
    pub dcf_b: String,
    pub dcf_b_residual: String,
    pub correlation: DcfCorrelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub block_duration_s: u64,
    pub n_blocks: usize,
    pub background_rate_hz: f64,
    pub timer_resolution_ps: f64,
    pub spectral_model: SpectralModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub coarse_bin_ps: f64,
    pub fine_bin_ps: f64,
    pub search_span_ps: f64,
    /// Defaults to ten times the predicted FWHM.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_window_ps: Option<f64>,
    pub tdev_estimator: TdevEstimator,
    /// Runs skipping more than this fraction of blocks are marked degraded.
    pub degraded_fraction: f64,
    /// Number of leading blocks whose fine histograms are exported.
    pub histogram_blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub lengths_km: Vec<f64>,
    pub dcf_rules: Vec<DcfRule>,
}

/// Transmission lengths in `[min_km, max_km]` get a `dcf_km` spool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcfRule {
    pub min_km: f64,
    pub max_km: f64,
    pub dcf_km: f64,
}

/// Rescaling of a known per-block deviation to this link's length by loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    pub base_length_km: f64,
    /// Per-block deviation at the base length.
    pub base_sd_ps: f64,
    pub loss_db_per_km: f64,
    pub accounting: LossAccounting,
}

impl Config {
    /// Loads `path` merged over its preset (or `preset` when given, which
    /// takes precedence over the file's own `preset` key).
    pub fn load(path: Option<&Path>, preset: Option<&str>) -> anyhow::Result<Config> {
        let user = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        let source = path.map_or_else(|| "<defaults>".to_string(), |p| p.display().to_string());
        Config::from_table(user, preset, &source)
    }

    pub fn from_toml_str(text: &str, preset: Option<&str>) -> anyhow::Result<Config> {
        let table = text
            .parse::<toml::Table>()
            .context("parsing configuration")?;
        Config::from_table(table, preset, "<string>")
    }

    fn from_table(
        mut user: toml::Table,
        preset: Option<&str>,
        source: &str,
    ) -> anyhow::Result<Config> {
        let file_preset = match user.remove("preset") {
            Some(toml::Value::String(s)) => Some(s),
            Some(other) => bail!(
                "{source}: key `preset` must be a string, found {}",
                other.type_str()
            ),
            None => None,
        };
        let name = preset
            .map(str::to_string)
            .or(file_preset)
            .unwrap_or_else(|| presets::DEFAULT.to_string());
        let base = presets::preset(&name).with_context(|| {
            format!(
                "unknown preset `{name}`; available: {}",
                presets::NAMES.join(", ")
            )
        })?;
        let mut merged = toml::Table::try_from(&base).context("serializing preset")?;
        merge(&mut merged, user);
        merged.insert("preset".into(), toml::Value::String(name));
        let text = toml::to_string(&merged).context("serializing merged configuration")?;
        let de = toml::Deserializer::parse(&text).context("re-reading merged configuration")?;
        let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            anyhow::anyhow!(
                "{source}: invalid key `{}`: {}",
                e.path(),
                e.inner().message()
            )
        })?;
        config.check()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Range checks that name the offending key.
    fn check(&self) -> anyhow::Result<()> {
        let s = &self.simulation;
        if s.n_blocks == 0 {
            bail!("simulation.n_blocks must be at least 1");
        }
        if s.block_duration_s == 0 {
            bail!("simulation.block_duration_s must be at least 1");
        }
        if !(s.timer_resolution_ps > 0.0) {
            bail!("simulation.timer_resolution_ps must be positive");
        }
        if !(0.0..=1.0).contains(&self.source.heralding_efficiency) {
            bail!("source.heralding_efficiency must lie in [0, 1]");
        }
        if !(self.link.transmission_km >= 0.0) || !(self.link.compensation_km >= 0.0) {
            bail!("link lengths must be non-negative");
        }
        let d = &self.drift;
        for (key, name) in [
            ("drift.transmission", &d.transmission),
            ("drift.dcf_a", &d.dcf_a),
            ("drift.dcf_a_residual", &d.dcf_a_residual),
            ("drift.dcf_b", &d.dcf_b),
            ("drift.dcf_b_residual", &d.dcf_b_residual),
        ] {
            if DriftProcess::preset(name, 0.0).is_none() {
                bail!(
                    "{key}: unknown drift `{name}`; available: {}",
                    DriftProcess::PRESET_NAMES.join(", ")
                );
            }
        }
        if !(0.0..=1.0).contains(&self.analysis.degraded_fraction) {
            bail!("analysis.degraded_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn source_spec(&self) -> SourceSpec {
        let s = &self.source;
        SourceSpec {
            dl_product: s.dl_product_ps * PS,
            gamma: s.gamma,
            center_wavelength: s.center_wavelength_nm * 1e-9,
            pair_rate: s.pair_rate_hz,
            singles_rate: s.singles_rate_hz,
            heralding_efficiency: s.heralding_efficiency,
        }
    }

    pub fn link_config(&self) -> LinkConfig {
        let l = &self.link;
        let mut smf = FiberSpec::smf(l.transmission_km * KM);
        smf.k1 = l.smf_k1_us_per_km * US_PER_KM;
        smf.k2 = l.smf_k2_ps2_per_km * PS2_PER_KM;
        smf.loss_db_per_km = l.smf_loss_db_per_km;
        let mut dcf = FiberSpec::dcf(l.compensation_km * KM);
        dcf.k1 = l.dcf_k1_us_per_km * US_PER_KM;
        dcf.k2 = l.dcf_k2_ps2_per_km * PS2_PER_KM;
        dcf.loss_db_per_km = l.dcf_loss_db_per_km;
        LinkConfig {
            transmission: smf,
            compensation: dcf,
            k1_asymmetry: l.k1_asymmetry_ps_per_km * PS_PER_KM,
        }
    }

    pub fn jitter_spec(&self) -> JitterSpec {
        JitterSpec {
            detector_fwhm: self.jitter.detector_fwhm_ps * PS,
            timer_fwhm: self.jitter.timer_fwhm_ps * PS,
        }
    }

    pub fn block_duration(&self) -> f64 {
        self.simulation.block_duration_s as f64
    }

    pub fn topology(&self) -> DriftTopology {
        let d = &self.drift;
        let l = &self.link;
        let process = |name: &str, length_km: f64| {
            DriftProcess::preset(name, length_km * KM).unwrap_or_default()
        };
        DriftTopology {
            transmission: process(&d.transmission, l.transmission_km),
            compensation_a: SpoolDrift {
                reciprocal: process(&d.dcf_a, l.compensation_km),
                residual: process(&d.dcf_a_residual, l.compensation_km),
            },
            compensation_b: SpoolDrift {
                reciprocal: process(&d.dcf_b, l.compensation_km),
                residual: process(&d.dcf_b_residual, l.compensation_km),
            },
            correlation: d.correlation,
        }
    }

    pub fn scenario(&self) -> SimScenario {
        let c = &self.clocks;
        let clock = |offset: f64, freq: f64, walk: f64| ClockModel {
            initial_offset: offset * PS,
            frequency_offset: freq,
            random_walk_coefficient: walk * PS,
            epoch: 0.0,
        };
        let source = self.source_spec();
        SimScenario {
            source_a: source.clone(),
            source_b: source,
            link: self.link_config(),
            jitter: self.jitter_spec(),
            clock_a: clock(
                c.offset_a_ps,
                c.frequency_offset_a,
                c.random_walk_a_ps_per_sqrt_s,
            ),
            clock_b: clock(
                c.offset_b_ps,
                c.frequency_offset_b,
                c.random_walk_b_ps_per_sqrt_s,
            ),
            topology: self.topology(),
            spectral_model: self.simulation.spectral_model,
            block_duration: self.block_duration(),
            n_blocks: self.simulation.n_blocks,
            background_rate: self.simulation.background_rate_hz,
            timer_resolution: self.simulation.timer_resolution_ps * PS,
            rng_seed: self.seed,
        }
    }

    /// Injected offset `t0 = offset_A − offset_B` at the start of the run.
    pub fn injected_offset(&self) -> f64 {
        (self.clocks.offset_a_ps - self.clocks.offset_b_ps) * PS
    }

    pub fn histogram_spec(&self, expected_fwhm: f64) -> HistogramSpec {
        let a = &self.analysis;
        let default = HistogramSpec::for_expected_fwhm(expected_fwhm);
        HistogramSpec {
            coarse_bin: a.coarse_bin_ps * PS,
            fine_bin: a.fine_bin_ps * PS,
            search_span: a.search_span_ps * PS,
            fine_window: a.fine_window_ps.map_or(default.fine_window, |w| w * PS),
        }
    }

    /// DCF length for a transmission length under the scan rules.
    pub fn dcf_for_length(&self, length_km: f64) -> anyhow::Result<f64> {
        self.scan
            .dcf_rules
            .iter()
            .find(|r| length_km >= r.min_km && length_km <= r.max_km)
            .map(|r| r.dcf_km)
            .with_context(|| format!("no scan.dcf_rules entry covers {length_km} km"))
    }
}

/// Recursively overlays `over` onto `base`.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
