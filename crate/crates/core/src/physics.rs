//! Closed-form coincidence statistics.
//!
//! The joint spectrum of each pair source is approximated by a Gaussian,
//! `f(Ω) ≈ exp(-γ (Ω·DL)²)`, and the fibers are expanded to second order
//! around the center frequency. Under those approximations the coincidence
//! peak of either direction is a Gaussian of standard deviation
//!
//! ```text
//! σ² = γ(DL)² + ((k2·l + k2'·l') / 2)² / (γ(DL)²)
//! ```
//!
//! The first term is the source-limited correlation time, the second the
//! dispersive spread. Dispersion in the remote arm is cancelled by dispersion
//! of the opposite sign in the local arm, which is why a spool of
//! compensation fiber on the idler side narrows the peak even though the two
//! photons never share a path.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Constant of the Gaussian approximation to the sinc-shaped joint spectrum.
pub const GAUSSIAN_JSA_GAMMA: f64 = 0.04822;

/// FWHM of a Gaussian in units of its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.355;

/// Inverse group velocity of standard single-mode fiber (group index ≈ 1.468).
pub const DEFAULT_K1: f64 = 4.89e-9;

/// Group-velocity dispersion of the transmission fiber, s²/m.
pub const SMF_K2: f64 = -2.17e-26;

/// Group-velocity dispersion of the compensation fiber, s²/m.
pub const DCF_K2: f64 = 1.86e-25;

/// Entangled-pair source parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    /// Crystal walk-off product `D·L`, seconds.
    pub dl_product: f64,
    pub gamma: f64,
    /// Center wavelength of the degenerate pairs, meters.
    pub center_wavelength: f64,
    /// Emitted pairs per second (informational).
    pub pair_rate: f64,
    /// Detected events per second at each timer port.
    pub singles_rate: f64,
    /// Fraction of one channel's detected tags whose partner is also detected.
    pub heralding_efficiency: f64,
}

impl SourceSpec {
    /// 10 mm PPKTP at 1560 nm, 6 kHz per port, heralding tuned so that a
    /// 5 s block holds about 1468 coincidences.
    pub fn reference() -> Self {
        SourceSpec {
            dl_product: 2.96e-12,
            gamma: GAUSSIAN_JSA_GAMMA,
            center_wavelength: 1560e-9,
            pair_rate: 1e6,
            singles_rate: 6_000.0,
            heralding_efficiency: 0.0489,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dl_product > 0.0) {
            return Err(Error::domain(format!(
                "dl_product must be positive, got {}",
                self.dl_product
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::domain(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.singles_rate > 0.0) {
            return Err(Error::domain(format!(
                "singles_rate must be positive, got {}",
                self.singles_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.heralding_efficiency) {
            return Err(Error::domain(format!(
                "heralding_efficiency must lie in [0, 1], got {}",
                self.heralding_efficiency
            )));
        }
        if !(self.pair_rate >= 0.0) || !(self.center_wavelength > 0.0) {
            return Err(Error::domain(
                "pair_rate and center_wavelength must be non-negative",
            ));
        }
        Ok(())
    }

    /// Center angular frequency `ω0 = 2πc/λ`.
    pub fn center_frequency(&self) -> f64 {
        2.0 * std::f64::consts::PI * 299_792_458.0 / self.center_wavelength
    }

    /// Source-limited correlation time `√γ·DL`.
    pub fn correlation_time(&self) -> f64 {
        self.gamma.sqrt() * self.dl_product
    }
}

/// Second-order propagation constants of one fiber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberSpec {
    /// Meters.
    pub length: f64,
    /// Phase constant at the center frequency, 1/m.
    pub k0: f64,
    /// Inverse group velocity, s/m.
    pub k1: f64,
    /// Group-velocity dispersion, s²/m.
    pub k2: f64,
    pub loss_db_per_km: f64,
}

impl FiberSpec {
    /// Standard single-mode transmission fiber.
    pub fn smf(length: f64) -> Self {
        FiberSpec {
            length,
            k0: 5.913e6,
            k1: DEFAULT_K1,
            k2: SMF_K2,
            loss_db_per_km: 0.2,
        }
    }

    /// Dispersion-compensating fiber.
    pub fn dcf(length: f64) -> Self {
        FiberSpec {
            length,
            k0: 5.913e6,
            k1: DEFAULT_K1,
            k2: DCF_K2,
            loss_db_per_km: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length >= 0.0) {
            return Err(Error::domain(format!(
                "fiber length must be non-negative, got {}",
                self.length
            )));
        }
        if !(self.loss_db_per_km >= 0.0) {
            return Err(Error::domain(format!(
                "fiber loss must be non-negative, got {}",
                self.loss_db_per_km
            )));
        }
        Ok(())
    }

    /// Group delay `k1·l`.
    pub fn group_delay(&self) -> f64 {
        self.k1 * self.length
    }

    /// Accumulated dispersion `k2·l`, s².
    pub fn dispersion(&self) -> f64 {
        self.k2 * self.length
    }

    pub fn loss_db(&self) -> f64 {
        self.loss_db_per_km * self.length / 1000.0
    }
}

/// One transmission fiber shared by both directions plus the compensation
/// spool in each site's idler arm (both spools have the same specification).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub transmission: FiberSpec,
    pub compensation: FiberSpec,
    /// Extra inverse group velocity of the B→A direction, s/m. Zero for a
    /// reciprocal link.
    #[serde(default)]
    pub k1_asymmetry: f64,
}

impl LinkConfig {
    pub fn new(transmission: FiberSpec, compensation: FiberSpec) -> Self {
        LinkConfig {
            transmission,
            compensation,
            k1_asymmetry: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.transmission.validate()?;
        self.compensation.validate()
    }

    /// `k2·l + k2'·l'`; zero for perfect nonlocal cancellation.
    pub fn net_dispersion(&self) -> f64 {
        self.transmission.dispersion() + self.compensation.dispersion()
    }

    /// Mean registration difference of one direction without clock offset,
    /// `k1·l − k1'·l'`.
    pub fn differential_delay(&self) -> f64 {
        self.transmission.group_delay() - self.compensation.group_delay()
    }
}

/// Gaussian timing jitter of the detection chain.
///
/// A coincidence involves two detectors and two timer ports, so the combined
/// FWHM seen in a histogram is the quadrature sum of four contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterSpec {
    /// FWHM of one detector, seconds.
    pub detector_fwhm: f64,
    /// FWHM of one timer port, seconds.
    pub timer_fwhm: f64,
}

impl JitterSpec {
    /// Splits a combined coincidence FWHM equally between detectors and timers.
    pub fn from_combined_fwhm(fwhm: f64) -> Self {
        let each = fwhm / 2.0;
        JitterSpec {
            detector_fwhm: each,
            timer_fwhm: each,
        }
    }

    pub fn none() -> Self {
        JitterSpec {
            detector_fwhm: 0.0,
            timer_fwhm: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.detector_fwhm >= 0.0 && self.timer_fwhm >= 0.0) {
            return Err(Error::domain("jitter FWHM values must be non-negative"));
        }
        Ok(())
    }

    /// Standard deviation added to each individual tag (one detector plus one
    /// timer port).
    pub fn per_tag_std(&self) -> f64 {
        self.detector_fwhm.hypot(self.timer_fwhm) / FWHM_PER_SIGMA
    }

    /// Standard deviation of the jitter on a tag difference, `Δt_jitter`.
    pub fn combined_std(&self) -> f64 {
        self.per_tag_std() * std::f64::consts::SQRT_2
    }

    pub fn combined_fwhm(&self) -> f64 {
        self.combined_std() * FWHM_PER_SIGMA
    }
}

/// Closed-form expectations for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sigma_dispersion: f64,
    pub fwhm_bare: f64,
    pub fwhm_observed: f64,
    pub sd_per_block: f64,
    pub n_coincidences: u64,
}

/// Standard deviation of the jitter-free coincidence peak.
pub fn coincidence_sigma(source: &SourceSpec, link: &LinkConfig) -> Result<f64> {
    if !(source.dl_product > 0.0) || !(source.gamma > 0.0) {
        return Err(Error::domain(
            "coincidence width needs positive DL and gamma",
        ));
    }
    let intrinsic = source.gamma * source.dl_product * source.dl_product;
    let half_dispersion = link.net_dispersion() / 2.0;
    Ok((intrinsic + half_dispersion * half_dispersion / intrinsic).sqrt())
}

/// Histogram FWHM after convolving the peak with the detection jitter.
pub fn observed_fwhm(sigma_dispersion: f64, jitter: &JitterSpec) -> Result<f64> {
    if !(sigma_dispersion >= 0.0) {
        return Err(Error::domain(format!(
            "sigma must be non-negative, got {sigma_dispersion}"
        )));
    }
    jitter.validate()?;
    Ok((FWHM_PER_SIGMA * sigma_dispersion).hypot(jitter.combined_fwhm()))
}

/// Expected deviation of `t0` for a block holding `n` coincidences,
/// `√(σ² + Δt_jitter²) / √n`.
pub fn per_block_sd(sigma_dispersion: f64, jitter: &JitterSpec, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain(
            "per-block deviation needs at least one coincidence",
        ));
    }
    if !(sigma_dispersion >= 0.0) {
        return Err(Error::domain(format!(
            "sigma must be non-negative, got {sigma_dispersion}"
        )));
    }
    jitter.validate()?;
    Ok(sd_numerator(sigma_dispersion, jitter) / (n as f64).sqrt())
}

/// `√(σ² + Δt_jitter²)`, the per-block deviation at `n = 1`.
pub fn sd_numerator(sigma_dispersion: f64, jitter: &JitterSpec) -> f64 {
    sigma_dispersion.hypot(jitter.combined_std())
}

/// Mean coincidences per block, `singles · duration · heralding`.
pub fn expected_coincidences(source: &SourceSpec, block_duration: f64) -> u64 {
    (source.singles_rate * block_duration * source.heralding_efficiency)
        .round()
        .max(0.0) as u64
}

/// All closed-form quantities of one configuration.
pub fn predict(
    source: &SourceSpec,
    link: &LinkConfig,
    jitter: &JitterSpec,
    block_duration: f64,
) -> Result<Prediction> {
    source.validate()?;
    link.validate()?;
    let sigma = coincidence_sigma(source, link)?;
    let n = expected_coincidences(source, block_duration);
    Ok(Prediction {
        sigma_dispersion: sigma,
        fwhm_bare: FWHM_PER_SIGMA * sigma,
        fwhm_observed: observed_fwhm(sigma, jitter)?,
        sd_per_block: if n > 0 {
            per_block_sd(sigma, jitter, n)?
        } else {
            f64::INFINITY
        },
        n_coincidences: n,
    })
}

/// Which detection channels of a coincidence cross the added fiber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossAccounting {
    /// Only the signal photon travels the link; the coincidence rate drops by
    /// the one-way loss.
    SignalOnly,
    /// Both photons of the pair cross the added loss.
    BothPhotons,
}

/// Result of rescaling a per-block deviation to another link length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossScaledPrediction {
    pub sd_per_block: f64,
    /// Coincidences per block after the extra loss (not rounded).
    pub n_coincidences: f64,
    pub extra_loss_db: f64,
    /// Fraction of coincidences that survive the extra loss.
    pub throughput: f64,
    pub accounting: LossAccounting,
}

/// Rescales a per-block deviation to a longer (or shorter) link assuming
/// dispersion stays compensated, so only the coincidence count changes.
pub fn stability_vs_length(
    base: &Prediction,
    base_length: f64,
    target_length: f64,
    loss_db_per_km: f64,
    accounting: LossAccounting,
) -> Result<LossScaledPrediction> {
    if !(loss_db_per_km >= 0.0) {
        return Err(Error::domain(format!(
            "loss must be non-negative, got {loss_db_per_km}"
        )));
    }
    if !(base_length >= 0.0 && target_length >= 0.0) {
        return Err(Error::domain("lengths must be non-negative"));
    }
    let extra_loss_db = loss_db_per_km * (target_length - base_length) / 1000.0;
    let channels = match accounting {
        LossAccounting::SignalOnly => 1.0,
        LossAccounting::BothPhotons => 2.0,
    };
    let throughput = 10f64.powf(-channels * extra_loss_db / 10.0);
    Ok(LossScaledPrediction {
        sd_per_block: base.sd_per_block / throughput.sqrt(),
        n_coincidences: base.n_coincidences as f64 * throughput,
        extra_loss_db,
        throughput,
        accounting,
    })
}
