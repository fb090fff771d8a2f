//! Simulation and analysis of fiber-optic two-way time transfer with
//! frequency-entangled photon pairs.
//!
//! Two sites each run a photon-pair source. The idler photon of every pair is
//! detected locally after a dispersion-compensation spool, the signal photon
//! crosses the shared transmission fiber and is detected at the far site.
//! Cross-correlating the local and remote time-tag streams in each direction
//! yields two one-way registration differences, and half their difference is
//! the clock offset between the sites:
//!
//! ```text
//! t0 = ((t4 - t3) - (t2 - t1)) / 2
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`physics`]: closed-form coincidence widths and per-block deviations.
//! * [`clock`]: clock trajectories and fiber delay drift processes.
//! * [`simulator`]: Monte-Carlo generation of the four time-tag streams.
//! * [`tagfile`]: the binary `QTTF` tag file format.
//! * [`coincidence`]: cross-correlation histograms and Gaussian peak fits.
//! * [`twoway`]: offset series, time deviation and summary statistics.
//! * [`analysis`]: per-block fits of both directions combined into a series.
//! * [`reference`]: slow literal versions of the histogram and TDEV.
//!
//! ```
//! use qttf::physics::{self, FiberSpec, JitterSpec, LinkConfig, SourceSpec};
//!
//! let source = SourceSpec::reference();
//! let link = LinkConfig::new(
//!     FiberSpec::smf(20_000.0),
//!     FiberSpec::dcf(2_490.0),
//! );
//! let sigma = physics::coincidence_sigma(&source, &link).unwrap();
//! let fwhm = physics::observed_fwhm(sigma, &JitterSpec::from_combined_fwhm(70e-12)).unwrap();
//! assert!((fwhm - 88e-12).abs() < 1e-12);
//! ```

// `!(x > 0.0)` style range checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod clock;
pub mod coincidence;
mod error;
pub mod physics;
pub mod reference;
pub mod rng;
pub mod simulator;
pub mod tagfile;
pub mod twoway;

pub use error::{Error, Result};

/// Femtoseconds per second.
pub const FS_PER_S: f64 = 1e15;

/// Converts seconds to the nearest whole femtosecond.
pub fn secs_to_fs(seconds: f64) -> i64 {
    (seconds * FS_PER_S).round() as i64
}

/// Converts femtoseconds to seconds.
pub fn fs_to_secs(fs: i64) -> f64 {
    fs as f64 / FS_PER_S
}
