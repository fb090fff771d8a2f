//! Clock-offset series and stability statistics.
//!
//! The two directional registration differences of a block combine into the
//! clock offset
//!
//! ```text
//! t0 = (t43 - t21) / 2
//! ```
//!
//! Positive `t0` means clock A is ahead of clock B. Any delay common to both
//! directions cancels.
//!
//! ```
//! use qttf::coincidence::CoincidenceFit;
//! use qttf::twoway::{combine, BlockEstimate};
//!
//! let fit = |center| CoincidenceFit {
//!     center,
//!     fwhm: 88e-12,
//!     amplitude: 16.0,
//!     n_coincidences: 1468.0,
//!     background_level: 0.0,
//!     center_std_error: 1e-12,
//!     fit_rms_residual: 0.0,
//! };
//! let d = 85.6239e-6;
//! let ab = [BlockEstimate { epoch: 0, fit: fit(d - 1e-6) }];
//! let ba = [BlockEstimate { epoch: 0, fit: fit(d + 1e-6) }];
//! let series = combine(&ab, &ba, 5.0).unwrap();
//! assert!((series.records[0].t0 - 1e-6).abs() < 1e-18);
//! ```

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coincidence::CoincidenceFit;
use crate::{Error, Result, FS_PER_S};

/// Peak fit of one block in one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEstimate {
    pub epoch: u64,
    pub fit: CoincidenceFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetRecord {
    pub epoch: u64,
    /// Seconds.
    pub t21: f64,
    pub t43: f64,
    pub t0: f64,
    pub se_t0: f64,
    pub n_coinc_ab: f64,
    pub n_coinc_ba: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetSeries {
    /// Seconds per block.
    pub block_duration: f64,
    pub records: Vec<OffsetRecord>,
}

impl OffsetSeries {
    pub fn t0(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t0).collect()
    }

    pub fn t21(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t21).collect()
    }

    pub fn t43(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t43).collect()
    }

    pub fn epochs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.epoch as f64).collect()
    }

    /// Writes `epoch_s,t21_fs,t43_fs,t0_fs,se_fs` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch_s", "t21_fs", "t43_fs", "t0_fs", "se_fs"])?;
        for r in &self.records {
            out.write_record([
                r.epoch.to_string(),
                format!("{:.3}", r.t21 * FS_PER_S),
                format!("{:.3}", r.t43 * FS_PER_S),
                format!("{:.3}", r.t0 * FS_PER_S),
                format!("{:.3}", r.se_t0 * FS_PER_S),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Pairs the two directional series by epoch. Every epoch must appear in
/// both; the error lists those that do not.
pub fn combine(
    ab: &[BlockEstimate],
    ba: &[BlockEstimate],
    block_duration: f64,
) -> Result<OffsetSeries> {
    if !(block_duration > 0.0) {
        return Err(Error::domain("block_duration must be positive"));
    }
    let mut by_epoch: BTreeMap<u64, (Option<&CoincidenceFit>, Option<&CoincidenceFit>)> =
        BTreeMap::new();
    let mut duplicates = Vec::new();
    for e in ab {
        let slot = &mut by_epoch.entry(e.epoch).or_default().0;
        if slot.replace(&e.fit).is_some() {
            duplicates.push(e.epoch);
        }
    }
    for e in ba {
        let slot = &mut by_epoch.entry(e.epoch).or_default().1;
        if slot.replace(&e.fit).is_some() {
            duplicates.push(e.epoch);
        }
    }
    let mut bad: Vec<u64> = by_epoch
        .iter()
        .filter(|(_, (a, b))| a.is_none() || b.is_none())
        .map(|(&e, _)| e)
        .chain(duplicates)
        .collect();
    if !bad.is_empty() {
        bad.sort_unstable();
        bad.dedup();
        return Err(Error::Alignment { epochs: bad });
    }
    let records = by_epoch
        .into_iter()
        .map(|(epoch, (a, b))| {
            let (a, b) = (a.unwrap(), b.unwrap());
            OffsetRecord {
                epoch,
                t21: a.center,
                t43: b.center,
                t0: (b.center - a.center) / 2.0,
                se_t0: 0.5 * a.center_std_error.hypot(b.center_std_error),
                n_coinc_ab: a.n_coincidences,
                n_coinc_ba: b.n_coincidences,
            }
        })
        .collect();
    Ok(OffsetSeries {
        block_duration,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TdevEstimator {
    #[default]
    Overlapping,
    NonOverlapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCurve {
    pub estimator: TdevEstimator,
    /// Seconds.
    pub taus: Vec<f64>,
    /// Seconds.
    pub tdev: Vec<f64>,
    pub adev: Vec<f64>,
    /// Whole-series standard deviation, seconds.
    pub sd: f64,
    pub mean: f64,
    /// One entry per requested averaging factor that had too little data.
    pub warnings: Vec<String>,
}

impl StabilityCurve {
    /// TDEV at averaging factor `m`, if it was evaluated.
    pub fn tdev_at(&self, tau: f64) -> Option<f64> {
        self.taus
            .iter()
            .position(|&t| (t - tau).abs() <= 1e-9 * tau)
            .map(|i| self.tdev[i])
    }

    /// Writes `tau_s,tdev_fs,adev` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["tau_s", "tdev_fs", "adev"])?;
        for i in 0..self.taus.len() {
            out.write_record([
                self.taus[i].to_string(),
                format!("{:.6}", self.tdev[i] * FS_PER_S),
                format!("{:e}", self.adev[i]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Averaging factors 1, 2, 4, … usable on a series of `n` points.
pub fn octave_factors(n: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |m| m.checked_mul(2))
        .take_while(|&m| 3 * m <= n)
        .collect()
}

/// Time deviation of the phase samples `x` (spacing `tau0`) at averaging
/// factors `ms`:
///
/// ```text
/// TDEV(m·tau0)² = ⟨(x̄[i+2m] − 2·x̄[i+m] + x̄[i])²⟩ / 6
/// ```
///
/// where `x̄[i]` is the mean of `x[i..i+m]`. The overlapping estimator
/// averages over every start `i`, the non-overlapping one over `i = 0, m,
/// 2m, …`. Factors needing more than `x.len()` points are skipped with a
/// warning.
pub fn tdev(x: &[f64], tau0: f64, ms: &[usize], estimator: TdevEstimator) -> StabilityCurve {
    let n = x.len();
    let mean = if n == 0 {
        0.0
    } else {
        x.iter().sum::<f64>() / n as f64
    };
    let sd = std_dev(x, mean);

    // Prefix sums of the mean-removed series keep the cancellation benign.
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in x {
        acc += v - mean;
        prefix.push(acc);
    }

    let mut curve = StabilityCurve {
        estimator,
        taus: Vec::new(),
        tdev: Vec::new(),
        adev: Vec::new(),
        sd,
        mean,
        warnings: Vec::new(),
    };
    for &m in ms {
        if m == 0 || 3 * m > n {
            curve.warnings.push(format!(
                "tau = {} s omitted: needs {} points, have {n}",
                m as f64 * tau0,
                3 * m
            ));
            continue;
        }
        let avg = |i: usize| (prefix[i + m] - prefix[i]) / m as f64;
        let stride = match estimator {
            TdevEstimator::Overlapping => 1,
            TdevEstimator::NonOverlapping => m,
        };
        let (mut sum, mut count) = (0.0, 0usize);
        for i in (0..=n - 3 * m).step_by(stride) {
            let d = avg(i + 2 * m) - 2.0 * avg(i + m) + avg(i);
            sum += d * d;
            count += 1;
        }
        let tau = m as f64 * tau0;
        let t = (sum / count as f64 / 6.0).sqrt();
        curve.taus.push(tau);
        curve.tdev.push(t);
        curve.adev.push(t * 3f64.sqrt() / tau);
    }
    curve
}

/// Overlapping TDEV of the `t0` series on the octave grid.
pub fn stability(series: &OffsetSeries) -> StabilityCurve {
    let x = series.t0();
    tdev(
        &x,
        series.block_duration,
        &octave_factors(x.len()),
        TdevEstimator::Overlapping,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single point.
    pub sd: f64,
    /// Least-squares slope of `t0` against epoch, seconds per second.
    pub drift_slope: f64,
}

pub fn summarize(series: &OffsetSeries) -> Summary {
    let x = series.t0();
    let mean = if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    };
    Summary {
        mean,
        sd: std_dev(&x, mean),
        drift_slope: linear_fit(&series.epochs(), &x, None).slope,
    }
}

fn std_dev(x: &[f64], mean: f64) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
}

/// Straight-line least squares.
///
/// With `sigmas`, points are weighted by `1/σ²` and the slope error follows
/// from those known uncertainties. Without, the error comes from the
/// residual scatter. Fewer than two distinct abscissae give a zero slope
/// with infinite error.
pub fn linear_fit(x: &[f64], y: &[f64], sigmas: Option<&[f64]>) -> LinearFit {
    assert_eq!(x.len(), y.len(), "x and y lengths differ");
    let w: Vec<f64> = match sigmas {
        Some(s) => s.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; x.len()],
    };
    let sw: f64 = w.iter().sum();
    let flat = |intercept| LinearFit {
        slope: 0.0,
        intercept,
        slope_std_error: f64::INFINITY,
    };
    if x.is_empty() || sw <= 0.0 {
        return flat(0.0);
    }
    let xm = x.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(x, w)| w * (x - xm).powi(2)).sum();
    if sxx <= 0.0 {
        return flat(ym);
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((x, y), w)| w * (x - xm) * (y - ym))
        .sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let slope_std_error = if sigmas.is_some() {
        (1.0 / sxx).sqrt()
    } else if x.len() > 2 {
        let ssr: f64 = x
            .iter()
            .zip(y)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (ssr / (x.len() - 2) as f64 / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    LinearFit {
        slope,
        intercept,
        slope_std_error,
    }
}
