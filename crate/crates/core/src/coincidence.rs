//! Cross-correlation histograms and Gaussian peak fits.
//!
//! [`correlate`] histograms the differences `b − a` in two passes: a coarse
//! pass over the whole search span finds the peak, then a fine pass
//! re-histograms a narrow window around it. Both use a sorted two-pointer
//! sweep, so the cost is linear in the number of tags plus the number of
//! pairs that land in the histogram. [`fit_peak`] fits a Gaussian on a flat
//! background to the fine histogram.

use std::io::Write;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::physics::FWHM_PER_SIGMA;
use crate::{secs_to_fs, Error, Result, FS_PER_S};

/// Family-wise false-alarm probability of the coarse peak search (5σ, one
/// sided).
const PEAK_FALSE_ALARM: f64 = 2.87e-7;

const FIT_MAX_ITERATIONS: usize = 200;
const FIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    /// Seconds.
    pub coarse_bin: f64,
    /// Seconds.
    pub fine_bin: f64,
    /// Half-width of the coarse search, seconds.
    pub search_span: f64,
    /// Half-width of the fine window around the coarse peak, seconds.
    pub fine_window: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec {
            coarse_bin: 1e-9,
            fine_bin: 1e-12,
            search_span: 1e-3,
            fine_window: 10e-9,
        }
    }
}

impl HistogramSpec {
    /// Default bins with the fine window set to ten times the expected peak
    /// FWHM, but never narrower than two coarse bins.
    pub fn for_expected_fwhm(fwhm: f64) -> Self {
        let d = HistogramSpec::default();
        HistogramSpec {
            fine_window: (10.0 * fwhm).max(2.0 * d.coarse_bin),
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_positive = [
            self.coarse_bin,
            self.fine_bin,
            self.search_span,
            self.fine_window,
        ]
        .iter()
        .all(|&v| v.is_finite() && v > 0.0);
        if !all_positive {
            return Err(Error::domain("histogram bins and spans must be positive"));
        }
        if secs_to_fs(self.fine_bin) < 2 {
            return Err(Error::domain("fine_bin must be at least 2 fs"));
        }
        if !(self.fine_bin <= self.coarse_bin && self.coarse_bin <= self.search_span) {
            return Err(Error::domain("need fine_bin <= coarse_bin <= search_span"));
        }
        if self.fine_window < self.fine_bin {
            return Err(Error::domain("fine_window must be at least one fine bin"));
        }
        Ok(())
    }
}

/// Equal-width histogram of tag differences. Bin `j` is centered on
/// `first_center_fs + j·bin_width_fs` and covers `[center − w/2, center + w/2)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub first_center_fs: i64,
    pub bin_width_fs: i64,
    pub counts: Vec<u32>,
}

impl Histogram {
    /// `2·half_bins + 1` bins centered on `center_fs`.
    pub fn centered(center_fs: i64, bin_width_fs: i64, half_bins: usize) -> Self {
        Histogram {
            first_center_fs: center_fs - half_bins as i64 * bin_width_fs,
            bin_width_fs,
            counts: vec![0; 2 * half_bins + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn lower_edge_fs(&self) -> i64 {
        self.first_center_fs - self.bin_width_fs / 2
    }

    pub fn upper_edge_fs(&self) -> i64 {
        self.lower_edge_fs() + self.counts.len() as i64 * self.bin_width_fs
    }

    pub fn bin_center_fs(&self, j: usize) -> i64 {
        self.first_center_fs + j as i64 * self.bin_width_fs
    }

    /// Bin holding difference `d`, if any.
    pub fn bin_of(&self, d: i64) -> Option<usize> {
        if d < self.lower_edge_fs() || d >= self.upper_edge_fs() {
            return None;
        }
        Some(((d - self.lower_edge_fs()) / self.bin_width_fs) as usize)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Adds every difference `b[j] − a[i]` that falls inside the histogram.
    /// Both slices must be sorted.
    pub fn accumulate(&mut self, a: &[i64], b: &[i64]) {
        let (lo_edge, hi_edge, w) = (
            self.lower_edge_fs(),
            self.upper_edge_fs(),
            self.bin_width_fs,
        );
        let mut start = 0;
        for &ta in a {
            while start < b.len() && b[start] - ta < lo_edge {
                start += 1;
            }
            for &tb in &b[start..] {
                let d = tb - ta;
                if d >= hi_edge {
                    break;
                }
                self.counts[((d - lo_edge) / w) as usize] += 1;
            }
        }
    }

    /// Writes `bin_center_fs,counts` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin_center_fs", "counts"])?;
        for (j, c) in self.counts.iter().enumerate() {
            out.write_record([self.bin_center_fs(j).to_string(), c.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Result of the two-stage correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub coarse: Histogram,
    pub fine: Histogram,
    /// Index of the coarse peak bin.
    pub peak_bin: usize,
    /// Mean coarse-bin count away from the peak.
    pub background: f64,
}

/// Two-stage cross-correlation of sorted tag lists `a` (local) and `b`
/// (remote), histogramming `b − a`.
pub fn correlate(a: &[i64], b: &[i64], spec: &HistogramSpec) -> Result<Correlation> {
    spec.validate()?;
    if a.is_empty() {
        return Err(Error::EmptyHistogram("first tag list is empty"));
    }
    if b.is_empty() {
        return Err(Error::EmptyHistogram("second tag list is empty"));
    }
    let coarse_w = secs_to_fs(spec.coarse_bin);
    let coarse_half = (spec.search_span / spec.coarse_bin).ceil() as usize;
    let mut coarse = Histogram::centered(0, coarse_w, coarse_half);
    coarse.accumulate(a, b);

    let peak_bin = find_peak(&coarse.counts);
    let peak = coarse.counts[peak_bin];
    let guard = peak_bin.saturating_sub(2)..(peak_bin + 3).min(coarse.len());
    let near: u64 = coarse.counts[guard.clone()].iter().map(|&c| c as u64).sum();
    let outside_bins = coarse.len() - guard.len();
    let background = if outside_bins == 0 {
        0.0
    } else {
        (coarse.total() - near) as f64 / outside_bins as f64
    };
    if !is_significant(peak, background, coarse.len()) {
        return Err(Error::NoPeak { peak, background });
    }

    let fine_w = secs_to_fs(spec.fine_bin);
    let fine_half = (spec.fine_window / spec.fine_bin).ceil() as usize;
    let mut fine = Histogram::centered(coarse.bin_center_fs(peak_bin), fine_w, fine_half);
    fine.accumulate(a, b);

    Ok(Correlation {
        coarse,
        fine,
        peak_bin,
        background,
    })
}

/// Largest bin; ties go to the larger ±2-bin neighbourhood sum, then to the
/// lower index.
fn find_peak(counts: &[u32]) -> usize {
    let max = counts.iter().copied().max().unwrap_or(0);
    let neighbourhood = |j: usize| -> u64 {
        counts[j.saturating_sub(2)..(j + 3).min(counts.len())]
            .iter()
            .map(|&c| c as u64)
            .sum()
    };
    let mut best = None::<(usize, u64)>;
    for (j, &c) in counts.iter().enumerate() {
        if c == max {
            let s = neighbourhood(j);
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((j, s));
            }
        }
    }
    best.map_or(0, |(j, _)| j)
}

/// A bin is a peak if it exceeds the background by 5 Poisson standard
/// deviations and its Poisson tail probability, corrected for the number of
/// bins searched, is below the 5σ false-alarm level.
fn is_significant(k: u32, background: f64, n_bins: usize) -> bool {
    if k == 0 {
        return false;
    }
    if background <= 0.0 {
        return true;
    }
    if (k as f64) <= background + 5.0 * background.sqrt() {
        return false;
    }
    poisson_log_sf(k, background) + (n_bins as f64).ln() < PEAK_FALSE_ALARM.ln()
}

/// `ln P(X ≥ k)` for `X ~ Poisson(mu)`, valid for `k > mu`.
fn poisson_log_sf(k: u32, mu: f64) -> f64 {
    // Sum the tail terms relative to the first one; they decay at least
    // geometrically once past the mean.
    let ln_first = k as f64 * mu.ln() - mu - ln_factorial(k);
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut j = k as f64;
    loop {
        j += 1.0;
        term *= mu / j;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    ln_first + sum.ln()
}

fn ln_factorial(k: u32) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// Fitted coincidence peak. Times are seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceFit {
    /// Peak position: the registration time difference `b − a`.
    pub center: f64,
    pub fwhm: f64,
    /// Counts per bin at the peak, above background.
    pub amplitude: f64,
    /// Background-subtracted counts within ±3σ of the center.
    pub n_coincidences: f64,
    /// Counts per bin.
    pub background_level: f64,
    pub center_std_error: f64,
    /// Counts per bin.
    pub fit_rms_residual: f64,
}

impl CoincidenceFit {
    pub fn sigma(&self) -> f64 {
        self.fwhm / FWHM_PER_SIGMA
    }
}

/// Least-squares fit of `A·exp(−(x−μ)²/2s²) + B` to a histogram.
pub fn fit_peak(hist: &Histogram) -> Result<CoincidenceFit> {
    if hist.total() == 0 {
        return Err(Error::EmptyHistogram("no counts to fit"));
    }
    // Work in picoseconds relative to the middle of the window.
    let origin = hist.bin_center_fs(hist.len() / 2);
    let x: Vec<f64> = (0..hist.len())
        .map(|j| (hist.bin_center_fs(j) - origin) as f64 / 1e3)
        .collect();
    let y: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let bin_ps = hist.bin_width_fs as f64 / 1e3;

    let guess = moment_guess(&x, &y, bin_ps);
    let to_fit = |p: &Vector4<f64>| summarize_fit(&x, &y, p, origin, bin_ps);

    match levenberg_marquardt(&x, &y, guess, bin_ps) {
        Ok(p) => Ok(to_fit(&p)),
        Err(iterations) => Err(Error::FitNotConverged {
            iterations,
            fallback: Box::new(to_fit(&guess)),
        }),
    }
}

/// Correlates one block and fits its fine histogram.
pub fn block_offset(a: &[i64], b: &[i64], spec: &HistogramSpec) -> Result<CoincidenceFit> {
    fit_peak(&correlate(a, b, spec)?.fine)
}

fn gaussian(x: f64, p: &Vector4<f64>) -> f64 {
    let z = (x - p[1]) / p[2];
    p[0] * (-0.5 * z * z).exp()
}

fn sse(x: &[f64], y: &[f64], p: &Vector4<f64>) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - gaussian(xi, p) - p[3];
            r * r
        })
        .sum()
}

/// Background from the outer fifth of the window on each side, then
/// amplitude, center and width from the excess around the highest bin.
fn moment_guess(x: &[f64], y: &[f64], bin_ps: f64) -> Vector4<f64> {
    let n = y.len();
    let edge = (n / 5).max(1).min(n);
    let edge_sum: f64 = y[..edge].iter().chain(&y[n - edge..]).sum();
    let background = edge_sum / (2 * edge) as f64;
    let excess: Vec<f64> = y.iter().map(|v| v - background).collect();

    let jmax = (0..n)
        .max_by(|&i, &j| excess[i].total_cmp(&excess[j]).then(j.cmp(&i)))
        .unwrap_or(0);
    let amplitude = excess[jmax].max(1e-9);
    let area: f64 = excess.iter().sum::<f64>().max(amplitude);
    let width = (area / (amplitude * (2.0 * std::f64::consts::PI).sqrt())).max(bin_ps);

    let lo = x[jmax] - 3.0 * width;
    let hi = x[jmax] + 3.0 * width;
    let (mut w0, mut w1, mut w2) = (0.0, 0.0, 0.0);
    for (&xi, &e) in x.iter().zip(&excess) {
        if xi >= lo && xi <= hi && e > 0.0 {
            w0 += e;
            w1 += e * xi;
            w2 += e * xi * xi;
        }
    }
    let (center, sigma) = if w0 > 0.0 {
        let m = w1 / w0;
        (m, (w2 / w0 - m * m).max(0.0).sqrt().max(bin_ps / 2.0))
    } else {
        (x[jmax], width)
    };
    Vector4::new(amplitude, center, sigma, background)
}

/// Returns the converged parameters, or the iteration count on failure.
fn levenberg_marquardt(
    x: &[f64],
    y: &[f64],
    start: Vector4<f64>,
    bin_ps: f64,
) -> std::result::Result<Vector4<f64>, usize> {
    let mut p = start;
    let mut cost = sse(x, y, &p);
    let mut lambda = 1e-3;
    for iteration in 1..=FIT_MAX_ITERATIONS {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (&xi, &yi) in x.iter().zip(y) {
            let dx = xi - p[1];
            let s2 = p[2] * p[2];
            let e = (-0.5 * dx * dx / s2).exp();
            let g = p[0] * e;
            let j = Vector4::new(e, g * dx / s2, g * dx * dx / (s2 * p[2]), 1.0);
            jtj += j * j.transpose();
            jtr += j * (yi - g - p[3]);
        }
        loop {
            let mut damped = jtj;
            for k in 0..4 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                if lambda > 1e12 {
                    return Err(iteration);
                }
                continue;
            };
            let trial = p + step;
            let trial_cost = if trial[2] > 0.0 && trial.iter().all(|v| v.is_finite()) {
                sse(x, y, &trial)
            } else {
                f64::INFINITY
            };
            if trial_cost <= cost {
                let scale = [p[0].abs(), p[2], p[2], p[0].abs()];
                let converged = step
                    .iter()
                    .zip(scale)
                    .all(|(d, s)| d.abs() <= FIT_TOLERANCE * s.max(bin_ps * 1e-3));
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                if converged {
                    return Ok(p);
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                // No descent direction left: already at the minimum.
                return Ok(p);
            }
        }
    }
    Err(FIT_MAX_ITERATIONS)
}

fn summarize_fit(
    x: &[f64],
    y: &[f64],
    p: &Vector4<f64>,
    origin_fs: i64,
    bin_ps: f64,
) -> CoincidenceFit {
    let (amplitude, mu, sigma, background) = (p[0], p[1], p[2].abs(), p[3]);
    let n: f64 = x
        .iter()
        .zip(y)
        .filter(|(&xi, _)| (xi - mu).abs() <= 3.0 * sigma)
        .map(|(_, &yi)| yi - background)
        .sum::<f64>()
        .max(0.0);
    let rms = (sse(x, y, p) / x.len() as f64).sqrt();
    let sigma_s = sigma * 1e-12;
    CoincidenceFit {
        center: origin_fs as f64 / FS_PER_S + mu * 1e-12,
        fwhm: FWHM_PER_SIGMA * sigma_s.max(bin_ps * 1e-12 * 1e-6),
        amplitude,
        n_coincidences: n,
        background_level: background,
        center_std_error: if n > 0.0 {
            sigma_s / n.sqrt()
        } else {
            f64::INFINITY
        },
        fit_rms_residual: rms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(amplitude: f64, center_ps: f64, sigma_ps: f64, background: f64) -> Histogram {
        let mut h = Histogram::centered(0, 1000, 400);
        for j in 0..h.len() {
            let x = h.bin_center_fs(j) as f64 / 1e3;
            let z = (x - center_ps) / sigma_ps;
            h.counts[j] = (amplitude * (-0.5 * z * z).exp() + background).round() as u32;
        }
        h
    }

    #[test]
    fn bins_are_half_open() {
        let h = Histogram::centered(0, 1000, 2);
        assert_eq!(h.lower_edge_fs(), -2500);
        assert_eq!(h.upper_edge_fs(), 2500);
        assert_eq!(h.bin_of(-2500), Some(0));
        assert_eq!(h.bin_of(-1501), Some(0));
        assert_eq!(h.bin_of(-1500), Some(1));
        assert_eq!(h.bin_of(2499), Some(4));
        assert_eq!(h.bin_of(2500), None);
    }

    #[test]
    fn accumulate_simple() {
        let mut h = Histogram::centered(0, 1000, 3);
        h.accumulate(&[0, 10_000], &[1_000, 9_000, 12_900]);
        // 1000, 9000, 12900, -9000, -1000, 2900
        assert_eq!(h.counts, vec![0, 0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn one_pair_case() {
        let c = correlate(&[0], &[100_000], &HistogramSpec::default()).unwrap();
        assert_eq!(c.coarse.total(), 1);
        assert_eq!(c.fine.total(), 1);
        let j = c.fine.counts.iter().position(|&v| v == 1).unwrap();
        assert_eq!(c.fine.bin_center_fs(j), 100_000);
    }

    #[test]
    fn empty_inputs() {
        let spec = HistogramSpec::default();
        assert!(matches!(
            correlate(&[], &[1], &spec),
            Err(Error::EmptyHistogram(_))
        ));
        assert!(matches!(
            correlate(&[1], &[], &spec),
            Err(Error::EmptyHistogram(_))
        ));
    }

    #[test]
    fn spec_validation() {
        let bad = HistogramSpec {
            fine_bin: 2e-9,
            ..HistogramSpec::default()
        };
        assert!(bad.validate().is_err());
        assert!(HistogramSpec::for_expected_fwhm(88e-12).validate().is_ok());
        assert!((HistogramSpec::for_expected_fwhm(789e-12).fine_window - 7.89e-9).abs() < 1e-15);
    }

    #[test]
    fn tie_break_prefers_heavier_neighbourhood() {
        assert_eq!(find_peak(&[5, 0, 0, 0, 0, 0, 4, 5, 0]), 7);
        assert_eq!(find_peak(&[5, 0, 0, 0, 5]), 0);
    }

    #[test]
    fn poisson_tail() {
        // P(X >= 3 | 0.5) = 1 - e^-0.5 (1 + 0.5 + 0.125)
        let exact = 1.0 - (-0.5f64).exp() * 1.625;
        assert!((poisson_log_sf(3, 0.5) - exact.ln()).abs() < 1e-12);
        // P(X >= 1 | mu) = 1 - e^-mu
        assert!((poisson_log_sf(1, 2.0) - (1.0 - (-2.0f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn noiseless_gaussian_recovered() {
        let h = synthetic(100.0, 37.0, 30.0, 0.0);
        // Fit the unrounded curve to isolate the estimator from rounding.
        let x: Vec<f64> = (0..h.len())
            .map(|j| h.bin_center_fs(j) as f64 / 1e3)
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&x| 100.0 * (-0.5 * ((x - 37.0) / 30.0).powi(2)).exp())
            .collect();
        let p = levenberg_marquardt(&x, &y, moment_guess(&x, &y, 1.0), 1.0).unwrap();
        assert!((p[0] - 100.0).abs() < 0.1);
        assert!((p[1] - 37.0).abs() < 0.037);
        assert!((p[2] - 30.0).abs() < 0.03);
        assert!(p[3].abs() < 1e-3);
        let fit = fit_peak(&h).unwrap();
        assert!((fit.center - 37e-12).abs() < 0.037e-12);
        assert!((fit.fwhm - 2.355 * 30e-12).abs() < 0.01 * 2.355 * 30e-12);
    }

    #[test]
    fn background_does_not_bias_center() {
        let h = synthetic(50.0, -12.0, 20.0, 7.0);
        let fit = fit_peak(&h).unwrap();
        assert!((fit.center + 12e-12).abs() < 0.05e-12);
        assert!((fit.background_level - 7.0).abs() < 0.05);
        // Area of a Gaussian within ±3σ.
        let expected = 50.0 * 20.0 * (2.0 * std::f64::consts::PI).sqrt() * 0.9973;
        assert!((fit.n_coincidences - expected).abs() < 0.02 * expected);
        assert!((fit.center_std_error - fit.sigma() / fit.n_coincidences.sqrt()).abs() < 1e-18);
    }

    #[test]
    fn empty_fit() {
        let h = Histogram::centered(0, 1000, 5);
        assert!(matches!(fit_peak(&h), Err(Error::EmptyHistogram(_))));
    }

    #[test]
    fn csv_export() {
        let mut h = Histogram::centered(0, 1000, 1);
        h.counts = vec![1, 2, 3];
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "bin_center_fs,counts\n-1000,1\n0,2\n1000,3\n"
        );
    }
}
