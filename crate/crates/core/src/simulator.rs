//! Monte-Carlo generation of the four time-tag streams.
//!
//! | channel | photon   | detected at | stamped by |
//! |---------|----------|-------------|------------|
//! | D1      | idler A  | site A      | clock A    |
//! | D2      | signal A | site B      | clock B    |
//! | D3      | idler B  | site B      | clock B    |
//! | D4      | signal B | site A      | clock A    |
//!
//! Pair emission at each source is a homogeneous Poisson process. For every
//! pair whose two photons are both detected, the signal tag trails the idler
//! tag by the differential path delay plus a random spread drawn from the
//! joint spectrum, and each tag carries independent detection jitter. The
//! remaining detections of each channel are uncorrelated. Clocks read
//! `true time + offset`, so with site A's clock ahead by `t0`
//!
//! ```text
//! t2 - t1 = k1·l - k1'·l' - t0
//! t4 - t3 = k1·l - k1'·l' + t0
//! ```
//!
//! All arithmetic after sampling happens in integer femtoseconds.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::{
    ClockModel, ClockTrajectory, Direction, DriftTopology, RealizedTopology, STREAM_CLOCK,
};
use crate::physics::{self, JitterSpec, LinkConfig, SourceSpec};
use crate::rng::{self, BLOCK_STREAM_BASE};
use crate::{secs_to_fs, Error, Result, FS_PER_S};

/// Generating more tags than this in a single block is refused.
pub const MAX_TAGS_PER_BLOCK: f64 = 1e8;

/// Detector channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    D1,
    D2,
    D3,
    D4,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::D1, Channel::D2, Channel::D3, Channel::D4];

    pub fn index(self) -> usize {
        self as usize
    }

    /// 1-based channel number used in tag files.
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Channel::ALL.get((n as usize).checked_sub(1)?).copied()
    }

    /// The (local, remote) channel pair of a transfer direction.
    pub fn pair(direction: Direction) -> (Channel, Channel) {
        match direction {
            Direction::AToB => (Channel::D1, Channel::D2),
            Direction::BToA => (Channel::D3, Channel::D4),
        }
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "D{}", self.number())
    }
}

/// Tags of one acquisition block: femtoseconds since the block epoch, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagBlock {
    /// Whole seconds since the start of the experiment.
    pub epoch: u64,
    pub tags: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagStream {
    pub channel: Channel,
    pub blocks: Vec<TagBlock>,
}

/// Spectral model of the pair sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralModel {
    /// Gaussian differential spread of standard deviation
    /// [`physics::coincidence_sigma`].
    #[default]
    Gaussian,
    /// Detuning drawn from the sinc² joint spectrum, mapped to a differential
    /// delay through the net dispersion, plus the flat-top intrinsic
    /// correlation of width `DL`.
    Sinc,
    /// No differential spread at all.
    Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub source_a: SourceSpec,
    pub source_b: SourceSpec,
    pub link: LinkConfig,
    pub jitter: JitterSpec,
    pub clock_a: ClockModel,
    pub clock_b: ClockModel,
    pub topology: DriftTopology,
    #[serde(default)]
    pub spectral_model: SpectralModel,
    /// Seconds; must be a whole number.
    pub block_duration: f64,
    pub n_blocks: usize,
    /// Uncorrelated counts per second added to every channel.
    pub background_rate: f64,
    /// Timer quantization step, seconds.
    pub timer_resolution: f64,
    pub rng_seed: u64,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        self.source_a.validate()?;
        self.source_b.validate()?;
        self.link.validate()?;
        self.jitter.validate()?;
        if self.n_blocks == 0 {
            return Err(Error::domain("n_blocks must be at least 1"));
        }
        if !(self.block_duration >= 1.0) || self.block_duration.fract() != 0.0 {
            return Err(Error::domain(format!(
                "block_duration must be a positive whole number of seconds, got {}",
                self.block_duration
            )));
        }
        if !(self.background_rate >= 0.0) {
            return Err(Error::domain("background_rate must be non-negative"));
        }
        let res_fs = self.timer_resolution * FS_PER_S;
        if !(res_fs >= 1.0) || (res_fs - res_fs.round()).abs() > 1e-6 {
            return Err(Error::domain(format!(
                "timer_resolution must be a whole number of femtoseconds, got {} s",
                self.timer_resolution
            )));
        }
        let tags = (self.source_a.singles_rate * 2.0
            + self.source_b.singles_rate * 2.0
            + 4.0 * self.background_rate)
            * self.block_duration;
        if tags > MAX_TAGS_PER_BLOCK {
            return Err(Error::Resource(format!(
                "about {tags:.3e} tags per block exceeds the limit of {MAX_TAGS_PER_BLOCK:.0e}; shorten block_duration or lower the rates"
            )));
        }
        Ok(())
    }

    /// Total simulated time.
    pub fn horizon(&self) -> f64 {
        self.block_duration * self.n_blocks as f64
    }
}

/// A detected pair whose two tags both fall inside the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruePair {
    pub local: i64,
    pub remote: i64,
}

/// Output of one block, with the ground-truth pairing when requested.
#[derive(Debug, Clone)]
pub struct SimulatedBlock {
    pub epoch: u64,
    /// Indexed by [`Channel::index`].
    pub tags: [Vec<i64>; 4],
    /// Indexed by direction (A→B, B→A).
    pub pairs: Option<[Vec<TruePair>; 2]>,
}

/// A scenario with its drift and clock processes realized.
#[derive(Debug, Clone)]
pub struct Simulator {
    scenario: SimScenario,
    topology: RealizedTopology,
    clocks: [ClockTrajectory; 2],
    sigma: [f64; 2],
    margin_fs: i64,
}

impl Simulator {
    pub fn new(scenario: &SimScenario) -> Result<Self> {
        scenario.validate()?;
        let step = scenario.block_duration;
        let horizon = scenario.horizon();
        let seed = scenario.rng_seed;
        let topology = scenario.topology.realize(seed, step, horizon);
        let clocks = [
            scenario.clock_a.realize(seed, STREAM_CLOCK, step, horizon),
            scenario
                .clock_b
                .realize(seed, STREAM_CLOCK + 1, step, horizon),
        ];
        let sigma = [
            physics::coincidence_sigma(&scenario.source_a, &scenario.link)?,
            physics::coincidence_sigma(&scenario.source_b, &scenario.link)?,
        ];
        // Emissions are drawn over the block widened by a fixed margin so the
        // number of draws does not depend on the link delays.
        let link = &scenario.link;
        let worst_delay = link.transmission.group_delay().abs()
            + link.compensation.group_delay().abs()
            + (link.k1_asymmetry * link.transmission.length).abs()
            + topology.max_abs_drift()
            + clocks
                .iter()
                .map(|c| c.max_abs_offset(horizon))
                .sum::<f64>();
        let margin = (worst_delay / 10e-3).ceil().max(1.0) * 10e-3;
        Ok(Simulator {
            scenario: scenario.clone(),
            topology,
            clocks,
            sigma,
            margin_fs: secs_to_fs(margin),
        })
    }

    pub fn scenario(&self) -> &SimScenario {
        &self.scenario
    }

    pub fn topology(&self) -> &RealizedTopology {
        &self.topology
    }

    /// Clock offset `t0 = offset_A − offset_B` at time `t`.
    pub fn true_offset(&self, t: f64) -> f64 {
        self.clocks[0].offset_at(t) - self.clocks[1].offset_at(t)
    }

    /// Generates block `index`. Blocks are independent and may be produced
    /// in any order.
    pub fn block(&self, index: usize, record_pairs: bool) -> SimulatedBlock {
        let sc = &self.scenario;
        let epoch = (index as f64 * sc.block_duration) as u64;
        let block_fs = secs_to_fs(sc.block_duration);
        let res_fs = secs_to_fs(sc.timer_resolution);
        let mut rng = rng::stream(sc.rng_seed, BLOCK_STREAM_BASE + index as u64);
        let mut tags: [Vec<i64>; 4] = Default::default();
        let mut pairs: [Vec<TruePair>; 2] = Default::default();
        let jitter_std = sc.jitter.per_tag_std();

        for (site, direction) in [(0usize, Direction::AToB), (1usize, Direction::BToA)] {
            let source = if site == 0 {
                &sc.source_a
            } else {
                &sc.source_b
            };
            let (local, remote) = Channel::pair(direction);
            let (local_clock, remote_clock) = (&self.clocks[site], &self.clocks[1 - site]);

            let window_fs = block_fs + 2 * self.margin_fs;
            let mean_pairs =
                source.singles_rate * source.heralding_efficiency * window_fs as f64 / FS_PER_S;
            for _ in 0..poisson(&mut rng, mean_pairs) {
                let emit_fs = rng.random_range(-self.margin_fs..block_fs + self.margin_fs);
                let spread = self.sample_spread(&mut rng, site);
                let z_local: f64 = rng.sample(StandardNormal);
                let z_remote: f64 = rng.sample(StandardNormal);

                let emit_abs = epoch as f64 + emit_fs as f64 / FS_PER_S;
                let delay = self.topology.path_delay_at(&sc.link, emit_abs, direction);
                let local_true =
                    emit_fs + secs_to_fs(delay.compensation) + secs_to_fs(jitter_std * z_local);
                let remote_true = emit_fs
                    + secs_to_fs(delay.transmission)
                    + secs_to_fs(spread)
                    + secs_to_fs(jitter_std * z_remote);
                let local_tag = quantize(
                    local_true
                        + secs_to_fs(
                            local_clock.offset_at(epoch as f64 + local_true as f64 / FS_PER_S),
                        ),
                    res_fs,
                );
                let remote_tag = quantize(
                    remote_true
                        + secs_to_fs(
                            remote_clock.offset_at(epoch as f64 + remote_true as f64 / FS_PER_S),
                        ),
                    res_fs,
                );
                let in_local = (0..block_fs).contains(&local_tag);
                let in_remote = (0..block_fs).contains(&remote_tag);
                if in_local {
                    tags[local.index()].push(local_tag);
                }
                if in_remote {
                    tags[remote.index()].push(remote_tag);
                }
                if record_pairs && in_local && in_remote {
                    pairs[site].push(TruePair {
                        local: local_tag,
                        remote: remote_tag,
                    });
                }
            }

            let unpaired =
                source.singles_rate * (1.0 - source.heralding_efficiency) + sc.background_rate;
            for channel in [local, remote] {
                let n = poisson(&mut rng, unpaired * sc.block_duration);
                let out = &mut tags[channel.index()];
                out.reserve(n as usize);
                for _ in 0..n {
                    out.push(
                        quantize(rng.random_range(0..block_fs), res_fs).min(block_fs - res_fs),
                    );
                }
            }
        }

        for t in tags.iter_mut() {
            t.sort_unstable();
        }
        SimulatedBlock {
            epoch,
            tags,
            pairs: record_pairs.then_some(pairs),
        }
    }

    fn sample_spread(&self, rng: &mut ChaCha8Rng, site: usize) -> f64 {
        match self.scenario.spectral_model {
            SpectralModel::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                self.sigma[site] * z
            }
            SpectralModel::Sinc => {
                let source = if site == 0 {
                    &self.scenario.source_a
                } else {
                    &self.scenario.source_b
                };
                let dl = source.dl_product;
                let detuning = 2.0 * sample_sinc_squared(rng) / dl;
                let intrinsic = dl * (rng.random::<f64>() - 0.5);
                intrinsic + self.scenario.link.net_dispersion() * detuning
            }
            SpectralModel::Point => 0.0,
        }
    }

    /// Runs every block (in parallel) and assembles the four streams.
    pub fn run(&self) -> [TagStream; 4] {
        let blocks: Vec<SimulatedBlock> = (0..self.scenario.n_blocks)
            .into_par_iter()
            .map(|k| self.block(k, false))
            .collect();
        let mut streams = Channel::ALL.map(|channel| TagStream {
            channel,
            blocks: Vec::with_capacity(blocks.len()),
        });
        for block in blocks {
            for (stream, tags) in streams.iter_mut().zip(block.tags) {
                stream.blocks.push(TagBlock {
                    epoch: block.epoch,
                    tags,
                });
            }
        }
        streams
    }
}

/// Generates the four tag streams of a scenario.
pub fn simulate(scenario: &SimScenario) -> Result<[TagStream; 4]> {
    Ok(Simulator::new(scenario)?.run())
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map_or(0, |d| d.sample(rng) as u64)
}

/// Rounds to the nearest multiple of `step`, halves rounding up.
fn quantize(fs: i64, step: i64) -> i64 {
    (fs + step / 2).div_euclid(step) * step
}

/// Draws `x` with density proportional to `sinc²(x)` by rejection from a
/// Cauchy envelope (`sinc²(x) ≤ 2/(1+x²)`).
fn sample_sinc_squared(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        let x = (std::f64::consts::PI * (u - 0.5)).tan();
        let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
        let accept = sinc * sinc * (1.0 + x * x) / 2.0;
        if rng.random::<f64>() < accept {
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::FiberSpec;

    pub(crate) fn reference_dcf(blocks: usize) -> SimScenario {
        let source = SourceSpec::reference();
        SimScenario {
            source_a: source.clone(),
            source_b: source,
            link: LinkConfig::new(FiberSpec::smf(20_000.0), FiberSpec::dcf(2_490.0)),
            jitter: JitterSpec::from_combined_fwhm(70e-12),
            clock_a: ClockModel::constant(1e-6),
            clock_b: ClockModel::constant(0.0),
            topology: DriftTopology::default(),
            spectral_model: SpectralModel::Gaussian,
            block_duration: 5.0,
            n_blocks: blocks,
            background_rate: 0.0,
            timer_resolution: 1e-12,
            rng_seed: 2019,
        }
    }

    #[test]
    fn channel_numbers() {
        for c in Channel::ALL {
            assert_eq!(Channel::from_number(c.number()), Some(c));
        }
        assert_eq!(Channel::from_number(0), None);
        assert_eq!(Channel::from_number(5), None);
        assert_eq!(Channel::D3.to_string(), "D3");
    }

    #[test]
    fn quantize_rounds_to_nearest() {
        assert_eq!(quantize(1499, 1000), 1000);
        assert_eq!(quantize(1500, 1000), 2000);
        assert_eq!(quantize(-1499, 1000), -1000);
        assert_eq!(quantize(-1501, 1000), -2000);
    }

    #[test]
    fn about_thirty_thousand_tags_per_channel() {
        let sim = Simulator::new(&reference_dcf(1)).unwrap();
        let block = sim.block(0, false);
        for (i, tags) in block.tags.iter().enumerate() {
            assert!(
                (tags.len() as f64 - 30_000.0).abs() < 5.0 * 30_000f64.sqrt(),
                "D{}: {}",
                i + 1,
                tags.len()
            );
            assert!(tags.windows(2).all(|w| w[0] <= w[1]));
            assert!(tags
                .iter()
                .all(|&t| (0..5_000_000_000_000_000).contains(&t)));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let sc = reference_dcf(3);
        let a = simulate(&sc).unwrap();
        let b = simulate(&sc).unwrap();
        assert_eq!(a, b);
        let mut other = sc.clone();
        other.rng_seed += 1;
        assert_ne!(simulate(&other).unwrap()[0], a[0]);
    }

    #[test]
    fn noiseless_pairs_have_exact_delay() {
        let mut sc = reference_dcf(1);
        sc.jitter = JitterSpec::none();
        sc.spectral_model = SpectralModel::Point;
        sc.clock_a = ClockModel::constant(0.0);
        let sim = Simulator::new(&sc).unwrap();
        let block = sim.block(0, true);
        let expected = secs_to_fs(sc.link.differential_delay());
        let pairs = block.pairs.unwrap();
        assert!(pairs[0].len() > 1000);
        for dir in &pairs {
            for p in dir {
                assert_eq!(p.remote - p.local, expected);
            }
        }
    }

    #[test]
    fn clock_offset_signs() {
        let mut sc = reference_dcf(1);
        sc.jitter = JitterSpec::none();
        sc.spectral_model = SpectralModel::Point;
        let sim = Simulator::new(&sc).unwrap();
        let pairs = sim.block(0, true).pairs.unwrap();
        let d = secs_to_fs(sc.link.differential_delay());
        let t0 = secs_to_fs(1e-6);
        assert!(pairs[0].iter().all(|p| p.remote - p.local == d - t0));
        assert!(pairs[1].iter().all(|p| p.remote - p.local == d + t0));
    }

    #[test]
    fn pair_spread_matches_closed_form() {
        // Sample moments of true pair differences against the closed form.
        let mut sc = reference_dcf(2);
        sc.source_a.singles_rate = 100_000.0;
        sc.source_a.heralding_efficiency = 1.0;
        sc.source_b = sc.source_a.clone();
        let sim = Simulator::new(&sc).unwrap();
        let mut diffs = Vec::new();
        for k in 0..sc.n_blocks {
            for dir in sim.block(k, true).pairs.unwrap() {
                diffs.extend(dir.iter().map(|p| (p.remote - p.local) as f64));
            }
        }
        assert!(diffs.len() > 1_000_000, "{}", diffs.len());
        // Directions differ in mean by 2 t0; remove each mean separately by
        // centering on the two known offsets.
        let d = secs_to_fs(sc.link.differential_delay()) as f64;
        let t0 = 1e9;
        let var: f64 = diffs
            .iter()
            .map(|&x| {
                let c = if (x - (d - t0)).abs() < (x - (d + t0)).abs() {
                    d - t0
                } else {
                    d + t0
                };
                (x - c) * (x - c)
            })
            .sum::<f64>()
            / diffs.len() as f64;
        let sigma = physics::coincidence_sigma(&sc.source_a, &sc.link).unwrap();
        let expected = physics::sd_numerator(sigma, &sc.jitter) * FS_PER_S;
        let got = var.sqrt();
        assert!(
            ((got - expected) / expected).abs() < 0.01,
            "{got} vs {expected}"
        );
    }

    #[test]
    fn sinc_mode_core_width() {
        let mut sc = reference_dcf(1);
        sc.spectral_model = SpectralModel::Sinc;
        sc.jitter = JitterSpec::none();
        sc.link.compensation.length = 0.0;
        sc.source_a.heralding_efficiency = 1.0;
        sc.source_a.singles_rate = 50_000.0;
        let sim = Simulator::new(&sc).unwrap();
        let pairs = &sim.block(0, true).pairs.unwrap()[0];
        let d = secs_to_fs(sc.link.differential_delay() - 1e-6) as f64;
        let mut dev: Vec<f64> = pairs
            .iter()
            .map(|p| ((p.remote - p.local) as f64 - d).abs())
            .collect();
        dev.sort_by(f64::total_cmp);
        // Half width at half maximum of the Gaussian approximation.
        let sigma = physics::coincidence_sigma(&sc.source_a, &sc.link).unwrap() * FS_PER_S;
        let median = dev[dev.len() / 2];
        // Median |x| of a Gaussian is 0.674σ; the sinc² shape has heavier
        // tails but a comparable core.
        assert!(
            median > 0.4 * sigma && median < 1.0 * sigma,
            "{median} vs {sigma}"
        );
    }

    #[test]
    fn rejects_invalid_scenarios() {
        let mut sc = reference_dcf(0);
        assert!(matches!(Simulator::new(&sc), Err(Error::Domain(_))));
        sc.n_blocks = 1;
        sc.block_duration = 2.5;
        assert!(Simulator::new(&sc).is_err());
        sc.block_duration = 5.0;
        sc.source_a.singles_rate = 1e8;
        assert!(matches!(Simulator::new(&sc), Err(Error::Resource(_))));
    }
}
