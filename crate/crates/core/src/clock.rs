//! Clock trajectories and fiber delay drift.
//!
//! Stochastic processes are realized once per run on a regular grid (one
//! sample per acquisition block) and linearly interpolated afterwards, so a
//! realization is an immutable value that many blocks can read concurrently.
//!
//! Drift in the transmission fiber is common mode: both directions cross the
//! same glass and see the same delay at the same instant. Drift in the
//! compensation spools depends on how the spools are arranged, see
//! [`DcfCorrelation`].

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::physics::LinkConfig;
use crate::rng;

/// Temperature coefficient of fiber delay, s/(K·m). About 38 ps per kelvin
/// per kilometer, typical for silica fiber. Not a measured property of any
/// particular link.
pub const DEFAULT_TEMPERATURE_COEFFICIENT: f64 = 3.8e-14;

/// Local clock of one site. The clock reads `true time + offset(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    /// Offset at `epoch`, seconds.
    pub initial_offset: f64,
    /// Fractional frequency offset, s/s.
    pub frequency_offset: f64,
    /// Phase random-walk coefficient, s/√s. Zero disables the walk.
    pub random_walk_coefficient: f64,
    /// Seconds since experiment start.
    pub epoch: f64,
}

impl ClockModel {
    pub fn constant(offset: f64) -> Self {
        ClockModel {
            initial_offset: offset,
            frequency_offset: 0.0,
            random_walk_coefficient: 0.0,
            epoch: 0.0,
        }
    }

    /// Draws the random-walk part on a grid of `step` seconds covering
    /// `[epoch, epoch + horizon]`.
    pub fn realize(&self, seed: u64, stream: u64, step: f64, horizon: f64) -> ClockTrajectory {
        let walk = if self.random_walk_coefficient != 0.0 {
            Some(random_walk(
                seed,
                stream,
                self.random_walk_coefficient,
                step,
                horizon,
            ))
        } else {
            None
        };
        ClockTrajectory {
            model: self.clone(),
            step,
            walk,
        }
    }
}

/// A realized [`ClockModel`].
#[derive(Debug, Clone)]
pub struct ClockTrajectory {
    model: ClockModel,
    step: f64,
    walk: Option<Vec<f64>>,
}

impl ClockTrajectory {
    /// Clock reading minus true time at true time `t`.
    pub fn offset_at(&self, t: f64) -> f64 {
        let elapsed = t - self.model.epoch;
        let mut offset = self.model.initial_offset + self.model.frequency_offset * elapsed;
        if let Some(walk) = &self.walk {
            offset += interpolate(walk, self.step, elapsed);
        }
        offset
    }

    /// Largest absolute offset over `[epoch, epoch + horizon]`.
    pub fn max_abs_offset(&self, horizon: f64) -> f64 {
        let walk_max = self
            .walk
            .as_ref()
            .map_or(0.0, |w| w.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        self.model.initial_offset.abs() + (self.model.frequency_offset * horizon).abs() + walk_max
    }
}

/// Clock offset at true time `t`.
pub fn clock_offset_at(clock: &ClockTrajectory, t: f64) -> f64 {
    clock.offset_at(t)
}

/// Temperature history of a fiber's environment, kelvin (or °C; only
/// differences matter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TemperatureTrace {
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period: f64,
    },
    /// Seeded random walk reflected into `[min, max]`, sampled every
    /// `interval` seconds.
    BoundedWalk {
        min: f64,
        max: f64,
        step_per_sqrt_s: f64,
        interval: f64,
    },
    PiecewiseLinear {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl TemperatureTrace {
    /// Air-conditioned lab cycling between 18.7 and 20.3 °C.
    pub fn lab_periodic() -> Self {
        TemperatureTrace::Sinusoid {
            mean: 19.5,
            amplitude: 0.8,
            period: 3_600.0,
        }
    }

    /// Unconditioned lab wandering between 17.1 and 23.8 °C.
    pub fn lab_irregular() -> Self {
        TemperatureTrace::BoundedWalk {
            min: 17.1,
            max: 23.8,
            step_per_sqrt_s: 0.02,
            interval: 60.0,
        }
    }

    fn realize(&self, seed: u64, stream: u64, horizon: f64) -> RealizedTrace {
        match self {
            TemperatureTrace::Sinusoid {
                mean,
                amplitude,
                period,
            } => RealizedTrace::Sinusoid {
                mean: *mean,
                amplitude: *amplitude,
                period: *period,
            },
            TemperatureTrace::BoundedWalk {
                min,
                max,
                step_per_sqrt_s,
                interval,
            } => {
                let mut rng = rng::stream(seed, stream);
                let n = (horizon / interval).ceil() as usize + 2;
                let mut values = Vec::with_capacity(n);
                let mut x = 0.5 * (min + max);
                let span = max - min;
                for _ in 0..n {
                    values.push(x);
                    let z: f64 = rng.sample(StandardNormal);
                    x += step_per_sqrt_s * interval.sqrt() * z;
                    // Reflect into [min, max].
                    if span > 0.0 {
                        let mut r = (x - min).rem_euclid(2.0 * span);
                        if r > span {
                            r = 2.0 * span - r;
                        }
                        x = min + r;
                    } else {
                        x = *min;
                    }
                }
                RealizedTrace::Grid {
                    step: *interval,
                    values,
                }
            }
            TemperatureTrace::PiecewiseLinear { times, values } => RealizedTrace::Points {
                times: times.clone(),
                values: values.clone(),
            },
        }
    }
}

#[derive(Debug, Clone)]
enum RealizedTrace {
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period: f64,
    },
    Grid {
        step: f64,
        values: Vec<f64>,
    },
    Points {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl RealizedTrace {
    fn at(&self, t: f64) -> f64 {
        match self {
            RealizedTrace::Sinusoid {
                mean,
                amplitude,
                period,
            } => mean + amplitude * (2.0 * std::f64::consts::PI * t / period).sin(),
            RealizedTrace::Grid { step, values } => interpolate(values, *step, t),
            RealizedTrace::Points { times, values } => {
                if times.is_empty() {
                    return 0.0;
                }
                let i = times.partition_point(|&x| x <= t);
                if i == 0 {
                    values[0]
                } else if i == times.len() {
                    values[times.len() - 1]
                } else {
                    let (t0, t1) = (times[i - 1], times[i]);
                    let f = (t - t0) / (t1 - t0);
                    values[i - 1] + f * (values[i] - values[i - 1])
                }
            }
        }
    }
}

/// A delay perturbation as a function of time, seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriftProcess {
    #[default]
    None,
    Constant {
        offset: f64,
    },
    Sinusoidal {
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Delay random walk, coefficient in s/√s.
    RandomWalk {
        coefficient: f64,
    },
    /// Delay change proportional to the temperature excursion from the start
    /// of the run and to the fiber length.
    TemperatureLinear {
        coefficient: f64,
        length_scale: f64,
        trace: TemperatureTrace,
    },
}

impl DriftProcess {
    /// Named drift presets. `length_scale` is the length of the fiber the
    /// drift is attached to; only temperature-driven presets use it.
    pub fn preset(name: &str, length_scale: f64) -> Option<Self> {
        let temperature = |trace| DriftProcess::TemperatureLinear {
            coefficient: DEFAULT_TEMPERATURE_COEFFICIENT,
            length_scale,
            trace,
        };
        Some(match name {
            "none" => DriftProcess::None,
            "lab-periodic" => temperature(TemperatureTrace::lab_periodic()),
            "lab-irregular" => temperature(TemperatureTrace::lab_irregular()),
            "sinusoid-100ps" => DriftProcess::Sinusoidal {
                amplitude: 100e-12,
                period: 1_000.0,
                phase: 0.0,
            },
            "spool-wander" => DriftProcess::RandomWalk {
                coefficient: 10e-12,
            },
            _ => return None,
        })
    }

    pub const PRESET_NAMES: &'static [&'static str] = &[
        "none",
        "lab-periodic",
        "lab-irregular",
        "sinusoid-100ps",
        "spool-wander",
    ];

    fn temperature_trace(&self) -> Option<&TemperatureTrace> {
        match self {
            DriftProcess::TemperatureLinear { trace, .. } => Some(trace),
            _ => None,
        }
    }

    /// `walk_stream` drives a random walk, `trace_stream` a random
    /// temperature trace. Processes that share a trace stream share the
    /// temperature history.
    fn realize(
        &self,
        seed: u64,
        walk_stream: u64,
        trace_stream: u64,
        step: f64,
        horizon: f64,
    ) -> DriftTrajectory {
        match self {
            DriftProcess::None => DriftTrajectory(Trajectory::Zero),
            DriftProcess::Constant { offset } => DriftTrajectory(Trajectory::Constant(*offset)),
            DriftProcess::Sinusoidal {
                amplitude,
                period,
                phase,
            } => DriftTrajectory(Trajectory::Sinusoidal {
                amplitude: *amplitude,
                period: *period,
                phase: *phase,
            }),
            DriftProcess::RandomWalk { coefficient } => DriftTrajectory(Trajectory::Grid {
                step,
                values: random_walk(seed, walk_stream, *coefficient, step, horizon),
            }),
            DriftProcess::TemperatureLinear {
                coefficient,
                length_scale,
                trace,
            } => {
                let trace = trace.realize(seed, trace_stream, horizon);
                let reference = trace.at(0.0);
                DriftTrajectory(Trajectory::Temperature {
                    scale: coefficient * length_scale,
                    reference,
                    trace,
                })
            }
        }
    }
}

/// A realized [`DriftProcess`].
#[derive(Debug, Clone)]
pub struct DriftTrajectory(Trajectory);

#[derive(Debug, Clone)]
enum Trajectory {
    Zero,
    Constant(f64),
    Sinusoidal {
        amplitude: f64,
        period: f64,
        phase: f64,
    },
    Grid {
        step: f64,
        values: Vec<f64>,
    },
    Temperature {
        scale: f64,
        reference: f64,
        trace: RealizedTrace,
    },
}

impl DriftTrajectory {
    pub fn at(&self, t: f64) -> f64 {
        match &self.0 {
            Trajectory::Zero => 0.0,
            Trajectory::Constant(c) => *c,
            Trajectory::Sinusoidal {
                amplitude,
                period,
                phase,
            } => amplitude * (2.0 * std::f64::consts::PI * t / period + phase).sin(),
            Trajectory::Grid { step, values } => interpolate(values, *step, t),
            Trajectory::Temperature {
                scale,
                reference,
                trace,
            } => scale * (trace.at(t) - reference),
        }
    }

    /// Bound on `|drift(t)|` used to size simulation margins.
    pub fn max_abs(&self) -> f64 {
        match &self.0 {
            Trajectory::Zero => 0.0,
            Trajectory::Constant(c) => c.abs(),
            Trajectory::Sinusoidal { amplitude, .. } => amplitude.abs(),
            Trajectory::Grid { values, .. } => values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            Trajectory::Temperature {
                scale,
                reference,
                trace,
            } => {
                let range = match trace {
                    RealizedTrace::Sinusoid {
                        mean, amplitude, ..
                    } => (mean - reference).abs() + amplitude.abs(),
                    RealizedTrace::Grid { values, .. } | RealizedTrace::Points { values, .. } => {
                        values
                            .iter()
                            .fold(0.0f64, |m, v| m.max((v - reference).abs()))
                    }
                };
                scale.abs() * range
            }
        }
    }
}

/// Drift of one compensation spool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SpoolDrift {
    /// Delay change seen by light crossing the spool in either direction.
    #[serde(default)]
    pub reciprocal: DriftProcess,
    /// Direction-dependent delay change of the spool, seen only by light
    /// crossing it in its forward orientation. Each site's own spool is
    /// forward for that site; a shared spool is forward for site A.
    #[serde(default)]
    pub residual: DriftProcess,
}

/// How the two idler-arm compensation spools relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DcfCorrelation {
    /// One physical spool carries both idlers, in opposite directions.
    Shared,
    /// Two spools in the same room: independent spools, same temperature.
    #[default]
    CoLocated,
    /// Two spools in different rooms with independent temperature histories.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DriftTopology {
    /// Applied identically to both directions of the transmission fiber.
    pub transmission: DriftProcess,
    pub compensation_a: SpoolDrift,
    /// Ignored when the spool is shared.
    pub compensation_b: SpoolDrift,
    pub correlation: DcfCorrelation,
}

/// Transfer direction, named by the site whose source emits the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    AToB,
    BToA,
}

/// Propagation delays of one direction at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathDelay {
    /// Signal path through the transmission fiber.
    pub transmission: f64,
    /// Idler path through the local compensation spool.
    pub compensation: f64,
}

impl PathDelay {
    /// Signal minus idler delay.
    pub fn differential(&self) -> f64 {
        self.transmission - self.compensation
    }
}

// Stream ids of the per-run process realizations.
const STREAM_TRANSMISSION: u64 = 10;
const STREAM_TRACE_TRANSMISSION: u64 = 11;
const STREAM_DCF_A: u64 = 20;
const STREAM_DCF_A_RESIDUAL: u64 = 21;
const STREAM_TRACE_A: u64 = 22;
const STREAM_DCF_B: u64 = 30;
const STREAM_DCF_B_RESIDUAL: u64 = 31;
const STREAM_TRACE_B: u64 = 32;
/// Clock random walks use `STREAM_CLOCK + site index`.
pub const STREAM_CLOCK: u64 = 40;

impl DriftTopology {
    pub fn realize(&self, seed: u64, step: f64, horizon: f64) -> RealizedTopology {
        let transmission = self.transmission.realize(
            seed,
            STREAM_TRANSMISSION,
            STREAM_TRACE_TRANSMISSION,
            step,
            horizon,
        );
        let spool_a = RealizedSpool {
            reciprocal: self.compensation_a.reciprocal.realize(
                seed,
                STREAM_DCF_A,
                STREAM_TRACE_A,
                step,
                horizon,
            ),
            residual: self.compensation_a.residual.realize(
                seed,
                STREAM_DCF_A_RESIDUAL,
                STREAM_TRACE_A,
                step,
                horizon,
            ),
        };
        let spool_b = match self.correlation {
            DcfCorrelation::Shared => spool_a.clone(),
            DcfCorrelation::CoLocated | DcfCorrelation::Remote => {
                let trace_b = if self.correlation == DcfCorrelation::CoLocated
                    && self.compensation_a.reciprocal.temperature_trace()
                        == self.compensation_b.reciprocal.temperature_trace()
                {
                    STREAM_TRACE_A
                } else {
                    STREAM_TRACE_B
                };
                RealizedSpool {
                    reciprocal: self.compensation_b.reciprocal.realize(
                        seed,
                        STREAM_DCF_B,
                        trace_b,
                        step,
                        horizon,
                    ),
                    residual: self.compensation_b.residual.realize(
                        seed,
                        STREAM_DCF_B_RESIDUAL,
                        trace_b,
                        step,
                        horizon,
                    ),
                }
            }
        };
        RealizedTopology {
            transmission,
            spool_a,
            spool_b,
            correlation: self.correlation,
        }
    }
}

#[derive(Debug, Clone)]
struct RealizedSpool {
    reciprocal: DriftTrajectory,
    residual: DriftTrajectory,
}

/// A realized [`DriftTopology`].
#[derive(Debug, Clone)]
pub struct RealizedTopology {
    transmission: DriftTrajectory,
    spool_a: RealizedSpool,
    spool_b: RealizedSpool,
    correlation: DcfCorrelation,
}

impl RealizedTopology {
    /// No drift anywhere.
    pub fn quiet() -> Self {
        DriftTopology::default().realize(0, 1.0, 0.0)
    }

    pub fn transmission_drift(&self, t: f64) -> f64 {
        self.transmission.at(t)
    }

    /// Reciprocal drift of the spool in the idler arm of the given direction.
    pub fn compensation_drift(&self, direction: Direction, t: f64) -> f64 {
        match direction {
            Direction::AToB => self.spool_a.reciprocal.at(t),
            Direction::BToA => self.spool_b.reciprocal.at(t),
        }
    }

    fn residual_drift(&self, direction: Direction, t: f64) -> f64 {
        match (direction, self.correlation) {
            (Direction::AToB, _) => self.spool_a.residual.at(t),
            // Site B crosses the shared spool backwards.
            (Direction::BToA, DcfCorrelation::Shared) => 0.0,
            (Direction::BToA, _) => self.spool_b.residual.at(t),
        }
    }

    /// Delays of the signal and idler paths of `direction` at time `t`.
    pub fn path_delay_at(&self, link: &LinkConfig, t: f64, direction: Direction) -> PathDelay {
        let k1 = match direction {
            Direction::AToB => link.transmission.k1,
            Direction::BToA => link.transmission.k1 + link.k1_asymmetry,
        };
        PathDelay {
            transmission: k1 * link.transmission.length + self.transmission.at(t),
            compensation: link.compensation.group_delay()
                + self.compensation_drift(direction, t)
                + self.residual_drift(direction, t),
        }
    }

    /// Bound on the total drift of any path.
    pub fn max_abs_drift(&self) -> f64 {
        self.transmission.max_abs()
            + [&self.spool_a, &self.spool_b]
                .iter()
                .map(|s| s.reciprocal.max_abs() + s.residual.max_abs())
                .fold(0.0, f64::max)
    }
}

/// Free-function form of [`RealizedTopology::path_delay_at`].
pub fn path_delay_at(
    topology: &RealizedTopology,
    link: &LinkConfig,
    t: f64,
    direction: Direction,
) -> PathDelay {
    topology.path_delay_at(link, t, direction)
}

/// Cumulative sum of Gaussian increments of variance `coefficient²·step`,
/// starting at zero. One sample per grid point over `[0, horizon]` plus one.
fn random_walk(seed: u64, stream: u64, coefficient: f64, step: f64, horizon: f64) -> Vec<f64> {
    let mut rng = rng::stream(seed, stream);
    let n = (horizon / step).ceil().max(0.0) as usize + 2;
    let scale = coefficient * step.sqrt();
    let mut x = 0.0;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(x);
        let z: f64 = rng.sample(StandardNormal);
        x += scale * z;
    }
    values
}

/// Linear interpolation of samples on a grid starting at zero; clamps outside.
fn interpolate(values: &[f64], step: f64, t: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    if t <= 0.0 {
        return values[0];
    }
    let pos = t / step;
    let i = pos.floor() as usize;
    if i + 1 >= values.len() {
        return values[values.len() - 1];
    }
    let f = pos - i as f64;
    values[i] + f * (values[i + 1] - values[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::FiberSpec;

    #[test]
    fn constant_clock() {
        let clock = ClockModel::constant(1e-6).realize(7, STREAM_CLOCK, 5.0, 100.0);
        for t in [0.0, 3.3, 1e4] {
            assert_eq!(clock_offset_at(&clock, t), 1e-6);
        }
    }

    #[test]
    fn linear_frequency_ramp() {
        let model = ClockModel {
            initial_offset: 0.0,
            frequency_offset: 1e-12,
            random_walk_coefficient: 0.0,
            epoch: 0.0,
        };
        let clock = model.realize(1, STREAM_CLOCK, 5.0, 2000.0);
        assert!((clock.offset_at(1000.0) - 1e-9).abs() < 1e-24);
    }

    #[test]
    fn random_walk_matches_cumulative_sum() {
        let model = ClockModel {
            initial_offset: 0.0,
            frequency_offset: 0.0,
            random_walk_coefficient: 2e-12,
            epoch: 0.0,
        };
        let step = 5.0;
        let clock = model.realize(99, STREAM_CLOCK, step, 100.0);
        // Reference: the same Gaussian increments summed by hand.
        let mut rng = rng::stream(99, STREAM_CLOCK);
        let mut acc = 0.0;
        for k in 0..=20 {
            let t = k as f64 * step;
            assert!((clock.offset_at(t) - acc).abs() < 1e-24, "k={k}");
            let z: f64 = rng.sample(StandardNormal);
            acc += 2e-12 * step.sqrt() * z;
        }
        // Replay.
        let again = model.realize(99, STREAM_CLOCK, step, 100.0);
        assert_eq!(clock.offset_at(37.5), again.offset_at(37.5));
    }

    fn link20() -> LinkConfig {
        LinkConfig::new(FiberSpec::smf(20_000.0), FiberSpec::dcf(0.0))
    }

    #[test]
    fn quiet_link_delay() {
        let topo = RealizedTopology::quiet();
        let reference = 4.89e-9 * 20_000.0;
        for dir in [Direction::AToB, Direction::BToA] {
            let d = path_delay_at(&topo, &link20(), 12.0, dir);
            assert!((d.transmission - reference).abs() < 1e-18);
            assert!((d.transmission - 97.8e-6).abs() < 1e-12);
        }
    }

    #[test]
    fn transmission_drift_is_reciprocal() {
        let topology = DriftTopology {
            transmission: DriftProcess::preset("sinusoid-100ps", 20_000.0).unwrap(),
            ..Default::default()
        }
        .realize(3, 5.0, 5_000.0);
        let link = link20();
        for i in 0..500 {
            let t = i as f64 * 9.7;
            let ab = topology.path_delay_at(&link, t, Direction::AToB);
            let ba = topology.path_delay_at(&link, t, Direction::BToA);
            assert_eq!(ab.transmission - ba.transmission, 0.0);
        }
        assert!(topology.max_abs_drift() > 99e-12);
    }

    #[test]
    fn shared_spool_drifts_identically() {
        let topology = DriftTopology {
            compensation_a: SpoolDrift {
                reciprocal: DriftProcess::preset("lab-irregular", 2_490.0).unwrap(),
                residual: DriftProcess::RandomWalk { coefficient: 1e-12 },
            },
            compensation_b: SpoolDrift {
                reciprocal: DriftProcess::RandomWalk { coefficient: 5e-12 },
                residual: DriftProcess::None,
            },
            correlation: DcfCorrelation::Shared,
            ..Default::default()
        }
        .realize(11, 5.0, 10_000.0);
        for i in 0..1000 {
            let t = i as f64 * 10.0;
            assert_eq!(
                topology.compensation_drift(Direction::AToB, t),
                topology.compensation_drift(Direction::BToA, t)
            );
        }
    }

    #[test]
    fn temperature_drift_scales_with_length() {
        let short = DriftProcess::preset("lab-periodic", 1_000.0)
            .unwrap()
            .realize(1, 0, 0, 5.0, 1e4);
        let long = DriftProcess::preset("lab-periodic", 2_000.0)
            .unwrap()
            .realize(1, 0, 0, 5.0, 1e4);
        for t in [100.0, 700.0, 2_345.0] {
            let (s, l) = (short.at(t), long.at(t));
            assert!(s != 0.0);
            assert!((l - 2.0 * s).abs() <= 1e-12 * l.abs());
        }
    }

    #[test]
    fn bounded_walk_stays_in_range() {
        let trace = TemperatureTrace::lab_irregular().realize(5, 1, 200_000.0);
        for i in 0..4000 {
            let v = trace.at(i as f64 * 50.0);
            assert!((17.1..=23.8).contains(&v), "{v}");
        }
    }

    #[test]
    fn colocated_spools_share_temperature() {
        let spool = SpoolDrift {
            reciprocal: DriftProcess::preset("lab-irregular", 2_490.0).unwrap(),
            residual: DriftProcess::None,
        };
        let make = |correlation| DriftTopology {
            compensation_a: spool.clone(),
            compensation_b: spool.clone(),
            correlation,
            ..Default::default()
        };
        let colocated = make(DcfCorrelation::CoLocated).realize(4, 5.0, 20_000.0);
        let remote = make(DcfCorrelation::Remote).realize(4, 5.0, 20_000.0);
        let t = 15_000.0;
        assert_eq!(
            colocated.compensation_drift(Direction::AToB, t),
            colocated.compensation_drift(Direction::BToA, t)
        );
        assert_ne!(
            remote.compensation_drift(Direction::AToB, t),
            remote.compensation_drift(Direction::BToA, t)
        );
    }

    #[test]
    fn independent_spool_difference_doubles_variance() {
        // i.i.d. residual walks: var(a - b) = 2 var(a), estimated over many
        // independent realizations at a fixed time.
        let spool = SpoolDrift {
            reciprocal: DriftProcess::None,
            residual: DriftProcess::RandomWalk { coefficient: 1e-12 },
        };
        let topo = DriftTopology {
            compensation_a: spool.clone(),
            compensation_b: spool,
            correlation: DcfCorrelation::CoLocated,
            ..Default::default()
        };
        let link = LinkConfig::new(FiberSpec::smf(15.0), FiberSpec::dcf(2_490.0));
        let t = 500.0;
        let (mut single, mut diff) = (0.0, 0.0);
        let runs = 4000;
        for seed in 0..runs {
            let r = topo.realize(seed, 5.0, t);
            let a = r.path_delay_at(&link, t, Direction::AToB).compensation
                - link.compensation.group_delay();
            let b = r.path_delay_at(&link, t, Direction::BToA).compensation
                - link.compensation.group_delay();
            single += a * a;
            diff += (a - b) * (a - b);
        }
        let ratio = diff / single;
        assert!((ratio - 2.0).abs() < 0.15, "{ratio}");
    }
}
