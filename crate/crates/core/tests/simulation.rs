use qttf::analysis::analyze;
use qttf::clock::{ClockModel, Direction, DriftTopology};
use qttf::coincidence::{block_offset, correlate, HistogramSpec};
use qttf::physics::{self, FiberSpec, JitterSpec, LinkConfig, SourceSpec};
use qttf::simulator::{simulate, Channel, SimScenario, Simulator, SpectralModel};
use qttf::{secs_to_fs, tagfile, Error};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const T0: f64 = 1e-6;

fn scenario(dcf_length: f64, heralding: f64, blocks: usize, seed: u64) -> SimScenario {
    let source = SourceSpec {
        heralding_efficiency: heralding,
        ..SourceSpec::reference()
    };
    SimScenario {
        source_a: source.clone(),
        source_b: source,
        link: LinkConfig::new(FiberSpec::smf(20_000.0), FiberSpec::dcf(dcf_length)),
        jitter: JitterSpec::from_combined_fwhm(70e-12),
        clock_a: ClockModel::constant(T0),
        clock_b: ClockModel::constant(0.0),
        topology: DriftTopology::default(),
        spectral_model: SpectralModel::Gaussian,
        block_duration: 5.0,
        n_blocks: blocks,
        background_rate: 0.0,
        timer_resolution: 1e-12,
        rng_seed: seed,
    }
}

fn dcf(blocks: usize, seed: u64) -> SimScenario {
    scenario(2_490.0, 0.0489, blocks, seed)
}

fn nodcf(blocks: usize, seed: u64) -> SimScenario {
    scenario(0.0, 0.01433, blocks, seed)
}

fn expected_fwhm(sc: &SimScenario) -> f64 {
    let sigma = physics::coincidence_sigma(&sc.source_a, &sc.link).unwrap();
    physics::observed_fwhm(sigma, &sc.jitter).unwrap()
}

fn spec_for(sc: &SimScenario) -> HistogramSpec {
    HistogramSpec::for_expected_fwhm(expected_fwhm(sc))
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn chi2_sf(x: f64, dof: f64) -> f64 {
    ChiSquared::new(dof).unwrap().sf(x)
}

#[test]
fn tag_counts_are_poisson() {
    let mut sc = dcf(120, 11);
    sc.block_duration = 1.0;
    let streams = simulate(&sc).unwrap();
    let mu = sc.source_a.singles_rate * sc.block_duration;
    for s in &streams {
        let stat: f64 = s
            .blocks
            .iter()
            .map(|b| (b.tags.len() as f64 - mu).powi(2) / mu)
            .sum();
        let k = s.blocks.len() as f64;
        let upper = chi2_sf(stat, k);
        assert!(
            upper > 0.001 && upper < 0.999,
            "{}: chi2 {stat:.1} on {k} dof",
            s.channel
        );
    }
}

#[test]
fn fixed_seed_gives_identical_files() {
    let sc = dcf(2, 3);
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    tagfile::write_dir(dir1.path(), &simulate(&sc).unwrap()).unwrap();
    tagfile::write_dir(dir2.path(), &simulate(&sc).unwrap()).unwrap();
    for c in Channel::ALL {
        let name = tagfile::file_name(c);
        let a = std::fs::read(dir1.path().join(&name)).unwrap();
        let b = std::fs::read(dir2.path().join(&name)).unwrap();
        assert!(a == b, "{name} differs");
    }
    let back = tagfile::read_dir(dir1.path()).unwrap();
    assert_eq!(back, simulate(&sc).unwrap());
}

#[test]
fn empty_block_round_trips() {
    let mut sc = dcf(1, 3);
    for s in [&mut sc.source_a, &mut sc.source_b] {
        s.singles_rate = 1e-9;
    }
    let streams = simulate(&sc).unwrap();
    assert!(streams.iter().all(|s| s.blocks[0].tags.is_empty()));
    let dir = tempfile::tempdir().unwrap();
    let paths = tagfile::write_dir(dir.path(), &streams).unwrap();
    assert_eq!(std::fs::metadata(&paths[0]).unwrap().len(), 10 + 12);
    assert_eq!(tagfile::read_dir(dir.path()).unwrap(), streams);
}

#[test]
fn peak_centers_follow_delay_algebra() {
    let sc = dcf(20, 5);
    let a = analyze(&simulate(&sc).unwrap(), &spec_for(&sc), sc.block_duration).unwrap();
    let d = sc.link.differential_delay();
    for (fits, expected) in [(&a.ab, d - T0), (&a.ba, d + T0)] {
        let residuals: Vec<f64> = fits
            .iter()
            .map(|e| (e.fit.center - expected) / e.fit.center_std_error)
            .collect();
        assert!(residuals.iter().all(|r| r.abs() < 5.0), "{residuals:?}");
        let m = mean(residuals.iter().copied());
        assert!(
            m.abs() * (residuals.len() as f64).sqrt() < 3.0 * 1.3,
            "mean pull {m}"
        );
    }
}

#[test]
fn fitted_peak_holds_expected_coincidences() {
    let sc = dcf(1, 8);
    let streams = simulate(&sc).unwrap();
    let fit = block_offset(
        &streams[0].blocks[0].tags,
        &streams[1].blocks[0].tags,
        &spec_for(&sc),
    )
    .unwrap();
    let expected = physics::expected_coincidences(&sc.source_a, sc.block_duration) as f64;
    assert!(
        (fit.n_coincidences - expected).abs() < 5.0 * expected.sqrt(),
        "{}",
        fit.n_coincidences
    );
    assert!(fit.background_level.abs() < 0.01);
}

#[test]
fn fit_center_agrees_with_true_pair_mean() {
    let mut sc = dcf(4, 9);
    sc.spectral_model = SpectralModel::Point;
    let sim = Simulator::new(&sc).unwrap();
    let spec = HistogramSpec::for_expected_fwhm(70e-12);
    for k in 0..sc.n_blocks {
        let block = sim.block(k, true);
        let pairs = &block.pairs.unwrap()[0];
        let true_mean = mean(pairs.iter().map(|p| (p.remote - p.local) as f64)) / 1e15;
        let fit = block_offset(&block.tags[0], &block.tags[1], &spec).unwrap();
        let diff = (fit.center - true_mean).abs();
        assert!(
            diff < 2.0 * fit.center_std_error,
            "block {k}: {diff:e} vs {:e}",
            fit.center_std_error
        );
    }
}

#[test]
fn translation_and_exchange() {
    let sc = dcf(1, 12);
    let streams = simulate(&sc).unwrap();
    let (a, b) = (&streams[0].blocks[0].tags, &streams[1].blocks[0].tags);
    let spec = spec_for(&sc);
    let base = block_offset(a, b, &spec).unwrap();

    for shift_ps in [500i64, -3_000, 250_000] {
        let shifted: Vec<i64> = b.iter().map(|t| t + shift_ps * 1000).collect();
        let moved = block_offset(a, &shifted, &spec).unwrap();
        let delta = moved.center - base.center - shift_ps as f64 * 1e-12;
        assert!(
            delta.abs() < 0.02e-12,
            "shift {shift_ps} ps: off by {delta:e}"
        );
    }

    let swapped = block_offset(b, a, &spec).unwrap();
    assert!((swapped.center + base.center).abs() < 1e-16);
    assert!((swapped.fwhm - base.fwhm).abs() < 1e-16);
}

#[test]
fn independent_streams_have_no_peak() {
    let mut sc = dcf(1, 13);
    for s in [&mut sc.source_a, &mut sc.source_b] {
        s.heralding_efficiency = 0.0;
    }
    let streams = simulate(&sc).unwrap();
    match correlate(
        &streams[0].blocks[0].tags,
        &streams[1].blocks[0].tags,
        &spec_for(&sc),
    ) {
        Err(Error::NoPeak { peak, background }) => {
            assert!(background > 0.1 && (peak as f64) < 20.0);
        }
        other => panic!("expected no peak, got {other:?}"),
    }
}

#[test]
fn background_is_flat_away_from_peak() {
    let mut sc = dcf(1, 14);
    sc.background_rate = 4_000.0;
    let streams = simulate(&sc).unwrap();
    let c = correlate(
        &streams[0].blocks[0].tags,
        &streams[1].blocks[0].tags,
        &spec_for(&sc),
    )
    .unwrap();
    // Group 1 ns bins into 1 µs cells, leaving out the cell with the peak.
    let cells: Vec<f64> = c
        .coarse
        .counts
        .chunks(1000)
        .enumerate()
        .filter(|(i, _)| c.peak_bin / 1000 != *i)
        .filter(|(_, ch)| ch.len() == 1000)
        .map(|(_, ch)| ch.iter().map(|&v| v as f64).sum())
        .collect();
    let mu = mean(cells.iter().copied());
    let stat: f64 = cells.iter().map(|v| (v - mu).powi(2) / mu).sum();
    let dof = cells.len() as f64 - 1.0;
    let p = chi2_sf(stat, dof);
    assert!(p > 0.001 && p < 0.999, "chi2 {stat:.0} on {dof} dof");
}

#[test]
fn fitted_widths_match_closed_form() {
    for sc in [dcf(100, 21), nodcf(100, 22)] {
        let a = analyze(&simulate(&sc).unwrap(), &spec_for(&sc), sc.block_duration).unwrap();
        let fitted = mean(a.ab.iter().chain(&a.ba).map(|e| e.fit.fwhm));
        let expected = expected_fwhm(&sc);
        assert!(
            ((fitted - expected) / expected).abs() < 0.05,
            "{fitted:e} vs {expected:e}"
        );
    }
}

#[test]
fn removing_dcf_widens_by_predicted_ratio() {
    let with = dcf(20, 31);
    let without = nodcf(20, 31);
    let width = |sc: &SimScenario| {
        let a = analyze(&simulate(sc).unwrap(), &spec_for(sc), sc.block_duration).unwrap();
        mean(a.ab.iter().map(|e| e.fit.fwhm))
    };
    let measured = width(&without) / width(&with);
    let predicted = expected_fwhm(&without) / expected_fwhm(&with);
    assert!(
        ((measured - predicted) / predicted).abs() < 0.05,
        "{measured} vs {predicted}"
    );
}

#[test]
fn center_error_scales_inverse_sqrt_n() {
    let low = dcf(10, 41);
    let mut high = dcf(10, 41);
    for s in [&mut high.source_a, &mut high.source_b] {
        s.singles_rate *= 4.0;
    }
    let se = |sc: &SimScenario| {
        let a = analyze(&simulate(sc).unwrap(), &spec_for(sc), sc.block_duration).unwrap();
        mean(a.ab.iter().map(|e| e.fit.center_std_error))
    };
    let ratio = se(&low) / se(&high);
    assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
}

#[test]
fn directional_estimates_have_opposite_clock_signs() {
    let mut sc = dcf(2, 15);
    sc.clock_a = ClockModel::constant(0.0);
    sc.clock_b = ClockModel::constant(T0);
    let a = analyze(&simulate(&sc).unwrap(), &spec_for(&sc), sc.block_duration).unwrap();
    for r in &a.series.records {
        assert!((r.t0 + T0).abs() < 10e-12, "{}", r.t0);
    }
    let d = secs_to_fs(sc.link.differential_delay());
    let (local, remote) = Channel::pair(Direction::AToB);
    assert_eq!((local, remote), (Channel::D1, Channel::D2));
    assert!(((a.ab[0].fit.center - T0) * 1e15 - d as f64).abs() < 10_000.0);
}
