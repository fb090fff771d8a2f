//! Fast paths checked against literal implementations.

use proptest::prelude::*;
use qttf::coincidence::{correlate, Histogram, HistogramSpec};
use qttf::reference::{all_pairs_histogram as brute_histogram, tdev_literal as brute_tdev};
use qttf::simulator::{Channel, TagBlock, TagStream};
use qttf::tagfile;
use qttf::twoway::{octave_factors, tdev, TdevEstimator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sorted_tags(rng: &mut ChaCha8Rng, n: usize, span: i64) -> Vec<i64> {
    let mut v: Vec<i64> = (0..n).map(|_| rng.random_range(0..span)).collect();
    v.sort_unstable();
    v
}

#[test]
fn correlate_matches_all_pairs_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = HistogramSpec {
        coarse_bin: 1e-9,
        fine_bin: 1e-12,
        search_span: 2e-6,
        fine_window: 500e-12,
    };
    let mut with_peak = 0;
    for instance in 0..100 {
        let n = rng.random_range(1..=500);
        let m = rng.random_range(1..=500);
        // Microsecond-scale spans put many differences inside the search span.
        let a = sorted_tags(&mut rng, n, 20_000_000_000);
        let mut b = sorted_tags(&mut rng, m, 20_000_000_000);
        if instance % 2 == 0 {
            // Half the instances carry a correlated component so the fine
            // pass runs.
            let shift = rng.random_range(-1_000_000_000i64..1_000_000_000);
            b.extend(
                a.iter()
                    .map(|t| t + shift + rng.random_range(-50_000..50_000)),
            );
            b.sort_unstable();
        }

        let mut sweep = Histogram::centered(0, 1_000_000, 2_000);
        sweep.accumulate(&a, &b);
        assert_eq!(
            sweep.counts,
            brute_histogram(&a, &b, &sweep),
            "instance {instance}"
        );

        if let Ok(c) = correlate(&a, &b, &spec) {
            with_peak += 1;
            assert_eq!(
                c.coarse.counts,
                brute_histogram(&a, &b, &c.coarse),
                "instance {instance}"
            );
            assert_eq!(
                c.fine.counts,
                brute_histogram(&a, &b, &c.fine),
                "instance {instance}"
            );
        }
    }
    assert!(
        with_peak >= 40,
        "only {with_peak} instances reached the fine pass"
    );
}

#[test]
fn tdev_matches_defining_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(3..=1000);
        let offset = rng.random_range(-1e-6..1e-6);
        let x: Vec<f64> = (0..n)
            .map(|i| offset + 1e-15 * i as f64 + 1e-12 * rng.random_range(-1.0..1.0))
            .collect();
        let mut ms = octave_factors(n);
        ms.push(n / 3);
        ms.push(rng.random_range(1..=n / 3));
        let curve = tdev(&x, 5.0, &ms, TdevEstimator::Overlapping);
        assert!(curve.warnings.is_empty());
        for (k, &m) in ms.iter().enumerate() {
            let expected = brute_tdev(&x, m);
            let rel = (curve.tdev[k] - expected).abs() / expected;
            worst = worst.max(rel);
            assert!(rel < 1e-9, "n={n} m={m}: {} vs {expected}", curve.tdev[k]);
            assert_eq!(curve.taus[k], 5.0 * m as f64);
        }
    }
    println!("worst relative difference {worst:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sweep_equals_brute_force(
        mut a in prop::collection::vec(-50_000i64..50_000, 0..300),
        mut b in prop::collection::vec(-50_000i64..50_000, 0..300),
        center in -20_000i64..20_000,
        width in 1i64..5_000,
        half in 0usize..40,
    ) {
        a.sort_unstable();
        b.sort_unstable();
        let mut h = Histogram::centered(center, width, half);
        h.accumulate(&a, &b);
        prop_assert_eq!(h.counts.clone(), brute_histogram(&a, &b, &h));
    }

    #[test]
    fn tag_stream_round_trip(
        channel in 1u8..=4,
        blocks in prop::collection::vec(
            (any::<u64>(), prop::collection::vec(any::<i64>(), 0..50)),
            0..8,
        ),
    ) {
        let stream = TagStream {
            channel: Channel::from_number(channel).unwrap(),
            blocks: blocks
                .into_iter()
                .map(|(epoch, mut tags)| {
                    tags.sort_unstable();
                    TagBlock { epoch, tags }
                })
                .collect(),
        };
        let mut bytes = Vec::new();
        tagfile::write_stream(&mut bytes, &stream).unwrap();
        let back = tagfile::read_stream(&bytes[..]).unwrap();
        prop_assert_eq!(back, stream);
    }
}
