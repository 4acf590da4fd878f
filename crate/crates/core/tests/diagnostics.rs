mod common;

use common::rng;
use poisson_stein::diagnostics::{dkw_band, kolmogorov_distance, normal_cdf, rate_slope, RateRow, RateTable, SampleSet};
use poisson_stein::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

fn rows(points: &[(f64, f64)]) -> Vec<RateRow> {
    points
        .iter()
        .map(|&(scale, distance)| RateRow {
            scale,
            distance,
            stderr: 0.0,
        })
        .collect()
}

#[test]
fn normal_cdf_values() {
    assert_eq!(normal_cdf(0.0), 0.5);
    // mpmath, 30 digits
    assert!((normal_cdf(1.959_964) - 0.975_000_000_903_557_6).abs() < 1e-15);
    assert!(normal_cdf(-40.0) >= 0.0 && normal_cdf(40.0) <= 1.0);
    assert!(normal_cdf(-10.0) > 0.0 && normal_cdf(-10.0) < 1e-22);
}

#[test]
fn normal_cdf_symmetry() {
    let mut r = rng(1);
    for _ in 0..10_000 {
        let x: f64 = r.random_range(-8.0..8.0);
        assert!((normal_cdf(-x) - (1.0 - normal_cdf(x))).abs() < 1e-15, "{x}");
    }
}

#[test]
fn exact_quantiles_are_close() {
    let z = Normal::new(0.0, 1.0).unwrap();
    for n in [10usize, 1000, 50_000] {
        let v: Vec<f64> = (1..=n).map(|i| z.inverse_cdf(i as f64 / (n + 1) as f64)).collect();
        let d = kolmogorov_distance(&SampleSet::new(v, "quantiles")).unwrap();
        assert!(d.distance <= 1.0 / (n + 1) as f64 + 1e-12, "n = {n}: {}", d.distance);
    }
}

#[test]
fn dkw_band_covers_normal_samples() {
    let n = 100_000;
    assert!((dkw_band(n) - (200f64.ln() / 2e5).sqrt()).abs() < 1e-15);
    let mut inside = 0;
    for meta in 0..100 {
        let mut r = rng(1000 + meta);
        let v: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let d = kolmogorov_distance(&SampleSet::new(v, format!("meta {meta}"))).unwrap();
        if d.distance <= d.dkw_band {
            inside += 1;
        }
    }
    assert!(inside >= 99, "{inside} of 100 inside the band");
}

#[test]
fn errors() {
    assert!(matches!(kolmogorov_distance(&SampleSet::new(vec![], "e")), Err(Error::EmptySample)));
    assert!(kolmogorov_distance(&SampleSet::new(vec![0.0, f64::NAN], "e")).is_err());
    assert!(matches!(
        rate_slope(&rows(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)])),
        Err(Error::Domain(_))
    ));
    assert!(rate_slope(&rows(&[(1.0, 1.0), (2.0, 1.0)])).is_err());
    assert!(rate_slope(&rows(&[(1.0, 1.0), (3.0, 1.0), (2.0, 1.0)])).is_err());
}

#[test]
fn slopes_of_exact_laws() {
    let pts: Vec<(f64, f64)> = [16.0, 32.0, 64.0, 128.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(-0.5))).collect();
    let s = rate_slope(&rows(&pts)).unwrap();
    assert!((s.slope + 0.5).abs() < 1e-12);
    let flat = rate_slope(&rows(&[(1.0, 0.2), (4.0, 0.2), (9.0, 0.2)])).unwrap();
    assert!(flat.slope.abs() < 1e-15);
}

#[test]
fn rate_table_csv() {
    let t = RateTable::new(rows(&[(16.0, 0.25), (64.0, 0.125), (256.0, 0.0625)])).unwrap();
    let csv = t.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scale,distance,stderr");
    assert_eq!(lines[1], "16,0.25,0");
    assert!(lines[4].starts_with("# slope=-0.5 stderr="));
    assert!(csv.ends_with('\n') && !csv.contains('\r'));
}

proptest! {
    #[test]
    fn distance_is_permutation_invariant(values in prop::collection::vec(-5.0f64..5.0, 1..60), seed in 0u64..1000) {
        let d = kolmogorov_distance(&SampleSet::new(values.clone(), "p")).unwrap();
        let mut shuffled = values;
        shuffled.shuffle(&mut rng(seed));
        let e = kolmogorov_distance(&SampleSet::new(shuffled, "p")).unwrap();
        prop_assert_eq!(d.distance, e.distance);
        prop_assert!((0.0..=1.0).contains(&d.distance));
    }

    #[test]
    fn adding_at_the_sup_loses_at_most_one(values in prop::collection::vec(-4.0f64..4.0, 1..60)) {
        let n = values.len() as f64;
        let d = kolmogorov_distance(&SampleSet::new(values.clone(), "p")).unwrap();
        let mut more = values;
        more.push(d.argmax);
        let e = kolmogorov_distance(&SampleSet::new(more, "p")).unwrap();
        prop_assert!((n + 1.0) * e.distance >= n * d.distance - 1.0 - 1e-12);
    }
}
