mod common;

use std::sync::Arc;

use common::{rel_close, rng, uniform_point, uniform_points};
use poisson_stein::chaos::{Kernel, MultipleIntegral, MultipleIntegralFunctional};
use poisson_stein::measure_space::{BoxDomain, ControlMeasure, FnDensity, IntegrationSpec};
use poisson_stein::point_process::{
    add_one_cost, sample_configuration, sample_poisson_count, second_difference, FnFunctional, Functional,
    LinearStatistic, PointConfiguration, PointCount, PointSet, UStatistic,
};
use poisson_stein::rng::substream;
use poisson_stein::Error;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn mean_count_matches_intensity() {
    for n in [3.0, 40.0] {
        let c = ControlMeasure::unit_cube(2, n).unwrap();
        let counts: Vec<f64> = (0..10_000u64)
            .map(|s| sample_configuration(&c, s).unwrap().len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let se = (n / counts.len() as f64).sqrt();
        assert!((mean - n).abs() < 3.0 * se, "n = {n}: mean {mean}");
    }
}

#[test]
fn poisson_counts_have_poisson_moments() {
    for mean in [0.7, 12.0, 30.0, 31.0, 250.0, 5000.0] {
        let mut r = substream(5, 0);
        let xs: Vec<f64> = (0..40_000).map(|_| sample_poisson_count(mean, &mut r) as f64).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let se_m = (mean / xs.len() as f64).sqrt();
        // var of the sample variance for Poisson: (mu + 2 mu^2) / N
        let se_v = ((mean + 2.0 * mean * mean) / xs.len() as f64).sqrt();
        assert!((m - mean).abs() < 4.0 * se_m, "mean {mean}: {m}");
        assert!((v - mean).abs() < 4.0 * se_v, "mean {mean}: var {v}");
    }
}

#[test]
fn disjoint_boxes_have_independent_counts() {
    let c = ControlMeasure::unit_cube(1, 10.0).unwrap();
    // bins {0-1, 2, 3, 4, 5+} for two Poisson(3) counts
    let bin = |k: usize| match k {
        0 | 1 => 0,
        2 => 1,
        3 => 2,
        4 => 3,
        _ => 4,
    };
    let mut table = [[0f64; 5]; 5];
    let reps = 20_000u64;
    for s in 0..reps {
        let cfg = sample_configuration(&c, s).unwrap();
        let a = cfg.count_in(&[0.0], &[0.3]);
        let b = cfg.count_in(&[0.5], &[0.8]);
        table[bin(a)][bin(b)] += 1.0;
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..5).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut stat = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let e = rows[i] * cols[j] / reps as f64;
            stat += (table[i][j] - e).powi(2) / e;
        }
    }
    let p = 1.0 - ChiSquared::new(16.0).unwrap().cdf(stat);
    assert!(p > 0.01, "chi-square {stat}, p = {p}");
}

#[test]
fn same_seed_same_configuration() {
    let c = ControlMeasure::unit_cube(3, 25.0).unwrap();
    assert_eq!(sample_configuration(&c, 77).unwrap(), sample_configuration(&c, 77).unwrap());
    assert_ne!(sample_configuration(&c, 77).unwrap(), sample_configuration(&c, 78).unwrap());
}

#[test]
fn samples_follow_the_density() {
    // p(x) = 2x: E[x] = 2/3
    let density = Arc::new(FnDensity::new(|x: &[f64]| 2.0 * x[0], 2.0, vec![vec![]]));
    let c = ControlMeasure::new(BoxDomain::unit(1), density, 50.0).unwrap();
    let mut xs = Vec::new();
    for s in 0..400 {
        let cfg = sample_configuration(&c, s).unwrap();
        xs.extend((0..cfg.len()).map(|i| cfg.point(i)[0]));
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    // var of x under 2x is 1/18
    let se = (1.0 / 18.0 / xs.len() as f64).sqrt();
    assert!((m - 2.0 / 3.0).abs() < 4.0 * se, "mean {m}");
}

#[test]
fn peaked_density_is_refused() {
    let density = Arc::new(FnDensity::new(
        |x: &[f64]| if x[0] < 1e-4 { 1e4 } else { 0.0 },
        1e4,
        vec![vec![1e-4]],
    ));
    let c = ControlMeasure::new(BoxDomain::unit(1), density, 5.0).unwrap();
    assert!(matches!(sample_configuration(&c, 1), Err(Error::DensityTooPeaked { .. })));
}

#[test]
fn configurations_are_validated() {
    let d = BoxDomain::unit(1);
    assert!(matches!(
        PointConfiguration::new(d.clone(), vec![0.2, 0.2]),
        Err(Error::DuplicatePoint)
    ));
    assert!(PointConfiguration::new(d.clone(), vec![1.5]).is_err());
    let cfg = PointConfiguration::new(d, vec![0.2, 0.4]).unwrap();
    assert!(matches!(add_one_cost(&PointCount, &cfg, &[2.0]), Err(Error::Domain(_))));
    assert!(add_one_cost(&PointCount, &cfg, &[0.4]).is_err());
}

#[test]
fn add_one_cost_reference_values() {
    let c = ControlMeasure::unit_cube(1, 6.0).unwrap();
    let f = Kernel::from_fn(1, 1, true, |x| (3.0 * x[0]).sin() + x[0]).unwrap();
    let lin = MultipleIntegralFunctional(MultipleIntegral::new(&f, 1, &c, &IntegrationSpec::quadrature(32)).unwrap());
    let h = Kernel::from_fn(2, 1, true, |x| (x[0] - x[1]).abs()).unwrap();
    let u = UStatistic {
        kernel: h.clone(),
        order: 2,
    };
    let mut r = rng(3);
    for _ in 0..100 {
        let k = r.random_range(0..12);
        let cfg = uniform_points(&c, k, &mut r);
        let z = uniform_point(c.domain(), &mut r);
        let z2 = uniform_point(c.domain(), &mut r);
        assert_eq!(add_one_cost(&PointCount, &cfg, &z).unwrap(), 1.0);
        assert!(rel_close(add_one_cost(&lin, &cfg, &z).unwrap(), f.eval(&z), 1e-12));
        let expect: f64 = 2.0 * (0..cfg.len()).map(|i| h.eval(&[z[0], cfg.point(i)[0]])).sum::<f64>();
        assert!(rel_close(add_one_cost(&u, &cfg, &z).unwrap(), expect, 1e-12));
        assert_eq!(second_difference(&PointCount, &cfg, &z, &z2).unwrap(), 0.0);
        assert!(second_difference(&lin, &cfg, &z, &z2).unwrap().abs() < 1e-12);
        assert!(rel_close(
            second_difference(&u, &cfg, &z, &z2).unwrap(),
            2.0 * h.eval(&[z[0], z2[0]]),
            1e-12
        ));
    }
}

use rand::Rng;

fn sum_sq(cfg: &dyn PointSet) -> f64 {
    (0..cfg.len()).map(|i| cfg.point(i).iter().map(|v| v * v).sum::<f64>()).sum()
}

fn sum_cos(cfg: &dyn PointSet) -> f64 {
    (0..cfg.len()).map(|i| (5.0 * cfg.point(i)[0]).cos()).sum::<f64>().powi(2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn difference_operator_is_linear_and_has_product_rule(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let c = ControlMeasure::unit_cube(2, 8.0).unwrap();
        let mut r = rng(seed);
        let cfg = uniform_points(&c, r.random_range(0..10), &mut r);
        let z = uniform_point(c.domain(), &mut r);
        let f = FnFunctional::new("sq", sum_sq);
        let g = FnFunctional::new("cos", sum_cos);
        let comb = FnFunctional::new("comb", move |p| a * sum_sq(p) + b * sum_cos(p));
        let prod = FnFunctional::new("prod", |p| sum_sq(p) * sum_cos(p));
        let (df, dg) = (add_one_cost(&f, &cfg, &z).unwrap(), add_one_cost(&g, &cfg, &z).unwrap());
        prop_assert!(rel_close(add_one_cost(&comb, &cfg, &z).unwrap(), a * df + b * dg, 1e-12));
        let (fv, gv) = (f.evaluate(&cfg), g.evaluate(&cfg));
        prop_assert!(rel_close(add_one_cost(&prod, &cfg, &z).unwrap(), fv * dg + gv * df + df * dg, 1e-10));
    }

    #[test]
    fn second_difference_is_symmetric(seed in 0u64..10_000) {
        let c = ControlMeasure::unit_cube(1, 8.0).unwrap();
        let mut r = rng(seed);
        let cfg = uniform_points(&c, r.random_range(0..10), &mut r);
        let (z1, z2) = (uniform_point(c.domain(), &mut r), uniform_point(c.domain(), &mut r));
        let f = FnFunctional::new("cos", sum_cos);
        let a = second_difference(&f, &cfg, &z1, &z2).unwrap();
        let b = second_difference(&f, &cfg, &z2, &z1).unwrap();
        // equal up to evaluation order of the four terms
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + f.evaluate(&cfg).abs()), "{} {}", a, b);
    }

    #[test]
    fn nonnegative_kernels_give_nonnegative_increments(seed in 0u64..10_000, r0 in 0.01f64..0.5) {
        let c = ControlMeasure::unit_cube(2, 10.0).unwrap();
        let mut r = rng(seed);
        let cfg = uniform_points(&c, r.random_range(0..15), &mut r);
        let z = uniform_point(c.domain(), &mut r);
        let u = UStatistic { kernel: Kernel::indicator_distance(r0, 2).unwrap(), order: 2 };
        prop_assert!(add_one_cost(&u, &cfg, &z).unwrap() >= 0.0);
        let lin = LinearStatistic(Kernel::constant(1, 2, 2.0).unwrap());
        prop_assert_eq!(add_one_cost(&lin, &cfg, &z).unwrap(), 2.0);
    }
}
