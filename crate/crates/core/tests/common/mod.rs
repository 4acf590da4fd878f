#![allow(dead_code)]

use poisson_stein::measure_space::{BoxDomain, ControlMeasure};
use poisson_stein::point_process::PointConfiguration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `k` uniform points in the control's box.
pub fn uniform_points(control: &ControlMeasure, k: usize, rng: &mut ChaCha8Rng) -> PointConfiguration {
    let dom = control.domain();
    let mut coords = Vec::with_capacity(k * dom.dim());
    for _ in 0..k {
        for a in 0..dom.dim() {
            let (lo, hi) = dom.axis(a);
            coords.push(rng.random_range(lo..hi));
        }
    }
    PointConfiguration::new(dom.clone(), coords).unwrap()
}

pub fn uniform_point(dom: &BoxDomain, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dom.dim())
        .map(|a| {
            let (lo, hi) = dom.axis(a);
            rng.random_range(lo..hi)
        })
        .collect()
}
