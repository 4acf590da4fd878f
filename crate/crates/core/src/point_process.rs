//! Poisson random measures with finite control, pathwise functionals, and the
//! add-one-cost difference operators.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::chaos::{ustat_evaluate, Kernel};
use crate::error::{Error, Result};
use crate::measure_space::{BoxDomain, ControlMeasure, MAX_COORDS};
use crate::rng::{substream, SimRng};

/// Random access to a finite set of points in `R^d`.
pub trait PointSet: Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn point(&self, i: usize) -> &[f64];
    fn domain(&self) -> &BoxDomain;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One realization of a Poisson random measure: finitely many distinct points
/// in the support of the control.
#[derive(Clone, Debug, PartialEq)]
pub struct PointConfiguration {
    dim: usize,
    coords: Vec<f64>,
    domain: BoxDomain,
}

impl PointConfiguration {
    /// Points are given flat (`coords.len()` a multiple of the dimension).
    pub fn new(domain: BoxDomain, coords: Vec<f64>) -> Result<Self> {
        let dim = domain.dim();
        if coords.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates do not form {dim}-dimensional points",
                coords.len()
            )));
        }
        for p in coords.chunks_exact(dim) {
            if !domain.contains(p) {
                return Err(Error::Domain(format!("point {p:?} outside the support")));
            }
        }
        let mut keys: Vec<&[f64]> = coords.chunks_exact(dim).collect();
        keys.sort_unstable_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if keys.windows(2).any(|w| same_bits(w[0], w[1])) {
            return Err(Error::DuplicatePoint);
        }
        Ok(Self { dim, coords, domain })
    }

    pub fn empty(domain: BoxDomain) -> Self {
        Self {
            dim: domain.dim(),
            coords: Vec::new(),
            domain,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Number of points inside the axis-aligned box `[lo, hi)`.
    pub fn count_in(&self, lo: &[f64], hi: &[f64]) -> usize {
        self.points()
            .filter(|p| p.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v >= a && v < b))
            .count()
    }
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

impl PointSet for PointConfiguration {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
}

/// A configuration plus up to a few extra points, without copying the base.
pub struct Extended<'a> {
    base: &'a dyn PointSet,
    extra: [f64; MAX_COORDS],
    n_extra: usize,
}

impl<'a> Extended<'a> {
    /// `base` plus the points in `extra` (flat). Rejects points outside the
    /// support and exact duplicates.
    pub fn new(base: &'a dyn PointSet, extra: &[f64]) -> Result<Self> {
        let d = base.dim();
        if extra.len() % d != 0 || extra.len() > MAX_COORDS {
            return Err(Error::InvalidArgument(format!(
                "cannot add {} coordinates to {d}-dimensional points",
                extra.len()
            )));
        }
        let pts: Vec<&[f64]> = extra.chunks_exact(d).collect();
        for (k, z) in pts.iter().enumerate() {
            if !base.domain().contains(z) {
                return Err(Error::Domain(format!("point {z:?} outside the support")));
            }
            let dup_base = (0..base.len()).any(|i| same_bits(base.point(i), z));
            let dup_extra = pts[..k].iter().any(|w| same_bits(w, z));
            if dup_base || dup_extra {
                return Err(Error::DuplicatePoint);
            }
        }
        let mut buf = [0.0; MAX_COORDS];
        buf[..extra.len()].copy_from_slice(extra);
        Ok(Self {
            base,
            extra: buf,
            n_extra: extra.len() / d,
        })
    }
}

impl PointSet for Extended<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn len(&self) -> usize {
        self.base.len() + self.n_extra
    }

    fn point(&self, i: usize) -> &[f64] {
        let n = self.base.len();
        if i < n {
            self.base.point(i)
        } else {
            let d = self.dim();
            &self.extra[(i - n) * d..(i - n + 1) * d]
        }
    }

    fn domain(&self) -> &BoxDomain {
        self.base.domain()
    }
}

/// A real-valued function of a configuration. Must be deterministic and
/// shareable across threads.
pub trait Functional: Send + Sync {
    fn evaluate(&self, cfg: &dyn PointSet) -> f64;
    fn label(&self) -> String;
}

/// `eta(support)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PointCount;

impl Functional for PointCount {
    fn evaluate(&self, cfg: &dyn PointSet) -> f64 {
        cfg.len() as f64
    }

    fn label(&self) -> String {
        "point_count".into()
    }
}

/// `sum_{z in eta} f(z)` for an arity-1 kernel.
#[derive(Clone, Debug)]
pub struct LinearStatistic(pub Kernel);

impl Functional for LinearStatistic {
    fn evaluate(&self, cfg: &dyn PointSet) -> f64 {
        (0..cfg.len()).map(|i| self.0.eval(cfg.point(i))).sum()
    }

    fn label(&self) -> String {
        format!("linear({})", self.0.label())
    }
}

/// The U-statistic of order `k`: sum over ordered distinct `k`-tuples.
#[derive(Clone, Debug)]
pub struct UStatistic {
    pub kernel: Kernel,
    pub order: usize,
}

impl Functional for UStatistic {
    fn evaluate(&self, cfg: &dyn PointSet) -> f64 {
        ustat_evaluate(&self.kernel, self.order, cfg)
    }

    fn label(&self) -> String {
        format!("ustat{}({})", self.order, self.kernel.label())
    }
}

type FnEval = dyn Fn(&dyn PointSet) -> f64 + Send + Sync;

/// A functional given by a closure.
#[derive(Clone)]
pub struct FnFunctional {
    f: Arc<FnEval>,
    label: String,
}

impl FnFunctional {
    pub fn new(label: impl Into<String>, f: impl Fn(&dyn PointSet) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            label: label.into(),
        }
    }
}

impl fmt::Debug for FnFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnFunctional").field("label", &self.label).finish()
    }
}

impl Functional for FnFunctional {
    fn evaluate(&self, cfg: &dyn PointSet) -> f64 {
        (self.f)(cfg)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Draws `N ~ Poisson(mean)`: inversion for small means, the `rand_distr`
/// transformed-rejection sampler above 30.
pub fn sample_poisson_count(mean: f64, rng: &mut SimRng) -> u64 {
    if mean <= 30.0 {
        let u: f64 = rng.random();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut k = 0u64;
        while u > cdf && p > 0.0 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        k
    } else {
        Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
    }
}

/// Samples `eta_n`: `N ~ Poisson(n)` then `N` i.i.d. points with density `p`.
pub fn sample_configuration_with(control: &ControlMeasure, rng: &mut SimRng) -> Result<PointConfiguration> {
    let n = sample_poisson_count(control.intensity(), rng) as usize;
    let d = control.dim();
    let mut coords = vec![0.0; n * d];
    for p in coords.chunks_exact_mut(d) {
        control.sample_point(rng, p)?;
    }
    Ok(PointConfiguration {
        dim: d,
        coords,
        domain: control.domain().clone(),
    })
}

/// Deterministic in `seed`: uses stream 0 of the seed's generator family.
pub fn sample_configuration(control: &ControlMeasure, seed: u64) -> Result<PointConfiguration> {
    sample_configuration_with(control, &mut substream(seed, 0))
}

/// `D_z F = F(cfg + z) - F(cfg)`.
pub fn add_one_cost(f: &dyn Functional, cfg: &dyn PointSet, z: &[f64]) -> Result<f64> {
    let ext = Extended::new(cfg, z)?;
    Ok(f.evaluate(&ext) - f.evaluate(cfg))
}

/// `D^2_{z1,z2} F = F(cfg+z1+z2) - F(cfg+z1) - F(cfg+z2) + F(cfg)`.
pub fn second_difference(f: &dyn Functional, cfg: &dyn PointSet, z1: &[f64], z2: &[f64]) -> Result<f64> {
    let mut both = [0.0; MAX_COORDS];
    let d = cfg.dim();
    if z1.len() != d || z2.len() != d {
        return Err(Error::InvalidArgument(format!("points must have dimension {d}")));
    }
    both[..d].copy_from_slice(z1);
    both[d..2 * d].copy_from_slice(z2);
    let e12 = Extended::new(cfg, &both[..2 * d])?;
    let e1 = Extended::new(cfg, z1)?;
    let e2 = Extended::new(cfg, z2)?;
    Ok(f.evaluate(&e12) - f.evaluate(&e1) - f.evaluate(&e2) + f.evaluate(cfg))
}
