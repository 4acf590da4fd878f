//! Control measures `mu_n = n * p(x) dx` on boxes and the integration engine
//! shared by every norm, contraction and compensator in the crate.
//!
//! Integrals against `mu_n^m` are always computed as `n^m` times an integral
//! against `p^{(x)m}`, so changing the intensity never changes nodes or samples.
//!
//! The quadrature is composite Gauss-Legendre per axis. Integrands may report
//! breakpoints (kinks or jumps) along a coordinate given the coordinates that
//! are already fixed; panels are split there, which keeps indicator kernels
//! exact up to rounding.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::chaos::Kernel;
use crate::error::{Error, Result};
use crate::rng::{substream, SimRng};

/// Largest total number of scalar coordinates integrated by tensor quadrature.
pub const QUADRATURE_MAX_DIM: usize = 4;

/// Largest number of scalar coordinates any kernel may take.
pub const MAX_COORDS: usize = 24;

/// Rejection sampling gives up below this acceptance rate.
pub const REJECTION_FLOOR: f64 = 1e-3;

const MC_CHUNK: usize = 4096;

pub type Breaks = SmallVec<[f64; 16]>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidArgument(format!(
                "box bounds must be nonempty and of equal length (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidArgument(format!(
                    "box side [{a}, {b}] has no positive length"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn axis(&self, a: usize) -> (f64, f64) {
        (self.lo[a], self.hi[a])
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }
}

/// A probability density on a box.
pub trait Density: Send + Sync + fmt::Debug {
    fn pdf(&self, x: &[f64]) -> f64;

    /// An upper bound of the density on the box.
    fn sup(&self) -> f64;

    /// Points where the density is not smooth along `axis`.
    fn breakpoints(&self, _axis: usize) -> &[f64] {
        &[]
    }

    /// Draws one point. The default is rejection against the bounding box.
    fn sample(&self, domain: &BoxDomain, rng: &mut SimRng, out: &mut [f64]) -> Result<()> {
        let rate = 1.0 / (self.sup() * domain.volume());
        if !(rate >= REJECTION_FLOOR) {
            return Err(Error::DensityTooPeaked {
                rate,
                floor: REJECTION_FLOOR,
            });
        }
        let sup = self.sup();
        loop {
            for (a, o) in out.iter_mut().enumerate() {
                let (lo, hi) = domain.axis(a);
                *o = lo + (hi - lo) * rng.random::<f64>();
            }
            if rng.random::<f64>() * sup < self.pdf(out) {
                return Ok(());
            }
        }
    }

    fn is_uniform(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug)]
pub struct UniformDensity {
    value: f64,
}

impl UniformDensity {
    pub fn on(domain: &BoxDomain) -> Self {
        Self {
            value: 1.0 / domain.volume(),
        }
    }
}

impl Density for UniformDensity {
    fn pdf(&self, _x: &[f64]) -> f64 {
        self.value
    }

    fn sup(&self) -> f64 {
        self.value
    }

    fn sample(&self, domain: &BoxDomain, rng: &mut SimRng, out: &mut [f64]) -> Result<()> {
        for (a, o) in out.iter_mut().enumerate() {
            let (lo, hi) = domain.axis(a);
            *o = lo + (hi - lo) * rng.random::<f64>();
        }
        Ok(())
    }

    fn is_uniform(&self) -> bool {
        true
    }
}

type PdfFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A density given by a closure, sampled by rejection.
#[derive(Clone)]
pub struct FnDensity {
    pdf: Arc<PdfFn>,
    sup: f64,
    breaks: Vec<Vec<f64>>,
}

impl FnDensity {
    /// `sup` must bound the density on the support. `breaks[a]` lists the
    /// non-smooth points along axis `a` (may be empty).
    pub fn new(
        pdf: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        sup: f64,
        breaks: Vec<Vec<f64>>,
    ) -> Self {
        Self {
            pdf: Arc::new(pdf),
            sup,
            breaks,
        }
    }
}

impl fmt::Debug for FnDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnDensity").field("sup", &self.sup).finish()
    }
}

impl Density for FnDensity {
    fn pdf(&self, x: &[f64]) -> f64 {
        (self.pdf)(x)
    }

    fn sup(&self) -> f64 {
        self.sup
    }

    fn breakpoints(&self, axis: usize) -> &[f64] {
        self.breaks.get(axis).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// The measure `n * p(x) dx` on a box.
#[derive(Clone, Debug)]
pub struct ControlMeasure {
    domain: BoxDomain,
    density: Arc<dyn Density>,
    intensity: f64,
}

impl ControlMeasure {
    /// Checks that `p` integrates to one on the box (quadrature up to four
    /// dimensions, Monte Carlo above).
    pub fn new(domain: BoxDomain, density: Arc<dyn Density>, intensity: f64) -> Result<Self> {
        if !(intensity.is_finite() && intensity > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "intensity must be positive, got {intensity}"
            )));
        }
        let probe = Self {
            domain,
            density,
            intensity: 1.0,
        };
        if !probe.density.is_uniform() {
            let d = probe.dim();
            let (mass, tol) = if d <= QUADRATURE_MAX_DIM {
                let budget = if d <= 2 { 64 } else { 24 };
                let rule = PanelRule::from_budget(budget);
                (quadrature(&|_: &[f64]| 1.0, &probe, 1, &rule), 1e-6)
            } else {
                // uniform points in the box, average of p * volume
                let mut rng = substream(0, 0);
                let vol = probe.domain.volume();
                let count = 200_000;
                let mut x = vec![0.0; d];
                let (mut s, mut s2) = (0.0, 0.0);
                for _ in 0..count {
                    UniformDensity::on(&probe.domain).sample(&probe.domain, &mut rng, &mut x)?;
                    let v = probe.density.pdf(&x) * vol;
                    s += v;
                    s2 += v * v;
                }
                let mean = s / count as f64;
                let se = ((s2 / count as f64 - mean * mean).max(0.0) / count as f64).sqrt();
                (mean, 5.0 * se.max(1e-12))
            };
            if !((mass - 1.0).abs() <= tol) {
                return Err(Error::InvalidArgument(format!(
                    "density integrates to {mass} on the support, expected 1"
                )));
            }
        }
        Ok(Self {
            intensity,
            ..probe
        })
    }

    pub fn uniform(domain: BoxDomain, intensity: f64) -> Result<Self> {
        let density = Arc::new(UniformDensity::on(&domain));
        Self::new(domain, density, intensity)
    }

    /// Uniform density on `[0,1]^dim` with intensity `n`.
    pub fn unit_cube(dim: usize, intensity: f64) -> Result<Self> {
        Self::uniform(BoxDomain::unit(dim), intensity)
    }

    /// Same density and support, different intensity.
    pub fn with_intensity(&self, intensity: f64) -> Result<Self> {
        if !(intensity.is_finite() && intensity > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "intensity must be positive, got {intensity}"
            )));
        }
        Ok(Self {
            intensity,
            ..self.clone()
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn density(&self) -> &Arc<dyn Density> {
        &self.density
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.density.pdf(x)
    }

    pub fn sample_point(&self, rng: &mut SimRng, out: &mut [f64]) -> Result<()> {
        self.density.sample(&self.domain, rng, out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Composite Gauss-Legendre per axis with breakpoint splitting.
    Quadrature,
    MonteCarlo,
    /// Quadrature when the total integration dimension is at most
    /// [`QUADRATURE_MAX_DIM`], Monte Carlo otherwise.
    Auto,
}

/// How to integrate. `budget` is the number of quadrature nodes per axis
/// (before breakpoint splitting); `samples` is the Monte Carlo sample count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationSpec {
    pub method: Method,
    pub budget: usize,
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for IntegrationSpec {
    fn default() -> Self {
        Self {
            method: Method::Auto,
            budget: 64,
            samples: 100_000,
            seed: 0,
            tolerance: 1e-8,
        }
    }
}

impl IntegrationSpec {
    pub fn quadrature(budget: usize) -> Self {
        Self {
            method: Method::Quadrature,
            budget,
            ..Self::default()
        }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            method: Method::MonteCarlo,
            samples,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget < 1 || self.samples < 1 {
            return Err(Error::InvalidArgument(
                "integration budget and samples must be at least 1".into(),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(
                "integration tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The method actually used for an integral of the given total dimension.
    pub fn resolve(&self, total_dim: usize) -> Result<Method> {
        match self.method {
            Method::Quadrature if total_dim > QUADRATURE_MAX_DIM => Err(Error::MethodUnsupported(
                format!(
                    "tensor quadrature over {total_dim} coordinates exceeds the ceiling of {QUADRATURE_MAX_DIM}"
                ),
            )),
            Method::Auto if total_dim > QUADRATURE_MAX_DIM => Ok(Method::MonteCarlo),
            Method::Auto => Ok(Method::Quadrature),
            m => Ok(m),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Monte Carlo standard error; zero for quadrature.
    pub stderr: f64,
    /// Quadrature refinement residual |Q(budget) - Q(budget/2)|; zero for MC.
    pub residual: f64,
}

/// A real function of `m` points, flattened into `m * dim` coordinates.
pub trait Integrand: Sync {
    fn eval(&self, x: &[f64]) -> f64;

    /// Pushes the positions along coordinate `coord` where the integrand is
    /// not smooth, given that the coordinates with `known[c]` set hold their
    /// final values in `x`.
    fn breakpoints(
        &self,
        _x: &[f64],
        _known: &[bool],
        _coord: usize,
        _domain: &BoxDomain,
        _out: &mut Breaks,
    ) {
    }

    /// Coordinates integrated internally by each evaluation.
    fn inner_dims(&self) -> usize {
        0
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Integrand for F {
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre order must be positive");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// A composite Gauss-Legendre rule: `panels` equal panels of `order` nodes,
/// further split at caller-supplied breakpoints.
#[derive(Clone, Debug)]
pub struct PanelRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    panels: usize,
}

impl PanelRule {
    pub fn new(order: usize, panels: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order.max(1));
        Self {
            nodes,
            weights,
            panels: panels.max(1),
        }
    }

    /// Up to 16 nodes per panel, as many panels as the budget allows.
    pub fn from_budget(budget: usize) -> Self {
        let order = budget.clamp(1, 16);
        Self::new(order, budget.max(1).div_ceil(order))
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    /// Calls `f(node, weight)` for every node on `[lo, hi]`.
    pub fn for_each_node(&self, lo: f64, hi: f64, breaks: &[f64], mut f: impl FnMut(f64, f64)) {
        let mut cuts: SmallVec<[f64; 64]> = SmallVec::new();
        let width = hi - lo;
        for j in 0..=self.panels {
            cuts.push(lo + width * j as f64 / self.panels as f64);
        }
        cuts.extend(breaks.iter().copied().filter(|b| *b > lo && *b < hi));
        cuts.sort_unstable_by(f64::total_cmp);
        let eps = 1e-13 * width;
        let mut a = cuts[0];
        for &b in &cuts[1..] {
            if b - a <= eps {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (t, w) in self.nodes.iter().zip(&self.weights) {
                f(mid + half * t, half * w);
            }
            a = b;
        }
    }
}

struct Tensor<'a, G: ?Sized> {
    g: &'a G,
    control: &'a ControlMeasure,
    rule: &'a PanelRule,
    dim: usize,
    m: usize,
}

impl<G: Integrand + ?Sized> Tensor<'_, G> {
    fn level(&self, c: usize, x: &mut [f64], known: &mut [bool]) -> f64 {
        if c == x.len() {
            let mut v = self.g.eval(x);
            for j in 0..self.m {
                v *= self.control.pdf(&x[j * self.dim..(j + 1) * self.dim]);
            }
            return v;
        }
        let axis = c % self.dim;
        let (lo, hi) = self.control.domain().axis(axis);
        let mut breaks = Breaks::new();
        self.g
            .breakpoints(x, known, c, self.control.domain(), &mut breaks);
        breaks.extend_from_slice(self.control.density().breakpoints(axis));
        let mut acc = 0.0;
        known[c] = true;
        self.rule.for_each_node(lo, hi, &breaks, |t, w| {
            x[c] = t;
            acc += w * self.level(c + 1, x, known);
        });
        known[c] = false;
        acc
    }
}

/// Tensor quadrature of `g` against `p^{(x)m}` (no intensity factor and no
/// finiteness check). Building block for inner integrals inside kernels.
pub(crate) fn quadrature_prob<G: Integrand + ?Sized>(
    g: &G,
    control: &ControlMeasure,
    m: usize,
    rule: &PanelRule,
) -> f64 {
    let dim = control.dim();
    let n = m * dim;
    assert!(n <= MAX_COORDS, "too many coordinates for quadrature");
    let mut x = [0.0; MAX_COORDS];
    let mut known = [false; MAX_COORDS];
    Tensor {
        g,
        control,
        rule,
        dim,
        m,
    }
    .level(0, &mut x[..n], &mut known[..n])
}

/// Like [`quadrature_prob`] but against `mu_n^m`.
pub(crate) fn quadrature<G: Integrand + ?Sized>(
    g: &G,
    control: &ControlMeasure,
    m: usize,
    rule: &PanelRule,
) -> f64 {
    control.intensity().powi(m as i32) * quadrature_prob(g, control, m, rule)
}

fn monte_carlo<G: Integrand + ?Sized>(
    g: &G,
    control: &ControlMeasure,
    m: usize,
    spec: &IntegrationSpec,
) -> Result<Estimate> {
    let dim = control.dim();
    let n = m * dim;
    if n > MAX_COORDS {
        return Err(Error::MethodUnsupported(format!(
            "{n} coordinates exceed the kernel limit of {MAX_COORDS}"
        )));
    }
    let total = spec.samples;
    let chunks = total.div_ceil(MC_CHUNK);
    let parts: Vec<Result<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(spec.seed, c as u64);
            let count = MC_CHUNK.min(total - c * MC_CHUNK);
            let mut x = [0.0; MAX_COORDS];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                for j in 0..m {
                    control.sample_point(&mut rng, &mut x[j * dim..(j + 1) * dim])?;
                }
                let v = g.eval(&x[..n]);
                s += v;
                s2 += v * v;
            }
            Ok((s, s2))
        })
        .collect();
    let (mut s, mut s2) = (0.0, 0.0);
    for p in parts {
        let (a, b) = p?;
        s += a;
        s2 += b;
    }
    let nn = total as f64;
    let mean = s / nn;
    let var = if total > 1 {
        ((s2 - nn * mean * mean) / (nn - 1.0)).max(0.0)
    } else {
        0.0
    };
    let scale = control.intensity().powi(m as i32);
    let est = Estimate {
        value: scale * mean,
        stderr: scale * (var / nn).sqrt(),
        residual: 0.0,
    };
    if !est.value.is_finite() {
        return Err(Error::NumericalDomain(
            "integrand returned a non-finite value at a Monte Carlo sample".into(),
        ));
    }
    Ok(est)
}

/// `int g d mu_n^m` for a function of `m` points.
pub fn integrate<G: Integrand + ?Sized>(
    g: &G,
    control: &ControlMeasure,
    m: usize,
    spec: &IntegrationSpec,
) -> Result<Estimate> {
    spec.validate()?;
    if m == 0 {
        let v = g.eval(&[]);
        if !v.is_finite() {
            return Err(Error::NumericalDomain("constant integrand is not finite".into()));
        }
        return Ok(Estimate {
            value: v,
            stderr: 0.0,
            residual: 0.0,
        });
    }
    let total = m * control.dim() + g.inner_dims();
    match spec.resolve(total)? {
        Method::MonteCarlo => monte_carlo(g, control, m, spec),
        _ => {
            let value = quadrature(g, control, m, &PanelRule::from_budget(spec.budget));
            if !value.is_finite() {
                return Err(Error::NumericalDomain(
                    "integrand returned a non-finite value at a quadrature node".into(),
                ));
            }
            let coarse = quadrature(g, control, m, &PanelRule::from_budget(spec.budget / 2));
            Ok(Estimate {
                value,
                stderr: 0.0,
                residual: (value - coarse).abs(),
            })
        }
    }
}

struct Squared<'a>(&'a Kernel);

impl Integrand for Squared<'_> {
    fn eval(&self, x: &[f64]) -> f64 {
        let v = self.0.eval(x);
        v * v
    }

    fn breakpoints(
        &self,
        x: &[f64],
        known: &[bool],
        coord: usize,
        domain: &BoxDomain,
        out: &mut Breaks,
    ) {
        self.0.breakpoints(x, known, coord, domain, out)
    }

    fn inner_dims(&self) -> usize {
        self.0.inner_dims()
    }
}

/// `int f^2 d mu_n^q` as an [`Estimate`].
pub fn l2_norm_squared(f: &Kernel, control: &ControlMeasure, spec: &IntegrationSpec) -> Result<Estimate> {
    check_dim(f, control)?;
    integrate(&Squared(f), control, f.arity(), spec)
}

/// `||f||` in `L^2(mu_n^q)`.
pub fn l2_norm(f: &Kernel, control: &ControlMeasure, spec: &IntegrationSpec) -> Result<f64> {
    Ok(l2_norm_squared(f, control, spec)?.value.max(0.0).sqrt())
}

pub(crate) fn check_dim(f: &Kernel, control: &ControlMeasure) -> Result<()> {
    if f.dim() != control.dim() {
        return Err(Error::InvalidArgument(format!(
            "kernel points are {}-dimensional but the control measure is {}-dimensional",
            f.dim(),
            control.dim()
        )));
    }
    Ok(())
}
