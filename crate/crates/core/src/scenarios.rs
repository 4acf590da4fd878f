//! Ready-made experiments: degenerate cosine U-statistics, pair counts within
//! a radius, and time averages of an Ornstein-Uhlenbeck-Levy process.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use std::collections::BTreeMap;

use crate::bounds::{Assembly, BoundReport, ContractionKey};
use crate::chaos::{
    chaos_variance, hoeffding_kernels, ustat_mean, ChaosExpansion, Kernel, KernelFn,
};
use crate::diagnostics::{kolmogorov_distance, KolmogorovDistance, RateRow, RateTable, SampleSet, KOLMOGOROV_SD};
use crate::error::{Error, Result};
use crate::measure_space::{
    gauss_legendre, l2_norm_squared, BoxDomain, Breaks, ControlMeasure, FnDensity, IntegrationSpec,
    UniformDensity,
};
use crate::point_process::{sample_configuration_with, Functional, PointSet};
use crate::rng::{child_seed, substream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub sd: f64,
}

/// A functional of a Poisson random measure together with its control, its
/// centring and scaling, and (when known) the chaos expansion of the
/// normalized functional `(F - mean) / sd`.
#[derive(Clone)]
pub struct Scenario {
    pub label: String,
    pub control: ControlMeasure,
    pub functional: Arc<dyn Functional>,
    pub expansion: Option<ChaosExpansion>,
    pub normalization: Normalization,
    pub expected_rate: Option<f64>,
    pub params: Value,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("label", &self.label)
            .field("normalization", &self.normalization)
            .field("params", &self.params)
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub mean: f64,
    pub mean_stderr: f64,
    pub variance: f64,
    pub variance_stderr: f64,
    /// Both moments within 4 standard errors of the normalization.
    pub ok: bool,
}

impl Scenario {
    pub fn normalized(&self, cfg: &dyn PointSet) -> f64 {
        (self.functional.evaluate(cfg) - self.normalization.mean) / self.normalization.sd
    }

    fn run(&self, reps: usize, seed: u64, normalize: bool) -> Result<SampleSet> {
        if reps == 0 {
            return Err(Error::InvalidArgument("reps must be positive".into()));
        }
        let values: Vec<Result<f64>> = (0..reps)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, i as u64);
                let cfg = sample_configuration_with(&self.control, &mut rng)?;
                let v = if normalize {
                    self.normalized(&cfg)
                } else {
                    self.functional.evaluate(&cfg)
                };
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NumericalDomain(format!("{} returned {v}", self.label)))
                }
            })
            .collect();
        Ok(SampleSet::new(
            values.into_iter().collect::<Result<_>>()?,
            format!("seed={seed} streams=0..{reps}"),
        ))
    }

    /// `reps` normalized values; replicate `i` uses stream `i` of `seed`.
    pub fn simulate(&self, reps: usize, seed: u64) -> Result<SampleSet> {
        self.run(reps, seed, true)
    }

    /// Same replicates as [`Scenario::simulate`], before normalization.
    pub fn simulate_raw(&self, reps: usize, seed: u64) -> Result<SampleSet> {
        self.run(reps, seed, false)
    }

    /// Compares the Monte Carlo mean and variance of the raw functional with
    /// the normalization.
    pub fn consistency(&self, reps: usize, seed: u64) -> Result<Consistency> {
        let s = self.simulate_raw(reps, seed)?;
        let mean = s.mean();
        let mean_stderr = (s.variance() / s.len() as f64).sqrt();
        let variance = s.variance();
        let variance_stderr = s.variance_stderr();
        let target = self.normalization.sd.powi(2);
        let ok = (mean - self.normalization.mean).abs() <= 4.0 * mean_stderr
            && (variance - target).abs() <= 4.0 * variance_stderr;
        Ok(Consistency {
            mean,
            mean_stderr,
            variance,
            variance_stderr,
            ok,
        })
    }
}

/// `U = sum_{i != k} h(x_i, x_k)` for the cosine family, in `O(N m)` via
/// `sum_{i != k} a_i a_k = (sum a)^2 - sum a^2`.
#[derive(Clone, Debug)]
pub struct CosineUStatistic {
    pub m: usize,
}

impl Functional for CosineUStatistic {
    fn evaluate(&self, cfg: &dyn PointSet) -> f64 {
        let mut total = 0.0;
        for j in 1..=self.m {
            let (mut s, mut s2) = (0.0, 0.0);
            for i in 0..cfg.len() {
                let a = 2f64.sqrt() * (2.0 * PI * j as f64 * cfg.point(i)[0]).cos();
                s += a;
                s2 += a * a;
            }
            total += s * s - s2;
        }
        total / (self.m as f64).sqrt()
    }

    fn label(&self) -> String {
        format!("cosine_ustat(m={})", self.m)
    }
}

/// `sum_{i != k} 1(|x_i - x_k|_inf <= r)`, by a sorted sweep.
#[derive(Clone, Debug)]
pub struct PairCount {
    pub r: f64,
}

impl Functional for PairCount {
    fn evaluate(&self, cfg: &dyn PointSet) -> f64 {
        let d = cfg.dim();
        let mut pts: Vec<&[f64]> = (0..cfg.len()).map(|i| cfg.point(i)).collect();
        pts.sort_unstable_by(|a, b| a[0].total_cmp(&b[0]));
        let mut pairs = 0u64;
        for i in 0..pts.len() {
            for q in &pts[i + 1..] {
                if q[0] - pts[i][0] > self.r {
                    break;
                }
                if (1..d).all(|a| (q[a] - pts[i][a]).abs() <= self.r) {
                    pairs += 1;
                }
            }
        }
        2.0 * pairs as f64
    }

    fn label(&self) -> String {
        format!("pair_count(r={})", self.r)
    }
}

/// Degenerate U-statistic with `h = m^{-1/2} sum_{j<=m} phi_j (x) phi_j`,
/// `phi_j = sqrt(2) cos(2 pi j .)`, on uniform [0,1] with intensity `n`.
pub fn build_dejong_cosine(n: f64, m: usize) -> Result<Scenario> {
    if !(n >= 1.0) || m == 0 {
        return Err(Error::InvalidArgument(format!("need n >= 1 and m >= 1, got n = {n}, m = {m}")));
    }
    let control = ControlMeasure::unit_cube(1, n)?;
    let h = Kernel::cosine_family(m)?;
    let spec = IntegrationSpec::quadrature(64);
    let h2 = l2_norm_squared(&h, &control.with_intensity(1.0)?, &spec)?.value;
    let sd = (2.0 * n * n * h2).sqrt();
    Ok(Scenario {
        label: format!("dejong-cosine(n={n}, m={m})"),
        functional: Arc::new(CosineUStatistic { m }),
        expansion: Some(ChaosExpansion::single(2, h.scaled(1.0 / sd))?),
        control,
        normalization: Normalization { mean: 0.0, sd },
        expected_rate: None,
        params: json!({"name": "dejong-cosine", "n": n, "m": m}),
    })
}

/// `U = sum_{i != k} 1(|x_i - x_k|_inf <= r)` on uniform `[0,1]^d` with
/// intensity `n`, with its Hoeffding expansion.
pub fn build_pairwise(n: f64, r: f64, d: usize) -> Result<Scenario> {
    if !(r > 0.0 && r < 0.25) || !(d == 1 || d == 2) || !(n > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "pairwise scenario needs 0 < r < 1/4, d in {{1, 2}}, n > 0 (got r = {r}, d = {d}, n = {n})"
        )));
    }
    let control = ControlMeasure::unit_cube(d, n)?;
    let spec = IntegrationSpec::quadrature(64);
    let h = Kernel::indicator_distance(r, d)?;
    let mean = ustat_mean(&h, 2, &control, &spec)?;
    let g1 = hoeffding_kernels(&h, 2, 1, &control, &spec)?;
    let g2 = hoeffding_kernels(&h, 2, 2, &control, &spec)?;
    let raw = ChaosExpansion::new(mean, vec![(1, g1), (2, g2)])?;
    let sd = chaos_variance(&raw, &control, &spec)?.sqrt();
    Ok(Scenario {
        label: format!("pairwise(n={n}, r={r}, d={d})"),
        functional: Arc::new(PairCount { r }),
        expansion: Some(raw.normalized(mean, sd)?),
        control,
        normalization: Normalization { mean, sd },
        expected_rate: Some(-0.5),
        params: json!({"name": "pairwise", "n": n, "r": r, "d": d}),
    })
}

type NuPdf = dyn Fn(f64) -> f64 + Send + Sync;

/// The jump measure of the Levy driver: a density on a bounded interval with
/// `int u^2 nu(du) = 1`.
#[derive(Clone)]
pub struct LevyNu {
    lo: f64,
    hi: f64,
    pdf: Arc<NuPdf>,
    sup: f64,
    uniform: bool,
    /// `int u^k nu(du)` for `k = 0..=8`
    moments: [f64; 9],
}

impl fmt::Debug for LevyNu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyNu")
            .field("support", &(self.lo, self.hi))
            .field("moments", &self.moments)
            .finish()
    }
}

impl Default for LevyNu {
    /// Uniform density on `[-sqrt 3, sqrt 3]`: mass 1, `int u^2 = 1`, `int u^4 = 9/5`.
    fn default() -> Self {
        let a = 3f64.sqrt();
        let mut nu = Self::from_density(-a, a, move |_| 1.0 / (2.0 * a), 1.0 / (2.0 * a))
            .expect("default jump measure is valid");
        nu.uniform = true;
        nu
    }
}

impl LevyNu {
    /// `pdf` is a (not necessarily probability) density on `[lo, hi]`
    /// bounded by `sup`.
    pub fn from_density(
        lo: f64,
        hi: f64,
        pdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sup: f64,
    ) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidArgument("jump measure needs a bounded support".into()));
        }
        let (t, w) = gauss_legendre(16);
        let panels = 64;
        let mut moments = [0.0; 9];
        for p in 0..panels {
            let a = lo + (hi - lo) * p as f64 / panels as f64;
            let b = lo + (hi - lo) * (p + 1) as f64 / panels as f64;
            for (ti, wi) in t.iter().zip(&w) {
                let u = 0.5 * (a + b) + 0.5 * (b - a) * ti;
                let v = 0.5 * (b - a) * wi * pdf(u);
                for (k, m) in moments.iter_mut().enumerate() {
                    *m += v * u.powi(k as i32);
                }
            }
        }
        if (moments[2] - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "jump measure must satisfy int u^2 nu(du) = 1, got {}",
                moments[2]
            )));
        }
        Ok(Self {
            lo,
            hi,
            pdf: Arc::new(pdf),
            sup,
            uniform: false,
            moments,
        })
    }

    pub fn moments(&self) -> &[f64; 9] {
        &self.moments
    }

    /// `c_nu = int u^4 nu(du)`.
    pub fn c_nu(&self) -> f64 {
        self.moments[4]
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OuStatistic {
    /// `M_T = T^{-1/2} int_0^T Y_t dt`
    M,
    /// `S_T = T^{-1/2} int_0^T (Y_t^2 - 1) dt`
    S,
    /// `V_T^(h) = T^{-1/2} int_0^T (Y_t Y_{t+h} - e^{-lambda h}) dt`
    V,
}

/// Time averages of `Y_t = sqrt(2 lambda) sum_{x_i <= t} u_i e^{-lambda (t - x_i)}`
/// for marked points `(x_i, u_i)`, integrated exactly between jumps.
#[derive(Clone, Debug)]
pub struct OuFunctional {
    pub stat: OuStatistic,
    pub lambda: f64,
    pub horizon: f64,
    pub lag: f64,
}

impl OuFunctional {
    fn jumps(&self, cfg: &dyn PointSet) -> Vec<(f64, f64)> {
        let c = (2.0 * self.lambda).sqrt();
        let mut ev: Vec<(f64, f64)> = (0..cfg.len())
            .map(|i| {
                let p = cfg.point(i);
                (p[0], c * p[1])
            })
            .collect();
        ev.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        ev
    }

    /// Value of the process at time `t` from the jumps at or before `t`.
    fn value_at(&self, jumps: &[(f64, f64)], t: f64) -> f64 {
        jumps
            .iter()
            .take_while(|j| j.0 <= t)
            .map(|j| j.1 * (-self.lambda * (t - j.0)).exp())
            .sum()
    }

    fn integrate_linear(&self, jumps: &[(f64, f64)]) -> f64 {
        let lam = self.lambda;
        let mut y = self.value_at(jumps, 0.0);
        let (mut t, mut acc) = (0.0, 0.0);
        for &(x, a) in jumps.iter().filter(|j| j.0 > 0.0 && j.0 <= self.horizon) {
            acc += y * (-(-lam * (x - t)).exp_m1()) / lam;
            y = y * (-lam * (x - t)).exp() + a;
            t = x;
        }
        acc + y * (-(-lam * (self.horizon - t)).exp_m1()) / lam
    }

    fn integrate_square(&self, jumps: &[(f64, f64)]) -> f64 {
        let lam = self.lambda;
        let mut y = self.value_at(jumps, 0.0);
        let (mut t, mut acc) = (0.0, 0.0);
        for &(x, a) in jumps.iter().filter(|j| j.0 > 0.0 && j.0 <= self.horizon) {
            acc += y * y * (-(-2.0 * lam * (x - t)).exp_m1()) / (2.0 * lam);
            y = y * (-lam * (x - t)).exp() + a;
            t = x;
        }
        acc + y * y * (-(-2.0 * lam * (self.horizon - t)).exp_m1()) / (2.0 * lam)
    }

    /// `int_0^T Y_t Y_{t+h} dt`: `Z_t = Y_{t+h}` jumps at `x_i - h`.
    fn integrate_lagged(&self, jumps: &[(f64, f64)]) -> f64 {
        let (lam, h) = (self.lambda, self.lag);
        let mut y = self.value_at(jumps, 0.0);
        let mut z = self.value_at(jumps, h);
        let mut events: Vec<(f64, f64, f64)> = jumps
            .iter()
            .filter(|j| j.0 > 0.0 && j.0 <= self.horizon)
            .map(|j| (j.0, j.1, 0.0))
            .collect();
        events.extend(
            jumps
                .iter()
                .filter(|j| j.0 - h > 0.0 && j.0 - h <= self.horizon)
                .map(|j| (j.0 - h, 0.0, j.1)),
        );
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut t, mut acc) = (0.0, 0.0);
        for (x, ay, az) in events {
            let decay = (-lam * (x - t)).exp();
            acc += y * z * (-(-2.0 * lam * (x - t)).exp_m1()) / (2.0 * lam);
            y = y * decay + ay;
            z = z * decay + az;
            t = x;
        }
        acc + y * z * (-(-2.0 * lam * (self.horizon - t)).exp_m1()) / (2.0 * lam)
    }

    /// Left limit of the process at `t`.
    fn value_before(&self, jumps: &[(f64, f64)], t: f64) -> f64 {
        jumps
            .iter()
            .take_while(|j| j.0 < t)
            .map(|j| j.1 * (-self.lambda * (t - j.0)).exp())
            .sum()
    }

    /// The same statistic by Simpson's rule on a grid of `steps` uniform
    /// cells refined at every jump time, with the process evaluated directly
    /// (one-sided limits at cell ends). Cost is `O(steps * N)`.
    pub fn simpson(&self, cfg: &dyn PointSet, steps: usize) -> f64 {
        let jumps = self.jumps(cfg);
        let t_end = self.horizon;
        let mut nodes: Vec<f64> = (0..=steps.max(1))
            .map(|k| t_end * k as f64 / steps.max(1) as f64)
            .collect();
        for &(x, _) in &jumps {
            for s in [x, x - self.lag] {
                if s > 0.0 && s < t_end {
                    nodes.push(s);
                }
            }
        }
        nodes.sort_unstable_by(f64::total_cmp);
        nodes.dedup();
        let c = (-self.lambda * self.lag).exp();
        let g = |t: f64, left: bool| -> f64 {
            let y = if left { self.value_before(&jumps, t) } else { self.value_at(&jumps, t) };
            match self.stat {
                OuStatistic::M => y,
                OuStatistic::S => y * y - 1.0,
                OuStatistic::V => {
                    let z = if left {
                        self.value_before(&jumps, t + self.lag)
                    } else {
                        self.value_at(&jumps, t + self.lag)
                    };
                    y * z - c
                }
            }
        };
        let mut acc = 0.0;
        for ab in nodes.windows(2) {
            let (a, b) = (ab[0], ab[1]);
            acc += (b - a) / 6.0 * (g(a, false) + 4.0 * g(0.5 * (a + b), false) + g(b, true));
        }
        acc / t_end.sqrt()
    }
}

impl Functional for OuFunctional {
    fn evaluate(&self, cfg: &dyn PointSet) -> f64 {
        let jumps = self.jumps(cfg);
        let t = self.horizon;
        let v = match self.stat {
            OuStatistic::M => self.integrate_linear(&jumps),
            OuStatistic::S => self.integrate_square(&jumps) - t,
            OuStatistic::V => self.integrate_lagged(&jumps) - t * (-self.lambda * self.lag).exp(),
        };
        v / t.sqrt()
    }

    fn label(&self) -> String {
        format!("ou_{:?}(T={}, lambda={}, h={})", self.stat, self.horizon, self.lambda, self.lag)
    }
}

#[derive(Clone, Copy, Debug)]
enum OuKernelKind {
    /// first chaos of `M_T`: `u * c(x)`
    Linear,
    /// first chaos of `V_T^(h)`: `u^2 * a(x)` (includes `S_T` at `h = 0`)
    Square,
    /// second chaos of `V_T^(h)`, symmetrized
    Pair,
}

/// Time profiles of the OU-Levy chaos kernels, without the mark factors.
#[derive(Clone, Copy, Debug)]
struct OuTime {
    lambda: f64,
    horizon: f64,
    lag: f64,
}

impl OuTime {
    /// `int_0^T g_t(x) dt` with `g_t(x) = sqrt(2 lambda) e^{-lambda(t-x)} 1(x <= t)`.
    fn linear(&self, x: f64) -> f64 {
        let (lam, t) = (self.lambda, self.horizon);
        if x > t {
            return 0.0;
        }
        (2.0 * lam).sqrt() / lam * ((-lam * (x.max(0.0) - x)).exp() - (-lam * (t - x)).exp())
    }

    /// `int_0^T g_t(x) g_{t+h}(x) dt`.
    fn square(&self, x: f64) -> f64 {
        let (lam, t) = (self.lambda, self.horizon);
        if x > t {
            return 0.0;
        }
        (-lam * self.lag).exp() * ((-2.0 * lam * (x.max(0.0) - x)).exp() - (-2.0 * lam * (t - x)).exp())
    }

    /// `int_0^T g_t(x1) g_{t+h}(x2) dt`.
    fn pair_half(&self, x1: f64, x2: f64) -> f64 {
        let (lam, t) = (self.lambda, self.horizon);
        let a = 0f64.max(x1).max(x2 - self.lag);
        if a > t {
            return 0.0;
        }
        (-lam * self.lag).exp() * ((-lam * (2.0 * a - x1 - x2)).exp() - (-lam * (2.0 * t - x1 - x2)).exp())
    }

    fn pair(&self, x1: f64, x2: f64) -> f64 {
        0.5 * (self.pair_half(x1, x2) + self.pair_half(x2, x1))
    }
}

/// Chaos kernels of the OU-Levy statistics on points `(x, u)`.
struct OuKernel {
    kind: OuKernelKind,
    time: OuTime,
    scale: f64,
    /// panel grid on the time axis, spacing `1/lambda`
    grid: Vec<f64>,
}

impl KernelFn for OuKernel {
    fn eval(&self, p: &[f64]) -> f64 {
        let v = match self.kind {
            OuKernelKind::Linear => p[1] * self.time.linear(p[0]),
            OuKernelKind::Square => p[1] * p[1] * self.time.square(p[0]),
            OuKernelKind::Pair => p[1] * p[3] * self.time.pair(p[0], p[2]),
        };
        self.scale * v
    }

    fn breakpoints(&self, x: &[f64], known: &[bool], coord: usize, _d: &BoxDomain, out: &mut Breaks) {
        if coord % 2 != 0 {
            return;
        }
        out.push(0.0);
        out.push(self.time.horizon);
        if let OuKernelKind::Pair = self.kind {
            let other = if coord == 0 { 2 } else { 0 };
            if known[other] {
                for s in [0.0, self.time.lag, -self.time.lag] {
                    out.push(x[other] + s);
                }
            }
        }
        out.extend_from_slice(&self.grid);
    }
}

/// `2 int_0^T phi(tau) (1 - tau/T) d tau` for an even `phi`, i.e.
/// `T^{-1} int_0^T int_0^T phi(t - s) ds dt`.
fn fejer(phi: impl Fn(f64) -> f64, horizon: f64, lambda: f64, kink: f64) -> f64 {
    let (t, w) = gauss_legendre(16);
    let mut cuts: Vec<f64> = Vec::new();
    let step = 1.0 / lambda;
    let mut c = 0.0;
    while c < horizon {
        cuts.push(c);
        c += step;
    }
    cuts.push(horizon);
    if kink > 0.0 && kink < horizon {
        cuts.push(kink);
    }
    cuts.sort_unstable_by(f64::total_cmp);
    cuts.dedup();
    let mut acc = 0.0;
    for ab in cuts.windows(2) {
        let (a, b) = (ab[0], ab[1]);
        for (ti, wi) in t.iter().zip(&w) {
            let tau = 0.5 * (a + b) + 0.5 * (b - a) * ti;
            acc += 0.5 * (b - a) * wi * phi(tau) * (1.0 - tau / horizon);
        }
    }
    2.0 * acc
}

/// `(var of the first chaos, var of the second chaos)` of `V_T^(h)` at
/// finite `T` (the `S_T` values at `h = 0`), up to `O(e^{-lambda B})`.
fn ou_lagged_variances(lambda: f64, horizon: f64, lag: f64, c_nu: f64) -> (f64, f64) {
    let first = c_nu
        * (-2.0 * lambda * lag).exp()
        * fejer(|tau| lambda * (-2.0 * lambda * tau).exp(), horizon, lambda, 0.0);
    let second = fejer(
        |tau| (-2.0 * lambda * tau).exp() + (-lambda * (tau + lag).abs() - lambda * (tau - lag).abs()).exp(),
        horizon,
        lambda,
        lag,
    );
    (first, second)
}

/// Exact finite-horizon variance of `M_T`.
pub fn ou_variance_m(lambda: f64, horizon: f64) -> f64 {
    fejer(|tau| (-lambda * tau).exp(), horizon, lambda, 0.0)
}

/// Exact finite-horizon variance of `V_T^(h)`; `h = 0` gives `S_T`.
pub fn ou_variance_lagged(lambda: f64, horizon: f64, lag: f64, c_nu: f64) -> f64 {
    let (a, b) = ou_lagged_variances(lambda, horizon, lag, c_nu);
    a + b
}

/// Large-`T` limit of the `V_T^(h)` variance:
/// `1/lambda + e^{-2 lambda h} (2h + 1/lambda) + c_nu e^{-2 lambda h}`.
pub fn ou_asymptotic_variance_lagged(lambda: f64, lag: f64, c_nu: f64) -> f64 {
    let e = (-2.0 * lambda * lag).exp();
    1.0 / lambda + e * (2.0 * lag + 1.0 / lambda) + c_nu * e
}

/// Validates the OU-Levy arguments and returns the burn-in `B`.
fn check_ou_args(lambda: f64, horizon: f64, nu: &LevyNu, truncation_tol: f64, lag: f64) -> Result<f64> {
    if !(truncation_tol > 0.0 && truncation_tol < 1.0) {
        return Err(Error::Domain(format!(
            "truncation tolerance must lie in (0, 1), got {truncation_tol}"
        )));
    }
    if !(lambda > 0.0 && horizon > 0.0 && lag >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need lambda > 0, T > 0, h >= 0 (got {lambda}, {horizon}, {lag})"
        )));
    }
    if nu.moments[1].abs() > 1e-10 {
        return Err(Error::Domain(format!(
            "the jump measure must be symmetric so that the compensator vanishes (int u nu(du) = {})",
            nu.moments[1]
        )));
    }
    Ok((1.0 / truncation_tol).ln() / lambda)
}

type Rule = (Vec<f64>, Vec<f64>);

/// Gauss-Legendre nodes and weights on `[lo, hi]`, split at `breaks` and
/// into panels no longer than `step`.
fn panel_nodes(rule: &Rule, lo: f64, hi: f64, breaks: &[f64], step: f64, out: &mut Vec<(f64, f64)>) {
    out.clear();
    if hi <= lo {
        return;
    }
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_unstable_by(f64::total_cmp);
    cuts.dedup();
    for ab in cuts.windows(2) {
        let pieces = ((ab[1] - ab[0]) / step).ceil().max(1.0) as usize;
        let len = (ab[1] - ab[0]) / pieces as f64;
        for k in 0..pieces {
            let a = ab[0] + k as f64 * len;
            for (t, w) in rule.0.iter().zip(&rule.1) {
                out.push((a + 0.5 * len * (1.0 + t), 0.5 * len * w));
            }
        }
    }
}

/// `int_0^T e^{-lambda |p - r| - lambda |r - q|} dr`.
fn exp_convolution(lambda: f64, horizon: f64, p: f64, q: f64) -> f64 {
    let (lo, hi) = (p.min(q), p.max(q));
    let mut s = 0.0;
    let r1 = lo.min(horizon);
    if r1 > 0.0 {
        s += ((-lambda * (p + q - 2.0 * r1)).exp() - (-lambda * (p + q)).exp()) / (2.0 * lambda);
    }
    let (a, b) = (lo.max(0.0), hi.min(horizon));
    if b > a {
        s += (-lambda * (hi - lo)).exp() * (b - a);
    }
    let r0 = hi.max(0.0);
    if r0 < horizon {
        s += ((-lambda * (2.0 * r0 - p - q)).exp() - (-lambda * (2.0 * horizon - p - q)).exp()) / (2.0 * lambda);
    }
    s
}

/// Integrals of the OU time profiles over `[-B, T + h]`.
struct OuIntegrals {
    time: OuTime,
    burn_in: f64,
    rule: Rule,
    step: f64,
}

impl OuIntegrals {
    fn lo(&self) -> f64 {
        -self.burn_in
    }

    fn hi(&self) -> f64 {
        self.time.horizon + self.time.lag
    }

    fn band(&self) -> f64 {
        self.burn_in + self.time.lag
    }

    fn x_breaks(&self) -> [f64; 4] {
        let (t, h) = (self.time.horizon, self.time.lag);
        [0.0, h, t, t + h]
    }

    /// `(int g^2, int g^4)` for a one-point profile.
    fn one_point(&self, g: impl Fn(f64) -> f64) -> (f64, f64) {
        let mut nodes = Vec::new();
        panel_nodes(&self.rule, self.lo(), self.hi(), &self.x_breaks(), self.step, &mut nodes);
        nodes.iter().fold((0.0, 0.0), |(a, b), &(x, w)| {
            let v = g(x) * g(x);
            (a + w * v, b + w * v * v)
        })
    }

    /// `(int int P^2, int int P^4)`, integrated along diagonals.
    fn pair_powers(&self) -> (f64, f64) {
        let (h, w) = (self.time.lag, self.band());
        let mut deltas = Vec::new();
        panel_nodes(&self.rule, -w, w, &[0.0, h, -h], self.step, &mut deltas);
        let mut xs = Vec::new();
        let (mut p2, mut p4) = (0.0, 0.0);
        for &(d, wd) in &deltas {
            let mut breaks = self.x_breaks().to_vec();
            breaks.extend(self.x_breaks().iter().map(|b| b - d));
            panel_nodes(&self.rule, self.lo().max(self.lo() - d), self.hi().min(self.hi() - d), &breaks, self.step, &mut xs);
            for &(x, wx) in &xs {
                let v = self.time.pair(x, x + d).powi(2);
                p2 += wd * wx * v;
                p4 += wd * wx * v * v;
            }
        }
        (p2, p4)
    }

    /// `(int (int P(x, y)^2 dx)^2 dy, int (int A(x) P(x, y) dx)^2 dy)`.
    fn pair_marginals(&self) -> (f64, f64) {
        let (h, w) = (self.time.lag, self.band());
        let mut ys = Vec::new();
        panel_nodes(&self.rule, self.lo(), self.hi(), &self.x_breaks(), self.step, &mut ys);
        let mut xs = Vec::new();
        let (mut r21, mut cross) = (0.0, 0.0);
        for &(y, wy) in &ys {
            let mut breaks = self.x_breaks().to_vec();
            breaks.extend([y, y - h, y + h]);
            panel_nodes(&self.rule, self.lo().max(y - w), self.hi().min(y + w), &breaks, self.step, &mut xs);
            let (mut a, mut b) = (0.0, 0.0);
            for &(x, wx) in &xs {
                let p = self.time.pair(x, y);
                a += wx * p * p;
                b += wx * self.time.square(x) * p;
            }
            r21 += wy * a * a;
            cross += wy * b * b;
        }
        (r21, cross)
    }

    /// `int int (int P(x, y) P(x, y') dx)^2 dy dy'`, the trace of the fourth
    /// power of the integral operator with kernel `P`.
    ///
    /// `P` is `1/2 sum` of `int_0^T g_{t+a}(x) g_{t+b}(y) dt` over
    /// `(a, b) in {(0, h), (h, 0)}` and `<g_t, g_s> = e^{-lambda |t - s|}` up
    /// to `O(e^{-2 lambda B})`, so the trace is a sum of 16 four-cycles of
    /// shifted exponentials, each a double integral of two closed-form
    /// convolutions.
    fn pair_fourth_trace(&self) -> f64 {
        let (lam, t, h) = (self.time.lambda, self.time.horizon, self.time.lag);
        let pairs = [(0.0, h), (h, 0.0)];
        let mut cache: Vec<([i64; 4], f64)> = Vec::new();
        let mut total = 0.0;
        for word in 0..16 {
            let e: Vec<(f64, f64)> = (0..4).map(|i| pairs[(word >> i) & 1]).collect();
            let shifts: [f64; 4] = std::array::from_fn(|i| e[i].1 - e[(i + 1) % 4].0);
            let key = cycle_key(&shifts, h);
            let value = match cache.iter().find(|(k, _)| *k == key) {
                Some((_, v)) => *v,
                None => {
                    let v = self.four_cycle(lam, t, &shifts);
                    cache.push((key, v));
                    v
                }
            };
            total += value;
        }
        total / 16.0
    }

    /// `int int J(t1 + s1, t3 - s2) J(t3 + s3, t1 - s4) dt1 dt3` over `[0, T]^2`.
    fn four_cycle(&self, lam: f64, t: f64, s: &[f64; 4]) -> f64 {
        let w = self.burn_in + 2.0 * self.time.lag;
        let mut deltas = Vec::new();
        panel_nodes(&self.rule, -w, w, &[0.0, s[0] + s[1], -(s[2] + s[3])], self.step, &mut deltas);
        let mut ts = Vec::new();
        let mut acc = 0.0;
        for &(d, wd) in &deltas {
            let breaks = [-s[0], t - s[0], s[1] - d, t + s[1] - d, -d - s[2], t - d - s[2], s[3], t + s[3]];
            panel_nodes(&self.rule, 0f64.max(-d), t.min(t - d), &breaks, self.step, &mut ts);
            for &(t1, wt) in &ts {
                let t3 = t1 + d;
                acc += wd
                    * wt
                    * exp_convolution(lam, t, t1 + s[0], t3 - s[1])
                    * exp_convolution(lam, t, t3 + s[2], t1 - s[3]);
            }
        }
        acc
    }
}

/// Shifts in units of `h`, up to rotation and reversal of the cycle.
fn cycle_key(shifts: &[f64; 4], h: f64) -> [i64; 4] {
    let units: [i64; 4] = std::array::from_fn(|i| if h > 0.0 { (shifts[i] / h).round() as i64 } else { 0 });
    let mut best = units;
    for r in 0..4 {
        let rot: [i64; 4] = std::array::from_fn(|i| units[(i + r) % 4]);
        let rev: [i64; 4] = std::array::from_fn(|i| -units[(4 + r - i) % 4]);
        best = best.min(rot).min(rev);
    }
    best
}

/// Components of the finite-expansion bound for an OU-Levy statistic,
/// computed from the product form of its kernels instead of generic
/// integration over the strip.
///
/// Every kernel is a power of the marks times a time profile, so each
/// contraction norm factors into moments of `nu` and integrals over time.
/// These are done by breakpoint-aware Gauss-Legendre on the time axis; the
/// `(1,1)` contraction of the second-chaos kernel reduces to four-cycles of
/// exponentials on `[0, T]`. For `S_T` the lag is ignored.
pub fn ou_levy_bound(
    lambda: f64,
    horizon: f64,
    nu: &LevyNu,
    truncation_tol: f64,
    lag: f64,
    stat: OuStatistic,
) -> Result<BoundReport> {
    let lag = if stat == OuStatistic::V { lag } else { 0.0 };
    let burn_in = check_ou_args(lambda, horizon, nu, truncation_tol, lag)?;
    let m = nu.moments;
    let time = OuTime { lambda, horizon, lag };
    let ints = OuIntegrals {
        time,
        burn_in,
        rule: gauss_legendre(8),
        step: 1.0 / lambda,
    };
    let key = |i, j, r, l| ContractionKey { i, j, r, l };
    let mut norms = BTreeMap::new();
    let (gap, sd) = if stat == OuStatistic::M {
        let sd = ou_variance_m(lambda, horizon).sqrt();
        let s2 = 1.0 / (horizon * sd * sd);
        let (l2, l4) = ints.one_point(|x| time.linear(x));
        norms.insert(key(1, 1, 1, 0), s2 * (m[4] * l4).sqrt());
        ((1.0 - s2 * m[2] * l2).abs(), sd)
    } else {
        let sd = ou_variance_lagged(lambda, horizon, lag, nu.c_nu()).sqrt();
        let s2 = 1.0 / (horizon * sd * sd);
        let (a2, a4) = ints.one_point(|x| time.square(x));
        let (p2, p4) = ints.pair_powers();
        let (r21, cross) = ints.pair_marginals();
        let q11 = ints.pair_fourth_trace();
        norms.insert(key(1, 1, 1, 0), s2 * (m[8] * a4).sqrt());
        norms.insert(key(2, 2, 2, 0), s2 * m[4] * p4.sqrt());
        norms.insert(key(2, 2, 1, 1), s2 * m[2] * m[2] * q11.sqrt());
        norms.insert(key(2, 2, 2, 1), s2 * m[2] * (m[4] * r21).sqrt());
        norms.insert(key(1, 2, 1, 1), s2 * m[3].abs() * (m[2] * cross).sqrt());
        ((1.0 - s2 * (m[4] * a2 + 2.0 * m[2] * m[2] * p2)).abs(), sd)
    };
    if norms.values().any(|v| !v.is_finite()) || !gap.is_finite() {
        return Err(Error::NumericalDomain("OU-Levy bound component is not finite".into()));
    }
    let mut report = BoundReport::assembled(gap, norms, Assembly::MaxOfSums);
    report.extras.insert("sd".into(), sd);
    report.extras.insert("burn_in".into(), burn_in);
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct OuLevyScenarios {
    pub m_t: Scenario,
    pub s_t: Scenario,
    pub v_t: Scenario,
    /// Start of the simulated strip: `e^{-lambda B} <= truncation_tol`.
    pub burn_in: f64,
}

/// The three OU-Levy statistics for rate `lambda`, horizon `horizon`, jump
/// measure `nu` and lag `lag` (for `V`). The Poisson strip starts at `-B`
/// with `B = ln(1/truncation_tol) / lambda`; points live on
/// `[-B, T + h] x supp(nu)`.
pub fn build_ou_levy(
    lambda: f64,
    horizon: f64,
    nu: &LevyNu,
    truncation_tol: f64,
    lag: f64,
) -> Result<OuLevyScenarios> {
    let burn_in = check_ou_args(lambda, horizon, nu, truncation_tol, lag)?;
    let domain = BoxDomain::new(vec![-burn_in, nu.lo], vec![horizon + lag, nu.hi])?;
    let width = horizon + lag + burn_in;
    let mass = nu.moments[0];
    let control = if nu.uniform {
        let density = Arc::new(UniformDensity::on(&domain));
        ControlMeasure::new(domain, density, width * mass)?
    } else {
        let pdf = nu.pdf.clone();
        let density = Arc::new(FnDensity::new(
            move |p: &[f64]| pdf(p[1]) / (mass * width),
            nu.sup / (mass * width),
            vec![],
        ));
        ControlMeasure::new(domain, density, width * mass)?
    };
    let mut grid = Vec::new();
    let mut g = -burn_in;
    while g < horizon + lag {
        grid.push(g);
        g += 1.0 / lambda;
    }
    let c_nu = nu.c_nu();
    let kernel = |kind, lag: f64, scale: f64, arity| {
        Kernel::from_impl(
            Arc::new(OuKernel {
                kind,
                time: OuTime { lambda, horizon, lag },
                scale,
                grid: grid.clone(),
            }),
            arity,
            2,
            true,
            false,
            format!("ou_{kind:?}"),
        )
    };
    let params = |stat: &str| {
        json!({
            "name": "ou-levy", "statistic": stat, "lambda": lambda, "T": horizon,
            "h": lag, "truncation_tol": truncation_tol, "burn_in": burn_in, "c_nu": c_nu,
        })
    };
    let rt = horizon.sqrt();

    let sd_m = ou_variance_m(lambda, horizon).sqrt();
    let m_t = Scenario {
        label: format!("ou-levy M_T(T={horizon}, lambda={lambda})"),
        control: control.clone(),
        functional: Arc::new(OuFunctional {
            stat: OuStatistic::M,
            lambda,
            horizon,
            lag,
        }),
        expansion: Some(ChaosExpansion::single(
            1,
            kernel(OuKernelKind::Linear, 0.0, 1.0 / (rt * sd_m), 1)?,
        )?),
        normalization: Normalization { mean: 0.0, sd: sd_m },
        expected_rate: Some(-0.5),
        params: params("M"),
    };

    let lagged = |h: f64, stat: OuStatistic, name: &str| -> Result<Scenario> {
        let sd = ou_variance_lagged(lambda, horizon, h, c_nu).sqrt();
        Ok(Scenario {
            label: format!("ou-levy {name}(T={horizon}, lambda={lambda}, h={h})"),
            control: control.clone(),
            functional: Arc::new(OuFunctional {
                stat,
                lambda,
                horizon,
                lag: h,
            }),
            expansion: Some(ChaosExpansion::new(
                0.0,
                vec![
                    (1, kernel(OuKernelKind::Square, h, 1.0 / (rt * sd), 1)?),
                    (2, kernel(OuKernelKind::Pair, h, 1.0 / (rt * sd), 2)?),
                ],
            )?),
            normalization: Normalization { mean: 0.0, sd },
            expected_rate: Some(-0.5),
            params: params(name),
        })
    };
    Ok(OuLevyScenarios {
        m_t,
        s_t: lagged(0.0, OuStatistic::S, "S")?,
        v_t: lagged(lag, OuStatistic::V, "V")?,
        burn_in,
    })
}

#[derive(Clone, Debug)]
pub struct RateStudy {
    pub table: RateTable,
    pub distances: Vec<KolmogorovDistance>,
}

/// Builds a scenario per parameter value, simulates `reps` normalized values
/// (scale `j` uses the child seed `(seed, j)`), and regresses the Kolmogorov
/// distances on the scale in log-log.
pub fn run_rate_study(
    builder: &dyn Fn(f64) -> Result<Scenario>,
    params: &[f64],
    reps: usize,
    seed: u64,
) -> Result<RateStudy> {
    if params.len() < 3 {
        return Err(Error::InvalidArgument("a rate study needs at least 3 scales".into()));
    }
    if reps < 1000 {
        return Err(Error::InvalidArgument(format!(
            "a rate study needs at least 1000 replicates, got {reps}"
        )));
    }
    let mut rows = Vec::new();
    let mut distances = Vec::new();
    for (j, &p) in params.iter().enumerate() {
        let sc = builder(p)?;
        let samples = sc.simulate(reps, child_seed(seed, j as u64))?;
        let kd = kolmogorov_distance(&samples)?;
        rows.push(RateRow {
            scale: p,
            distance: kd.distance,
            stderr: KOLMOGOROV_SD / (reps as f64).sqrt(),
        });
        distances.push(kd);
    }
    Ok(RateStudy {
        table: RateTable::new(rows)?,
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_process::PointConfiguration;

    #[test]
    fn default_nu_moments() {
        let nu = LevyNu::default();
        assert!((nu.moments()[0] - 1.0).abs() < 1e-12);
        assert!((nu.moments()[2] - 1.0).abs() < 1e-12);
        assert!((nu.c_nu() - 1.8).abs() < 1e-12);
        assert!(nu.moments()[1].abs() < 1e-14);
    }

    #[test]
    fn finite_horizon_variances_approach_limits() {
        let v = ou_variance_m(1.0, 1e6);
        assert!((v - 2.0).abs() < 1e-5);
        let s = ou_variance_lagged(1.0, 1e6, 0.0, 1.8);
        assert!((s - 3.8).abs() < 1e-5);
        let a = ou_asymptotic_variance_lagged(1.0, 0.0, 1.8);
        assert_eq!(a, 2.0 + 1.8);
    }

    #[test]
    fn lagged_at_zero_matches_square() {
        let nu = LevyNu::default();
        let sc = build_ou_levy(1.0, 10.0, &nu, 1e-8, 0.0).unwrap();
        assert_eq!(sc.s_t.normalization.sd, sc.v_t.normalization.sd);
        let cfg = PointConfiguration::new(
            sc.s_t.control.domain().clone(),
            vec![-3.0, 0.5, 1.0, -1.2, 4.0, 1.7, 9.5, 0.1],
        )
        .unwrap();
        let a = sc.s_t.functional.evaluate(&cfg);
        let b = sc.v_t.functional.evaluate(&cfg);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn truncation_tolerance_is_checked() {
        assert!(matches!(
            build_ou_levy(1.0, 10.0, &LevyNu::default(), 1.0, 0.0),
            Err(Error::Domain(_))
        ));
    }
}
