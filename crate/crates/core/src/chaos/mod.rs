//! Multiple Wiener-Ito integrals evaluated pathwise, U-statistics, their
//! Hoeffding kernels, and finite chaos expansions.

mod kernel;

pub use kernel::{Kernel, KernelFn, Profile};
pub(crate) use kernel::{InnerRule, SectionRef};

use crate::error::{Error, Result};
use crate::measure_space::{
    check_dim, integrate, l2_norm_squared, ControlMeasure, IntegrationSpec, Method, MAX_COORDS,
};
use crate::point_process::{Functional, PointSet};

/// Highest order evaluated pathwise.
pub const MAX_PATHWISE_ORDER: usize = 3;

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Calls `f` with every increasing `k`-subset of `0..n`.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, idx: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if idx.len() == k {
            f(idx);
            return;
        }
        let need = k - idx.len();
        for i in start..=n - need {
            idx.push(i);
            rec(i + 1, n, k, idx, f);
            idx.pop();
        }
    }
    if k > n {
        return;
    }
    rec(0, n, k, &mut Vec::with_capacity(k), &mut f);
}

/// Calls `f` with every ordered `k`-tuple of distinct indices in `0..n`.
fn for_each_ordered(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    fn rec(n: usize, k: usize, idx: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if idx.len() == k {
            f(idx);
            return;
        }
        for i in 0..n {
            if !idx.contains(&i) {
                idx.push(i);
                rec(n, k, idx, f);
                idx.pop();
            }
        }
    }
    rec(n, k, &mut Vec::with_capacity(k), &mut f);
}

/// The pathwise multiple integral `I_q(f)` with inner integrals prepared once.
///
/// `I_q(f) = sum_k (-1)^{q-k} C(q,k) sum_{distinct k-tuples z} int f(z, y) dmu^{q-k}(y)`,
/// evaluated with unordered subsets times `k!` since `f` is symmetric.
#[derive(Clone)]
pub struct MultipleIntegral {
    kernel: Kernel,
    order: usize,
    control: ControlMeasure,
    /// `rules[j]` integrates over `j` points.
    rules: Vec<Option<InnerRule>>,
    full: f64,
}

impl MultipleIntegral {
    pub fn new(f: &Kernel, q: usize, control: &ControlMeasure, spec: &IntegrationSpec) -> Result<Self> {
        if q > MAX_PATHWISE_ORDER {
            return Err(Error::MethodUnsupported(format!(
                "pathwise multiple integrals are limited to order {MAX_PATHWISE_ORDER}, got {q}"
            )));
        }
        if f.arity() != q {
            return Err(Error::InvalidArgument(format!(
                "kernel arity {} does not match order {q}",
                f.arity()
            )));
        }
        if !f.is_symmetric() {
            return Err(Error::InvalidArgument(
                "multiple integrals need a symmetric kernel; symmetrize it first".into(),
            ));
        }
        check_dim(f, control)?;
        let mut rules = vec![None];
        for j in 1..=q {
            rules.push(Some(InnerRule::build(control, j, f.inner_dims(), spec)?));
        }
        let mut out = Self {
            kernel: f.clone(),
            order: q,
            control: control.clone(),
            rules,
            full: 0.0,
        };
        out.full = out.inner(&[], q);
        if !out.full.is_finite() {
            return Err(Error::NumericalDomain(format!(
                "int f dmu^{q} is not finite for {}",
                f.label()
            )));
        }
        Ok(out)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `int f(fixed, y) dmu^j(y)`.
    fn inner(&self, fixed: &[f64], j: usize) -> f64 {
        if j == 0 {
            return self.kernel.eval(fixed);
        }
        let rule = self.rules[j].as_ref().expect("rule for every order");
        let g = SectionRef::new(&self.kernel, fixed);
        self.control.intensity().powi(j as i32) * rule.integrate(&g, &self.control, j)
    }

    /// Inclusion-exclusion over subsets of `cfg` with `prefix` fixed in front.
    fn pathwise(&self, prefix: &[f64], cfg: &dyn PointSet) -> f64 {
        let d = self.kernel.dim();
        let p = prefix.len() / d;
        let q = self.order - p;
        let n = cfg.len();
        let mut buf = [0.0; MAX_COORDS];
        buf[..prefix.len()].copy_from_slice(prefix);
        let mut total = 0.0;
        for k in 0..=q.min(n) {
            let coef = if (q - k) % 2 == 0 { 1.0 } else { -1.0 } * binomial(q, k) * factorial(k);
            let mut s = 0.0;
            if k == 0 {
                s = if p == 0 { self.full } else { self.inner(prefix, q) };
            } else {
                for_each_subset(n, k, |idx| {
                    for (slot, &i) in idx.iter().enumerate() {
                        let at = (p + slot) * d;
                        buf[at..at + d].copy_from_slice(cfg.point(i));
                    }
                    s += self.inner(&buf[..(p + k) * d], q - k);
                });
            }
            total += coef * s;
        }
        total
    }

    /// `I_q(f)` on this realization.
    pub fn evaluate(&self, cfg: &dyn PointSet) -> Result<f64> {
        finite(self.pathwise(&[], cfg))
    }

    /// `I_{q-1}(f(z, .))` on this realization, so that `D_z I_q(f)` is `q`
    /// times this value and `-D_z L^{-1} I_q(f)` equals it.
    pub fn evaluate_section(&self, z: &[f64], cfg: &dyn PointSet) -> Result<f64> {
        if self.order == 0 || z.len() != self.kernel.dim() {
            return Err(Error::InvalidArgument("section needs order >= 1 and one point".into()));
        }
        finite(self.pathwise(z, cfg))
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericalDomain("multiple integral is not finite".into()))
    }
}

/// `I_q(f)(cfg)`, inner integrals per `spec`.
pub fn evaluate_multiple_integral(
    f: &Kernel,
    q: usize,
    cfg: &dyn PointSet,
    control: &ControlMeasure,
    spec: &IntegrationSpec,
) -> Result<f64> {
    MultipleIntegral::new(f, q, control, spec)?.evaluate(cfg)
}

/// `cfg -> I_q(f)(cfg)` as a [`Functional`]. Evaluation failures give NaN.
#[derive(Clone)]
pub struct MultipleIntegralFunctional(pub MultipleIntegral);

impl Functional for MultipleIntegralFunctional {
    fn evaluate(&self, cfg: &dyn PointSet) -> f64 {
        self.0.evaluate(cfg).unwrap_or(f64::NAN)
    }

    fn label(&self) -> String {
        format!("I_{}({})", self.0.order, self.0.kernel.label())
    }
}

/// Sum of `h` over ordered distinct `k`-tuples of `cfg`.
pub fn ustat_evaluate(h: &Kernel, k: usize, cfg: &dyn PointSet) -> f64 {
    let n = cfg.len();
    if n < k {
        return 0.0;
    }
    let d = cfg.dim();
    let mut buf = [0.0; MAX_COORDS];
    let mut s = 0.0;
    let mut visit = |idx: &[usize]| {
        for (slot, &i) in idx.iter().enumerate() {
            buf[slot * d..(slot + 1) * d].copy_from_slice(cfg.point(i));
        }
        s += h.eval(&buf[..k * d]);
    };
    if h.is_symmetric() {
        for_each_subset(n, k, &mut visit);
        s * factorial(k)
    } else {
        for_each_ordered(n, k, &mut visit);
        s
    }
}

/// `g^(i)(z_1..z_i) = C(k,i) int h(z_1..z_i, y_1..y_{k-i}) dmu^{k-i}(y)`.
///
/// Inner integrals are evaluated on every call; wrap the result with
/// [`Kernel::cached_on_grid`] to trade accuracy for speed.
pub fn hoeffding_kernels(
    h: &Kernel,
    k: usize,
    i: usize,
    control: &ControlMeasure,
    spec: &IntegrationSpec,
) -> Result<Kernel> {
    if i == 0 || i > k || h.arity() != k {
        return Err(Error::InvalidArgument(format!(
            "Hoeffding level {i} invalid for a kernel of arity {} and order {k}",
            h.arity()
        )));
    }
    if i == k {
        return Ok(h.clone());
    }
    Ok(h
        .partial_integral(k - i, binomial(k, i), control, spec)?
        .with_label(format!("g{i}({})", h.label())))
}

/// `E U = int h dmu^k` by the Mecke formula.
pub fn ustat_mean(h: &Kernel, k: usize, control: &ControlMeasure, spec: &IntegrationSpec) -> Result<f64> {
    if h.arity() != k {
        return Err(Error::InvalidArgument("kernel arity differs from U-statistic order".into()));
    }
    check_dim(h, control)?;
    Ok(integrate(h, control, k, spec)?.value)
}

/// True iff `|int h(x, y) p(x) dx| <= tol` at every grid point `y`.
pub fn check_degeneracy(h: &Kernel, control: &ControlMeasure, grid: &[Vec<f64>], tol: f64) -> Result<bool> {
    Ok(degeneracy_violation(h, control, grid, tol, &IntegrationSpec::default())?.is_none())
}

/// The first grid point where the marginal integral exceeds `tol`, if any.
/// Oscillating kernels need a `spec` that resolves them.
pub(crate) fn degeneracy_violation(
    h: &Kernel,
    control: &ControlMeasure,
    grid: &[Vec<f64>],
    tol: f64,
    spec: &IntegrationSpec,
) -> Result<Option<(f64, Vec<f64>)>> {
    if h.arity() != 2 {
        return Err(Error::InvalidArgument("degeneracy is defined for order-2 kernels".into()));
    }
    check_dim(h, control)?;
    let prob = control.with_intensity(1.0)?;
    for y in grid {
        let g = SectionRef::new(h, y);
        let est = integrate(&g, &prob, 1, spec)?;
        let allowed = if spec.resolve(control.dim() + h.inner_dims())? == Method::MonteCarlo {
            tol.max(4.0 * est.stderr)
        } else {
            tol
        };
        if est.value.abs() > allowed {
            return Ok(Some((est.value, y.clone())));
        }
    }
    Ok(None)
}

/// A regular grid of `per_axis` points per axis over the support (cell
/// midpoints), for degeneracy checks.
pub fn support_grid(control: &ControlMeasure, per_axis: usize) -> Vec<Vec<f64>> {
    let d = control.dim();
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|a| {
                    let i = idx % per_axis;
                    idx /= per_axis;
                    let (lo, hi) = control.domain().axis(a);
                    lo + (hi - lo) * (i as f64 + 0.5) / per_axis as f64
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ChaosTerm {
    pub order: usize,
    pub kernel: Kernel,
}

/// `F = E F + sum_i I_{q_i}(f_i)` with strictly increasing orders.
#[derive(Clone, Debug)]
pub struct ChaosExpansion {
    mean: f64,
    terms: Vec<ChaosTerm>,
}

impl ChaosExpansion {
    pub fn new(mean: f64, terms: Vec<(usize, Kernel)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("chaos expansion needs at least one term".into()));
        }
        let dim = terms[0].1.dim();
        let mut last = 0;
        for (q, k) in &terms {
            if *q <= last {
                return Err(Error::InvalidArgument(
                    "chaos orders must be positive and strictly increasing".into(),
                ));
            }
            if k.arity() != *q || k.dim() != dim {
                return Err(Error::InvalidArgument(format!(
                    "kernel of arity {} in dimension {} cannot be the order-{q} term",
                    k.arity(),
                    k.dim()
                )));
            }
            last = *q;
        }
        Ok(Self {
            mean,
            terms: terms
                .into_iter()
                .map(|(order, kernel)| ChaosTerm { order, kernel })
                .collect(),
        })
    }

    pub fn single(order: usize, kernel: Kernel) -> Result<Self> {
        Self::new(0.0, vec![(order, kernel)])
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn terms(&self) -> &[ChaosTerm] {
        &self.terms
    }

    pub fn max_order(&self) -> usize {
        self.terms.last().map(|t| t.order).unwrap_or(0)
    }

    /// Every term divided by `sd` and the mean shifted to `(mean - center)/sd`.
    pub fn normalized(&self, center: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::InvalidArgument(format!("normalizing sd must be positive, got {sd}")));
        }
        Self::new(
            (self.mean - center) / sd,
            self.terms
                .iter()
                .map(|t| (t.order, t.kernel.scaled(1.0 / sd)))
                .collect(),
        )
    }

    /// Pathwise evaluator for `F`, `D_z F` and `-D_z L^{-1} F`.
    pub fn pathwise(&self, control: &ControlMeasure, spec: &IntegrationSpec) -> Result<PathwiseExpansion> {
        Ok(PathwiseExpansion {
            mean: self.mean,
            terms: self
                .terms
                .iter()
                .map(|t| MultipleIntegral::new(&t.kernel, t.order, control, spec))
                .collect::<Result<_>>()?,
        })
    }
}

#[derive(Clone)]
pub struct PathwiseExpansion {
    mean: f64,
    terms: Vec<MultipleIntegral>,
}

impl PathwiseExpansion {
    pub fn evaluate(&self, cfg: &dyn PointSet) -> Result<f64> {
        let mut s = self.mean;
        for t in &self.terms {
            s += t.evaluate(cfg)?;
        }
        Ok(s)
    }

    /// `(D_z F, -D_z L^{-1} F)` via `D_z I_q(f) = q I_{q-1}(f(z,.))` and
    /// `L^{-1} I_q(f) = -I_q(f)/q`.
    pub fn derivatives(&self, z: &[f64], cfg: &dyn PointSet) -> Result<(f64, f64)> {
        let (mut d, mut l) = (0.0, 0.0);
        for t in &self.terms {
            let j = t.evaluate_section(z, cfg)?;
            d += t.order as f64 * j;
            l += j;
        }
        Ok((d, l))
    }
}

impl Functional for PathwiseExpansion {
    fn evaluate(&self, cfg: &dyn PointSet) -> f64 {
        PathwiseExpansion::evaluate(self, cfg).unwrap_or(f64::NAN)
    }

    fn label(&self) -> String {
        "chaos_expansion".into()
    }
}

/// `var F = sum_i q_i! ||f_i||^2`.
pub fn chaos_variance(expansion: &ChaosExpansion, control: &ControlMeasure, spec: &IntegrationSpec) -> Result<f64> {
    let mut v = 0.0;
    for t in expansion.terms() {
        v += factorial(t.order) * l2_norm_squared(&t.kernel, control, spec)?.value;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure_space::BoxDomain;
    use crate::point_process::PointConfiguration;

    #[test]
    fn subsets_and_tuples_are_counted() {
        let mut c = 0;
        for_each_subset(5, 3, |_| c += 1);
        assert_eq!(c, 10);
        let mut c = 0;
        for_each_ordered(5, 3, |_| c += 1);
        assert_eq!(c, 60);
        let mut c = 0;
        for_each_subset(2, 3, |_| c += 1);
        assert_eq!(c, 0);
    }

    #[test]
    fn count_minus_mass() {
        let mu = ControlMeasure::unit_cube(1, 5.0).unwrap();
        let cfg = PointConfiguration::new(BoxDomain::unit(1), (0..7).map(|i| 0.1 * i as f64 + 0.05).collect()).unwrap();
        let one = Kernel::constant(1, 1, 1.0).unwrap();
        let v = evaluate_multiple_integral(&one, 1, &cfg, &mu, &IntegrationSpec::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn order_above_three_is_unsupported() {
        let mu = ControlMeasure::unit_cube(1, 5.0).unwrap();
        let k = Kernel::constant(4, 1, 1.0).unwrap();
        assert!(matches!(
            MultipleIntegral::new(&k, 4, &mu, &IntegrationSpec::default()),
            Err(Error::MethodUnsupported(_))
        ));
    }

    #[test]
    fn expansion_orders_must_increase() {
        let k1 = Kernel::constant(1, 1, 1.0).unwrap();
        let k2 = Kernel::constant(2, 1, 1.0).unwrap();
        assert!(ChaosExpansion::new(0.0, vec![(2, k2.clone()), (1, k1.clone())]).is_err());
        assert!(ChaosExpansion::new(0.0, vec![(1, k2)]).is_err());
        assert!(ChaosExpansion::new(0.0, vec![(1, k1)]).is_ok());
    }
}
