//! Kernels: real functions of `q` points in `R^d`, with symmetry and sign
//! metadata and optional breakpoint hints for the quadrature engine.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure_space::{
    quadrature_prob, BoxDomain, Breaks, ControlMeasure, Integrand, IntegrationSpec, Method,
    PanelRule, MAX_COORDS,
};
use crate::rng::substream;

/// The evaluation side of a kernel. Arguments are flattened: point `j`
/// occupies `x[j*d..(j+1)*d]`.
pub trait KernelFn: Send + Sync {
    fn eval(&self, x: &[f64]) -> f64;

    /// See [`Integrand::breakpoints`].
    fn breakpoints(
        &self,
        _x: &[f64],
        _known: &[bool],
        _coord: usize,
        _domain: &BoxDomain,
        _out: &mut Breaks,
    ) {
    }

    /// Coordinates integrated inside each evaluation.
    fn inner_dims(&self) -> usize {
        0
    }
}

#[derive(Clone)]
pub struct Kernel {
    imp: Arc<dyn KernelFn>,
    arity: usize,
    dim: usize,
    symmetric: bool,
    nonnegative: bool,
    approx_symmetric: bool,
    label: String,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("label", &self.label)
            .field("arity", &self.arity)
            .field("dim", &self.dim)
            .field("symmetric", &self.symmetric)
            .field("nonnegative", &self.nonnegative)
            .finish()
    }
}

/// One-dimensional factor of a tensor-product kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    Constant { value: f64 },
    /// `sqrt(2) cos(2 pi freq x)`, orthonormal on [0,1] for freq >= 1.
    Cosine { freq: u32 },
    /// `sqrt(2) sin(2 pi freq x)`.
    Sine { freq: u32 },
    /// `sum_k coeffs[k] x^k`.
    Polynomial { coeffs: Vec<f64> },
    /// `1(lo <= x <= hi)`.
    Indicator { lo: f64, hi: f64 },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Cosine { freq } => 2f64.sqrt() * (2.0 * PI * *freq as f64 * x).cos(),
            Profile::Sine { freq } => 2f64.sqrt() * (2.0 * PI * *freq as f64 * x).sin(),
            Profile::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Profile::Indicator { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn is_nonnegative(&self) -> bool {
        match self {
            Profile::Constant { value } => *value >= 0.0,
            Profile::Indicator { .. } => true,
            _ => false,
        }
    }

    fn push_breaks(&self, out: &mut Breaks) {
        if let Profile::Indicator { lo, hi } = self {
            out.push(*lo);
            out.push(*hi);
        }
    }
}

struct Constant(f64);

impl KernelFn for Constant {
    fn eval(&self, _x: &[f64]) -> f64 {
        self.0
    }
}

struct CosineFamily {
    m: usize,
    norm: f64,
}

impl KernelFn for CosineFamily {
    fn eval(&self, x: &[f64]) -> f64 {
        // cos(j t) by the Chebyshev recurrence, for both arguments at once
        let (cx, cy) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos());
        let (mut px, mut qx) = (1.0, cx);
        let (mut py, mut qy) = (1.0, cy);
        let mut s = 0.0;
        for _ in 0..self.m {
            s += qx * qy;
            let nx = 2.0 * cx * qx - px;
            let ny = 2.0 * cy * qy - py;
            px = qx;
            qx = nx;
            py = qy;
            qy = ny;
        }
        2.0 * self.norm * s
    }
}

struct TensorProfiles {
    profiles: Vec<Profile>,
    dim: usize,
    sorted: bool,
}

impl KernelFn for TensorProfiles {
    fn eval(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        if self.sorted {
            // identical factors: multiply in sorted order so that argument
            // permutations give bitwise-equal results
            let mut vals = [0.0; MAX_COORDS];
            let k = self.profiles.len() * d;
            for (j, p) in self.profiles.iter().enumerate() {
                for a in 0..d {
                    vals[j * d + a] = p.eval(x[j * d + a]);
                }
            }
            vals[..k].sort_unstable_by(f64::total_cmp);
            vals[..k].iter().product()
        } else {
            let mut v = 1.0;
            for (j, p) in self.profiles.iter().enumerate() {
                for a in 0..d {
                    v *= p.eval(x[j * d + a]);
                }
            }
            v
        }
    }

    fn breakpoints(&self, _x: &[f64], _k: &[bool], coord: usize, _d: &BoxDomain, out: &mut Breaks) {
        self.profiles[coord / self.dim].push_breaks(out);
    }
}

struct IndicatorDistance {
    r: f64,
    dim: usize,
}

impl KernelFn for IndicatorDistance {
    fn eval(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let close = (0..d).all(|a| (x[a] - x[d + a]).abs() <= self.r);
        if close {
            1.0
        } else {
            0.0
        }
    }

    fn breakpoints(&self, x: &[f64], known: &[bool], coord: usize, dom: &BoxDomain, out: &mut Breaks) {
        let d = self.dim;
        let axis = coord % d;
        let other = if coord < d { d + axis } else { axis };
        if known[other] {
            out.push(x[other] - self.r);
            out.push(x[other] + self.r);
        } else {
            let (lo, hi) = dom.axis(axis);
            out.push(lo + self.r);
            out.push(hi - self.r);
        }
    }
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

struct FromFn(Arc<EvalFn>);

impl KernelFn for FromFn {
    fn eval(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

struct LinearCombination {
    terms: Vec<(f64, Kernel)>,
}

impl KernelFn for LinearCombination {
    fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(c, k)| c * k.eval(x)).sum()
    }

    fn breakpoints(&self, x: &[f64], known: &[bool], coord: usize, dom: &BoxDomain, out: &mut Breaks) {
        for (_, k) in &self.terms {
            k.breakpoints(x, known, coord, dom, out);
        }
    }

    fn inner_dims(&self) -> usize {
        self.terms.iter().map(|(_, k)| k.inner_dims()).max().unwrap_or(0)
    }
}

struct Pointwise {
    a: Kernel,
    b: Kernel,
}

impl KernelFn for Pointwise {
    fn eval(&self, x: &[f64]) -> f64 {
        self.a.eval(x) * self.b.eval(x)
    }

    fn breakpoints(&self, x: &[f64], known: &[bool], coord: usize, dom: &BoxDomain, out: &mut Breaks) {
        self.a.breakpoints(x, known, coord, dom, out);
        self.b.breakpoints(x, known, coord, dom, out);
    }

    fn inner_dims(&self) -> usize {
        self.a.inner_dims().max(self.b.inner_dims())
    }
}

struct Section {
    inner: Kernel,
    fixed: Vec<f64>,
}

impl KernelFn for Section {
    fn eval(&self, x: &[f64]) -> f64 {
        SectionRef::new(&self.inner, &self.fixed).eval(x)
    }

    fn breakpoints(&self, x: &[f64], known: &[bool], coord: usize, dom: &BoxDomain, out: &mut Breaks) {
        SectionRef::new(&self.inner, &self.fixed).breakpoints(x, known, coord, dom, out)
    }

    fn inner_dims(&self) -> usize {
        self.inner.inner_dims()
    }
}

/// Borrowed section `y -> f(fixed, y)`, usable directly as an integrand.
pub(crate) struct SectionRef<'a> {
    f: &'a Kernel,
    fixed: &'a [f64],
}

impl<'a> SectionRef<'a> {
    pub(crate) fn new(f: &'a Kernel, fixed: &'a [f64]) -> Self {
        Self { f, fixed }
    }
}

impl Integrand for SectionRef<'_> {
    fn eval(&self, y: &[f64]) -> f64 {
        let k = self.fixed.len();
        let mut buf = [0.0; MAX_COORDS];
        buf[..k].copy_from_slice(self.fixed);
        buf[k..k + y.len()].copy_from_slice(y);
        self.f.eval(&buf[..k + y.len()])
    }

    fn breakpoints(&self, y: &[f64], known: &[bool], coord: usize, dom: &BoxDomain, out: &mut Breaks) {
        let k = self.fixed.len();
        let n = k + y.len();
        let mut buf = [0.0; MAX_COORDS];
        let mut mask = [true; MAX_COORDS];
        buf[..k].copy_from_slice(self.fixed);
        buf[k..n].copy_from_slice(y);
        mask[k..n].copy_from_slice(known);
        self.f.breakpoints(&buf[..n], &mask[..n], k + coord, dom, out);
    }

    fn inner_dims(&self) -> usize {
        self.f.inner_dims()
    }
}

struct Symmetrized {
    inner: Kernel,
    perms: Vec<Vec<usize>>,
    dim: usize,
}

impl Symmetrized {
    fn permute(&self, pi: &[usize], x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (slot, &p) in pi.iter().enumerate() {
            out[slot * d..(slot + 1) * d].copy_from_slice(&x[p * d..(p + 1) * d]);
        }
    }
}

impl KernelFn for Symmetrized {
    fn eval(&self, x: &[f64]) -> f64 {
        let mut buf = [0.0; MAX_COORDS];
        let n = x.len();
        if self.perms.len() <= 2 {
            let mut s = 0.0;
            for pi in &self.perms {
                self.permute(pi, x, &mut buf[..n]);
                s += self.inner.eval(&buf[..n]);
            }
            return s / self.perms.len() as f64;
        }
        // sum in sorted order: the multiset of values does not depend on
        // the argument order, so neither does the result
        let mut vals: Vec<f64> = self
            .perms
            .iter()
            .map(|pi| {
                self.permute(pi, x, &mut buf[..n]);
                self.inner.eval(&buf[..n])
            })
            .collect();
        vals.sort_unstable_by(f64::total_cmp);
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    fn breakpoints(&self, x: &[f64], known: &[bool], coord: usize, dom: &BoxDomain, out: &mut Breaks) {
        let d = self.dim;
        let n = x.len();
        let (point, axis) = (coord / d, coord % d);
        let mut buf = [0.0; MAX_COORDS];
        let mut mask = [false; MAX_COORDS];
        for pi in &self.perms {
            self.permute(pi, x, &mut buf[..n]);
            for (slot, &p) in pi.iter().enumerate() {
                mask[slot * d..(slot + 1) * d].copy_from_slice(&known[p * d..(p + 1) * d]);
            }
            let slot = pi.iter().position(|&p| p == point).expect("permutation");
            self.inner
                .breakpoints(&buf[..n], &mask[..n], slot * d + axis, dom, out);
        }
        out.sort_unstable_by(f64::total_cmp);
        out.dedup();
    }

    fn inner_dims(&self) -> usize {
        self.inner.inner_dims()
    }
}

/// Inner integration over `m` points, either by tensor quadrature or by
/// averaging over a fixed pre-drawn Monte Carlo sample.
#[derive(Clone)]
pub(crate) enum InnerRule {
    Quadrature(PanelRule),
    Sample { points: Arc<Vec<f64>>, count: usize },
}

impl InnerRule {
    pub(crate) fn build(
        control: &ControlMeasure,
        m: usize,
        extra_inner: usize,
        spec: &IntegrationSpec,
    ) -> Result<Self> {
        spec.validate()?;
        let total = m * control.dim() + extra_inner;
        Ok(match spec.resolve(total)? {
            Method::MonteCarlo => {
                let count = spec.samples;
                let k = m * control.dim();
                let mut points = vec![0.0; count * k];
                let mut rng = substream(spec.seed, u64::MAX);
                for s in 0..count {
                    for j in 0..m {
                        let at = s * k + j * control.dim();
                        control.sample_point(&mut rng, &mut points[at..at + control.dim()])?;
                    }
                }
                InnerRule::Sample {
                    points: Arc::new(points),
                    count,
                }
            }
            _ => InnerRule::Quadrature(PanelRule::from_budget(spec.budget)),
        })
    }

    /// `int g dp^{(x)m}` (probability measure; the caller applies `n^m`).
    pub(crate) fn integrate<G: Integrand + ?Sized>(&self, g: &G, control: &ControlMeasure, m: usize) -> f64 {
        match self {
            InnerRule::Quadrature(rule) => quadrature_prob(g, control, m, rule),
            InnerRule::Sample { points, count } => {
                let k = m * control.dim();
                let s: f64 = points.chunks_exact(k).map(|z| g.eval(z)).sum();
                s / *count as f64
            }
        }
    }
}

/// `scale * int f(x, y) d mu^m(y)` as a kernel in `x`.
struct PartialIntegral {
    inner: Kernel,
    m: usize,
    scale: f64,
    control: ControlMeasure,
    rule: InnerRule,
}

impl KernelFn for PartialIntegral {
    fn eval(&self, x: &[f64]) -> f64 {
        let g = SectionRef::new(&self.inner, x);
        self.scale * self.rule.integrate(&g, &self.control, self.m)
    }

    fn breakpoints(&self, x: &[f64], known: &[bool], coord: usize, dom: &BoxDomain, out: &mut Breaks) {
        let n = x.len();
        let total = n + self.m * self.control.dim();
        let mut buf = [0.0; MAX_COORDS];
        let mut mask = [false; MAX_COORDS];
        buf[..n].copy_from_slice(x);
        mask[..n].copy_from_slice(known);
        self.inner
            .breakpoints(&buf[..total], &mask[..total], coord, dom, out);
    }

    fn inner_dims(&self) -> usize {
        self.m * self.control.dim() + self.inner.inner_dims()
    }
}

/// Values tabulated on a regular grid over the box and interpolated
/// multilinearly. Filled on first use.
struct GridCached {
    inner: Kernel,
    domain: BoxDomain,
    points: usize,
    coords: usize,
    table: OnceLock<Vec<f64>>,
}

impl GridCached {
    fn node(&self, c: usize, i: usize) -> f64 {
        let (lo, hi) = self.domain.axis(c % self.domain.dim());
        lo + (hi - lo) * i as f64 / (self.points - 1) as f64
    }

    fn table(&self) -> &[f64] {
        self.table.get_or_init(|| {
            let g = self.points;
            let mut out = Vec::with_capacity(g.pow(self.coords as u32));
            let mut x = [0.0; 2];
            match self.coords {
                1 => {
                    for i in 0..g {
                        x[0] = self.node(0, i);
                        out.push(self.inner.eval(&x[..1]));
                    }
                }
                _ => {
                    for i in 0..g {
                        for j in 0..g {
                            x[0] = self.node(0, i);
                            x[1] = self.node(1, j);
                            out.push(self.inner.eval(&x[..2]));
                        }
                    }
                }
            }
            out
        })
    }

    fn locate(&self, c: usize, v: f64) -> (usize, f64) {
        let (lo, hi) = self.domain.axis(c % self.domain.dim());
        let t = ((v - lo) / (hi - lo) * (self.points - 1) as f64).clamp(0.0, (self.points - 1) as f64);
        let i = (t.floor() as usize).min(self.points - 2);
        (i, t - i as f64)
    }
}

impl KernelFn for GridCached {
    fn eval(&self, x: &[f64]) -> f64 {
        let tab = self.table();
        let g = self.points;
        let (i, u) = self.locate(0, x[0]);
        if self.coords == 1 {
            return tab[i] * (1.0 - u) + tab[i + 1] * u;
        }
        let (j, v) = self.locate(1, x[1]);
        let at = |a: usize, b: usize| tab[a * g + b];
        (1.0 - u) * ((1.0 - v) * at(i, j) + v * at(i, j + 1))
            + u * ((1.0 - v) * at(i + 1, j) + v * at(i + 1, j + 1))
    }
}

impl Kernel {
    pub fn from_impl(
        imp: Arc<dyn KernelFn>,
        arity: usize,
        dim: usize,
        symmetric: bool,
        nonnegative: bool,
        label: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("kernel dimension must be positive".into()));
        }
        if arity * dim > MAX_COORDS {
            return Err(Error::InvalidArgument(format!(
                "kernel of arity {arity} in dimension {dim} exceeds {MAX_COORDS} coordinates"
            )));
        }
        Ok(Self {
            imp,
            arity,
            dim,
            symmetric: symmetric || arity <= 1,
            nonnegative,
            approx_symmetric: false,
            label: label.into(),
        })
    }

    /// A user kernel. `symmetric` is trusted; set it only when the closure
    /// is invariant under permuting its points.
    pub fn from_fn(
        arity: usize,
        dim: usize,
        symmetric: bool,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::from_impl(Arc::new(FromFn(Arc::new(f))), arity, dim, symmetric, false, "user")
    }

    pub fn constant(arity: usize, dim: usize, value: f64) -> Result<Self> {
        Self::from_impl(
            Arc::new(Constant(value)),
            arity,
            dim,
            true,
            value >= 0.0,
            format!("constant({value})"),
        )
    }

    /// `h(x, y) = m^{-1/2} sum_{j=1}^m phi_j(x) phi_j(y)` with
    /// `phi_j = sqrt(2) cos(2 pi j .)`, on points in `[0,1]`.
    pub fn cosine_family(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("cosine family needs m >= 1".into()));
        }
        Self::from_impl(
            Arc::new(CosineFamily {
                m,
                norm: 1.0 / (m as f64).sqrt(),
            }),
            2,
            1,
            true,
            false,
            format!("cosine_family(m={m})"),
        )
    }

    /// `prod_j prod_a profiles[j](x_{j,a})`: one profile per argument,
    /// applied to every coordinate of that argument.
    pub fn tensor(profiles: Vec<Profile>, dim: usize) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::InvalidArgument("tensor kernel needs at least one profile".into()));
        }
        let symmetric = profiles.windows(2).all(|w| w[0] == w[1]);
        let nonnegative = profiles.iter().all(Profile::is_nonnegative);
        let arity = profiles.len();
        Self::from_impl(
            Arc::new(TensorProfiles {
                profiles,
                dim,
                sorted: symmetric && arity * dim > 2,
            }),
            arity,
            dim,
            symmetric,
            nonnegative,
            "tensor",
        )
    }

    /// `prod_j sqrt(2) cos(2 pi freq x_j)` on `[0,1]`.
    pub fn cosine_product(arity: usize, freq: u32) -> Result<Self> {
        Self::tensor(vec![Profile::Cosine { freq }; arity], 1)
    }

    /// `1(|x - y|_inf <= r)` for two points in `R^dim`.
    pub fn indicator_distance(r: f64, dim: usize) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
        }
        Self::from_impl(
            Arc::new(IndicatorDistance { r, dim }),
            2,
            dim,
            true,
            true,
            format!("indicator_distance(r={r})"),
        )
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    /// Set by [`crate::contraction::symmetrize`] for arity above 6, where only
    /// a sample of permutations is averaged.
    pub fn is_approx_symmetric(&self) -> bool {
        self.approx_symmetric
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub(crate) fn mark_approx_symmetric(mut self) -> Self {
        self.approx_symmetric = true;
        self
    }

    pub fn same_as(&self, other: &Kernel) -> bool {
        Arc::ptr_eq(&self.imp, &other.imp)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.arity * self.dim, "kernel argument length");
        self.imp.eval(x)
    }

    /// Evaluates at a list of points.
    pub fn eval_points(&self, points: &[&[f64]]) -> f64 {
        let mut buf = [0.0; MAX_COORDS];
        let d = self.dim;
        for (j, p) in points.iter().enumerate() {
            buf[j * d..(j + 1) * d].copy_from_slice(p);
        }
        self.eval(&buf[..points.len() * d])
    }

    pub fn breakpoints(&self, x: &[f64], known: &[bool], coord: usize, dom: &BoxDomain, out: &mut Breaks) {
        self.imp.breakpoints(x, known, coord, dom, out)
    }

    pub fn inner_dims(&self) -> usize {
        self.imp.inner_dims()
    }

    pub fn scaled(&self, c: f64) -> Kernel {
        Self::linear_combination(&[(c, self.clone())]).expect("same arity")
    }

    /// `sum_i c_i k_i` over kernels of equal arity and dimension.
    pub fn linear_combination(terms: &[(f64, Kernel)]) -> Result<Kernel> {
        let Some((_, first)) = terms.first() else {
            return Err(Error::InvalidArgument("empty linear combination".into()));
        };
        if terms
            .iter()
            .any(|(_, k)| k.arity != first.arity || k.dim != first.dim)
        {
            return Err(Error::InvalidArgument(
                "linear combination of kernels with different shapes".into(),
            ));
        }
        let symmetric = terms.iter().all(|(_, k)| k.symmetric);
        let nonnegative = terms.iter().all(|(c, k)| *c >= 0.0 && k.nonnegative);
        let mut k = Self::from_impl(
            Arc::new(LinearCombination {
                terms: terms.to_vec(),
            }),
            first.arity,
            first.dim,
            symmetric,
            nonnegative,
            "linear_combination",
        )?;
        k.approx_symmetric = terms.iter().any(|(_, k)| k.approx_symmetric);
        Ok(k)
    }

    /// Pointwise product `f * g`.
    pub fn product(&self, other: &Kernel) -> Result<Kernel> {
        if self.arity != other.arity || self.dim != other.dim {
            return Err(Error::InvalidArgument(
                "pointwise product of kernels with different shapes".into(),
            ));
        }
        Self::from_impl(
            Arc::new(Pointwise {
                a: self.clone(),
                b: other.clone(),
            }),
            self.arity,
            self.dim,
            self.symmetric && other.symmetric,
            (self.nonnegative && other.nonnegative) || self.same_as(other),
            "product",
        )
    }

    /// `y -> f(z_1, .., z_k, y)` where `fixed` holds the `k` leading points.
    pub fn section(&self, fixed: &[f64]) -> Result<Kernel> {
        if fixed.len() % self.dim != 0 || fixed.len() / self.dim > self.arity {
            return Err(Error::InvalidArgument(format!(
                "section needs at most {} points of dimension {}",
                self.arity, self.dim
            )));
        }
        let k = fixed.len() / self.dim;
        Self::from_impl(
            Arc::new(Section {
                inner: self.clone(),
                fixed: fixed.to_vec(),
            }),
            self.arity - k,
            self.dim,
            self.symmetric,
            self.nonnegative,
            format!("section({})", self.label),
        )
    }

    pub(crate) fn symmetrized(&self, perms: Vec<Vec<usize>>) -> Result<Kernel> {
        Self::from_impl(
            Arc::new(Symmetrized {
                inner: self.clone(),
                perms,
                dim: self.dim,
            }),
            self.arity,
            self.dim,
            true,
            self.nonnegative,
            format!("sym({})", self.label),
        )
    }

    /// `scale * int f(x, y_1..y_m) d mu^m(y)`, a kernel of arity `q - m`.
    pub fn partial_integral(
        &self,
        m: usize,
        scale: f64,
        control: &ControlMeasure,
        spec: &IntegrationSpec,
    ) -> Result<Kernel> {
        if m > self.arity {
            return Err(Error::InvalidArgument(format!(
                "cannot integrate {m} of {} arguments",
                self.arity
            )));
        }
        crate::measure_space::check_dim(self, control)?;
        let rule = InnerRule::build(control, m, self.inner_dims(), spec)?;
        Self::from_impl(
            Arc::new(PartialIntegral {
                inner: self.clone(),
                m,
                scale: scale * control.intensity().powi(m as i32),
                control: control.clone(),
                rule,
            }),
            self.arity - m,
            self.dim,
            self.symmetric,
            self.nonnegative && scale >= 0.0,
            format!("partial_integral({})", self.label),
        )
    }

    /// Tabulates the kernel on `points` nodes per axis of `domain` and
    /// interpolates multilinearly. Only for kernels with at most two
    /// coordinates in total.
    pub fn cached_on_grid(&self, domain: &BoxDomain, points: usize) -> Result<Kernel> {
        let coords = self.arity * self.dim;
        if coords == 0 || coords > 2 || points < 2 || domain.dim() != self.dim {
            return Err(Error::MethodUnsupported(format!(
                "grid cache needs 1 or 2 coordinates and at least 2 nodes (got {coords} coordinates)"
            )));
        }
        let mut k = Self::from_impl(
            Arc::new(GridCached {
                inner: self.clone(),
                domain: domain.clone(),
                points,
                coords,
                table: OnceLock::new(),
            }),
            self.arity,
            self.dim,
            self.symmetric && coords == 1,
            self.nonnegative,
            format!("cached({})", self.label),
        )?;
        k.approx_symmetric = self.symmetric && coords == 2;
        Ok(k)
    }
}

impl Integrand for Kernel {
    fn eval(&self, x: &[f64]) -> f64 {
        Kernel::eval(self, x)
    }

    fn breakpoints(&self, x: &[f64], known: &[bool], coord: usize, dom: &BoxDomain, out: &mut Breaks) {
        Kernel::breakpoints(self, x, known, coord, dom, out)
    }

    fn inner_dims(&self) -> usize {
        Kernel::inner_dims(self)
    }
}
