//! Contraction kernels `f1 *_r^l f2`, canonical symmetrization and
//! contraction norms.
//!
//! The contracted kernel takes its arguments in the order
//! `(shared but not integrated, free of f1, free of f2)`, i.e.
//! `(f1 *_r^l f2)(g, t, s) = int f1(z, g, t) f2(z, g, s) dmu^l(z)`
//! with `|z| = l`, `|g| = r - l`, `|t| = q1 - r`, `|s| = q2 - r`.

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::chaos::{InnerRule, Kernel, KernelFn};
use crate::error::{Error, Result};
use crate::measure_space::{
    check_dim, l2_norm, BoxDomain, Breaks, ControlMeasure, Integrand, IntegrationSpec, MAX_COORDS,
};
use crate::rng::substream;

/// Number of permutations averaged when the arity is too large to sum all.
pub const SAMPLED_PERMUTATIONS: usize = 720;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContractionIndex {
    pub r: usize,
    pub l: usize,
}

impl ContractionIndex {
    pub fn new(r: usize, l: usize) -> Self {
        Self { r, l }
    }

    pub fn validate(&self, q1: usize, q2: usize) -> Result<()> {
        if self.l > self.r || self.r > q1.min(q2) {
            return Err(Error::Index(format!(
                "need 0 <= l <= r <= min(q1, q2); got r = {}, l = {} for arities ({q1}, {q2})",
                self.r, self.l
            )));
        }
        Ok(())
    }
}

struct Contraction {
    f1: Kernel,
    f2: Kernel,
    /// counts of points: integrated, shared, free in f1, free in f2
    l: usize,
    g: usize,
    t: usize,
    s: usize,
    d: usize,
    control: ControlMeasure,
    rule: Option<InnerRule>,
    scale: f64,
}

impl Contraction {
    /// Writes `(z, g, t)` and `(z, g, s)` argument lists for the factors.
    fn split(&self, z: &[f64], x: &[f64], a1: &mut [f64], a2: &mut [f64]) -> (usize, usize) {
        let d = self.d;
        let (zl, gl, tl, sl) = (self.l * d, self.g * d, self.t * d, self.s * d);
        a1[..zl].copy_from_slice(z);
        a1[zl..zl + gl].copy_from_slice(&x[..gl]);
        a1[zl + gl..zl + gl + tl].copy_from_slice(&x[gl..gl + tl]);
        a2[..zl].copy_from_slice(z);
        a2[zl..zl + gl].copy_from_slice(&x[..gl]);
        a2[zl + gl..zl + gl + sl].copy_from_slice(&x[gl + tl..gl + tl + sl]);
        (zl + gl + tl, zl + gl + sl)
    }
}

struct Inner<'a> {
    c: &'a Contraction,
    x: &'a [f64],
}

impl Integrand for Inner<'_> {
    fn eval(&self, z: &[f64]) -> f64 {
        let mut a1 = [0.0; MAX_COORDS];
        let mut a2 = [0.0; MAX_COORDS];
        let (n1, n2) = self.c.split(z, self.x, &mut a1, &mut a2);
        self.c.f1.eval(&a1[..n1]) * self.c.f2.eval(&a2[..n2])
    }

    fn breakpoints(&self, z: &[f64], known: &[bool], coord: usize, dom: &BoxDomain, out: &mut Breaks) {
        let mut a1 = [0.0; MAX_COORDS];
        let mut a2 = [0.0; MAX_COORDS];
        let (n1, n2) = self.c.split(z, self.x, &mut a1, &mut a2);
        let mut m1 = [true; MAX_COORDS];
        let mut m2 = [true; MAX_COORDS];
        m1[..z.len()].copy_from_slice(known);
        m2[..z.len()].copy_from_slice(known);
        self.c.f1.breakpoints(&a1[..n1], &m1[..n1], coord, dom, out);
        self.c.f2.breakpoints(&a2[..n2], &m2[..n2], coord, dom, out);
    }

    fn inner_dims(&self) -> usize {
        self.c.f1.inner_dims().max(self.c.f2.inner_dims())
    }
}

impl KernelFn for Contraction {
    fn eval(&self, x: &[f64]) -> f64 {
        match &self.rule {
            None => {
                let mut a1 = [0.0; MAX_COORDS];
                let mut a2 = [0.0; MAX_COORDS];
                let (n1, n2) = self.split(&[], x, &mut a1, &mut a2);
                self.f1.eval(&a1[..n1]) * self.f2.eval(&a2[..n2])
            }
            Some(rule) => self.scale * rule.integrate(&Inner { c: self, x }, &self.control, self.l),
        }
    }

    fn breakpoints(&self, x: &[f64], known: &[bool], coord: usize, dom: &BoxDomain, out: &mut Breaks) {
        let d = self.d;
        let (zl, gl, tl) = (self.l * d, self.g * d, self.t * d);
        let z = [0.0; MAX_COORDS];
        let mut a1 = [0.0; MAX_COORDS];
        let mut a2 = [0.0; MAX_COORDS];
        let (n1, n2) = self.split(&z[..zl], x, &mut a1, &mut a2);
        let mut m1 = [false; MAX_COORDS];
        let mut m2 = [false; MAX_COORDS];
        // z stays unknown, the rest as given
        m1[zl..zl + gl].copy_from_slice(&known[..gl]);
        m1[zl + gl..n1].copy_from_slice(&known[gl..gl + tl]);
        m2[zl..zl + gl].copy_from_slice(&known[..gl]);
        m2[zl + gl..n2].copy_from_slice(&known[gl + tl..]);
        if coord < gl {
            self.f1.breakpoints(&a1[..n1], &m1[..n1], zl + coord, dom, out);
            self.f2.breakpoints(&a2[..n2], &m2[..n2], zl + coord, dom, out);
        } else if coord < gl + tl {
            self.f1.breakpoints(&a1[..n1], &m1[..n1], zl + coord, dom, out);
        } else {
            self.f2
                .breakpoints(&a2[..n2], &m2[..n2], zl + coord - tl, dom, out);
        }
    }

    fn inner_dims(&self) -> usize {
        self.l * self.d + self.f1.inner_dims().max(self.f2.inner_dims())
    }
}

/// The kernel `f1 *_r^l f2` of arity `q1 + q2 - r - l`. Inner integrals over
/// `l` points follow `spec` (quadrature, or a fixed Monte Carlo sample).
pub fn contract(
    f1: &Kernel,
    f2: &Kernel,
    idx: ContractionIndex,
    control: &ControlMeasure,
    spec: &IntegrationSpec,
) -> Result<Kernel> {
    let (q1, q2) = (f1.arity(), f2.arity());
    idx.validate(q1, q2)?;
    check_dim(f1, control)?;
    check_dim(f2, control)?;
    if !f1.is_symmetric() || !f2.is_symmetric() {
        return Err(Error::InvalidArgument(
            "contractions are defined for symmetric kernels".into(),
        ));
    }
    let d = control.dim();
    let rule = if idx.l > 0 {
        let extra = f1.inner_dims().max(f2.inner_dims());
        Some(InnerRule::build(control, idx.l, extra, spec)?)
    } else {
        None
    };
    let arity = q1 + q2 - idx.r - idx.l;
    let same = f1.same_as(f2) && q1 == q2;
    let symmetric = arity <= 1
        || (same && idx.r == q1)
        || (same && idx.r == idx.l && q1 - idx.r <= 1);
    let nonnegative = (f1.is_nonnegative() && f2.is_nonnegative()) || (same && idx.r == q1 && idx.l == 0);
    Kernel::from_impl(
        Arc::new(Contraction {
            f1: f1.clone(),
            f2: f2.clone(),
            l: idx.l,
            g: idx.r - idx.l,
            t: q1 - idx.r,
            s: q2 - idx.r,
            d,
            control: control.clone(),
            rule,
            scale: control.intensity().powi(idx.l as i32),
        }),
        arity,
        d,
        symmetric,
        nonnegative,
        format!("({})*_{}^{}({})", f1.label(), idx.r, idx.l, f2.label()),
    )
}

/// All permutations of `0..m` (Heap's algorithm).
fn all_permutations(m: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..m).collect();
    let mut out = vec![a.clone()];
    let mut c = vec![0; m];
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// `(1/m!) sum_pi f o pi`. Above arity 6 a fixed sample of
/// [`SAMPLED_PERMUTATIONS`] permutations is averaged and the result is
/// flagged approximately symmetric. Symmetric kernels are returned as is.
pub fn symmetrize(f: &Kernel) -> Kernel {
    if f.is_symmetric() {
        return f.clone();
    }
    let m = f.arity();
    if m <= 6 {
        f.symmetrized(all_permutations(m)).expect("same shape")
    } else {
        let mut rng = substream(0, 0);
        let perms = (0..SAMPLED_PERMUTATIONS)
            .map(|_| {
                let mut p: Vec<usize> = (0..m).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        f.symmetrized(perms).expect("same shape").mark_approx_symmetric()
    }
}

/// `||f1 *_r^l f2||` in `L^2(mu^{q1+q2-r-l})`.
pub fn contraction_norm(
    f1: &Kernel,
    f2: &Kernel,
    idx: ContractionIndex,
    control: &ControlMeasure,
    spec: &IntegrationSpec,
) -> Result<f64> {
    let k = contract(f1, f2, idx, control, spec)?;
    l2_norm(&k, control, spec)
}
