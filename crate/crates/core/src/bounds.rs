//! Kolmogorov-distance bounds.
//!
//! * [`theorem31_terms_mc`] estimates the four Malliavin-Stein terms by Monte
//!   Carlo, with explicit constants.
//! * [`multiple_integral_bound`], [`dejong_bound`] and
//!   [`finite_expansion_bound`] assemble the contraction-norm bounds. Their
//!   universal constant is not known, so they report the constant-free
//!   argument (`constant_mode = unit`).
//! * [`fourth_moment_from_contractions`] and the `fourth_moment_gap_*`
//!   functions give the fourth-moment expressions for second-order integrals.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::chaos::{
    chaos_variance, degeneracy_violation, factorial, support_grid, ChaosExpansion, Kernel,
};
use crate::contraction::{contract, contraction_norm, symmetrize, ContractionIndex};
use crate::diagnostics::SampleSet;
use crate::error::{Error, Result};
use crate::measure_space::{check_dim, l2_norm_squared, ControlMeasure, IntegrationSpec};
use crate::point_process::sample_configuration_with;
use crate::rng::substream;

/// Replication count below which term estimates are flagged unreliable.
pub const MIN_REPLICATES: usize = 100;

/// Normalization tolerance for [`fourth_moment_from_contractions`].
pub const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantMode {
    /// The unknown universal constant is set to 1.
    Unit,
    /// The value excludes the constant and says so.
    ReportedSeparately,
}

/// How `bound_value` is assembled from the recorded components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assembly {
    /// `max{gap, ||.||, ||.||^{3/2}}` over every recorded norm.
    Max,
    /// `max{gap, max_same + max_cross}` where each inner max runs over the
    /// norms and their 3/2 powers.
    MaxOfSums,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContractionKey {
    pub i: usize,
    pub j: usize,
    pub r: usize,
    pub l: usize,
}

impl ContractionKey {
    pub fn name(&self) -> String {
        format!(
            "contraction_norm[i={},j={},r={},l={}]",
            self.i, self.j, self.r, self.l
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    pub value: f64,
    pub stderr: f64,
}

impl TermEstimate {
    fn from_samples(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            value: mean,
            stderr: (var / n).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem31Terms {
    /// `E|1 - <DF, -DL^{-1}F>|`
    pub a1: TermEstimate,
    /// `(E<(DF)^2, (DL^{-1}F)^2>)^{1/2}`
    pub a2: TermEstimate,
    /// `(E||DF||^4)^{1/4} ((E F^4)^{1/4} + 1)`
    pub a3: TermEstimate,
    /// `sup_x E<DF D1(F > x), |DL^{-1}F|>` over the recorded grid
    pub a4: TermEstimate,
    /// `E<(DF)^2, |DL^{-1}F|>`
    pub b2: TermEstimate,
    /// `E<(DF)^2, |F DL^{-1}F|>`
    pub b3: TermEstimate,
    pub fourth_moment: TermEstimate,
    pub df_norm4: TermEstimate,
    /// `A1 + sqrt(2 pi)/8 B2 + B3/2 + A4`
    pub theorem_total: TermEstimate,
    /// `A1 + A2 A3 / 2 + A4`
    pub corollary_total: TermEstimate,
    pub x_grid: Vec<f64>,
    pub a4_argmax: f64,
    pub reps: usize,
    pub z_samples: usize,
    pub seed: u64,
    pub insufficient_replication: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem31Options {
    /// Points `z ~ p` per replicate for the inner integrals over `mu_n`.
    pub z_samples: usize,
    /// Inner integrals of the pathwise multiple integrals.
    pub integration: IntegrationSpec,
}

impl Default for Theorem31Options {
    fn default() -> Self {
        Self {
            z_samples: 64,
            integration: IntegrationSpec::default(),
        }
    }
}

/// The 41-point grid on [-4, 4].
pub fn default_x_grid() -> Vec<f64> {
    (0..41).map(|i| -4.0 + 0.2 * i as f64).collect()
}

struct Replicate {
    f: f64,
    a1: f64,
    a2sq: f64,
    b2: f64,
    norm4: f64,
    /// `(lo, hi, weight)` per inner sample, for the A4 sup
    jumps: Vec<(f64, f64, f64)>,
}

/// Monte Carlo estimates of the four bound terms for a centred, normalized
/// `F` given by its chaos expansion.
///
/// Per replicate, a configuration is drawn from stream `i` of `seed`, followed
/// by `z_samples` points from `p`. `D_zF` and `-D_zL^{-1}F` are evaluated
/// pathwise from the expansion; the inner integrals over `mu_n` are averages
/// over the sampled points times `n`. The A4 supremum runs over `x_grid` (the
/// 41-point grid on [-4, 4] when empty) plus the 5%..95% empirical quantiles
/// of `F`.
pub fn theorem31_terms_mc(
    expansion: &ChaosExpansion,
    control: &ControlMeasure,
    reps: usize,
    seed: u64,
    x_grid: &[f64],
    opts: &Theorem31Options,
) -> Result<Theorem31Terms> {
    if expansion.max_order() > 3 {
        return Err(Error::MethodUnsupported("expansion orders above 3".into()));
    }
    if reps < 2 || opts.z_samples < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 replicates and 2 inner samples".into(),
        ));
    }
    let pw = expansion.pathwise(control, &opts.integration)?;
    let n = control.intensity();
    let k = opts.z_samples;
    let w = n / k as f64;
    let d = control.dim();

    let out: Vec<Result<Replicate>> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let cfg = sample_configuration_with(control, &mut rng)?;
            let f = pw.evaluate(&cfg)?;
            let mut z = vec![0.0; d];
            let (mut inner, mut s2, mut s4, mut a2sq, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
            let mut jumps = Vec::with_capacity(k);
            for _ in 0..k {
                control.sample_point(&mut rng, &mut z)?;
                let (df, ml) = pw.derivatives(&z, &cfg)?;
                let df2 = df * df;
                inner += df * ml;
                s2 += df2;
                s4 += df2 * df2;
                a2sq += df2 * ml * ml;
                b2 += df2 * ml.abs();
                let (lo, hi) = if df >= 0.0 { (f, f + df) } else { (f + df, f) };
                jumps.push((lo, hi, w * df.abs() * ml.abs()));
            }
            Ok(Replicate {
                f,
                a1: (1.0 - w * inner).abs(),
                a2sq: w * a2sq,
                b2: w * b2,
                norm4: n * n * (s2 * s2 - s4) / (k * (k - 1)) as f64,
                jumps,
            })
        })
        .collect();
    let reps_out: Vec<Replicate> = out.into_iter().collect::<Result<_>>()?;

    let col = |g: &dyn Fn(&Replicate) -> f64| -> Vec<f64> { reps_out.iter().map(g).collect() };
    let a1 = TermEstimate::from_samples(&col(&|r| r.a1));
    let a2sq = TermEstimate::from_samples(&col(&|r| r.a2sq));
    let b2 = TermEstimate::from_samples(&col(&|r| r.b2));
    let b3 = TermEstimate::from_samples(&col(&|r| r.f.abs() * r.b2));
    let ef4 = TermEstimate::from_samples(&col(&|r| r.f.powi(4)));
    let n4 = TermEstimate::from_samples(&col(&|r| r.norm4));

    let a2v = a2sq.value.max(0.0).sqrt();
    let a2 = TermEstimate {
        value: a2v,
        stderr: if a2v > 0.0 { a2sq.stderr / (2.0 * a2v) } else { 0.0 },
    };
    let p = n4.value.max(0.0).powf(0.25);
    let q = ef4.value.max(0.0).powf(0.25);
    let dp = if p > 0.0 { n4.stderr / (4.0 * p.powi(3)) } else { 0.0 };
    let dq = if q > 0.0 { ef4.stderr / (4.0 * q.powi(3)) } else { 0.0 };
    let a3 = TermEstimate {
        value: p * (q + 1.0),
        stderr: ((dp * (q + 1.0)).powi(2) + (p * dq).powi(2)).sqrt(),
    };

    let mut grid: Vec<f64> = if x_grid.is_empty() {
        default_x_grid()
    } else {
        x_grid.to_vec()
    };
    let mut fs = col(&|r| r.f);
    fs.sort_unstable_by(f64::total_cmp);
    for j in 1..20 {
        let at = ((j as f64 / 20.0) * (fs.len() - 1) as f64).round() as usize;
        grid.push(fs[at]);
    }
    grid.sort_unstable_by(f64::total_cmp);
    grid.dedup();

    let mut a4 = TermEstimate {
        value: 0.0,
        stderr: 0.0,
    };
    let mut a4_argmax = grid[0];
    for &x in &grid {
        let vals: Vec<f64> = reps_out
            .iter()
            .map(|r| {
                r.jumps
                    .iter()
                    .filter(|(lo, hi, _)| *lo <= x && x < *hi)
                    .map(|j| j.2)
                    .sum()
            })
            .collect();
        let est = TermEstimate::from_samples(&vals);
        if est.value > a4.value {
            a4 = est;
            a4_argmax = x;
        }
    }

    let c = (2.0 * PI).sqrt() / 8.0;
    let theorem_total = TermEstimate {
        value: a1.value + c * b2.value + 0.5 * b3.value + a4.value,
        stderr: (a1.stderr.powi(2)
            + (c * b2.stderr).powi(2)
            + (0.5 * b3.stderr).powi(2)
            + a4.stderr.powi(2))
        .sqrt(),
    };
    let corollary_total = TermEstimate {
        value: a1.value + 0.5 * a2.value * a3.value + a4.value,
        stderr: (a1.stderr.powi(2)
            + (0.5 * a3.value * a2.stderr).powi(2)
            + (0.5 * a2.value * a3.stderr).powi(2)
            + a4.stderr.powi(2))
        .sqrt(),
    };
    Ok(Theorem31Terms {
        a1,
        a2,
        a3,
        a4,
        b2,
        b3,
        fourth_moment: ef4,
        df_norm4: n4,
        theorem_total,
        corollary_total,
        x_grid: grid,
        a4_argmax,
        reps,
        z_samples: k,
        seed,
        insufficient_replication: reps < MIN_REPLICATES,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `|1 - var F|` (for a single integral `|1 - q! ||f||^2|`)
    pub variance_gap: f64,
    pub contraction_norms: BTreeMap<ContractionKey, f64>,
    pub term_estimates: Option<Theorem31Terms>,
    pub bound_value: f64,
    pub constant_mode: ConstantMode,
    pub assembly: Assembly,
    /// Further named quantities, e.g. `var_u` for degenerate U-statistics.
    pub extras: BTreeMap<String, f64>,
}

fn max_with_powers<'a>(it: impl Iterator<Item = &'a f64>) -> f64 {
    it.fold(0.0, |m, &v| m.max(v).max(v.powf(1.5)))
}

impl BoundReport {
    /// A report from its components, with `bound_value` filled in.
    pub fn assembled(
        variance_gap: f64,
        contraction_norms: BTreeMap<ContractionKey, f64>,
        assembly: Assembly,
    ) -> Self {
        let mut r = Self {
            variance_gap,
            contraction_norms,
            term_estimates: None,
            bound_value: 0.0,
            constant_mode: ConstantMode::Unit,
            assembly,
            extras: BTreeMap::new(),
        };
        r.bound_value = r.recompute();
        r
    }

    /// The bound value implied by the recorded components.
    pub fn recompute(&self) -> f64 {
        match self.assembly {
            Assembly::Max => self
                .variance_gap
                .max(max_with_powers(self.contraction_norms.values())),
            Assembly::MaxOfSums => {
                let same = max_with_powers(
                    self.contraction_norms
                        .iter()
                        .filter(|(k, _)| k.i == k.j)
                        .map(|(_, v)| v),
                );
                let cross = max_with_powers(
                    self.contraction_norms
                        .iter()
                        .filter(|(k, _)| k.i != k.j)
                        .map(|(_, v)| v),
                );
                self.variance_gap.max(same + cross)
            }
        }
    }

    /// The largest single component and its name.
    pub fn dominant_component(&self) -> (String, f64) {
        let mut best = ("variance_gap".to_string(), self.variance_gap);
        for (k, v) in &self.contraction_norms {
            let v = v.max(v.powf(1.5));
            if v > best.1 {
                best = (k.name(), v);
            }
        }
        best
    }

    /// JSON object with every component under its own key.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("variance_gap".into(), json!(self.variance_gap));
        for (k, v) in &self.contraction_norms {
            m.insert(k.name(), json!(v));
        }
        m.insert("bound_value".into(), json!(self.bound_value));
        m.insert("constant_mode".into(), json!(self.constant_mode));
        m.insert("assembly".into(), json!(self.assembly));
        for (k, v) in &self.extras {
            m.insert(k.clone(), json!(v));
        }
        m.insert(
            "term_estimates".into(),
            serde_json::to_value(&self.term_estimates).unwrap_or(Value::Null),
        );
        Value::Object(m)
    }
}

fn same_kernel_indices(q: usize) -> Vec<ContractionIndex> {
    let mut out = vec![ContractionIndex::new(q, 0)];
    for r in 1..=q {
        for l in 1..=r.min(q - 1) {
            out.push(ContractionIndex::new(r, l));
        }
    }
    out
}

fn same_kernel_norms(
    f: &Kernel,
    q: usize,
    i: usize,
    control: &ControlMeasure,
    spec: &IntegrationSpec,
    out: &mut BTreeMap<ContractionKey, f64>,
) -> Result<()> {
    for idx in same_kernel_indices(q) {
        let v = contraction_norm(f, f, idx, control, spec)?;
        if !v.is_finite() {
            return Err(Error::NumericalDomain(format!(
                "contraction norm (r={}, l={}) is not finite",
                idx.r, idx.l
            )));
        }
        out.insert(
            ContractionKey {
                i,
                j: i,
                r: idx.r,
                l: idx.l,
            },
            v,
        );
    }
    Ok(())
}

/// `max{|1 - q! ||f||^2|, ||f *_r^l f||, ||f *_r^l f||^{3/2}}` over
/// `(r, l) = (q, 0)` and `1 <= r <= q`, `1 <= l <= min(r, q-1)`.
pub fn multiple_integral_bound(
    f: &Kernel,
    q: usize,
    control: &ControlMeasure,
    spec: &IntegrationSpec,
) -> Result<BoundReport> {
    if !(2..=3).contains(&q) || f.arity() != q {
        return Err(Error::InvalidArgument(format!(
            "multiple-integral bound needs q in {{2, 3}} and a kernel of that arity (q = {q}, arity = {})",
            f.arity()
        )));
    }
    check_dim(f, control)?;
    let gap = (1.0 - factorial(q) * l2_norm_squared(f, control, spec)?.value).abs();
    let mut norms = BTreeMap::new();
    same_kernel_norms(f, q, 1, control, spec, &mut norms)?;
    Ok(BoundReport::assembled(gap, norms, Assembly::Max))
}

/// The bound for a degenerate U-statistic `U = sum h(x, y)` over distinct
/// pairs. Works with `f = h / sqrt(var U)`, `var U = 2 ||h||^2`, so each
/// component is `||h * h|| / var U`; `var_u` is recorded in `extras`.
pub fn dejong_bound(h: &Kernel, control: &ControlMeasure, spec: &IntegrationSpec) -> Result<BoundReport> {
    if h.arity() != 2 {
        return Err(Error::InvalidArgument("de Jong bound needs an order-2 kernel".into()));
    }
    let per_axis = if control.dim() == 1 { 33 } else { 9 };
    let grid = support_grid(control, per_axis);
    if let Some((value, at)) = degeneracy_violation(h, control, &grid, 1e-8, spec)? {
        return Err(Error::NotDegenerate { value, at });
    }
    let var = 2.0 * l2_norm_squared(h, control, spec)?.value;
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "U-statistic variance must be positive and finite, got {var}"
        )));
    }
    let f = h.scaled(1.0 / var.sqrt());
    let mut report = multiple_integral_bound(&f, 2, control, spec)?;
    report.extras.insert("var_u".into(), var);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourthMoment {
    pub value: f64,
    /// `16*3! ||sym(f *_1^0 f)||^2`, `16 ||f *_2^1 f||^2`, `16 ||f *_1^1 f||^2`,
    /// `2 ||4 f *_1^1 f + 2 f^2||^2`, `3 (2 ||f||^2)^2`
    pub addends: [f64; 5],
}

/// `E I_2(f)^4` from contractions, for `f` normalized to `2 ||f||^2 = 1`.
pub fn fourth_moment_from_contractions(
    f: &Kernel,
    control: &ControlMeasure,
    spec: &IntegrationSpec,
) -> Result<FourthMoment> {
    if f.arity() != 2 {
        return Err(Error::InvalidArgument("fourth-moment identity needs q = 2".into()));
    }
    check_dim(f, control)?;
    let norm2 = l2_norm_squared(f, control, spec)?.value;
    if (2.0 * norm2 - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized(2.0 * norm2));
    }
    let sq = |k: &Kernel| -> Result<f64> { Ok(l2_norm_squared(k, control, spec)?.value) };
    let c10 = symmetrize(&contract(f, f, ContractionIndex::new(1, 0), control, spec)?);
    let c21 = contract(f, f, ContractionIndex::new(2, 1), control, spec)?;
    let c11 = contract(f, f, ContractionIndex::new(1, 1), control, spec)?;
    let c20 = contract(f, f, ContractionIndex::new(2, 0), control, spec)?;
    let mix = Kernel::linear_combination(&[(4.0, c11.clone()), (2.0, c20)])?;
    let addends = [
        16.0 * 6.0 * sq(&c10)?,
        16.0 * sq(&c21)?,
        16.0 * sq(&c11)?,
        2.0 * sq(&mix)?,
        3.0 * (2.0 * norm2).powi(2),
    ];
    Ok(FourthMoment {
        value: addends.iter().sum(),
        addends,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourthMomentGap {
    /// `sqrt(max(E F^4 - 3, 0))`
    pub gap: f64,
    pub fourth_moment: f64,
    /// Standard error of `fourth_moment` (zero on the kernel route).
    pub stderr: f64,
}

/// Kernel route: `sqrt(max(E F^4 - 3, 0))` with `E F^4` from contractions.
pub fn fourth_moment_gap_kernel(
    f: &Kernel,
    control: &ControlMeasure,
    spec: &IntegrationSpec,
) -> Result<FourthMomentGap> {
    let m = fourth_moment_from_contractions(f, control, spec)?;
    Ok(FourthMomentGap {
        gap: (m.value - 3.0).max(0.0).sqrt(),
        fourth_moment: m.value,
        stderr: 0.0,
    })
}

/// Sample route. With `standardize`, values are centred and scaled by the
/// sample mean and standard deviation first; otherwise they are taken to
/// have mean 0 and variance 1 already.
pub fn fourth_moment_gap_samples(samples: &SampleSet, standardize: bool) -> Result<FourthMomentGap> {
    if samples.len() < 2 {
        return Err(Error::EmptySample);
    }
    let (mu, sd) = if standardize {
        (samples.mean(), samples.variance().sqrt())
    } else {
        (0.0, 1.0)
    };
    let z4: Vec<f64> = samples.values.iter().map(|v| ((v - mu) / sd).powi(4)).collect();
    let est = TermEstimate::from_samples(&z4);
    Ok(FourthMomentGap {
        gap: (est.value - 3.0).max(0.0).sqrt(),
        fourth_moment: est.value,
        stderr: est.stderr,
    })
}

/// The bound for `F = sum_i I_{q_i}(f_i)`:
/// `max{|1 - var F|, max_same + max_cross}`, where `max_same` runs over
/// `||f_i *_r^l f_i||` (same index range as [`multiple_integral_bound`]) and
/// `max_cross` over `||f_i *_r^l f_j||`, `i < j`, `1 <= l <= r <= q_i`, each
/// together with its 3/2 power.
pub fn finite_expansion_bound(
    expansion: &ChaosExpansion,
    control: &ControlMeasure,
    spec: &IntegrationSpec,
) -> Result<BoundReport> {
    if expansion.max_order() > 3 {
        return Err(Error::MethodUnsupported("expansion orders above 3".into()));
    }
    let gap = (1.0 - chaos_variance(expansion, control, spec)?).abs();
    let terms = expansion.terms();
    let mut norms = BTreeMap::new();
    for (i, t) in terms.iter().enumerate() {
        same_kernel_norms(&t.kernel, t.order, i + 1, control, spec, &mut norms)?;
    }
    for (i, ti) in terms.iter().enumerate() {
        for (j, tj) in terms.iter().enumerate().skip(i + 1) {
            for r in 1..=ti.order {
                for l in 1..=r {
                    let v = contraction_norm(&ti.kernel, &tj.kernel, ContractionIndex::new(r, l), control, spec)?;
                    norms.insert(
                        ContractionKey {
                            i: i + 1,
                            j: j + 1,
                            r,
                            l,
                        },
                        v,
                    );
                }
            }
        }
    }
    Ok(BoundReport::assembled(gap, norms, Assembly::MaxOfSums))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_ranges() {
        let q2: Vec<_> = same_kernel_indices(2).iter().map(|i| (i.r, i.l)).collect();
        assert_eq!(q2, vec![(2, 0), (1, 1), (2, 1)]);
        let q3: Vec<_> = same_kernel_indices(3).iter().map(|i| (i.r, i.l)).collect();
        assert_eq!(q3, vec![(3, 0), (1, 1), (2, 1), (2, 2), (3, 1), (3, 2)]);
    }

    #[test]
    fn report_recomputes_its_value() {
        let mut norms = BTreeMap::new();
        norms.insert(ContractionKey { i: 1, j: 1, r: 1, l: 1 }, 0.3);
        norms.insert(ContractionKey { i: 1, j: 2, r: 1, l: 1 }, 0.2);
        let r = BoundReport::assembled(0.05, norms.clone(), Assembly::MaxOfSums);
        assert!((r.bound_value - 0.5).abs() < 1e-15);
        let r = BoundReport::assembled(0.05, norms, Assembly::Max);
        assert!((r.bound_value - 0.3).abs() < 1e-15);
        let j = r.to_json();
        assert!(j.get("contraction_norm[i=1,j=1,r=1,l=1]").is_some());
    }
}
