//! Acceptance run: one PASS/FAIL line per criterion, then a nonzero exit if
//! any failed. Runs without the libtest harness so the lines always print.

mod common;

use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{rng, uniform_point, uniform_points};
use poisson_stein::bounds::{
    dejong_bound, fourth_moment_from_contractions, fourth_moment_gap_kernel, fourth_moment_gap_samples,
    theorem31_terms_mc, Theorem31Options,
};
use poisson_stein::chaos::{evaluate_multiple_integral, Kernel, MultipleIntegral, MultipleIntegralFunctional};
use poisson_stein::diagnostics::{kolmogorov_distance, SampleSet, KOLMOGOROV_SD};
use poisson_stein::measure_space::{integrate, l2_norm_squared, ControlMeasure, IntegrationSpec};
use poisson_stein::point_process::{add_one_cost, sample_configuration, sample_configuration_with};
use poisson_stein::rng::substream;
use poisson_stein::scenarios::{
    build_dejong_cosine, build_ou_levy, build_pairwise, run_rate_study, LevyNu, Scenario,
};
use poisson_stein::stein::{derivative, increment_margin, stein_residual, stein_solution, sup_bound, SteinFunction};
use rand::Rng;
use rayon::prelude::*;

const SEED: u64 = 20_240_601;

/// Outcome of one criterion, plus the numbers it produced so that the
/// determinism criterion can compare runs bit for bit.
struct Check {
    pass: bool,
    detail: String,
    fingerprint: Vec<f64>,
}

fn report(id: usize, title: &str, limit: Duration, run: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let c = run();
    let took = start.elapsed();
    let ok = c.pass && took <= limit;
    println!(
        "{} criterion {id:>2} ({title}): {} [{:.1}s, limit {}s]",
        if ok { "PASS" } else { "FAIL" },
        c.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
    ok
}

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn random_kernel(q: usize, r: &mut impl Rng) -> Kernel {
    let (a, b, c) = (r.random_range(-2.0..2.0), r.random_range(0.5..4.0), r.random_range(-2.0..2.0));
    Kernel::from_fn(q, 1, true, move |x| {
        let s: f64 = x.iter().sum();
        let p: f64 = x.iter().product();
        a * (b * s).cos() + c * p + 0.5
    })
    .unwrap()
}

fn pathwise_identities() -> Check {
    let spec = IntegrationSpec::quadrature(32);
    let c = ControlMeasure::unit_cube(1, 6.0).unwrap();
    let mut r = rng(SEED);
    let mut worst: f64 = 0.0;
    for q in 1..=3 {
        for _ in 0..100 {
            let f = random_kernel(q, &mut r);
            let mi = MultipleIntegral::new(&f, q, &c, &spec).unwrap();
            let cfg = uniform_points(&c, r.random_range(0..10), &mut r);
            let z = uniform_point(c.domain(), &mut r);
            let d = add_one_cost(&MultipleIntegralFunctional(mi.clone()), &cfg, &z).unwrap();
            let s = q as f64 * mi.evaluate_section(&z, &cfg).unwrap();
            worst = worst.max(relative_gap(d, s));
        }
    }
    let mut worst_product: f64 = 0.0;
    for _ in 0..100 {
        let (f, g) = (random_kernel(1, &mut r), random_kernel(1, &mut r));
        let (f2, g2) = (f.clone(), g.clone());
        let fg = Kernel::from_fn(1, 1, true, move |x| f2.eval(x) * g2.eval(x)).unwrap();
        let (f3, g3) = (f.clone(), g.clone());
        let sym = Kernel::from_fn(2, 1, true, move |x| {
            0.5 * (f3.eval(&x[..1]) * g3.eval(&x[1..]) + f3.eval(&x[1..]) * g3.eval(&x[..1]))
        })
        .unwrap();
        let inner = integrate(&fg, &c, 1, &spec).unwrap().value;
        let cfg = uniform_points(&c, r.random_range(0..10), &mut r);
        let i = |k: &Kernel, q| evaluate_multiple_integral(k, q, &cfg, &c, &spec).unwrap();
        let lhs = i(&f, 1) * i(&g, 1);
        let rhs = i(&sym, 2) + i(&fg, 1) + inner;
        worst_product = worst_product.max(relative_gap(lhs, rhs));
    }
    Check {
        pass: worst <= 1e-9 && worst_product <= 1e-9,
        detail: format!("max relative error D_z: {worst:.2e}, product formula: {worst_product:.2e} (tol 1e-9)"),
        fingerprint: vec![worst, worst_product],
    }
}

fn isometry(reps: usize) -> Check {
    let spec = IntegrationSpec::quadrature(32);
    let c = ControlMeasure::unit_cube(1, 5.0).unwrap();
    let f1 = Kernel::from_fn(1, 1, true, |x| (3.0 * x[0]).cos() + x[0]).unwrap();
    let f2 = Kernel::from_fn(2, 1, true, |x| (-(x[0] - x[1]).powi(2)).exp() + x[0] * x[1]).unwrap();
    let i1 = MultipleIntegral::new(&f1, 1, &c, &spec).unwrap();
    let i2 = MultipleIntegral::new(&f2, 2, &c, &spec).unwrap();
    let pairs: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|k| {
            let cfg = sample_configuration_with(&c, &mut substream(SEED, k as u64)).unwrap();
            (i1.evaluate(&cfg).unwrap(), i2.evaluate(&cfg).unwrap())
        })
        .collect();
    let s1 = SampleSet::new(pairs.iter().map(|p| p.0).collect(), "I1");
    let s2 = SampleSet::new(pairs.iter().map(|p| p.1).collect(), "I2");
    let cross = SampleSet::new(pairs.iter().map(|p| p.0 * p.1).collect(), "I1 I2");
    let want1 = l2_norm_squared(&f1, &c, &spec).unwrap().value;
    let want2 = 2.0 * l2_norm_squared(&f2, &c, &spec).unwrap().value;
    let z1 = (s1.variance() - want1) / s1.variance_stderr();
    let z2 = (s2.variance() - want2) / s2.variance_stderr();
    let zc = cross.mean() / (cross.variance() / reps as f64).sqrt();
    Check {
        pass: z1.abs() <= 4.0 && z2.abs() <= 4.0 && zc.abs() <= 4.0,
        detail: format!(
            "var I1 {:.4} vs {want1:.4} (z {z1:.2}), var I2 {:.4} vs {want2:.4} (z {z2:.2}), cov z {zc:.2}",
            s1.variance(),
            s2.variance()
        ),
        fingerprint: vec![s1.variance(), s2.variance(), cross.mean()],
    }
}

fn hoeffding() -> Check {
    let spec = IntegrationSpec::quadrature(64);
    let mut worst: f64 = 0.0;
    for d in [1, 2] {
        let s = build_pairwise(20.0, 0.1, d).unwrap();
        let pw = s.expansion.as_ref().unwrap().pathwise(&s.control, &spec).unwrap();
        for k in 0..50 {
            let cfg = sample_configuration(&s.control, SEED + k).unwrap();
            let u = s.functional.evaluate(&cfg);
            let rebuilt = s.normalization.mean + s.normalization.sd * pw.evaluate(&cfg).unwrap();
            worst = worst.max((u - rebuilt).abs() / u.abs().max(1.0));
        }
    }
    Check {
        pass: worst <= 1e-6,
        detail: format!("100 configurations, max relative error {worst:.2e} (tol 1e-6)"),
        fingerprint: vec![worst],
    }
}

fn cosine_f(n: f64, m: usize) -> Kernel {
    Kernel::cosine_family(m).unwrap().scaled(1.0 / (2.0 * n * n).sqrt())
}

fn fourth_moment(reps: usize) -> Check {
    let c = ControlMeasure::unit_cube(1, 16.0).unwrap();
    let kernel = fourth_moment_from_contractions(&cosine_f(16.0, 4), &c, &IntegrationSpec::quadrature(64))
        .unwrap()
        .value;
    let samples = build_dejong_cosine(16.0, 4).unwrap().simulate(reps, SEED).unwrap();
    let mc = fourth_moment_gap_samples(&samples, false).unwrap();
    let z = (mc.fourth_moment - kernel) / mc.stderr;
    Check {
        pass: z.abs() <= 4.0,
        detail: format!(
            "kernel {kernel:.6}, MC {:.6} +- {:.6} over {reps} (z {z:.2})",
            mc.fourth_moment, mc.stderr
        ),
        fingerprint: vec![mc.fourth_moment, mc.stderr],
    }
}

fn dejong_pair(reps: usize) -> Check {
    let spec = IntegrationSpec::quadrature(128);
    let mut bounds = Vec::new();
    let mut gaps = Vec::new();
    for n in [16.0f64, 64.0, 256.0] {
        let m = n.sqrt().ceil() as usize;
        let c = ControlMeasure::unit_cube(1, n).unwrap();
        bounds.push(dejong_bound(&Kernel::cosine_family(m).unwrap(), &c, &spec).unwrap().bound_value);
        gaps.push(fourth_moment_gap_kernel(&cosine_f(n, m), &c, &spec).unwrap().gap);
    }
    let study = run_rate_study(&|n| build_dejong_cosine(n, 1), &[16.0, 64.0, 256.0], reps, SEED).unwrap();
    let fixed: Vec<f64> = study.table.rows.iter().map(|r| r.distance).collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let pass = decreasing(&bounds) && decreasing(&gaps) && fixed.iter().all(|d| *d > 0.05);
    let mut fingerprint = bounds.clone();
    fingerprint.extend(&gaps);
    fingerprint.extend(&fixed);
    Check {
        pass,
        detail: format!("bounds {bounds:.4?}, fourth-moment gaps {gaps:.4?}, m = 1 d_K {fixed:.4?}"),
        fingerprint,
    }
}

fn pairwise_rate(reps: usize) -> Check {
    let ns: Vec<f64> = (4..=10).map(|k| 2f64.powi(k)).collect();
    let study = run_rate_study(&|n| build_pairwise(n, 0.1, 1), &ns, reps, SEED).unwrap();
    let slope = study.table.slope;
    let mut fingerprint: Vec<f64> = study.table.rows.iter().map(|r| r.distance).collect();
    fingerprint.push(slope);
    Check {
        pass: (-0.65..=-0.35).contains(&slope),
        detail: format!("slope {slope:.3} +- {:.3} (want [-0.65, -0.35])", study.table.slope_stderr),
        fingerprint,
    }
}

fn variance_z(s: &Scenario, reps: usize, want: f64) -> (f64, f64) {
    let raw = s.simulate_raw(reps, SEED).unwrap();
    (raw.variance(), (raw.variance() - want) / raw.variance_stderr())
}

fn ou_levy(reps: usize) -> Check {
    let nu = LevyNu::default();
    let set = build_ou_levy(1.0, 200.0, &nu, 1e-8, 0.0).unwrap();
    let (vm, zm) = variance_z(&set.m_t, reps, 2.0);
    let (vs, zs) = variance_z(&set.s_t, reps, 2.0 + nu.c_nu() * nu.c_nu());
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let cfg = sample_configuration(&set.s_t.control, SEED + k).unwrap();
        worst = worst.max((set.s_t.functional.evaluate(&cfg) - set.v_t.functional.evaluate(&cfg)).abs());
    }
    let times = [25.0, 100.0, 400.0];
    let m_study = run_rate_study(&|t| Ok(build_ou_levy(1.0, t, &nu, 1e-8, 0.0)?.m_t), &times, reps, SEED).unwrap();
    let s_study = run_rate_study(&|t| Ok(build_ou_levy(1.0, t, &nu, 1e-8, 0.0)?.s_t), &times, reps, SEED).unwrap();
    let slope = m_study.table.slope;
    let pass = zm.abs() <= 4.0 && zs.abs() <= 4.0 && worst <= 1e-9 && (slope + 0.5).abs() <= 0.2;
    Check {
        pass,
        detail: format!(
            "var M {vm:.4} (z {zm:.2} vs 2), var S {vs:.4} (z {zs:.2} vs 5.24), |V0 - S| {worst:.1e}, \
             M_T rate slope {slope:.3} (S_T slope {:.3})",
            s_study.table.slope
        ),
        fingerprint: vec![vm, vs, slope, s_study.table.slope],
    }
}

fn stein() -> Check {
    let xs = [-2.0, -0.5, 0.0, 0.5, 2.0];
    let (mut min_f, mut max_f, mut max_d, mut max_res) = (f64::INFINITY, 0f64, 0f64, 0f64);
    for x in xs {
        let s = SteinFunction::new(x);
        for i in 0..=16_000 {
            let w = -8.0 + i as f64 * 1e-3;
            let f = stein_solution(s, w);
            min_f = min_f.min(f);
            max_f = max_f.max(f);
            max_d = max_d.max(derivative(s, w).abs());
            max_res = max_res.max(stein_residual(s, w).abs());
        }
    }
    let mut r = rng(SEED);
    let mut min_margin = f64::INFINITY;
    for i in 0..10_000 {
        let s = SteinFunction::new(xs[i % xs.len()]);
        let (w, u, v) = (r.random_range(-8.0..8.0), r.random_range(-4.0..4.0), r.random_range(-4.0..4.0));
        min_margin = min_margin.min(increment_margin(s, w, u, v));
    }
    let pass = min_f > 0.0 && max_f <= sup_bound() + 1e-10 && max_d <= 1.0 + 1e-10 && max_res < 1e-8 && min_margin >= -1e-12;
    Check {
        pass,
        detail: format!(
            "f in [{min_f:.3e}, {max_f:.6}], max |f'| {max_d:.6}, max residual {max_res:.1e}, min increment margin {min_margin:.2e}"
        ),
        fingerprint: vec![min_f, max_f, max_d, max_res, min_margin],
    }
}

fn upper_bound(theorem_reps: usize, sim_reps: usize) -> Check {
    let s = build_dejong_cosine(64.0, 8).unwrap();
    let t = theorem31_terms_mc(
        s.expansion.as_ref().unwrap(),
        &s.control,
        theorem_reps,
        SEED,
        &[],
        &Theorem31Options::default(),
    )
    .unwrap();
    let kd = kolmogorov_distance(&s.simulate(sim_reps, SEED).unwrap()).unwrap();
    let kd_se = KOLMOGOROV_SD / (sim_reps as f64).sqrt();
    let se = (t.theorem_total.stderr.powi(2) + kd_se.powi(2)).sqrt();
    Check {
        pass: t.theorem_total.value > kd.distance - 5.0 * se,
        detail: format!(
            "bound {:.4} +- {:.4} (A1 {:.4}, B2 {:.4}, B3 {:.4}, A4 {:.4}) vs d_K {:.4} +- {kd_se:.4}",
            t.theorem_total.value, t.theorem_total.stderr, t.a1.value, t.b2.value, t.b3.value, t.a4.value, kd.distance
        ),
        fingerprint: vec![t.theorem_total.value, t.theorem_total.stderr, kd.distance],
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn cli_table(threads: &str) -> Vec<u8> {
    let dir = tempfile::TempDir::new().unwrap();
    let cfg = dir.path().join("sim.json");
    fs::write(
        &cfg,
        r#"{"command": "simulate", "scenario": {"name": "ou-levy", "params": {"T": 50, "statistic": "S"}}, "reps": 2000, "seed": 3}"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_poisson-stein"))
        .args(["run", "--threads", threads, "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    fs::read(dir.path().join("table.csv")).unwrap()
}

fn determinism() -> Check {
    // the Monte Carlo criteria at reduced size, under 1 and 4 worker threads
    let run = || -> Vec<Vec<f64>> {
        vec![
            isometry(5_000).fingerprint,
            fourth_moment(20_000).fingerprint,
            pairwise_rate(1_000).fingerprint,
            ou_levy(1_000).fingerprint,
            upper_bound(40, 2_000).fingerprint,
        ]
    };
    let one = in_pool(1, run);
    let four = in_pool(4, run);
    let same_lib = one.iter().zip(&four).all(|(a, b)| {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
    });
    let same_cli = cli_table("1") == cli_table("4");
    Check {
        pass: same_lib && same_cli,
        detail: format!("library runs bitwise equal: {same_lib}, CLI table.csv equal: {same_cli}"),
        fingerprint: vec![],
    }
}

fn main() {
    let results = [
        report(1, "pathwise identities", minutes(1), pathwise_identities),
        report(2, "isometry and orthogonality", minutes(5), || isometry(100_000)),
        report(3, "Hoeffding reconstruction", minutes(1), hoeffding),
        report(4, "fourth-moment identity", minutes(10), || fourth_moment(1_000_000)),
        report(5, "de Jong positive/negative pair", minutes(15), || dejong_pair(10_000)),
        report(6, "pairwise rate n^-1/2", minutes(30), || pairwise_rate(10_000)),
        report(7, "OU-Levy variances and rate", minutes(30), || ou_levy(10_000)),
        report(8, "Stein inequalities", minutes(1), stein),
        report(9, "upper-bound property", minutes(15), || upper_bound(400, 100_000)),
        report(10, "determinism across thread counts", minutes(30), determinism),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
