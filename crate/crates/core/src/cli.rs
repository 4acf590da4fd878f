//! Batch front end: JSON run configs in, `report.json` and `table.csv` out.
//!
//! Seeds: `simulate` uses stream `i` of `seed` for replicate `i`; a rate
//! study uses `child_seed(seed, j)` for scale `j`; the Monte Carlo bound
//! terms use `child_seed(seed, 1)`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::bounds::{
    dejong_bound, finite_expansion_bound, fourth_moment_gap_kernel, fourth_moment_gap_samples,
    theorem31_terms_mc, Theorem31Options,
};
use crate::chaos::Kernel;
use crate::diagnostics::kolmogorov_distance;
use crate::error::{Error, Result};
use crate::measure_space::IntegrationSpec;
use crate::rng::child_seed;
use crate::scenarios::{
    build_dejong_cosine, build_ou_levy, build_pairwise, ou_levy_bound, run_rate_study, LevyNu, OuStatistic, Scenario,
};
use crate::stein::{derivative, stein_residual, stein_solution, sup_bound, SteinFunction};

pub const KNOWN_SCENARIOS: [&str; 3] = ["dejong-cosine", "pairwise", "ou-levy"];
const COMMANDS: [&str; 4] = ["bound", "simulate", "rate-study", "stein-check"];
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const THREADS_ENV: &str = "POISSON_STEIN_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Bound,
    Simulate,
    RateStudy,
    SteinCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateStudySpec {
    /// Scenario parameter that is varied (`n` or `T`).
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SteinCheckSpec {
    pub w_min: f64,
    pub w_max: f64,
    pub step: f64,
    pub x: Vec<f64>,
}

impl Default for SteinCheckSpec {
    fn default() -> Self {
        Self {
            w_min: -8.0,
            w_max: 8.0,
            step: 1e-3,
            x: vec![-2.0, -0.5, 0.0, 0.5, 2.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem31Spec {
    pub reps: usize,
    #[serde(default = "default_z_samples")]
    pub z_samples: usize,
    #[serde(default)]
    pub x_grid: Vec<f64>,
}

fn default_z_samples() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default)]
    pub integration: IntegrationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_study: Option<RateStudySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stein: Option<SteinCheckSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem31: Option<Theorem31Spec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based line of the offending field in the config file, when known.
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// First line mentioning `"key"`.
fn locate(src: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    src.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

fn violation(src: &str, field: &str, message: String) -> Violation {
    Violation {
        line: locate(src, field.rsplit('.').next().unwrap_or(field)),
        field: field.into(),
        message,
    }
}

fn param(params: &Map<String, Value>, key: &str) -> Option<f64> {
    params.get(key).and_then(Value::as_f64)
}

/// Range checks on scenario parameters; `varied` is exempt from presence
/// checks (a rate study supplies it).
fn scenario_violations(spec: &ScenarioSpec, varied: Option<&str>, src: &str, out: &mut Vec<Violation>) {
    let mut bad = |field: &str, message: String| {
        out.push(Violation {
            line: locate(src, field).or_else(|| locate(src, "params")),
            field: format!("scenario.params.{field}"),
            message,
        })
    };
    let p = &spec.params;
    let need = |key: &str| varied != Some(key);
    let check = |key: &str, ok: &dyn Fn(f64) -> bool, what: &str, required: bool, bad: &mut dyn FnMut(&str, String)| {
        match p.get(key) {
            None if required => bad(key, format!("missing; {what}")),
            None => {}
            Some(v) => match v.as_f64() {
                Some(x) if ok(x) => {}
                _ => bad(key, format!("got {v}; {what}")),
            },
        }
    };
    match spec.name.as_str() {
        "dejong-cosine" => {
            check("n", &|x| x >= 1.0, "intensity n must be >= 1", need("n"), &mut bad);
            check("m", &|x| x >= 1.0 && x.fract() == 0.0, "m must be a positive integer", false, &mut bad);
        }
        "pairwise" => {
            check("n", &|x| x > 0.0, "intensity n must be positive", need("n"), &mut bad);
            check("r", &|x| x > 0.0 && x < 0.25, "radius r must lie in (0, 1/4)", true, &mut bad);
            check("d", &|x| x == 1.0 || x == 2.0, "dimension d must be 1 or 2", true, &mut bad);
        }
        "ou-levy" => {
            check("lambda", &|x| x > 0.0, "lambda must be positive", false, &mut bad);
            check("T", &|x| x > 0.0, "horizon T must be positive", need("T"), &mut bad);
            check("h", &|x| x >= 0.0, "lag h must be nonnegative", false, &mut bad);
            check(
                "truncation_tol",
                &|x| x > 0.0 && x < 1.0,
                "truncation_tol must lie in (0, 1)",
                false,
                &mut bad,
            );
            match p.get("statistic").map(|v| v.as_str()) {
                None | Some(Some("M" | "S" | "V")) => {}
                _ => bad("statistic", "must be one of \"M\", \"S\", \"V\"".into()),
            }
        }
        _ => {}
    }
}

/// Schema check of a config source; an empty list means the config is valid.
pub fn validate_source(src: &str) -> Vec<Violation> {
    let mut out = Vec::new();
    macro_rules! flag {
        ($field:expr, $msg:expr $(,)?) => {
            out.push(violation(src, $field, $msg))
        };
    }
    let raw: Value = match serde_json::from_str(src) {
        Ok(v) => v,
        Err(e) => {
            out.push(Violation {
                line: Some(e.line()),
                field: "<json>".into(),
                message: e.to_string(),
            });
            return out;
        }
    };
    let Some(obj) = raw.as_object() else {
        flag!("<root>", "config must be a JSON object".into());
        return out;
    };
    if let Some(r) = obj.get("reps") {
        if r.as_u64().is_none_or(|r| r == 0) {
            flag!("reps", format!("must be a positive integer, got {r}"));
        }
    }
    match obj.get("command") {
        Some(Value::String(c)) if COMMANDS.contains(&c.as_str()) => {}
        Some(c) => flag!("command", format!("unknown command {c}; known commands: {}", COMMANDS.join(", "))),
        None => flag!("command", format!("missing; one of {}", COMMANDS.join(", "))),
    }
    if !obj.contains_key("seed") {
        flag!("seed", "missing; every run needs an explicit seed".into());
    }
    if let Some(name) = obj.get("scenario").and_then(|s| s.get("name")).and_then(Value::as_str) {
        if !KNOWN_SCENARIOS.contains(&name) {
            flag!(
                "scenario.name",
                format!("unknown scenario \"{name}\"; known scenarios: {}", KNOWN_SCENARIOS.join(", ")),
            );
        }
    }
    let cfg: RunConfig = match serde_json::from_value(raw.clone()) {
        Ok(c) => c,
        Err(e) => {
            if out.is_empty() {
                let msg = e.to_string();
                let field = ["command", "seed", "reps", "scenario", "integration", "rate_study", "stein", "theorem31", "output"]
                    .into_iter()
                    .find(|k| msg.contains(&format!("`{k}`")))
                    .unwrap_or("<root>");
                flag!(field, msg);
            }
            return out;
        }
    };
    if let Err(e) = cfg.integration.validate() {
        flag!("integration", e.to_string());
    }
    let needs_scenario = cfg.command != Command::SteinCheck;
    match (&cfg.scenario, needs_scenario) {
        (None, true) => flag!("scenario", "missing; this command needs a scenario".into()),
        (Some(s), _) if KNOWN_SCENARIOS.contains(&s.name.as_str()) => {
            let varied = cfg.rate_study.as_ref().map(|r| r.parameter.as_str());
            scenario_violations(s, varied, src, &mut out);
        }
        _ => {}
    }
    match cfg.command {
        Command::Simulate if cfg.reps.is_none() => flag!("reps", "missing; simulate needs reps".into()),
        Command::RateStudy => {
            match cfg.reps {
                None => flag!("reps", "missing; a rate study needs reps".into()),
                Some(r) if r < 1000 => flag!("reps", format!("a rate study needs at least 1000, got {r}")),
                _ => {}
            }
            match &cfg.rate_study {
                None => flag!("rate_study", "missing; rate-study needs {parameter, values}".into()),
                Some(rs) => {
                    if rs.values.len() < 3 {
                        flag!("rate_study.values", "needs at least 3 values".into());
                    } else if rs.values.windows(2).any(|w| !(w[1] > w[0])) || rs.values[0] <= 0.0 {
                        flag!("rate_study.values", "values must be positive and strictly increasing".into());
                    }
                    let allowed: &[&str] = match cfg.scenario.as_ref().map(|s| s.name.as_str()) {
                        Some("ou-levy") => &["T"],
                        _ => &["n"],
                    };
                    if !allowed.contains(&rs.parameter.as_str()) {
                        flag!(
                            "rate_study.parameter",
                            format!("cannot vary \"{}\"; allowed: {}", rs.parameter, allowed.join(", ")),
                        );
                    }
                }
            }
        }
        Command::SteinCheck => {
            let s = cfg.stein.clone().unwrap_or_default();
            if !(s.step > 0.0 && s.w_max > s.w_min && s.w_min.is_finite() && s.w_max.is_finite()) || s.x.is_empty() {
                flag!("stein", "needs w_min < w_max, step > 0 and at least one x".into());
            }
        }
        _ => {}
    }
    if let Some(t) = &cfg.theorem31 {
        if t.reps < 2 || t.z_samples < 2 {
            flag!("theorem31", "reps and z_samples must be at least 2".into());
        }
    }
    out
}

/// Reads and checks a config file.
pub fn validate(path: &Path) -> Result<Vec<Violation>> {
    Ok(validate_source(&fs::read_to_string(path)?))
}

fn violations_error(v: &[Violation]) -> Error {
    let lines: Vec<String> = v.iter().map(|v| v.to_string()).collect();
    Error::InvalidArgument(lines.join("\n"))
}

/// Parses and validates a config source.
pub fn parse_config(src: &str) -> Result<RunConfig> {
    let v = validate_source(src);
    if !v.is_empty() {
        return Err(violations_error(&v));
    }
    Ok(serde_json::from_str(src)?)
}

struct OuParams {
    lambda: f64,
    horizon: f64,
    tol: f64,
    lag: f64,
    stat: OuStatistic,
}

fn ou_params(p: &Map<String, Value>) -> Result<OuParams> {
    Ok(OuParams {
        lambda: param(p, "lambda").unwrap_or(1.0),
        horizon: param(p, "T").ok_or_else(|| Error::InvalidArgument("scenario parameter T is missing".into()))?,
        tol: param(p, "truncation_tol").unwrap_or(1e-8),
        lag: param(p, "h").unwrap_or(0.0),
        stat: match p.get("statistic").and_then(Value::as_str).unwrap_or("M") {
            "S" => OuStatistic::S,
            "V" => OuStatistic::V,
            _ => OuStatistic::M,
        },
    })
}

/// Builds the named scenario from its parameters.
pub fn build_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    let p = &spec.params;
    let missing = |k: &str| Error::InvalidArgument(format!("scenario parameter {k} is missing"));
    match spec.name.as_str() {
        "dejong-cosine" => {
            let n = param(p, "n").ok_or_else(|| missing("n"))?;
            let m = match param(p, "m") {
                Some(m) => m as usize,
                None => n.sqrt().ceil() as usize,
            };
            build_dejong_cosine(n, m)
        }
        "pairwise" => build_pairwise(
            param(p, "n").ok_or_else(|| missing("n"))?,
            param(p, "r").ok_or_else(|| missing("r"))?,
            param(p, "d").ok_or_else(|| missing("d"))? as usize,
        ),
        "ou-levy" => {
            let o = ou_params(p)?;
            let set = build_ou_levy(o.lambda, o.horizon, &LevyNu::default(), o.tol, o.lag)?;
            Ok(match o.stat {
                OuStatistic::S => set.s_t,
                OuStatistic::V => set.v_t,
                OuStatistic::M => set.m_t,
            })
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown scenario \"{other}\"; known scenarios: {}",
            KNOWN_SCENARIOS.join(", ")
        ))),
    }
}

/// What a run produced, before anything is written.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    /// Report without the timestamp.
    pub report: Value,
    pub table: Option<String>,
}

fn bound_report(cfg: &RunConfig, sc: &Scenario) -> Result<Value> {
    let spec = &cfg.integration;
    let expansion = sc
        .expansion
        .as_ref()
        .ok_or_else(|| Error::MethodUnsupported(format!("{} has no chaos expansion", sc.label)))?;
    let mut report = match cfg.scenario.as_ref() {
        Some(s) if s.name == "dejong-cosine" => {
            let m = sc.params["m"].as_u64().unwrap_or(1) as usize;
            let h = Kernel::cosine_family(m)?;
            let mut r = dejong_bound(&h, &sc.control, spec)?;
            let gap = fourth_moment_gap_kernel(&expansion.terms()[0].kernel, &sc.control, spec)?;
            r.extras.insert("fourth_moment".into(), gap.fourth_moment);
            r.extras.insert("fourth_moment_gap".into(), gap.gap);
            r
        }
        // product-form kernels: exact time integrals instead of the generic route
        Some(s) if s.name == "ou-levy" => {
            let o = ou_params(&s.params)?;
            ou_levy_bound(o.lambda, o.horizon, &LevyNu::default(), o.tol, o.lag, o.stat)?
        }
        _ => finite_expansion_bound(expansion, &sc.control, spec)?,
    };
    if let Some(t) = &cfg.theorem31 {
        let opts = Theorem31Options {
            z_samples: t.z_samples,
            integration: spec.clone(),
        };
        report.term_estimates = Some(theorem31_terms_mc(
            expansion,
            &sc.control,
            t.reps,
            child_seed(cfg.seed, 1),
            &t.x_grid,
            &opts,
        )?);
    }
    Ok(report.to_json())
}

fn stein_table(s: &SteinCheckSpec) -> (String, Value) {
    let mut csv = String::from("w,x,f,fprime,residual,margin_upper,margin_deriv\n");
    let steps = ((s.w_max - s.w_min) / s.step).round() as usize;
    let (mut min_f, mut min_upper, mut min_deriv, mut max_res) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, 0f64);
    for &x in &s.x {
        let sf = SteinFunction::new(x);
        for k in 0..=steps {
            let w = s.w_min + k as f64 * s.step;
            let f = stein_solution(sf, w);
            let fp = derivative(sf, w);
            let res = stein_residual(sf, w);
            let upper = sup_bound() - f;
            let deriv = 1.0 - fp.abs();
            min_f = min_f.min(f);
            min_upper = min_upper.min(upper);
            min_deriv = min_deriv.min(deriv);
            max_res = max_res.max(res.abs());
            let _ = writeln!(csv, "{w:?},{x:?},{f:?},{fp:?},{res:?},{upper:?},{deriv:?}");
        }
    }
    let summary = json!({
        "min_f": min_f,
        "min_margin_upper": min_upper,
        "min_margin_deriv": min_deriv,
        "max_abs_residual": max_res,
        "rows": s.x.len() * (steps + 1),
    });
    (csv, summary)
}

/// Runs a validated config without touching the filesystem.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    let mut report = Map::new();
    report.insert("version".into(), json!(crate::VERSION));
    report.insert("config".into(), serde_json::to_value(cfg)?);
    report.insert("seed".into(), json!(cfg.seed));
    let mut table = None;
    match cfg.command {
        Command::SteinCheck => {
            let (csv, summary) = stein_table(&cfg.stein.clone().unwrap_or_default());
            report.insert("stein".into(), summary);
            table = Some(csv);
        }
        Command::Bound => {
            let spec = cfg.scenario.as_ref().ok_or_else(|| Error::InvalidArgument("scenario missing".into()))?;
            let sc = build_scenario(spec)?;
            report.insert("scenario".into(), sc.params.clone());
            report.insert("normalization".into(), serde_json::to_value(sc.normalization)?);
            if let Value::Object(b) = bound_report(cfg, &sc)? {
                report.extend(b);
            }
        }
        Command::Simulate => {
            let spec = cfg.scenario.as_ref().ok_or_else(|| Error::InvalidArgument("scenario missing".into()))?;
            let sc = build_scenario(spec)?;
            let reps = cfg.reps.unwrap_or(0);
            let s = sc.simulate(reps, cfg.seed)?;
            let kd = kolmogorov_distance(&s)?;
            let fm = fourth_moment_gap_samples(&s, false)?;
            report.insert("scenario".into(), sc.params.clone());
            report.insert("normalization".into(), serde_json::to_value(sc.normalization)?);
            report.insert("reps".into(), json!(reps));
            report.insert("seed_provenance".into(), json!(s.seed_provenance));
            report.insert("mean".into(), json!(s.mean()));
            report.insert("variance".into(), json!(s.variance()));
            report.insert("variance_stderr".into(), json!(s.variance_stderr()));
            report.insert("kolmogorov".into(), serde_json::to_value(kd)?);
            report.insert("fourth_moment".into(), serde_json::to_value(fm)?);
            let mut csv = String::from("replicate,value\n");
            for (i, v) in s.values.iter().enumerate() {
                let _ = writeln!(csv, "{i},{v}");
            }
            table = Some(csv);
        }
        Command::RateStudy => {
            let spec = cfg.scenario.clone().ok_or_else(|| Error::InvalidArgument("scenario missing".into()))?;
            let rs = cfg
                .rate_study
                .clone()
                .ok_or_else(|| Error::InvalidArgument("rate_study missing".into()))?;
            let builder = |v: f64| {
                let mut s = spec.clone();
                s.params.insert(rs.parameter.clone(), json!(v));
                build_scenario(&s)
            };
            let study = run_rate_study(&builder, &rs.values, cfg.reps.unwrap_or(0), cfg.seed)?;
            let seeds: Vec<u64> = (0..rs.values.len()).map(|j| child_seed(cfg.seed, j as u64)).collect();
            report.insert("scenario".into(), serde_json::to_value(&spec)?);
            report.insert("rate_table".into(), serde_json::to_value(&study.table)?);
            report.insert("distances".into(), serde_json::to_value(&study.distances)?);
            report.insert("scale_seeds".into(), json!(seeds));
            table = Some(study.table.to_csv());
        }
    }
    Ok(RunOutput {
        report: Value::Object(report),
        table,
    })
}

/// Runs a config and writes `report.json` (plus `table.csv` when there is a
/// table) into `dir`.
pub fn run(cfg: &RunConfig, dir: &Path) -> Result<RunOutput> {
    let out = execute(cfg)?;
    fs::create_dir_all(dir)?;
    let mut report = out.report.clone();
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    if let Value::Object(m) = &mut report {
        m.insert("timestamp".into(), json!(stamp));
    }
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    if let Some(t) = &out.table {
        fs::write(dir.join("table.csv"), t)?;
    }
    Ok(out)
}

/// Exit status for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Json(_) | Error::Io(_) | Error::Index(_) | Error::MethodUnsupported(_) => {
            EXIT_VALIDATION
        }
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "poisson-stein", version, about = "Normal approximation bounds and Monte Carlo checks for Poisson functionals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Run a config and write report.json / table.csv.
    Run(RunArgs),
    /// Check a config against the schema without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir` in the config.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads; falls back to POISSON_STEIN_THREADS.
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn run_command(args: &RunArgs) -> Result<PathBuf> {
    let src = fs::read_to_string(&args.config)?;
    let mut cfg = parse_config(&src)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let dir = args
        .output
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    cfg.output = Some(OutputSpec { dir: dir.clone() });
    run(&cfg, &dir)?;
    Ok(dir)
}

/// Entry point shared by the binary and tests; returns the exit status.
pub fn main_with(cli: Cli) -> i32 {
    match cli.command {
        CliCommand::Validate { config } => match validate(&config) {
            Ok(v) if v.is_empty() => {
                println!("ok");
                EXIT_OK
            }
            Ok(v) => {
                for x in v {
                    eprintln!("{}: {x}", config.display());
                }
                EXIT_VALIDATION
            }
            Err(e) => {
                eprintln!("{}: {e}", config.display());
                EXIT_VALIDATION
            }
        },
        CliCommand::Run(args) => {
            if let Some(k) = args.threads {
                if k == 0 {
                    eprintln!("--threads must be at least 1");
                    return EXIT_VALIDATION;
                }
                // fails only if a global pool already exists, which keeps its size
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            match run_command(&args) {
                Ok(dir) => {
                    println!("wrote {}", dir.join("report.json").display());
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("{}: {e}", args.config.display());
                    exit_code(&e)
                }
            }
        }
    }
}
