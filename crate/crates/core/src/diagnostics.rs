//! Standard normal CDF, empirical Kolmogorov distance with a DKW band, and
//! log-log rate regression.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard deviation of the Kolmogorov limit law; `KOLMOGOROV_SD / sqrt N`
/// is the null standard error of an empirical distance.
pub const KOLMOGOROV_SD: f64 = 0.2603;

/// `Phi(x)` via erfc, accurate to about 1e-16 relative in the bulk.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub seed_provenance: String,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, seed_provenance: impl Into<String>) -> Self {
        Self {
            values,
            seed_provenance: seed_provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let n = self.values.len() as f64;
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
    }

    /// Standard error of the sample variance, from the fourth central moment.
    pub fn variance_stderr(&self) -> f64 {
        let m = self.mean();
        let n = self.values.len() as f64;
        let m2 = self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        let m4 = self.values.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
        ((m4 - m2 * m2) / n).max(0.0).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovDistance {
    pub distance: f64,
    /// Half-width of the 99% DKW band, `sqrt(ln(200) / (2N))`.
    pub dkw_band: f64,
    /// Where the supremum is attained.
    pub argmax: f64,
}

pub fn dkw_band(n: usize) -> f64 {
    ((2.0f64 / 0.01).ln() / (2.0 * n as f64)).sqrt()
}

/// `sup_x |F_N(x) - Phi(x)|` over the empirical jump points.
pub fn kolmogorov_distance(samples: &SampleSet) -> Result<KolmogorovDistance> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if samples.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalDomain("sample contains a non-finite value".into()));
    }
    let mut v = samples.values.clone();
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut best = (0.0, v[0]);
    for (i, &x) in v.iter().enumerate() {
        let phi = normal_cdf(x);
        let d = ((i + 1) as f64 / n - phi).max(phi - i as f64 / n);
        if d > best.0 {
            best = (d, x);
        }
    }
    Ok(KolmogorovDistance {
        distance: best.0.clamp(0.0, 1.0),
        dkw_band: dkw_band(v.len()),
        argmax: best.1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub scale: f64,
    pub distance: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    pub slope: f64,
    pub slope_stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slope {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

/// Least-squares slope of `log(distance)` on `log(scale)`.
pub fn rate_slope(rows: &[RateRow]) -> Result<Slope> {
    if rows.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "rate regression needs at least 3 rows, got {}",
            rows.len()
        )));
    }
    if rows.iter().any(|r| !(r.scale > 0.0 && r.distance > 0.0)) {
        return Err(Error::Domain("rate regression needs positive scales and values".into()));
    }
    if rows.windows(2).any(|w| w[1].scale <= w[0].scale) {
        return Err(Error::InvalidArgument("scales must be strictly increasing".into()));
    }
    let k = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|r| r.scale.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.distance.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(Slope {
        slope,
        stderr: (ssr / (k - 2.0) / sxx).sqrt(),
        intercept,
    })
}

impl RateTable {
    pub fn new(rows: Vec<RateRow>) -> Result<Self> {
        let s = rate_slope(&rows)?;
        Ok(Self {
            rows,
            slope: s.slope,
            slope_stderr: s.stderr,
        })
    }

    /// `scale,distance,stderr` rows plus a `# slope=<v> stderr=<v>` trailer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale,distance,stderr\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.scale, r.distance, r.stderr);
        }
        let _ = writeln!(out, "# slope={} stderr={}", self.slope, self.slope_stderr);
        out
    }
}
