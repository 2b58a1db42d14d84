//! Cohort statistics: paired differences, t-tests and Pearson correlation.
//!
//! The Student-t distribution function is evaluated through the regularized
//! incomplete beta function (continued fraction, modified Lentz), targeting
//! 1e-10 absolute accuracy on p values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("too few samples: {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("incomplete beta continued fraction failed to converge")]
    NoConvergence,
}

/// Values of two measurements aligned by subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSamples {
    pub labels: Vec<String>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl PairedSamples {
    pub fn new(labels: Vec<String>, a: Vec<f64>, b: Vec<f64>) -> Result<Self, StatsError> {
        if a.len() != b.len() {
            return Err(StatsError::LengthMismatch(a.len(), b.len()));
        }
        if labels.len() != a.len() {
            return Err(StatsError::LengthMismatch(labels.len(), a.len()));
        }
        if a.len() < 2 {
            return Err(StatsError::TooFewSamples { got: a.len(), need: 2 });
        }
        check_finite(&a)?;
        check_finite(&b)?;
        Ok(Self { labels, a, b })
    }

    /// Unlabelled pairs; labels become the positional index.
    pub fn unlabeled(a: Vec<f64>, b: Vec<f64>) -> Result<Self, StatsError> {
        let labels = (0..a.len()).map(|i| i.to_string()).collect();
        Self::new(labels, a, b)
    }

    fn diffs(&self) -> impl Iterator<Item = f64> + '_ {
        self.a.iter().zip(&self.b).map(|(a, b)| a - b)
    }
}

fn check_finite(v: &[f64]) -> Result<(), StatsError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(StatsError::NonFinite(i)),
        None => Ok(()),
    }
}

/// `sqrt(mean((a − b)²))`.
pub fn rms_difference(p: &PairedSamples) -> Result<f64, StatsError> {
    let n = p.a.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples { got: n, need: 2 });
    }
    Ok((p.diffs().map(|d| d * d).sum::<f64>() / n as f64).sqrt())
}

/// `mean(a − b)`.
pub fn mean_difference(p: &PairedSamples) -> Result<f64, StatsError> {
    let n = p.a.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples { got: n, need: 2 });
    }
    Ok(p.diffs().sum::<f64>() / n as f64)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMode {
    Paired,
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    pub df: f64,
}

impl TTest {
    fn degenerate(df: f64) -> Self {
        Self { t: 0.0, p: 1.0, df }
    }
}

/// Two-sided t-test. Identical groups (zero spread, zero mean difference)
/// report `t = 0, p = 1`; zero spread with a nonzero difference is an error.
pub fn t_test(x: &[f64], y: &[f64], mode: TestMode) -> Result<TTest, StatsError> {
    for v in [x, y] {
        if v.len() < 2 {
            return Err(StatsError::TooFewSamples { got: v.len(), need: 2 });
        }
        check_finite(v)?;
    }
    match mode {
        TestMode::Paired => {
            if x.len() != y.len() {
                return Err(StatsError::LengthMismatch(x.len(), y.len()));
            }
            let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            let n = d.len() as f64;
            let df = n - 1.0;
            let md = mean(&d);
            let var = variance(&d);
            if var == 0.0 {
                return if md == 0.0 {
                    Ok(TTest::degenerate(df))
                } else {
                    Err(StatsError::ZeroVariance)
                };
            }
            let t = md / (var / n).sqrt();
            Ok(TTest {
                t,
                p: two_sided_p(t, df)?,
                df,
            })
        }
        TestMode::Welch => {
            let (nx, ny) = (x.len() as f64, y.len() as f64);
            let (sx, sy) = (variance(x) / nx, variance(y) / ny);
            let diff = mean(x) - mean(y);
            let se2 = sx + sy;
            if se2 == 0.0 {
                let df = nx + ny - 2.0;
                return if diff == 0.0 {
                    Ok(TTest::degenerate(df))
                } else {
                    Err(StatsError::ZeroVariance)
                };
            }
            let df = se2 * se2 / (sx * sx / (nx - 1.0) + sy * sy / (ny - 1.0));
            let t = diff / se2.sqrt();
            Ok(TTest {
                t,
                p: two_sided_p(t, df)?,
                df,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided, from `t = r·sqrt((n−2)/(1−r²))` with n−2 degrees of freedom.
    pub p: f64,
    pub n: usize,
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewSamples { got: n, need: 3 });
    }
    check_finite(x)?;
    check_finite(y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else if n == 3 && r == 0.0 {
        1.0
    } else {
        two_sided_p(r * (df / (1.0 - r * r)).sqrt(), df)?
    };
    Ok(Correlation { r, p, n })
}

/// Two-sided tail probability `P(|T| ≥ |t|)` for Student's t with `df`
/// degrees of freedom.
pub fn two_sided_p(t: f64, df: f64) -> Result<f64, StatsError> {
    if t.is_infinite() {
        return Ok(0.0);
    }
    let x = df / (df + t * t);
    Ok(reg_inc_beta(0.5 * df, 0.5, x)?.clamp(0.0, 1.0))
}

/// Student-t cumulative distribution function.
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64, StatsError> {
    let tail = 0.5 * two_sided_p(t, df)?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> Result<f64, StatsError> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x >= 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(ln_front.exp() * beta_cf(a, b, x)? / a)
    } else {
        Ok(1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x)? / b)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64, StatsError> {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(StatsError::NoConvergence)
}

/// Linear-interpolated quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn five_number(values: &[f64]) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Some(FiveNumber {
        min: s[0],
        q1: quantile_sorted(&s, 0.25),
        median: quantile_sorted(&s, 0.5),
        q3: quantile_sorted(&s, 0.75),
        max: s[s.len() - 1],
    })
}

/// Cohort-level results. Tests that could not run carry the reason instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    /// RMS of resting SpO₂ differences (ear − finger).
    pub rmsd: Option<f64>,
    /// Mean resting SpO₂ difference, ear − finger (positive: ear higher).
    pub mean_diff: Option<f64>,
    /// Welch test of relative delay, male vs female.
    pub sex_welch: Result<TTest, String>,
    /// Paired test of the same groups when their sizes match.
    pub sex_paired: Option<Result<TTest, String>>,
    /// Age vs mean relative delay.
    pub age_correlation: Result<Correlation, String>,
    pub group_means: Vec<GroupMean>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub group: String,
    pub n: usize,
    pub mean_relative_s: f64,
}
