//! Inflation schedules `{alpha_k}` for ES-MDA.
//!
//! Every schedule satisfies `sum 1/alpha_k = 1`, which makes the multi-step
//! scheme reproduce the single-step smoother on linear-Gaussian problems.
//! Geometric schedules decrease as `alpha_{k+1} = gamma * alpha_k` and are
//! pinned either at the first factor (GEO1, from the mean singular value of
//! the dimensionless sensitivity) or at the last factor (GEO2, lengthened
//! until the first factor satisfies the discrepancy principle).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::discrepancy::{solve_alpha_star, AlphaStar, SensitivitySpectrum, DEFAULT_L_MAX, SV_CUTOFF};
use crate::{Error, Result};

/// Sum-to-one tolerance for schedules built here.
pub const SUM_TOL: f64 = 1e-9;
/// Sum-to-one tolerance for user-supplied and rounded schedules.
pub const EXPLICIT_SUM_TOL: f64 = 1e-6;

const GAMMA_REL_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleOrigin {
    Constant,
    Geo1,
    Geo2,
    Geometric,
    Explicit,
}

impl fmt::Display for ScheduleOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleOrigin::Constant => "constant",
            ScheduleOrigin::Geo1 => "geo1",
            ScheduleOrigin::Geo2 => "geo2",
            ScheduleOrigin::Geometric => "geometric",
            ScheduleOrigin::Explicit => "explicit",
        })
    }
}

impl std::str::FromStr for ScheduleOrigin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "constant" => ScheduleOrigin::Constant,
            "geo1" => ScheduleOrigin::Geo1,
            "geo2" => ScheduleOrigin::Geo2,
            "geometric" => ScheduleOrigin::Geometric,
            "explicit" => ScheduleOrigin::Explicit,
            other => {
                return Err(Error::Parse {
                    context: "schedule origin".into(),
                    reason: format!("unknown origin `{other}`"),
                })
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct InflationSchedule {
    alphas: Vec<f64>,
    gamma: f64,
    origin: ScheduleOrigin,
}

// a NaN ratio (non-geometric schedule) compares equal to itself
impl PartialEq for InflationSchedule {
    fn eq(&self, other: &Self) -> bool {
        self.alphas == other.alphas
            && self.origin == other.origin
            && (self.gamma == other.gamma || (self.gamma.is_nan() && other.gamma.is_nan()))
    }
}

fn reciprocal_sum(alphas: &[f64]) -> f64 {
    alphas.iter().map(|a| 1.0 / a).sum()
}

impl InflationSchedule {
    fn checked(alphas: Vec<f64>, gamma: f64, origin: ScheduleOrigin, tol: f64) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidSchedule("no assimilation steps".into()));
        }
        if let Some(k) = alphas.iter().position(|a| !(a.is_finite() && *a >= 1.0)) {
            return Err(Error::InvalidSchedule(format!(
                "alpha_{} = {} must be finite and >= 1",
                k + 1,
                alphas[k]
            )));
        }
        let sum = reciprocal_sum(&alphas);
        if (sum - 1.0).abs() > tol {
            return Err(Error::SumToOne { sum });
        }
        Ok(InflationSchedule { alphas, gamma, origin })
    }

    /// User-supplied factors; accepted when the sum-to-one rule holds to 1e-6.
    pub fn explicit(alphas: Vec<f64>) -> Result<Self> {
        let gamma = common_ratio(&alphas).unwrap_or(f64::NAN);
        Self::checked(alphas, gamma, ScheduleOrigin::Explicit, EXPLICIT_SUM_TOL)
    }

    /// Rebuilds a schedule read back from disk with its recorded origin.
    pub fn restore(alphas: Vec<f64>, gamma: f64, origin: ScheduleOrigin) -> Result<Self> {
        Self::checked(alphas, gamma, origin, EXPLICIT_SUM_TOL)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn n_a(&self) -> usize {
        self.alphas.len()
    }

    /// Common ratio; `NaN` for explicit schedules that are not geometric.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn origin(&self) -> ScheduleOrigin {
        self.origin
    }

    pub fn first(&self) -> f64 {
        self.alphas[0]
    }

    pub fn last(&self) -> f64 {
        *self.alphas.last().unwrap()
    }

    pub fn reciprocal_sum(&self) -> f64 {
        reciprocal_sum(&self.alphas)
    }
}

fn common_ratio(alphas: &[f64]) -> Option<f64> {
    if alphas.len() < 2 {
        return Some(1.0);
    }
    let g = alphas[1] / alphas[0];
    alphas
        .windows(2)
        .all(|w| (w[1] - g * w[0]).abs() <= 1e-9 * w[1].abs())
        .then_some(g)
}

pub fn constant_schedule(n_a: usize) -> Result<InflationSchedule> {
    if n_a == 0 {
        return Err(Error::invalid("n_a", "must be at least 1"));
    }
    InflationSchedule::checked(vec![n_a as f64; n_a], 1.0, ScheduleOrigin::Constant, SUM_TOL)
}

/// Bisection for the root of a monotone function on `(lo, hi]`, stopping at a
/// relative bracket width of 1e-12.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let f_lo_sign = f(lo).signum();
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= GAMMA_REL_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == f_lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `f1(gamma) = sum_{k=1}^{n_a} 1 / (gamma^{k-1} alpha1) - 1`.
pub fn f1(gamma: f64, alpha1: f64, n_a: usize) -> f64 {
    let inv = 1.0 / gamma;
    let mut term = 1.0 / alpha1;
    let mut sum = 0.0;
    for _ in 0..n_a {
        sum += term;
        term *= inv;
    }
    sum - 1.0
}

/// `f2(gamma) = sum_{k=1}^{n_a} 1 / (gamma^{k-n_a} alpha_last) - 1`.
pub fn f2(gamma: f64, alpha_last: f64, n_a: usize) -> f64 {
    let mut term = 1.0 / alpha_last;
    let mut sum = 0.0;
    for _ in 0..n_a {
        sum += term;
        term *= gamma;
    }
    sum - 1.0
}

/// The ratio `gamma` in `(0, 1]` making a geometric schedule that starts at
/// `alpha1` sum to one over `n_a` steps.
pub fn solve_gamma_from_first(alpha1: f64, n_a: usize) -> Result<f64> {
    if n_a == 0 {
        return Err(Error::invalid("n_a", "must be at least 1"));
    }
    if !alpha1.is_finite() {
        return Err(Error::invalid("alpha1", "must be finite"));
    }
    let at_one = f1(1.0, alpha1, n_a);
    if at_one > 0.0 {
        return Err(Error::NoGamma(format!(
            "alpha1 = {alpha1} is below n_a = {n_a}"
        )));
    }
    if at_one == 0.0 {
        return Ok(1.0);
    }
    if n_a == 1 {
        return Err(Error::NoGamma(format!("a single step needs alpha1 = 1, got {alpha1}")));
    }
    let mut lo = 0.5;
    while f1(lo, alpha1, n_a) <= 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::NoGamma(format!("no bracket for alpha1 = {alpha1}")));
        }
    }
    Ok(bisect(lo, (2.0 * lo).min(1.0), |g| f1(g, alpha1, n_a)))
}

/// The ratio `gamma` in `(0, 1]` making a geometric schedule that ends at
/// `alpha_last` sum to one over `n_a` steps.
pub fn solve_gamma_from_last(alpha_last: f64, n_a: usize) -> Result<f64> {
    if n_a == 0 {
        return Err(Error::invalid("n_a", "must be at least 1"));
    }
    if !(alpha_last >= 1.0 && alpha_last <= n_a as f64) {
        return Err(Error::NoGamma(format!(
            "alpha_last = {alpha_last} must lie in [1, n_a = {n_a}]"
        )));
    }
    let at_one = f2(1.0, alpha_last, n_a);
    if at_one == 0.0 {
        return Ok(1.0);
    }
    if alpha_last == 1.0 {
        // f2(gamma) > 0 for every gamma > 0 once n_a > 1
        return Err(Error::NoGamma(format!(
            "alpha_last = 1 leaves no room for {} earlier steps",
            n_a - 1
        )));
    }
    let mut lo = 0.5;
    while f2(lo, alpha_last, n_a) >= 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::NoGamma(format!("no bracket for alpha_last = {alpha_last}")));
        }
    }
    let mut hi = 1.0;
    while f2(hi * 0.5, alpha_last, n_a) > 0.0 && hi * 0.5 > lo {
        hi *= 0.5;
    }
    Ok(bisect(lo, hi, |g| f2(g, alpha_last, n_a)))
}

/// First geometric factor `alpha1 = max(mean(s)^2, n_a)` over the singular
/// values above `SV_CUTOFF * s_1`.
pub fn geo1_first_alpha(singular_values: &[f64], n_a: usize) -> Result<f64> {
    let s1 = singular_values.iter().copied().fold(0.0_f64, f64::max);
    if !(s1 > 0.0) {
        return Err(Error::EmptySpectrum);
    }
    let kept: Vec<f64> = singular_values
        .iter()
        .copied()
        .filter(|&s| s > SV_CUTOFF * s1)
        .collect();
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    Ok((mean * mean).max(n_a as f64))
}

/// `alpha1 * gamma^(k-1)` for `k = 1..=n_a`, without any validation.
pub fn geometric_sequence(alpha1: f64, gamma: f64, n_a: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_a);
    let mut a = alpha1;
    for _ in 0..n_a {
        out.push(a);
        a *= gamma;
    }
    out
}

/// Geometric schedule; `(alpha1, gamma)` must satisfy the sum-to-one rule to 1e-6.
pub fn build_geometric(alpha1: f64, gamma: f64, n_a: usize) -> Result<InflationSchedule> {
    build_geometric_as(alpha1, gamma, n_a, ScheduleOrigin::Geometric)
}

fn build_geometric_as(alpha1: f64, gamma: f64, n_a: usize, origin: ScheduleOrigin) -> Result<InflationSchedule> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid("gamma", format!("must lie in (0, 1], got {gamma}")));
    }
    if n_a == 0 {
        return Err(Error::invalid("n_a", "must be at least 1"));
    }
    InflationSchedule::checked(
        geometric_sequence(alpha1, gamma, n_a),
        gamma,
        origin,
        EXPLICIT_SUM_TOL,
    )
}

/// GEO1: `alpha1` from the mean singular value, then `gamma` from `alpha1`.
pub fn geo1_schedule(singular_values: &[f64], n_a: usize) -> Result<InflationSchedule> {
    let alpha1 = geo1_first_alpha(singular_values, n_a)?;
    let gamma = solve_gamma_from_first(alpha1, n_a)?;
    build_geometric_as(alpha1, gamma, n_a, ScheduleOrigin::Geo1)
}

/// Geometric schedule ending exactly at `alpha_last`.
pub fn geometric_from_last(alpha_last: f64, n_a: usize) -> Result<InflationSchedule> {
    let gamma = solve_gamma_from_last(alpha_last, n_a)?;
    let alphas: Vec<f64> = (1..=n_a)
        .map(|k| alpha_last * gamma.powi(k as i32 - n_a as i32))
        .collect();
    InflationSchedule::checked(alphas, gamma, ScheduleOrigin::Geo2, SUM_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geo2Settings {
    pub alpha_last: f64,
    pub alpha_max: f64,
    pub n_a_start: usize,
    pub l_max: usize,
    /// Hard cap on the number of assimilations.
    pub n_a_cap: usize,
}

impl Default for Geo2Settings {
    fn default() -> Self {
        Geo2Settings {
            alpha_last: 1.5,
            alpha_max: 1e5,
            n_a_start: 4,
            l_max: DEFAULT_L_MAX,
            n_a_cap: 64,
        }
    }
}

impl Geo2Settings {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_last >= 1.0) {
            return Err(Error::invalid("alpha_last", format!("must be >= 1, got {}", self.alpha_last)));
        }
        if !(self.alpha_max > self.alpha_last && self.alpha_max.is_finite()) {
            return Err(Error::invalid("alpha_max", "must be finite and exceed alpha_last"));
        }
        if self.n_a_start < 2 {
            return Err(Error::invalid("n_a_start", "must be at least 2"));
        }
        if (self.n_a_start as f64) >= self.alpha_max {
            return Err(Error::invalid("n_a_start", "must be below alpha_max"));
        }
        if self.l_max == 0 {
            return Err(Error::invalid("l_max", "must be at least 1"));
        }
        if self.n_a_cap < self.n_a_start {
            return Err(Error::invalid("n_a_cap", "must be >= n_a_start"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geo2Plan {
    pub schedule: InflationSchedule,
    pub alpha_star: AlphaStar,
}

/// GEO2: grows `N_a` from `n_a_start` until the first factor of the geometric
/// schedule ending at `alpha_last` reaches the discrepancy root `alpha*`
/// computed on `[N_a, alpha_max]`.
pub fn geo2_plan(spectrum: &SensitivitySpectrum, settings: &Geo2Settings) -> Result<Geo2Plan> {
    settings.validate()?;
    let mut last_star = None;
    for n_a in settings.n_a_start..=settings.n_a_cap {
        let candidate = geometric_from_last(settings.alpha_last, n_a)?;
        let alpha_star = solve_alpha_star(spectrum, n_a as f64, settings.alpha_max, settings.l_max)?;
        log::debug!(
            "geo2: N_a = {n_a}, alpha_1 = {:.4}, alpha* = {:.4} ({:?})",
            candidate.first(),
            alpha_star.value,
            alpha_star.outcome
        );
        if candidate.first() >= alpha_star.value {
            return Ok(Geo2Plan {
                schedule: candidate,
                alpha_star,
            });
        }
        last_star = Some(alpha_star.value);
    }
    Err(Error::AssimilationCap {
        cap: settings.n_a_cap,
        alpha_star: last_star.unwrap_or(f64::NAN),
    })
}
