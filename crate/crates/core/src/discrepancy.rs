//! Discrepancy-principle machinery for choosing the first inflation factor.
//!
//! The prior ensemble defines a dimensionless sensitivity `A = Ce^{-1/2} dD0`
//! and a whitened innovation `y = Ce^{-1/2} (d_obs - mean g(m0))`. With the
//! thin SVD `A = U S V^T` and projections `p_i = u_i^T y`, the Tikhonov
//! residual gives the discrepancy function
//!
//! ```text
//! h(a) = sum_i (a / (s_i^2 + a) * p_i)^2 - tau^2 * N_d
//! ```
//!
//! which is strictly increasing in `a` whenever some `p_i != 0`. The part of
//! `y` outside the column space of `A` is left out by default; it can be
//! restored with [`SensitivitySpectrum::with_null_space_term`].

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Singular values are kept while `s_i > SV_CUTOFF * s_1`.
pub const SV_CUTOFF: f64 = 1e-10;

/// Absolute step size at which the Newton iteration stops.
pub const NEWTON_STEP_TOL: f64 = 1e-3;

pub const DEFAULT_L_MAX: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySpectrum {
    singular_values: Vec<f64>,
    projections: Vec<f64>,
    n_d: usize,
    tau: f64,
    /// `||y||^2 - sum p_i^2`, the energy of `y` outside the range of `A`.
    null_space_energy: f64,
    use_null_space: bool,
}

impl SensitivitySpectrum {
    /// Builds a spectrum from already computed factors, e.g. a stored fixture.
    pub fn new(singular_values: Vec<f64>, projections: Vec<f64>, n_d: usize, tau: f64) -> Result<Self> {
        if singular_values.len() != projections.len() {
            return Err(Error::DimensionMismatch {
                context: "spectrum projections",
                expected: singular_values.len(),
                actual: projections.len(),
            });
        }
        if singular_values.iter().chain(&projections).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectrum"));
        }
        if singular_values.iter().any(|&s| s <= 0.0) {
            return Err(Error::invalid("singular_values", "must be strictly positive"));
        }
        if singular_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid("singular_values", "must be sorted in descending order"));
        }
        if !(tau >= 1.0 && tau.is_finite()) {
            return Err(Error::invalid("tau", format!("must be >= 1, got {tau}")));
        }
        if singular_values.len() > n_d {
            return Err(Error::invalid("n_d", "fewer data than singular values"));
        }
        Ok(SensitivitySpectrum {
            singular_values,
            projections,
            n_d,
            tau,
            null_space_energy: 0.0,
            use_null_space: false,
        })
    }

    /// Includes `||U0^T y||^2` in [`h`]; `energy` may be supplied for fixtures.
    pub fn with_null_space_term(mut self, energy: Option<f64>) -> Self {
        if let Some(e) = energy {
            self.null_space_energy = e.max(0.0);
        }
        self.use_null_space = true;
        self
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn projections(&self) -> &[f64] {
        &self.projections
    }

    pub fn n_d(&self) -> usize {
        self.n_d
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    pub fn null_space_energy(&self) -> f64 {
        self.null_space_energy
    }

    pub fn uses_null_space_term(&self) -> bool {
        self.use_null_space
    }

    /// `(tau * eta)^2` with `eta = sqrt(N_d)` for whitened data.
    pub fn noise_level_sq(&self) -> f64 {
        self.tau * self.tau * self.n_d as f64
    }
}

pub fn whitened_sensitivity(dd0: &DMatrix<f64>, ce_diag: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_variances(ce_diag)?;
    if dd0.nrows() != ce_diag.len() {
        return Err(Error::DimensionMismatch {
            context: "whitened_sensitivity rows",
            expected: ce_diag.len(),
            actual: dd0.nrows(),
        });
    }
    let mut a = dd0.clone();
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row /= ce_diag[i].sqrt();
    }
    Ok(a)
}

pub fn whitened_innovation(
    d_obs: &DVector<f64>,
    mean_pred: &DVector<f64>,
    ce_diag: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_variances(ce_diag)?;
    for (len, what) in [(mean_pred.len(), "mean prediction"), (ce_diag.len(), "variances")] {
        if len != d_obs.len() {
            return Err(Error::DimensionMismatch {
                context: if what == "variances" {
                    "whitened_innovation variances"
                } else {
                    "whitened_innovation prediction"
                },
                expected: d_obs.len(),
                actual: len,
            });
        }
    }
    Ok(DVector::from_fn(d_obs.len(), |i, _| {
        (d_obs[i] - mean_pred[i]) / ce_diag[i].sqrt()
    }))
}

pub(crate) fn check_variances(ce_diag: &DVector<f64>) -> Result<()> {
    if let Some(i) = ce_diag.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::invalid(
            "data-error variance",
            format!("entry {i} is {}, must be > 0", ce_diag[i]),
        ));
    }
    Ok(())
}

/// Thin SVD of `a` truncated at `SV_CUTOFF * s_1`, with projections of `y`
/// on the retained left singular vectors.
pub fn spectrum(a: &DMatrix<f64>, y: &DVector<f64>, tau: f64) -> Result<SensitivitySpectrum> {
    if a.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "spectrum rows",
            expected: y.len(),
            actual: a.nrows(),
        });
    }
    let n_d = y.len();
    let svd = a.clone().try_svd(true, false, f64::EPSILON, 0).ok_or(Error::Svd)?;
    let u = svd.u.as_ref().ok_or(Error::Svd)?;
    let mut pairs: Vec<(f64, f64)> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, u.column(i).dot(y)))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let s1 = pairs.first().map(|p| p.0).unwrap_or(0.0);
    pairs.retain(|p| s1 > 0.0 && p.0 > SV_CUTOFF * s1);

    let (sv, proj): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let captured: f64 = proj.iter().map(|p| p * p).sum();
    let mut s = SensitivitySpectrum::new(sv, proj, n_d, tau)?;
    s.null_space_energy = (y.norm_squared() - captured).max(0.0);
    Ok(s)
}

/// Discrepancy function `h(alpha)`.
pub fn h(alpha: f64, s: &SensitivitySpectrum) -> f64 {
    let mut acc = 0.0;
    for (&sig, &p) in s.singular_values.iter().zip(&s.projections) {
        let f = alpha / (sig * sig + alpha) * p;
        acc += f * f;
    }
    if s.use_null_space {
        acc += s.null_space_energy;
    }
    acc - s.noise_level_sq()
}

pub fn h_prime(alpha: f64, s: &SensitivitySpectrum) -> f64 {
    s.singular_values
        .iter()
        .zip(&s.projections)
        .map(|(&sig, &p)| {
            let s2 = sig * sig;
            2.0 * alpha * s2 / (s2 + alpha).powi(3) * p * p
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveOutcome {
    /// `h(alpha_min) >= 0`: the discrepancy principle already holds at the floor.
    EarlyExit,
    /// Newton step fell below the tolerance.
    Converged,
    /// A Newton iterate reached `alpha_max` and `h(alpha_max) < 0`.
    ClampedMax,
    /// `h' = 0` at an iterate, so the principle cannot bind; returns `alpha_min`.
    Stalled,
    /// No singular values survived truncation; returns `alpha_min`.
    EmptySpectrum,
    /// `l_max` iterations without meeting the tolerance.
    IterationCap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaStar {
    pub value: f64,
    pub outcome: SolveOutcome,
    pub iterations: usize,
}

/// Safeguarded Newton-Raphson for `h(alpha) = 0` on `[alpha_min, alpha_max]`,
/// started from the midpoint of the interval.
pub fn solve_alpha_star(
    s: &SensitivitySpectrum,
    alpha_min: f64,
    alpha_max: f64,
    l_max: usize,
) -> Result<AlphaStar> {
    if !(alpha_min > 0.0 && alpha_min < alpha_max && alpha_max.is_finite()) {
        return Err(Error::invalid(
            "alpha bounds",
            format!("need 0 < alpha_min < alpha_max, got [{alpha_min}, {alpha_max}]"),
        ));
    }
    if l_max == 0 {
        return Err(Error::invalid("l_max", "must be at least 1"));
    }
    let done = |value, outcome, iterations| Ok(AlphaStar { value, outcome, iterations });

    if s.is_empty() && !s.use_null_space {
        log::warn!("empty sensitivity spectrum; the discrepancy principle cannot bind");
        return done(alpha_min, SolveOutcome::EmptySpectrum, 0);
    }
    if h(alpha_min, s) >= 0.0 {
        return done(alpha_min, SolveOutcome::EarlyExit, 0);
    }
    // h(lo) < 0 <= h(hi) once hi is confirmed; Newton steps leaving the
    // bracket are replaced by bisection.
    let (mut lo, mut hi) = (alpha_min, alpha_max);
    let mut a = 0.5 * (alpha_min + alpha_max);
    for l in 1..=l_max {
        let hv = h(a, s);
        let hp = h_prime(a, s);
        if !(hp > 0.0) || !hp.is_finite() {
            return done(alpha_min, SolveOutcome::Stalled, l);
        }
        if hv < 0.0 {
            lo = a;
        } else {
            hi = a;
        }
        let mut next = a - hv / hp;
        if next >= alpha_max {
            if h(alpha_max, s) < 0.0 {
                return done(alpha_max, SolveOutcome::ClampedMax, l);
            }
            next = 0.5 * (lo + hi);
        } else if next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - a).abs() < NEWTON_STEP_TOL {
            return done(next, SolveOutcome::Converged, l);
        }
        a = next;
    }
    done(a, SolveOutcome::IterationCap, l_max)
}

/// `(alpha, h(alpha))` on `n` log-spaced points in `[lo, hi]`.
pub fn discrepancy_curve(s: &SensitivitySpectrum, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            let a = (l0 + t * (l1 - l0)).exp();
            (a, h(a, s))
        })
        .collect()
}
