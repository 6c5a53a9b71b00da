//! The ES-MDA analysis step, the multi-step driver and the exact
//! linear-Gaussian moment recursion used as its oracle.
//!
//! One step updates every member with
//! `m_j <- m_j + K (d_obs + e_j - g(m_j))`, where
//! `K = C_md (C_dd + alpha C_e)^{-1}` is built from ensemble anomalies,
//! `e_j ~ N(0, alpha C_e)` and the inverse is taken in the subspace of the
//! whitened predicted-data anomalies.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::discrepancy::check_variances;
use crate::ensemble::{Ensemble, PredictedData};
use crate::forward::{evaluate_ensemble_with, ForwardModel, LinearModel};
use crate::localization::{gain_taper, LocalizationSpec};
use crate::metrics::{data_mismatch, MetricsBundle, MetricsInput};
use crate::parallel::Execution;
use crate::rng::{self, Rng, Stream};
use crate::schedule::InflationSchedule;
use crate::{Error, Result};

/// Observed data with diagonal data-error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub d_obs: DVector<f64>,
    pub ce_diag: DVector<f64>,
}

impl ObservationSet {
    pub fn new(d_obs: DVector<f64>, ce_diag: DVector<f64>) -> Result<Self> {
        if d_obs.len() != ce_diag.len() {
            return Err(Error::DimensionMismatch {
                context: "observation variances",
                expected: d_obs.len(),
                actual: ce_diag.len(),
            });
        }
        if d_obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observed data"));
        }
        check_variances(&ce_diag)?;
        Ok(ObservationSet { d_obs, ce_diag })
    }

    pub fn n_data(&self) -> usize {
        self.d_obs.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// Fraction of the singular-value sum kept by the subspace inverse.
    pub svd_retention: f64,
    pub localization: Option<LocalizationSpec>,
    pub rng_seed: u64,
    pub perturb_obs: bool,
    /// Remove the ensemble mean of the perturbations at every step.
    pub center_perturbations: bool,
    pub execution: Execution,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            svd_retention: 0.99,
            localization: None,
            rng_seed: 0,
            perturb_obs: true,
            center_perturbations: true,
            execution: Execution::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.svd_retention > 0.0 && self.svd_retention <= 1.0) {
            return Err(Error::invalid(
                "svd_retention",
                format!("must lie in (0, 1], got {}", self.svd_retention),
            ));
        }
        if let Some(loc) = &self.localization {
            if loc.enabled && !(loc.length > 0.0) {
                return Err(Error::invalid("localization length", "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Columns `d_obs + e_j` with `e_j ~ N(0, alpha diag(ce))`; with `center`
/// the perturbations have exactly zero ensemble mean.
pub fn perturb_observations(
    d_obs: &DVector<f64>,
    alpha: f64,
    ce_diag: &DVector<f64>,
    n_e: usize,
    center: bool,
    rng: &mut Rng,
) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", format!("must be > 0, got {alpha}")));
    }
    if ce_diag.len() != d_obs.len() {
        return Err(Error::DimensionMismatch {
            context: "perturbation variances",
            expected: d_obs.len(),
            actual: ce_diag.len(),
        });
    }
    check_variances(ce_diag)?;
    let sd: Vec<f64> = ce_diag.iter().map(|v| (alpha * v).sqrt()).collect();
    let mut e = DMatrix::<f64>::zeros(d_obs.len(), n_e);
    for mut col in e.column_iter_mut() {
        for (i, x) in col.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *x = sd[i] * z;
        }
    }
    if center && n_e > 1 {
        let mu = crate::ensemble::mean(&e);
        for mut col in e.column_iter_mut() {
            col -= &mu;
        }
    }
    for mut col in e.column_iter_mut() {
        col += d_obs;
    }
    Ok(e)
}

/// `(dD dD^T + alpha C_e)^{-1}` restricted to the leading singular subspace of
/// `C_e^{-1/2} dD`, exact on its orthogonal complement.
#[derive(Debug, Clone)]
pub struct SubspaceInverse {
    inv_sqrt_ce: DVector<f64>,
    u: DMatrix<f64>,
    /// `1/(s_i^2 + alpha) - 1/alpha` for the retained modes.
    correction: DVector<f64>,
    alpha: f64,
}

impl SubspaceInverse {
    pub fn new(dd: &DMatrix<f64>, ce_diag: &DVector<f64>, alpha: f64, retention: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be > 0, got {alpha}")));
        }
        if !(retention > 0.0 && retention <= 1.0) {
            return Err(Error::invalid("svd_retention", format!("must lie in (0, 1], got {retention}")));
        }
        if dd.nrows() != ce_diag.len() {
            return Err(Error::DimensionMismatch {
                context: "subspace inverse rows",
                expected: ce_diag.len(),
                actual: dd.nrows(),
            });
        }
        check_variances(ce_diag)?;
        let inv_sqrt_ce = ce_diag.map(|v| 1.0 / v.sqrt());
        let mut w = dd.clone();
        for (i, mut row) in w.row_iter_mut().enumerate() {
            row *= inv_sqrt_ce[i];
        }
        let n_d = w.nrows();
        let svd = w.try_svd(true, false, f64::EPSILON, 0).ok_or(Error::Svd)?;
        let u_full = svd.u.ok_or(Error::Svd)?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let s: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();

        let r = retained_modes(&s, retention);
        let mut u = DMatrix::zeros(n_d, r);
        for (c, &k) in order.iter().take(r).enumerate() {
            u.set_column(c, &u_full.column(k));
        }
        let correction = DVector::from_fn(r, |i, _| 1.0 / (s[i] * s[i] + alpha) - 1.0 / alpha);
        Ok(SubspaceInverse {
            inv_sqrt_ce,
            u,
            correction,
            alpha,
        })
    }

    pub fn retained(&self) -> usize {
        self.u.ncols()
    }

    pub fn apply(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.inv_sqrt_ce.len() {
            return Err(Error::DimensionMismatch {
                context: "subspace inverse right-hand side",
                expected: self.inv_sqrt_ce.len(),
                actual: rhs.nrows(),
            });
        }
        let mut w = rhs.clone();
        for (i, mut row) in w.row_iter_mut().enumerate() {
            row *= self.inv_sqrt_ce[i];
        }
        let mut proj = self.u.transpose() * &w;
        for (i, mut row) in proj.row_iter_mut().enumerate() {
            row *= self.correction[i];
        }
        let mut out = w / self.alpha + &self.u * proj;
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= self.inv_sqrt_ce[i];
        }
        Ok(out)
    }
}

/// Smallest leading count of the descending values `s` whose sum reaches
/// `retention` of the total; zero when every value is zero.
fn retained_modes(s: &[f64], retention: f64) -> usize {
    let total: f64 = s.iter().sum();
    if !(total > 0.0) {
        return 0;
    }
    let target = retention * total;
    let mut acc = 0.0;
    for (k, v) in s.iter().enumerate() {
        acc += v;
        if acc >= target {
            return k + 1;
        }
    }
    s.len()
}

pub fn subspace_inverse_apply(
    dd: &DMatrix<f64>,
    ce_diag: &DVector<f64>,
    alpha: f64,
    retention: f64,
    rhs: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    SubspaceInverse::new(dd, ce_diag, alpha, retention)?.apply(rhs)
}

/// Gain `C_md (C_dd + alpha C_e)^{-1}`, tapered elementwise when given.
pub fn kalman_gain(
    ens: &Ensemble,
    pred: &PredictedData,
    ce_diag: &DVector<f64>,
    alpha: f64,
    retention: f64,
    taper: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    if ens.n_members() != pred.n_members() {
        return Err(Error::DimensionMismatch {
            context: "predicted data member count",
            expected: ens.n_members(),
            actual: pred.n_members(),
        });
    }
    let dm = ens.anomalies()?;
    let dd = pred.anomalies()?;
    let x = SubspaceInverse::new(&dd, ce_diag, alpha, retention)?.apply(&dd)?;
    let mut k = dm * x.transpose();
    if let Some(t) = taper {
        if t.shape() != k.shape() {
            return Err(Error::DimensionMismatch {
                context: "localization taper parameters",
                expected: k.nrows(),
                actual: t.nrows(),
            });
        }
        k.component_mul_assign(t);
    }
    Ok(k)
}

/// One ES-MDA update of every member with inflation `alpha`.
pub fn esmda_step(
    ens: &Ensemble,
    pred: &PredictedData,
    obs: &ObservationSet,
    alpha: f64,
    cfg: &AnalysisConfig,
    taper: Option<&DMatrix<f64>>,
    rng: &mut Rng,
) -> Result<Ensemble> {
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", format!("must be >= 1, got {alpha}")));
    }
    if pred.n_data() != obs.n_data() {
        return Err(Error::DimensionMismatch {
            context: "predicted data rows",
            expected: obs.n_data(),
            actual: pred.n_data(),
        });
    }
    let k = kalman_gain(ens, pred, &obs.ce_diag, alpha, cfg.svd_retention, taper)?;
    let n_e = ens.n_members();
    let d = if cfg.perturb_obs {
        perturb_observations(&obs.d_obs, alpha, &obs.ce_diag, n_e, cfg.center_perturbations, rng)?
    } else {
        DMatrix::from_fn(obs.n_data(), n_e, |i, _| obs.d_obs[i])
    };
    let innovation = d - pred.matrix();
    Ensemble::new(ens.matrix() + k * innovation)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub alpha: f64,
    /// Mean over members of `|y_j|^2 / N_d` after the update.
    pub data_mismatch_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub label: String,
    pub seed: u64,
    pub schedule: InflationSchedule,
    pub alpha_star: Option<f64>,
    pub prior_data_mismatch_mean: f64,
    pub per_step: Vec<StepRecord>,
    pub final_metrics: MetricsBundle,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub posterior: Ensemble,
    pub posterior_pred: PredictedData,
    pub report: RunReport,
}

/// Optional run metadata carried into the report.
#[derive(Debug, Clone, Default)]
pub struct RunContext<'a> {
    pub label: &'a str,
    pub truth: Option<&'a DVector<f64>>,
    pub alpha_star: Option<f64>,
    /// Prior predictions, when already evaluated.
    pub prior_pred: Option<&'a PredictedData>,
}

fn mean_mismatch(pred: &PredictedData, obs: &ObservationSet) -> Result<f64> {
    let n_e = pred.n_members();
    let mut acc = 0.0;
    for j in 0..n_e {
        acc += data_mismatch(pred.member(j), &obs.d_obs, &obs.ce_diag)?;
    }
    Ok(acc / n_e as f64 / obs.n_data().max(1) as f64)
}

/// Applies the update once per schedule entry, re-running the forward model
/// after every step. Step `k` draws its perturbations from an independent
/// stream of `cfg.rng_seed`.
pub fn run_esmda<F: ForwardModel + ?Sized>(
    prior: &Ensemble,
    forward: &F,
    obs: &ObservationSet,
    schedule: &InflationSchedule,
    cfg: &AnalysisConfig,
    ctx: RunContext<'_>,
) -> Result<RunOutput> {
    cfg.validate()?;
    if forward.n_params() != prior.n_params() {
        return Err(Error::DimensionMismatch {
            context: "forward model parameters",
            expected: prior.n_params(),
            actual: forward.n_params(),
        });
    }
    if forward.n_data() != obs.n_data() {
        return Err(Error::DimensionMismatch {
            context: "forward model data",
            expected: obs.n_data(),
            actual: forward.n_data(),
        });
    }
    let taper = match &cfg.localization {
        Some(spec) if spec.enabled => {
            spec.check_dims(prior.n_params(), obs.n_data())?;
            Some(gain_taper(spec)?)
        }
        _ => None,
    };
    let step_err = |step: usize| move |e: Error| Error::Step { step, source: Box::new(e) };

    let mut pred = match ctx.prior_pred {
        Some(p) => p.clone(),
        None => evaluate_ensemble_with(forward, prior, cfg.execution).map_err(step_err(0))?,
    };
    let prior_mismatch = mean_mismatch(&pred, obs)?;
    let mut ens = prior.clone();
    let mut per_step = Vec::with_capacity(schedule.n_a());
    for (k, &alpha) in schedule.alphas().iter().enumerate() {
        let step = k + 1;
        let mut r = rng::stream(cfg.rng_seed, Stream::Perturbation(step));
        ens = esmda_step(&ens, &pred, obs, alpha, cfg, taper.as_ref(), &mut r).map_err(step_err(step))?;
        pred = evaluate_ensemble_with(forward, &ens, cfg.execution).map_err(step_err(step))?;
        let dm = mean_mismatch(&pred, obs)?;
        log::debug!("step {step}: alpha = {alpha:.4}, mean |y|^2/N_d = {dm:.4}");
        per_step.push(StepRecord {
            step,
            alpha,
            data_mismatch_mean: dm,
        });
    }

    let final_metrics = MetricsBundle::compute(MetricsInput {
        prior,
        posterior: &ens,
        posterior_pred: &pred,
        d_obs: &obs.d_obs,
        ce_diag: &obs.ce_diag,
        truth: ctx.truth,
        mask: None,
    })?;
    Ok(RunOutput {
        posterior: ens,
        posterior_pred: pred,
        report: RunReport {
            label: ctx.label.to_string(),
            seed: cfg.rng_seed,
            schedule: schedule.clone(),
            alpha_star: ctx.alpha_star,
            prior_data_mismatch_mean: prior_mismatch,
            per_step,
            final_metrics,
        },
    })
}

/// Exact Gaussian moments after running the schedule on a linear model:
/// `mean += C G^T S^{-1} (d - G mean)`, `C -= C G^T S^{-1} G C` with
/// `S = G C G^T + alpha_k C_e`.
pub fn gaussian_mda_oracle(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    g: &LinearModel,
    d_obs: &DVector<f64>,
    ce_diag: &DVector<f64>,
    schedule: &InflationSchedule,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let gm = g.operator();
    let (n_d, n_m) = gm.shape();
    if prior_mean.len() != n_m || prior_cov.shape() != (n_m, n_m) {
        return Err(Error::DimensionMismatch {
            context: "oracle prior",
            expected: n_m,
            actual: prior_mean.len(),
        });
    }
    if d_obs.len() != n_d || ce_diag.len() != n_d {
        return Err(Error::DimensionMismatch {
            context: "oracle data",
            expected: n_d,
            actual: d_obs.len(),
        });
    }
    check_variances(ce_diag)?;
    let ce = DMatrix::from_diagonal(ce_diag);
    let mut mean = prior_mean.clone();
    let mut cov = prior_cov.clone();
    for &alpha in schedule.alphas() {
        let cgt = &cov * gm.transpose();
        let s = gm * &cgt + &ce * alpha;
        let chol = s
            .cholesky()
            .ok_or_else(|| Error::Singular("innovation covariance".into()))?;
        // K^T = S^{-1} G C
        let kt = chol.solve(&cgt.transpose());
        mean += kt.transpose() * (d_obs - gm * &mean);
        cov -= &cgt * &kt;
        cov = (&cov + cov.transpose()) * 0.5;
    }
    Ok((mean, cov))
}
