//! Posterior quality metrics and the data-mismatch / model-change norm pairs.

use nalgebra::{DVector, DVectorView};

use crate::analysis::RunReport;
use crate::discrepancy::check_variances;
use crate::ensemble::{row_variance, Ensemble, PredictedData};
use crate::{Error, Result};

/// Prior variances below this are reported as `NaN` normalized variance.
pub const VARIANCE_FLOOR: f64 = 1e-14;

fn same_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// `sqrt(1/N_m) * |member - truth|`.
pub fn rmse(member: DVectorView<'_, f64>, truth: &DVector<f64>) -> Result<f64> {
    same_len("rmse", truth.len(), member.len())?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = member.iter().zip(truth.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / truth.len() as f64).sqrt())
}

/// Squared whitened residual `sum (d_i - g_i)^2 / Ce_i`.
pub fn data_mismatch(pred: DVectorView<'_, f64>, d_obs: &DVector<f64>, ce_diag: &DVector<f64>) -> Result<f64> {
    same_len("data_mismatch prediction", d_obs.len(), pred.len())?;
    same_len("data_mismatch variances", d_obs.len(), ce_diag.len())?;
    check_variances(ce_diag)?;
    Ok((0..d_obs.len())
        .map(|i| (d_obs[i] - pred[i]).powi(2) / ce_diag[i])
        .sum())
}

/// Squared change in prior-std units, `sum ((post_i - prior_i) / std_i)^2`,
/// over the parameters selected by `mask` (all when `None`).
pub fn model_change(
    post: DVectorView<'_, f64>,
    prior: DVectorView<'_, f64>,
    prior_std: &DVector<f64>,
    mask: Option<&[bool]>,
) -> Result<f64> {
    same_len("model_change prior", post.len(), prior.len())?;
    same_len("model_change std", post.len(), prior_std.len())?;
    if let Some(m) = mask {
        same_len("model_change mask", post.len(), m.len())?;
    }
    let mut acc = 0.0;
    for i in 0..post.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let s = prior_std[i];
        if !(s > 0.0) {
            return Err(Error::invalid(
                "prior std",
                format!("parameter {i} has std {s}; mask it out to exclude it"),
            ));
        }
        acc += ((post[i] - prior[i]) / s).powi(2);
    }
    Ok(acc)
}

/// Posterior over prior sample variance per parameter; `NaN` where the prior
/// variance is below [`VARIANCE_FLOOR`].
pub fn normalized_variance(prior: &Ensemble, posterior: &Ensemble) -> Result<DVector<f64>> {
    same_len("normalized_variance parameters", prior.n_params(), posterior.n_params())?;
    let vp = row_variance(prior.matrix())?;
    let vq = row_variance(posterior.matrix())?;
    Ok(vp.zip_map(&vq, |p, q| if p < VARIANCE_FLOOR { f64::NAN } else { q / p }))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-member norms and their ensemble averages. Squared norms are stored raw
/// per member; the `*_mean` and `*_std` fields are divided by `N_d` or by the
/// number of parameters counted in the model change.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsBundle {
    pub rmse: Option<Vec<f64>>,
    pub rmse_mean: Option<f64>,
    pub rmse_std: Option<f64>,
    pub data_mismatch: Vec<f64>,
    pub data_mismatch_mean: f64,
    pub data_mismatch_std: f64,
    pub model_change: Vec<f64>,
    pub model_change_mean: f64,
    pub model_change_std: f64,
    /// Average over parameters with a defined normalized variance.
    pub normalized_variance_mean: f64,
}

/// Inputs for [`MetricsBundle::compute`].
#[derive(Debug, Clone, Copy)]
pub struct MetricsInput<'a> {
    pub prior: &'a Ensemble,
    pub posterior: &'a Ensemble,
    pub posterior_pred: &'a PredictedData,
    pub d_obs: &'a DVector<f64>,
    pub ce_diag: &'a DVector<f64>,
    pub truth: Option<&'a DVector<f64>>,
    /// Parameters counted in the model change and normalized variance.
    pub mask: Option<&'a [bool]>,
}

impl MetricsBundle {
    pub fn compute(input: MetricsInput<'_>) -> Result<Self> {
        let MetricsInput {
            prior,
            posterior,
            posterior_pred,
            d_obs,
            ce_diag,
            truth,
            mask,
        } = input;
        same_len("metrics member count", prior.n_members(), posterior.n_members())?;
        same_len("metrics predicted members", posterior.n_members(), posterior_pred.n_members())?;
        let n_e = posterior.n_members();
        let n_d = d_obs.len().max(1) as f64;
        let n_m = mask.map_or(prior.n_params(), |m| m.iter().filter(|&&b| b).count());

        let prior_std = row_variance(prior.matrix())?.map(f64::sqrt);
        let dm: Vec<f64> = (0..n_e)
            .map(|j| data_mismatch(posterior_pred.member(j), d_obs, ce_diag))
            .collect::<Result<_>>()?;
        let mc: Vec<f64> = (0..n_e)
            .map(|j| model_change(posterior.member(j), prior.member(j), &prior_std, mask))
            .collect::<Result<_>>()?;
        let rm: Option<Vec<f64>> = truth
            .map(|t| (0..n_e).map(|j| rmse(posterior.member(j), t)).collect::<Result<_>>())
            .transpose()?;

        let scaled = |xs: &[f64], d: f64| xs.iter().map(|x| x / d).collect::<Vec<_>>();
        let (dm_mean, dm_std) = mean_std(&scaled(&dm, n_d));
        let (mc_mean, mc_std) = mean_std(&scaled(&mc, n_m.max(1) as f64));
        let (rm_mean, rm_std) = match &rm {
            Some(r) => {
                let (m, s) = mean_std(r);
                (Some(m), Some(s))
            }
            None => (None, None),
        };

        let nv = normalized_variance(prior, posterior)?;
        let defined: Vec<f64> = nv
            .iter()
            .enumerate()
            .filter(|(i, v)| v.is_finite() && mask.is_none_or(|m| m[*i]))
            .map(|(_, v)| *v)
            .collect();
        let nv_mean = if defined.is_empty() {
            f64::NAN
        } else {
            defined.iter().sum::<f64>() / defined.len() as f64
        };

        Ok(MetricsBundle {
            rmse: rm,
            rmse_mean: rm_mean,
            rmse_std: rm_std,
            data_mismatch: dm,
            data_mismatch_mean: dm_mean,
            data_mismatch_std: dm_std,
            model_change: mc,
            model_change_mean: mc_mean,
            model_change_std: mc_std,
            normalized_variance_mean: nv_mean,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormPair {
    pub label: String,
    pub data_mismatch: f64,
    pub model_change: f64,
}

/// One `(label, mean |y|^2 / N_d, mean |dm|^2 / N_m)` row per run.
pub fn norm_pair_table<'a>(runs: impl IntoIterator<Item = &'a RunReport>) -> Vec<NormPair> {
    runs.into_iter()
        .map(|r| NormPair {
            label: r.label.clone(),
            data_mismatch: r.final_metrics.data_mismatch_mean,
            model_change: r.final_metrics.model_change_mean,
        })
        .collect()
}
