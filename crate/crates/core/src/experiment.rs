//! Twin experiments: a synthetic truth, noisy observations of it, a prior
//! ensemble and one ES-MDA run per requested schedule, all driven by a TOML
//! configuration and a list of master seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::analysis::{run_esmda, AnalysisConfig, ObservationSet, RunContext, RunOutput, RunReport};
use crate::discrepancy::{
    discrepancy_curve, spectrum, whitened_innovation, whitened_sensitivity, SensitivitySpectrum,
};
use crate::ensemble::{Ensemble, PredictedData};
use crate::fieldgen::{CovarianceModel, FieldSampler, GridSpec};
use crate::forward::{evaluate_ensemble_with, Darcy2D, Forward, ForwardModel, LinearModel};
use crate::io;
use crate::localization::LocalizationSpec;
use crate::metrics::{normalized_variance, norm_pair_table};
use crate::parallel::{map_indexed, Execution};
use crate::rng::{self, Stream};
use crate::schedule::{
    constant_schedule, geo1_schedule, geo2_plan, Geo2Plan, Geo2Settings, InflationSchedule,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ForwardSpec {
    /// Dense operator with i.i.d. `N(0, scale^2 / N_m)` entries.
    Linear {
        n_data: usize,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Four five-spot patterns on the prior grid; data are producer rates.
    Darcy {
        #[serde(default = "default_producer_pressure")]
        producer_pressure: f64,
        #[serde(default = "default_injector_pressure")]
        injector_pressure: f64,
        #[serde(default = "one_usize")]
        survey_repeats: usize,
        /// Log-permeability is clamped to this range inside the simulator.
        #[serde(default = "default_log_perm_bounds")]
        log_perm_bounds: [f64; 2],
    },
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_producer_pressure() -> f64 {
    20.0
}
fn default_injector_pressure() -> f64 {
    30.0
}
fn default_log_perm_bounds() -> [f64; 2] {
    [-5.0, 15.0]
}
fn yes() -> bool {
    true
}

impl Default for ForwardSpec {
    fn default() -> Self {
        ForwardSpec::Darcy {
            producer_pressure: default_producer_pressure(),
            injector_pressure: default_injector_pressure(),
            survey_repeats: 1,
            log_perm_bounds: default_log_perm_bounds(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationSpec {
    /// Noise std as a fraction of the true datum magnitude.
    pub noise_fraction: f64,
    /// Lower bound on the noise std.
    pub noise_floor: f64,
    /// Fixed noise std; overrides the fractional rule.
    pub absolute_std: Option<f64>,
    /// Factor applied to the true noise variance to obtain `C_e`.
    pub variance_multiplier: f64,
}

impl Default for ObservationSpec {
    fn default() -> Self {
        ObservationSpec {
            noise_fraction: 0.03,
            noise_floor: 1e-6,
            absolute_std: None,
            variance_multiplier: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssimilationSpec {
    pub svd_retention: f64,
    pub perturb_observations: bool,
    /// Gaspari-Cohn critical length; no localization when absent.
    pub localization_length: Option<f64>,
    /// Keep the null-space energy of the innovation in the discrepancy function.
    pub null_space_term: bool,
}

impl Default for AssimilationSpec {
    fn default() -> Self {
        AssimilationSpec {
            svd_retention: 0.99,
            perturb_observations: true,
            localization_length: None,
            null_space_term: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// `alpha_k = N_a`; `N_a` defaults to the one GEO2 selects.
    Constant { n_a: Option<usize>, label: Option<String> },
    Geo1 { n_a: Option<usize>, label: Option<String> },
    Geo2 { label: Option<String> },
    Explicit { alphas: Vec<f64>, label: Option<String> },
}

impl ScheduleSpec {
    pub fn label(&self) -> String {
        let (given, kind) = match self {
            ScheduleSpec::Constant { label, .. } => (label, "const"),
            ScheduleSpec::Geo1 { label, .. } => (label, "geo1"),
            ScheduleSpec::Geo2 { label } => (label, "geo2"),
            ScheduleSpec::Explicit { label, .. } => (label, "explicit"),
        };
        given.clone().unwrap_or_else(|| kind.to_string())
    }
}

fn default_grid() -> GridSpec {
    GridSpec::new(32, 32, 1.0).expect("valid grid")
}
fn default_prior() -> CovarianceModel {
    CovarianceModel::spherical(22.0, 1.0, 5.5)
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_ensemble_size() -> usize {
    200
}
fn default_schedules() -> Vec<ScheduleSpec> {
    vec![ScheduleSpec::Geo2 { label: None }]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default = "default_prior")]
    pub prior: CovarianceModel,
    #[serde(default)]
    pub forward: ForwardSpec,
    #[serde(default)]
    pub observations: ObservationSpec,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default)]
    pub assimilation: AssimilationSpec,
    #[serde(default = "default_schedules")]
    pub schedule: Vec<ScheduleSpec>,
    #[serde(default)]
    pub geo2: Geo2Settings,
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Precomputed `sigma,projection` table used by plan-only runs instead of
    /// evaluating the prior ensemble. Relative paths resolve against the
    /// config file.
    pub spectrum_file: Option<PathBuf>,
    /// Run schedules in parallel within a seed and seeds in parallel.
    #[serde(default = "yes")]
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

fn field(path: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::config(path, reason)
}

/// Turns a module-level error into a config error under `path`.
fn at(path: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Config { .. } => e,
        other => field(path, other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let reason = e.message().to_string();
            let path = e
                .span()
                .map(|s| {
                    let line = text[..s.start].lines().count().max(1);
                    format!("line {line}")
                })
                .unwrap_or_else(|| "<root>".into());
            field(path, reason)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config { path: p, reason } => Error::Config {
                path: format!("{}: {p}", path.display()),
                reason,
            },
            other => other,
        })?;
        if let (Some(spec), Some(dir)) = (&cfg.spectrum_file, path.parent()) {
            if spec.is_relative() {
                cfg.spectrum_file = Some(dir.join(spec));
            }
        }
        Ok(cfg)
    }

    /// Checks every precondition the run will rely on before any compute.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate().map_err(at("grid"))?;
        self.prior.validate().map_err(at("prior"))?;
        match self.forward {
            ForwardSpec::Linear { n_data, scale } => {
                if n_data == 0 {
                    return Err(field("forward.n_data", "must be at least 1"));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(field("forward.scale", "must be > 0"));
                }
            }
            ForwardSpec::Darcy {
                producer_pressure,
                injector_pressure,
                survey_repeats,
                log_perm_bounds: [lo, hi],
            } => {
                if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                    return Err(field("forward.log_perm_bounds", "need finite lo < hi"));
                }
                if self.grid.nx < 8 || self.grid.ny < 8 {
                    return Err(field("grid", "the five-spot layout needs at least 8 x 8 cells"));
                }
                if !(producer_pressure.is_finite() && injector_pressure.is_finite()) {
                    return Err(field("forward.producer_pressure", "pressures must be finite"));
                }
                if injector_pressure == producer_pressure {
                    return Err(field("forward.injector_pressure", "must differ from producer_pressure"));
                }
                if survey_repeats == 0 {
                    return Err(field("forward.survey_repeats", "must be at least 1"));
                }
            }
        }
        let o = &self.observations;
        if !(o.noise_fraction >= 0.0 && o.noise_fraction.is_finite()) {
            return Err(field("observations.noise_fraction", "must be >= 0"));
        }
        if !(o.noise_floor > 0.0 && o.noise_floor.is_finite()) {
            return Err(field("observations.noise_floor", "must be > 0"));
        }
        if let Some(s) = o.absolute_std {
            if !(s > 0.0 && s.is_finite()) {
                return Err(field("observations.absolute_std", "must be > 0"));
            }
        }
        if !(o.variance_multiplier > 0.0 && o.variance_multiplier.is_finite()) {
            return Err(field("observations.variance_multiplier", "must be > 0"));
        }
        if self.ensemble_size < 2 {
            return Err(field("ensemble_size", "must be at least 2"));
        }
        let a = &self.assimilation;
        if !(a.svd_retention > 0.0 && a.svd_retention <= 1.0) {
            return Err(field("assimilation.svd_retention", "must lie in (0, 1]"));
        }
        if let Some(l) = a.localization_length {
            if !(l > 0.0 && l.is_finite()) {
                return Err(field("assimilation.localization_length", "must be > 0"));
            }
        }
        self.geo2.validate().map_err(at("geo2"))?;
        if !(self.tau >= 1.0 && self.tau.is_finite()) {
            return Err(field("tau", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(field("seeds", "at least one seed is required"));
        }
        if self.schedule.is_empty() {
            return Err(field("schedule", "at least one schedule is required"));
        }
        let mut labels = Vec::new();
        for (i, s) in self.schedule.iter().enumerate() {
            let path = format!("schedule[{i}]");
            match s {
                ScheduleSpec::Constant { n_a: Some(0), .. } | ScheduleSpec::Geo1 { n_a: Some(0), .. } => {
                    return Err(field(format!("{path}.n_a"), "must be at least 1"));
                }
                ScheduleSpec::Explicit { alphas, .. } => {
                    InflationSchedule::explicit(alphas.clone())
                        .map_err(|e| field(format!("{path}.alphas"), e.to_string()))?;
                }
                _ => {}
            }
            let label = s.label();
            if label.is_empty() || label.contains(['/', '\\', ',']) || label.starts_with('.') {
                return Err(field(format!("{path}.label"), format!("`{label}` is not a usable name")));
            }
            if labels.contains(&label) {
                return Err(field(format!("{path}.label"), format!("duplicate label `{label}`")));
            }
            labels.push(label);
        }
        Ok(())
    }

    fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Serial
        }
    }
}

/// Everything a seed's runs share: truth, observations, prior and the
/// discrepancy spectrum of the prior predictions.
#[derive(Debug, Clone)]
pub struct TwinSetup {
    pub seed: u64,
    pub forward: Forward,
    pub truth: DVector<f64>,
    pub observations: ObservationSet,
    pub prior: Ensemble,
    pub prior_pred: PredictedData,
    pub spectrum: SensitivitySpectrum,
}

fn build_forward(cfg: &ExperimentConfig, seed: u64) -> Result<Forward> {
    Ok(match cfg.forward {
        ForwardSpec::Linear { n_data, scale } => {
            let n_m = cfg.grid.n_cells();
            let mut r = rng::stream(seed, Stream::LinearOperator);
            let s = scale / (n_m as f64).sqrt();
            let g = DMatrix::from_fn(n_data, n_m, |_, _| s * r.sample::<f64, _>(StandardNormal));
            Forward::Linear(LinearModel::new(g)?)
        }
        ForwardSpec::Darcy {
            producer_pressure,
            injector_pressure,
            survey_repeats,
            log_perm_bounds: [lo, hi],
        } => Forward::Darcy(
            Darcy2D::four_five_spot(cfg.grid, producer_pressure, injector_pressure)?
                .with_survey_repeats(survey_repeats)?
                .with_log_perm_bounds(lo, hi)?,
        ),
    })
}

/// Whitened sensitivity spectrum of a prior ensemble of predictions.
pub fn prior_spectrum(
    prior_pred: &PredictedData,
    obs: &ObservationSet,
    tau: f64,
    null_space_term: bool,
) -> Result<SensitivitySpectrum> {
    let a = whitened_sensitivity(&prior_pred.anomalies()?, &obs.ce_diag)?;
    let y = whitened_innovation(&obs.d_obs, &prior_pred.mean(), &obs.ce_diag)?;
    let s = spectrum(&a, &y, tau)?;
    Ok(if null_space_term {
        let energy = s.null_space_energy();
        s.with_null_space_term(Some(energy))
    } else {
        s
    })
}

impl TwinSetup {
    pub fn new(cfg: &ExperimentConfig, sampler: &FieldSampler, seed: u64) -> Result<Self> {
        let forward = build_forward(cfg, seed)?;
        let exec = cfg.execution();
        let truth = sampler
            .sample(1, &mut rng::stream(seed, Stream::Truth))?
            .into_matrix()
            .column(0)
            .into_owned();
        let d_true = forward.predict(truth.as_view())?;
        let o = &cfg.observations;
        let std: Vec<f64> = d_true
            .iter()
            .map(|d| o.absolute_std.unwrap_or((o.noise_fraction * d.abs()).max(o.noise_floor)))
            .collect();
        let mut r = rng::stream(seed, Stream::ObservationNoise);
        let d_obs = DVector::from_fn(d_true.len(), |i, _| d_true[i] + std[i] * r.sample::<f64, _>(StandardNormal));
        let ce = DVector::from_fn(std.len(), |i, _| o.variance_multiplier * std[i] * std[i]);
        let observations = ObservationSet::new(d_obs, ce)?;

        let prior = sampler.sample(cfg.ensemble_size, &mut rng::stream(seed, Stream::Prior))?;
        let prior_pred = evaluate_ensemble_with(&forward, &prior, exec)?;
        let spectrum = prior_spectrum(&prior_pred, &observations, cfg.tau, cfg.assimilation.null_space_term)?;
        Ok(TwinSetup {
            seed,
            forward,
            truth,
            observations,
            prior,
            prior_pred,
            spectrum,
        })
    }

    pub fn analysis_config(&self, cfg: &ExperimentConfig) -> AnalysisConfig {
        let localization = cfg.assimilation.localization_length.map(|length| {
            let model = cfg.grid.cell_centers().into_iter().map(Some).collect();
            let data = match self.forward.data_coords() {
                Some(c) => c.into_iter().map(Some).collect(),
                None => vec![None; self.observations.n_data()],
            };
            LocalizationSpec {
                model_coords: model,
                data_coords: data,
                length,
                enabled: true,
            }
        });
        AnalysisConfig {
            svd_retention: cfg.assimilation.svd_retention,
            localization,
            rng_seed: self.seed,
            perturb_obs: cfg.assimilation.perturb_observations,
            center_perturbations: true,
            execution: cfg.execution(),
        }
    }
}

/// The schedules requested by `specs`, with GEO2 planned once from `spectrum`.
/// `N_a` not given for CONST or GEO1 defaults to the GEO2 choice.
pub fn resolve_schedules(
    specs: &[ScheduleSpec],
    spectrum: &SensitivitySpectrum,
    geo2: &Geo2Settings,
) -> Result<(Geo2Plan, Vec<(String, InflationSchedule)>)> {
    let plan = geo2_plan(spectrum, geo2)?;
    let n_a_geo2 = plan.schedule.n_a();
    let out = specs
        .iter()
        .map(|s| {
            let sched = match s {
                ScheduleSpec::Constant { n_a, .. } => constant_schedule(n_a.unwrap_or(n_a_geo2))?,
                ScheduleSpec::Geo1 { n_a, .. } => geo1_schedule(spectrum.singular_values(), n_a.unwrap_or(n_a_geo2))?,
                ScheduleSpec::Geo2 { .. } => plan.schedule.clone(),
                ScheduleSpec::Explicit { alphas, .. } => InflationSchedule::explicit(alphas.clone())?,
            };
            Ok((s.label(), sched))
        })
        .collect::<Result<_>>()?;
    Ok((plan, out))
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub setup: TwinSetup,
    pub plan: Geo2Plan,
    pub runs: Vec<RunOutput>,
}

impl SeedOutcome {
    pub fn report(&self, label: &str) -> Option<&RunReport> {
        self.runs.iter().map(|r| &r.report).find(|r| r.label == label)
    }
}

/// All runs of one seed, in the order of `cfg.schedule`.
pub fn run_seed(cfg: &ExperimentConfig, sampler: &FieldSampler, seed: u64) -> Result<SeedOutcome> {
    let setup = TwinSetup::new(cfg, sampler, seed)?;
    let (plan, schedules) = resolve_schedules(&cfg.schedule, &setup.spectrum, &cfg.geo2)?;
    let acfg = setup.analysis_config(cfg);
    let runs = map_indexed(schedules.len(), cfg.execution(), |i| {
        let (label, sched) = &schedules[i];
        let is_geo2 = matches!(cfg.schedule[i], ScheduleSpec::Geo2 { .. });
        run_esmda(
            &setup.prior,
            &setup.forward,
            &setup.observations,
            sched,
            &acfg,
            RunContext {
                label,
                truth: Some(&setup.truth),
                alpha_star: is_geo2.then_some(plan.alpha_star.value),
                prior_pred: Some(&setup.prior_pred),
            },
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(SeedOutcome { setup, plan, runs })
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

fn observations_csv(obs: &ObservationSet) -> String {
    let mut s = String::from("datum,d_obs,ce\n");
    for i in 0..obs.n_data() {
        writeln!(s, "{i},{},{}", obs.d_obs[i], obs.ce_diag[i]).unwrap();
    }
    s
}

fn write_seed(cfg: &ExperimentConfig, dir: &Path, o: &SeedOutcome) -> Result<()> {
    let grid = &cfg.grid;
    io::write_text(&dir.join("truth.grid"), &io::grid_to_string(grid, &o.setup.truth)?)?;
    io::write_text(&dir.join("prior_mean.grid"), &io::grid_to_string(grid, &o.setup.prior.mean())?)?;
    io::write_text(&dir.join("observations.csv"), &observations_csv(&o.setup.observations))?;
    io::write_text(&dir.join("spectrum.csv"), &io::spectrum_to_csv(&o.setup.spectrum))?;
    let curve = discrepancy_curve(&o.setup.spectrum, 1.0, cfg.geo2.alpha_max, 200);
    io::write_text(&dir.join("discrepancy_curve.csv"), &io::curve_to_csv(&curve))?;
    for run in &o.runs {
        let rd = dir.join(&run.report.label);
        io::write_text(&rd.join("report.txt"), &io::report_to_string(&run.report))?;
        io::write_text(&rd.join("schedule.csv"), &io::schedule_to_csv(&run.report.schedule))?;
        io::write_text(&rd.join("posterior_pred.csv"), &io::predicted_to_csv(&run.posterior_pred))?;
        io::write_text(&rd.join("mean.grid"), &io::grid_to_string(grid, &run.posterior.mean())?)?;
        let nv = normalized_variance(&o.setup.prior, &run.posterior)?;
        io::write_text(&rd.join("normalized_variance.grid"), &io::grid_to_string(grid, &nv)?)?;
    }
    let rows = norm_pair_table(o.runs.iter().map(|r| &r.report));
    io::write_text(&dir.join("norm_pairs.csv"), &io::norm_pairs_to_csv(&rows))?;
    Ok(())
}

/// Summary of a finished experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub seeds: Vec<u64>,
    pub failures: Vec<(u64, String)>,
    pub reports: Vec<RunReport>,
}

/// Runs every seed, writing `seed_<s>/` directories and a top-level
/// `norm_pairs.csv` under `out`. A seed that fails leaves a `FAILED` file
/// with the error in its directory; the call then returns the first error
/// after the remaining seeds have been written.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let sampler = FieldSampler::new(&cfg.grid, &cfg.prior)?;
    let outcomes = map_indexed(cfg.seeds.len(), cfg.execution(), |i| {
        let seed = cfg.seeds[i];
        let dir = seed_dir(out, seed);
        let res = run_seed(cfg, &sampler, seed).and_then(|o| {
            write_seed(cfg, &dir, &o)?;
            Ok(o)
        });
        if let Err(e) = &res {
            let _ = io::write_text(&dir.join("FAILED"), &format!("{e}\n"));
        }
        res.map(|o| o.runs.into_iter().map(|r| r.report).collect::<Vec<_>>())
    });

    let mut table = String::from("seed,label,data_mismatch,model_change\n");
    let mut summary = ExperimentSummary {
        seeds: cfg.seeds.clone(),
        failures: Vec::new(),
        reports: Vec::new(),
    };
    let mut first_err = None;
    for (seed, res) in cfg.seeds.iter().zip(outcomes) {
        match res {
            Ok(reports) => {
                for row in norm_pair_table(&reports) {
                    writeln!(table, "{seed},{},{},{}", row.label, row.data_mismatch, row.model_change).unwrap();
                }
                summary.reports.extend(reports);
            }
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                summary.failures.push((*seed, e.to_string()));
                first_err.get_or_insert(e);
            }
        }
    }
    io::write_text(&out.join("norm_pairs.csv"), &table)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

#[derive(Debug, Clone)]
pub struct PlanRow {
    pub label: String,
    pub schedule: InflationSchedule,
}

#[derive(Debug, Clone)]
pub struct PlanSummary {
    pub alpha_star: f64,
    pub mean_singular_value: f64,
    pub rows: Vec<PlanRow>,
}

/// Schedules the config would run, without any assimilation step. Uses the
/// spectrum file when given, otherwise one prior evaluation for the first seed.
pub fn plan_only(cfg: &ExperimentConfig) -> Result<PlanSummary> {
    cfg.validate()?;
    let spectrum = match &cfg.spectrum_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| field("spectrum_file", format!("{}: {e}", path.display())))?;
            io::parse_spectrum_csv(&text, None, cfg.tau)?
        }
        None => {
            let sampler = FieldSampler::new(&cfg.grid, &cfg.prior)?;
            TwinSetup::new(cfg, &sampler, cfg.seeds[0])?.spectrum
        }
    };
    let (plan, schedules) = resolve_schedules(&cfg.schedule, &spectrum, &cfg.geo2)?;
    let sv = spectrum.singular_values();
    let mean_sv = if sv.is_empty() { 0.0 } else { sv.iter().sum::<f64>() / sv.len() as f64 };
    Ok(PlanSummary {
        alpha_star: plan.alpha_star.value,
        mean_singular_value: mean_sv,
        rows: schedules
            .into_iter()
            .map(|(label, schedule)| PlanRow { label, schedule })
            .collect(),
    })
}

/// Fixed-width table of every planned schedule.
pub fn format_plan(p: &PlanSummary) -> String {
    let mut s = format!("alpha* = {:.2}\nmean singular value = {:.4}\n", p.alpha_star, p.mean_singular_value);
    for row in &p.rows {
        let sch = &row.schedule;
        writeln!(
            s,
            "\n{} ({}): N_a = {}, gamma = {:.4}",
            row.label,
            sch.origin(),
            sch.n_a(),
            sch.gamma()
        )
        .unwrap();
        for (k, a) in sch.alphas().iter().enumerate() {
            writeln!(s, "  alpha_{} = {:.2}", k + 1, a).unwrap();
        }
    }
    s
}
