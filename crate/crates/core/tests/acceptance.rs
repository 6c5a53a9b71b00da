//! Acceptance suite. Each test prints one `PASS`/`FAIL` line before asserting;
//! run with `--nocapture` to see them.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use esmda::analysis::{esmda_step, gaussian_mda_oracle, run_esmda, subspace_inverse_apply, SubspaceInverse};
use esmda::discrepancy::{h, h_prime, solve_alpha_star, spectrum, whitened_innovation, whitened_sensitivity};
use esmda::discrepancy::{SensitivitySpectrum, SolveOutcome};
use esmda::experiment::{run_experiment, run_seed, ExperimentConfig};
use esmda::fieldgen::{sample_gaussian, FieldSampler};
use esmda::rng::{self, Rng};
use esmda::schedule::{
    constant_schedule, geo2_plan, geometric_from_last, geometric_sequence, solve_gamma_from_first,
    solve_gamma_from_last, Geo2Settings, InflationSchedule,
};
use esmda::{AnalysisConfig, Ensemble, LinearModel, LocalizationSpec, ObservationSet, RunContext};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

fn verdict(n: usize, name: &str, ok: bool, detail: &str) {
    println!("criterion {n:>2} [{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn rel_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn normal(r: &mut Rng) -> f64 {
    r.sample(StandardNormal)
}

#[test]
fn c01_schedule_table_regression() {
    let t = Instant::now();
    // (N_a, gamma, alpha_1) from the reference schedule tables, alpha_last = 1.5
    let cases = [(7, 0.3336, 1087.48), (8, 0.3334, 3273.79), (4, 0.3425, 37.33)];
    let mut worst: f64 = 0.0;
    for (n_a, gamma, alpha1) in cases {
        let g = solve_gamma_from_last(1.5, n_a).unwrap();
        let s = geometric_from_last(1.5, n_a).unwrap();
        worst = worst.max(rel(g, gamma)).max(rel(s.first(), alpha1)).max(rel(s.gamma(), gamma));
        assert_eq!(s.last(), 1.5);
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(1, "schedule table regression", worst < 5e-3 && secs < 1.0, &format!("max rel err {worst:.2e}, {secs:.3}s"));
}

#[test]
fn c02_forward_gamma_regression() {
    let t = Instant::now();
    let cases = [
        (1e2, 4, 0.2354),
        (1e3, 4, 0.1037),
        (1e4, 4, 0.0472),
        (1e5, 4, 0.0217),
        (1e2, 8, 0.5864),
        (1e3, 8, 0.4011),
        (1e4, 8, 0.2813),
        (1e5, 8, 0.1993),
    ];
    let worst = cases
        .iter()
        .map(|&(a1, n_a, gamma)| rel(solve_gamma_from_first(a1, n_a).unwrap(), gamma))
        .fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    verdict(2, "forward gamma regression", worst < 5e-3 && secs < 1.0, &format!("max rel err {worst:.2e}, {secs:.3}s"));
}

#[test]
fn c03_geometric_reconstruction() {
    // (alpha_1, gamma, listed alpha_k) as tabulated; the pairs are rounded, so
    // they are expanded without the sum-to-one check.
    let columns: [(f64, f64, &[f64]); 14] = [
        (1442941.18, 0.0957, &[1442941.18, 138031.75, 13204.12, 1263.11, 120.83, 11.56, 1.11]),
        (1087.48, 0.3336, &[1087.48, 362.83, 121.05, 40.39, 13.48, 4.50, 1.50]),
        (100.0, 0.2354, &[100.0, 23.54, 5.54, 1.30]),
        (1000.0, 0.1037, &[1000.0, 103.71, 10.76, 1.12]),
        (10000.0, 0.0472, &[10000.0, 471.69, 22.25, 1.05]),
        (100000.0, 0.0217, &[100000.0, 2172.79, 47.21, 1.03]),
        (4010.30, 0.0644, &[4010.30, 258.07, 16.61, 1.07]),
        (100.0, 0.5864, &[100.0, 58.64, 34.39, 20.17, 11.83, 6.94, 4.07, 2.39]),
        (1000.0, 0.4011, &[1000.0, 401.08, 160.87, 64.52, 25.88, 10.38, 4.16, 1.67]),
        (10000.0, 0.2813, &[10000.0, 2812.60, 791.07, 222.50, 62.58, 17.60, 4.95, 1.39]),
        (100000.0, 0.1993, &[100000.0, 19929.85, 3971.99, 791.61, 157.77, 31.44, 6.27, 1.25]),
        (4010.30, 0.3232, &[4010.30, 1296.25, 418.99, 135.43, 43.77, 14.15, 4.57, 1.48]),
        (3273.79, 0.3334, &[3273.79, 1091.58, 363.96, 121.36, 40.46, 13.49, 4.50, 1.50]),
        (16986.84, 0.0395, &[16986.84, 670.47, 26.46, 1.04]),
    ];
    let mut worst: f64 = 0.0;
    for (a1, gamma, listed) in columns {
        let seq = geometric_sequence(a1, gamma, listed.len());
        for (a, b) in seq.iter().zip(listed) {
            worst = worst.max(rel(*a, *b));
        }
    }
    // the 4x field column closes on 1.04 and the 7x column on 1.11
    let field = geometric_sequence(16986.84, 0.0395, 4);
    let twod = geometric_sequence(1442941.18, 0.0957, 7);
    let ends = rel(field[3], 1.04).max(rel(twod[6], 1.11));
    verdict(3, "geometric schedule reconstruction", worst < 1e-2 && ends < 1e-2, &format!("max rel err {worst:.2e}"));
}

/// Random 10-parameter / 5-datum linear-Gaussian problem.
struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    g: LinearModel,
    d: DVector<f64>,
    ce: DVector<f64>,
}

fn gaussian_problem(seed: u64) -> Gaussian {
    let mut r = rng::seeded(seed);
    let (n_m, n_d) = (10, 5);
    let b = DMatrix::from_fn(n_m, n_m, |_, _| normal(&mut r));
    let cov = &b * b.transpose() / n_m as f64 + DMatrix::identity(n_m, n_m) * 0.5;
    let mean = DVector::from_fn(n_m, |_, _| normal(&mut r));
    let g = DMatrix::from_fn(n_d, n_m, |_, _| normal(&mut r));
    let ce = DVector::from_fn(n_d, |_, _| 0.2 + r.random::<f64>());
    let truth = &mean + cov.clone().cholesky().unwrap().l() * DVector::from_fn(n_m, |_, _| normal(&mut r));
    let d = &g * truth + DVector::from_fn(n_d, |i, _| ce[i].sqrt() * normal(&mut r));
    Gaussian {
        mean,
        cov,
        g: LinearModel::new(g).unwrap(),
        d,
        ce,
    }
}

/// GEO2 planned on the exact whitened sensitivity of the problem.
fn geo2_for(p: &Gaussian) -> InflationSchedule {
    let sqrt_c = p.cov.clone().cholesky().unwrap().l();
    let gs = p.g.operator() * sqrt_c;
    let a = whitened_sensitivity(&gs, &p.ce).unwrap();
    let y = whitened_innovation(&p.d, &(p.g.operator() * &p.mean), &p.ce).unwrap();
    let s = spectrum(&a, &y, 1.0).unwrap();
    geo2_plan(&s, &Geo2Settings::default()).unwrap().schedule
}

#[test]
fn c04_gaussian_mda_equivalence() {
    let t = Instant::now();
    let p = gaussian_problem(11);
    let single = constant_schedule(1).unwrap();
    let (m1, c1) = gaussian_mda_oracle(&p.mean, &p.cov, &p.g, &p.d, &p.ce, &single).unwrap();
    let schedules = [
        constant_schedule(4).unwrap(),
        InflationSchedule::explicit(vec![2.0, 4.0, 8.0, 8.0]).unwrap(),
        geo2_for(&p),
    ];
    let mut worst: f64 = 0.0;
    for s in &schedules {
        let (m, c) = gaussian_mda_oracle(&p.mean, &p.cov, &p.g, &p.d, &p.ce, s).unwrap();
        worst = worst.max((&m - &m1).norm() / m1.norm()).max(rel_mat(&c, &c1));
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        4,
        "gaussian MDA equivalence",
        worst < 1e-10 && secs < 1.0,
        &format!("max rel diff {worst:.2e} (geo2 N_a = {}), {secs:.3}s", schedules[2].n_a()),
    );
}

/// Ensemble mean of one ES-MDA run on the Gaussian problem.
fn esmda_mean(p: &Gaussian, sqrt_c: &DMatrix<f64>, s: &InflationSchedule, n_e: usize, seed: u64) -> DVector<f64> {
    let prior = sample_gaussian(&p.mean, sqrt_c, n_e, &mut rng::seeded(seed)).unwrap();
    let obs = ObservationSet::new(p.d.clone(), p.ce.clone()).unwrap();
    let cfg = AnalysisConfig {
        svd_retention: 1.0,
        rng_seed: seed,
        ..AnalysisConfig::default()
    };
    run_esmda(&prior, &p.g, &obs, s, &cfg, RunContext::default()).unwrap().posterior.mean()
}

#[test]
fn c05_stochastic_linear_gaussian_convergence() {
    let t = Instant::now();
    let p = gaussian_problem(11);
    let (n_e, reps) = (2000, 20);
    let sqrt_c = p.cov.clone().cholesky().unwrap().l();
    let (post_mean, post_cov) =
        gaussian_mda_oracle(&p.mean, &p.cov, &p.g, &p.d, &p.ce, &constant_schedule(1).unwrap()).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for (name, s) in [("const", constant_schedule(4).unwrap()), ("geo2", geo2_for(&p))] {
        // Monte Carlo standard error of the ensemble-mean estimator, from
        // independent replicates of the whole run
        let samples: Vec<DVector<f64>> = (0..reps).map(|k| esmda_mean(&p, &sqrt_c, &s, n_e, 1000 + k)).collect();
        let avg = samples.iter().fold(DVector::zeros(10), |a, m| a + m) / reps as f64;
        let se = DVector::from_fn(10, |i, _| {
            (samples.iter().map(|m| (m[i] - avg[i]).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt()
        });
        let run = esmda_mean(&p, &sqrt_c, &s, n_e, 5);
        let z = (0..10).map(|i| (run[i] - post_mean[i]).abs() / se[i]).fold(0.0, f64::max);
        let z_avg = (0..10)
            .map(|i| (avg[i] - post_mean[i]).abs() / (se[i] / (reps as f64).sqrt()))
            .fold(0.0, f64::max);
        let naive = (0..10)
            .map(|i| se[i] / (post_cov[(i, i)] / n_e as f64).sqrt())
            .fold(0.0, f64::max);
        ok &= z <= 3.0 && z_avg <= 3.0;
        details.push(format!(
            "{name} max |err|/SE = {z:.2}, replicate mean {z_avg:.2}, SE/sqrt(var/N_e) <= {naive:.2}"
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    details.push(format!("{secs:.2}s"));
    verdict(5, "stochastic linear-gaussian convergence", ok && secs < 30.0, &details.join("; "));
}

fn random_spectrum(r: &mut Rng) -> SensitivitySpectrum {
    let rank = r.random_range(1..=8);
    let mut sv: Vec<f64> = (0..rank).map(|_| 10f64.powf(r.random_range(-1.0..2.5))).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let proj = (0..rank).map(|_| 10.0 * normal(r)).collect();
    let n_d = rank + r.random_range(0..40);
    SensitivitySpectrum::new(sv, proj, n_d, 1.0 + r.random::<f64>()).unwrap()
}

#[test]
fn c06_discrepancy_solver_properties() {
    let t = Instant::now();
    let mut r = rng::seeded(2024);
    let grid: Vec<f64> = (0..24).map(|i| 10f64.powf(-2.0 + 6.0 * i as f64 / 23.0)).collect();
    let (mut monotone, mut fd_worst) = (true, 0.0f64);
    for _ in 0..1000 {
        let s = random_spectrum(&mut r);
        let hv: Vec<f64> = grid.iter().map(|&a| h(a, &s)).collect();
        for i in 0..hv.len() {
            for j in i + 1..hv.len() {
                monotone &= hv[i] < hv[j];
            }
        }
        let (smin, smax) = (s.singular_values()[s.rank() - 1], s.singular_values()[0]);
        for _ in 0..4 {
            let a = (smin * smin * 0.5) * (smax * smax * 2.0 / (smin * smin * 0.5)).powf(r.random::<f64>());
            let step = 1e-5 * a;
            let fd = (h(a + step, &s) - h(a - step, &s)) / (2.0 * step);
            fd_worst = fd_worst.max(rel(fd, h_prime(a, &s)));
        }
    }

    let (alpha_min, alpha_max) = (1.0, 1e5);
    let (mut early, mut clamp, mut root_worst) = (true, true, 0.0f64);
    for _ in 0..1000 {
        let rank = r.random_range(1..=5);
        let n_d = rank + r.random_range(0..20);
        let sv: Vec<f64> = {
            let mut v: Vec<f64> = (0..rank).map(|_| 10f64.powf(r.random_range(0.0..2.0))).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        };
        // residual already above the noise level at alpha_min
        let big = ((4.0 * n_d as f64).sqrt() * (1.0 + sv[0] * sv[0])) * 2.0;
        let s = SensitivitySpectrum::new(sv.clone(), vec![big; rank], n_d, 1.0).unwrap();
        let a = solve_alpha_star(&s, alpha_min, alpha_max, 100).unwrap();
        early &= a.value == alpha_min && a.outcome == SolveOutcome::EarlyExit;
        // residual below the noise level everywhere
        let s = SensitivitySpectrum::new(sv, vec![1e-3; rank], n_d, 1.0).unwrap();
        let a = solve_alpha_star(&s, alpha_min, alpha_max, 100).unwrap();
        clamp &= a.value == alpha_max && a.outcome == SolveOutcome::ClampedMax;
        // one mode with p^2 = 4 tau^2 N_d has its root at sigma^2
        let sigma = 10f64.powf(r.random_range(0.5..2.0));
        let tau = 1.0 + r.random::<f64>();
        let p = 2.0 * tau * (n_d as f64).sqrt();
        let s = SensitivitySpectrum::new(vec![sigma], vec![p], n_d, tau).unwrap();
        let a = solve_alpha_star(&s, alpha_min, alpha_max, 100).unwrap();
        root_worst = root_worst.max(rel(a.value, sigma * sigma));
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = monotone && fd_worst < 1e-5 && early && clamp && root_worst < 1e-3 && secs < 5.0;
    verdict(
        6,
        "discrepancy solver properties",
        ok,
        &format!(
            "monotone {monotone}, h' fd rel err {fd_worst:.1e}, early exit {early}, clamp {clamp}, root rel err {root_worst:.1e}, {secs:.2}s"
        ),
    );
}

const TWIN: &str = r#"
seeds = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
ensemble_size = 200

[grid]
nx = 32
ny = 32
dx = 1.0

[prior]
range = 8.0
sill = 1.0
mean = 5.5

[forward]
kind = "darcy"
survey_repeats = 20

[observations]
noise_fraction = 0.03

[[schedule]]
kind = "constant"

[[schedule]]
kind = "geo1"

[[schedule]]
kind = "geo2"
"#;

#[test]
fn c07_twin_experiment_directional() {
    let t = Instant::now();
    let cfg = ExperimentConfig::from_toml(TWIN).unwrap();
    let sampler = FieldSampler::new(&cfg.grid, &cfg.prior).unwrap();
    let (mut a, mut b, mut c, mut d) = (0, 0, 0, 0);
    for &seed in &cfg.seeds {
        let out = run_seed(&cfg, &sampler, seed).unwrap();
        let m = |l: &str| out.report(l).unwrap().final_metrics.clone();
        let (k, g1, g2) = (m("const"), m("geo1"), m("geo2"));
        let between = |x: f64, p: f64, q: f64| p.min(q) <= x && x <= p.max(q);
        let (dm, mc, nv) = (
            [k.data_mismatch_mean, g1.data_mismatch_mean, g2.data_mismatch_mean],
            [k.model_change_mean, g1.model_change_mean, g2.model_change_mean],
            [k.normalized_variance_mean, g1.normalized_variance_mean, g2.normalized_variance_mean],
        );
        let (sa, sb) = (dm[0] < dm[1].min(dm[2]), mc[1] < mc[0].min(mc[2]));
        let sc = between(dm[2], dm[0], dm[1]) && between(mc[2], mc[0], mc[1]);
        let sd = nv[1] >= nv[2] && nv[2] >= nv[0];
        println!(
            "  seed {seed:>2}: N_a = {}, dm {:.3}/{:.3}/{:.3}, mc {:.3}/{:.3}/{:.3}, nv {:.3}/{:.3}/{:.3}",
            out.plan.schedule.n_a(),
            dm[0], dm[1], dm[2], mc[0], mc[1], mc[2], nv[0], nv[1], nv[2]
        );
        a += sa as usize;
        b += sb as usize;
        c += sc as usize;
        d += sd as usize;
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = a >= 8 && b >= 8 && c >= 7 && d >= 8 && secs < 600.0;
    verdict(
        7,
        "2D twin directional reproduction",
        ok,
        &format!("(a) {a}/10, (b) {b}/10, (c) {c}/10, (d) {d}/10, {secs:.1}s"),
    );
}

#[test]
fn c08_subspace_inversion_oracle() {
    let mut r = rng::seeded(8);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let n_d = 2 + case % 6;
        let n_e = n_d + 3 + case % 4;
        let dd = DMatrix::from_fn(n_d, n_e, |_, _| normal(&mut r));
        let ce = DVector::from_fn(n_d, |_, _| 0.1 + r.random::<f64>());
        let alpha = 1.0 + 10.0 * r.random::<f64>();
        let rhs = DMatrix::from_fn(n_d, 3, |_, _| normal(&mut r));
        let got = subspace_inverse_apply(&dd, &ce, alpha, 1.0, &rhs).unwrap();
        let dense = &dd * dd.transpose() + DMatrix::from_diagonal(&ce) * alpha;
        let want = dense.lu().solve(&rhs).unwrap();
        worst = worst.max(rel_mat(&got, &want));
    }
    let dd = DMatrix::from_row_slice(2, 2, &[10.0, 0.0, 0.0, 0.05]);
    let kept = SubspaceInverse::new(&dd, &DVector::from_element(2, 1.0), 1.0, 0.99).unwrap().retained();
    verdict(
        8,
        "subspace inversion oracle",
        worst < 1e-8 && kept == 1,
        &format!("max rel err {worst:.2e}, modes kept for {{10, 0.05}}: {kept}"),
    );
}

#[test]
fn c09_localization_neutrality() {
    let p = gaussian_problem(3);
    let sqrt_c = p.cov.clone().cholesky().unwrap().l();
    let prior = sample_gaussian(&p.mean, &sqrt_c, 50, &mut rng::seeded(9)).unwrap();
    let obs = ObservationSet::new(p.d.clone(), p.ce.clone()).unwrap();
    let base = AnalysisConfig {
        rng_seed: 9,
        ..AnalysisConfig::default()
    };
    let sched = constant_schedule(4).unwrap();
    let plain = run_esmda(&prior, &p.g, &obs, &sched, &base, RunContext::default()).unwrap();
    // coincident positions give a taper of exactly one everywhere
    let loc = LocalizationSpec::new(vec![Some((2.0, 3.0)); 10], vec![Some((2.0, 3.0)); 5], 4.0).unwrap();
    let tapered_cfg = AnalysisConfig {
        localization: Some(loc),
        ..base.clone()
    };
    let tapered = run_esmda(&prior, &p.g, &obs, &sched, &tapered_cfg, RunContext::default()).unwrap();
    let ones_identical = plain.posterior.matrix() == tapered.posterior.matrix();

    let pred = esmda::evaluate_ensemble(&p.g, &prior).unwrap();
    let step = |t: Option<&DMatrix<f64>>| -> Ensemble {
        esmda_step(&prior, &pred, &obs, 4.0, &base, t, &mut rng::seeded(1)).unwrap()
    };
    let direct_ones = step(Some(&DMatrix::from_element(10, 5, 1.0))).matrix() == step(None).matrix();
    let zero_noop = step(Some(&DMatrix::zeros(10, 5))).matrix() == prior.matrix();
    verdict(
        9,
        "localization neutrality",
        ones_identical && direct_ones && zero_noop,
        &format!("all-ones run identical {ones_identical}, all-ones step identical {direct_ones}, zero taper no-op {zero_noop}"),
    );
}

const SMALL: &str = r#"
seeds = [3, 4]
ensemble_size = 40

[grid]
nx = 16
ny = 16
dx = 1.0

[prior]
range = 6.0
sill = 1.0
mean = 5.5

[forward]
kind = "darcy"
survey_repeats = 5

[assimilation]
localization_length = 10.0

[[schedule]]
kind = "constant"

[[schedule]]
kind = "geo1"

[[schedule]]
kind = "geo2"
"#;

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect_files(root, &p, out);
        } else {
            let key = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            out.insert(key, std::fs::read(&p).unwrap());
        }
    }
}

#[test]
fn c10_determinism() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let runs: Vec<BTreeMap<String, Vec<u8>>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            run_experiment(&cfg, dir.path()).unwrap();
            let mut files = BTreeMap::new();
            collect_files(dir.path(), dir.path(), &mut files);
            files
        })
        .collect();
    let n_csv = runs[0].keys().filter(|k| k.ends_with(".csv")).count();
    let identical = runs[0] == runs[1];
    verdict(
        10,
        "determinism",
        identical && n_csv > 0,
        &format!("{} files ({n_csv} csv) byte-identical: {identical}", runs[0].len()),
    );
}
