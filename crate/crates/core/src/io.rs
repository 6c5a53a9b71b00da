//! Plain-text artifacts: CSV tables, flat grids and run reports.
//!
//! Floats are written in shortest round-trip form, so equal values always
//! produce equal bytes. Nothing time-dependent is written.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;

use crate::analysis::RunReport;
use crate::discrepancy::SensitivitySpectrum;
use crate::ensemble::PredictedData;
use crate::fieldgen::GridSpec;
use crate::metrics::NormPair;
use crate::schedule::InflationSchedule;
use crate::{Error, Result};

fn parse_err(context: &str, reason: impl Into<String>) -> Error {
    Error::Parse {
        context: context.to_string(),
        reason: reason.into(),
    }
}

fn parse_f64(context: &str, line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(context, format!("line {line}: `{}` is not a number", s.trim())))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// `nx ny` header, then one value per line with `i` varying fastest.
pub fn grid_to_string(grid: &GridSpec, values: &DVector<f64>) -> Result<String> {
    if values.len() != grid.n_cells() {
        return Err(Error::DimensionMismatch {
            context: "grid values",
            expected: grid.n_cells(),
            actual: values.len(),
        });
    }
    let mut s = format!("{} {}\n", grid.nx, grid.ny);
    for v in values.iter() {
        writeln!(s, "{v}").unwrap();
    }
    Ok(s)
}

pub fn parse_grid(text: &str) -> Result<(usize, usize, DVector<f64>)> {
    let mut lines = data_lines(text);
    let (_, header) = lines.next().ok_or_else(|| parse_err("grid", "empty file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err("grid", format!("bad header `{header}`"))))
        .collect::<Result<_>>()?;
    let [nx, ny] = dims[..] else {
        return Err(parse_err("grid", format!("header must be `nx ny`, got `{header}`")));
    };
    let values: Vec<f64> = lines
        .map(|(n, l)| parse_f64("grid", n, l))
        .collect::<Result<_>>()?;
    if values.len() != nx * ny {
        return Err(parse_err("grid", format!("expected {} values, found {}", nx * ny, values.len())));
    }
    Ok((nx, ny, DVector::from_vec(values)))
}

pub fn schedule_to_csv(schedule: &InflationSchedule) -> String {
    let mut s = String::from("k,alpha\n");
    for (k, a) in schedule.alphas().iter().enumerate() {
        writeln!(s, "{},{a}", k + 1).unwrap();
    }
    s
}

/// Reads a `k,alpha` table back and re-applies the schedule validator.
pub fn parse_schedule_csv(text: &str) -> Result<InflationSchedule> {
    let mut alphas = Vec::new();
    for (n, line) in data_lines(text).skip(1) {
        let (k, a) = line
            .split_once(',')
            .ok_or_else(|| parse_err("schedule", format!("line {n}: expected `k,alpha`")))?;
        if k.trim() != (alphas.len() + 1).to_string() {
            return Err(parse_err("schedule", format!("line {n}: steps must be numbered from 1")));
        }
        alphas.push(parse_f64("schedule", n, a)?);
    }
    InflationSchedule::explicit(alphas)
}

/// Rows are data, columns are members.
pub fn predicted_to_csv(pred: &PredictedData) -> String {
    let m = pred.matrix();
    let mut s = String::from("datum");
    for j in 0..m.ncols() {
        write!(s, ",m{j}").unwrap();
    }
    s.push('\n');
    for (i, row) in m.row_iter().enumerate() {
        write!(s, "{i}").unwrap();
        for v in row.iter() {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn spectrum_to_csv(spectrum: &SensitivitySpectrum) -> String {
    let mut s = format!("# n_d = {}\nsigma,projection\n", spectrum.n_d());
    for (sv, p) in spectrum.singular_values().iter().zip(spectrum.projections()) {
        writeln!(s, "{sv},{p}").unwrap();
    }
    s
}

/// Reads a `sigma,projection` table. `n_d` comes from a `# n_d = ...` line
/// when present, else from `n_d_default`.
pub fn parse_spectrum_csv(text: &str, n_d_default: Option<usize>, tau: f64) -> Result<SensitivitySpectrum> {
    let mut n_d = n_d_default;
    for line in text.lines() {
        if let Some(rest) = line.trim().strip_prefix('#') {
            if let Some((key, value)) = rest.split_once('=') {
                if key.trim() == "n_d" {
                    n_d = Some(
                        value
                            .trim()
                            .parse()
                            .map_err(|_| parse_err("spectrum", format!("bad n_d `{}`", value.trim())))?,
                    );
                }
            }
        }
    }
    let n_d = n_d.ok_or_else(|| parse_err("spectrum", "number of data not given"))?;
    let (mut sv, mut proj) = (Vec::new(), Vec::new());
    for (n, line) in data_lines(text).skip(1) {
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| parse_err("spectrum", format!("line {n}: expected `sigma,projection`")))?;
        sv.push(parse_f64("spectrum", n, a)?);
        proj.push(parse_f64("spectrum", n, b)?);
    }
    SensitivitySpectrum::new(sv, proj, n_d, tau)
}

pub fn curve_to_csv(curve: &[(f64, f64)]) -> String {
    let mut s = String::from("alpha,h\n");
    for (a, h) in curve {
        writeln!(s, "{a},{h}").unwrap();
    }
    s
}

pub fn norm_pairs_to_csv(rows: &[NormPair]) -> String {
    let mut s = String::from("label,data_mismatch,model_change\n");
    for r in rows {
        writeln!(s, "{},{},{}", r.label, r.data_mismatch, r.model_change).unwrap();
    }
    s
}

/// `key = value` header followed by `[schedule]`, `[steps]` and `[members]`
/// CSV sections.
pub fn report_to_string(r: &RunReport) -> String {
    let m = &r.final_metrics;
    let mut s = String::new();
    let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
    kv("label", r.label.clone());
    kv("seed", r.seed.to_string());
    kv("origin", r.schedule.origin().to_string());
    kv("n_a", r.schedule.n_a().to_string());
    kv("gamma", r.schedule.gamma().to_string());
    kv("alpha_star", opt(r.alpha_star));
    kv("prior_data_mismatch_mean", r.prior_data_mismatch_mean.to_string());
    kv("rmse_mean", opt(m.rmse_mean));
    kv("rmse_std", opt(m.rmse_std));
    kv("data_mismatch_mean", m.data_mismatch_mean.to_string());
    kv("data_mismatch_std", m.data_mismatch_std.to_string());
    kv("model_change_mean", m.model_change_mean.to_string());
    kv("model_change_std", m.model_change_std.to_string());
    kv("normalized_variance_mean", m.normalized_variance_mean.to_string());

    s.push_str("\n[schedule]\n");
    s.push_str(&schedule_to_csv(&r.schedule));
    s.push_str("\n[steps]\nstep,alpha,data_mismatch_mean\n");
    for st in &r.per_step {
        writeln!(s, "{},{},{}", st.step, st.alpha, st.data_mismatch_mean).unwrap();
    }
    s.push_str("\n[members]\nmember,rmse,data_mismatch,model_change\n");
    for j in 0..m.data_mismatch.len() {
        let rm = m.rmse.as_ref().map(|v| v[j]);
        writeln!(s, "{j},{},{},{}", opt(rm), m.data_mismatch[j], m.model_change[j]).unwrap();
    }
    s
}

/// Extracts a `[name]` section of a report as its own text.
pub fn report_section<'a>(report: &'a str, name: &str) -> Option<&'a str> {
    let tag = format!("[{name}]\n");
    let start = report.find(&tag)? + tag.len();
    let rest = &report[start..];
    let end = rest.find("\n[").map_or(rest.len(), |e| e + 1);
    Some(&rest[..end])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{constant_schedule, geometric_from_last};
    use nalgebra::DMatrix;

    #[test]
    fn grid_round_trip() {
        let g = GridSpec::new(3, 2, 1.0).unwrap();
        let v = DVector::from_vec(vec![0.1, -2.0, 3.5e-17, 1e300, 7.0, f64::MIN_POSITIVE]);
        let text = grid_to_string(&g, &v).unwrap();
        assert!(text.starts_with("3 2\n"));
        let (nx, ny, back) = parse_grid(&text).unwrap();
        assert_eq!((nx, ny), (3, 2));
        assert_eq!(back, v);
        assert!(grid_to_string(&g, &DVector::zeros(5)).is_err());
        assert!(parse_grid("2 2\n1\n2\n3\n").is_err());
    }

    #[test]
    fn schedule_round_trip_revalidates() {
        for s in [constant_schedule(4).unwrap(), geometric_from_last(1.5, 7).unwrap()] {
            let back = parse_schedule_csv(&schedule_to_csv(&s)).unwrap();
            assert_eq!(back.alphas(), s.alphas());
        }
        let bad = "k,alpha\n1,2\n2,3\n";
        assert!(matches!(parse_schedule_csv(bad), Err(Error::SumToOne { .. })));
        assert!(parse_schedule_csv("k,alpha\n2,1\n").is_err());
    }

    #[test]
    fn spectrum_round_trip() {
        let s = SensitivitySpectrum::new(vec![25.0, 3.0], vec![6.0, -1.5], 10, 1.0).unwrap();
        let back = parse_spectrum_csv(&spectrum_to_csv(&s), None, 1.0).unwrap();
        assert_eq!(back.singular_values(), s.singular_values());
        assert_eq!(back.projections(), s.projections());
        assert_eq!(back.n_d(), 10);
        assert!(parse_spectrum_csv("sigma,projection\n1,2\n", None, 1.0).is_err());
        assert_eq!(parse_spectrum_csv("sigma,projection\n1,2\n", Some(4), 1.0).unwrap().n_d(), 4);
    }

    #[test]
    fn predicted_layout() {
        let p = PredictedData::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.5])).unwrap();
        assert_eq!(predicted_to_csv(&p), "datum,m0,m1\n0,1,2\n1,3,4.5\n");
    }

    #[test]
    fn sections_are_extracted() {
        let text = "a = 1\n\n[one]\nx\ny\n\n[two]\nz\n";
        assert_eq!(report_section(text, "one"), Some("x\ny\n\n"));
        assert_eq!(report_section(text, "two"), Some("z\n"));
        assert_eq!(report_section(text, "three"), None);
    }
}
