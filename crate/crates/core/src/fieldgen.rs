//! Gaussian random fields on regular 2D grids with a spherical covariance.
//!
//! Fields are generated by dense Cholesky factorization of the full
//! cell-to-cell covariance, which limits grids to a few thousand cells
//! (`nx * ny <= 4096` keeps factorization well under a second).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Regular grid with square cells; cell `(i, j)` has flat index `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "default_dx")]
    pub dx: f64,
    #[serde(default)]
    pub origin: (f64, f64),
}

fn default_dx() -> f64 {
    1.0
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64) -> Result<Self> {
        let g = GridSpec {
            nx,
            ny,
            dx,
            origin: (0.0, 0.0),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::invalid("grid", "nx and ny must be at least 1"));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::invalid("grid.dx", format!("must be > 0, got {}", self.dx)));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn ij(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    pub fn cell_center(&self, index: usize) -> (f64, f64) {
        let (i, j) = self.ij(index);
        (
            self.origin.0 + (i as f64 + 0.5) * self.dx,
            self.origin.1 + (j as f64 + 0.5) * self.dx,
        )
    }

    pub fn cell_centers(&self) -> Vec<(f64, f64)> {
        (0..self.n_cells()).map(|c| self.cell_center(c)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    #[default]
    Spherical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    #[serde(default)]
    pub kind: CovarianceKind,
    /// Correlation range in the grid's length units.
    pub range: f64,
    /// Field variance.
    pub sill: f64,
    #[serde(default)]
    pub mean: f64,
}

impl CovarianceModel {
    pub fn spherical(range: f64, sill: f64, mean: f64) -> Self {
        CovarianceModel {
            kind: CovarianceKind::Spherical,
            range,
            sill,
            mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::invalid("covariance.range", format!("must be > 0, got {}", self.range)));
        }
        if !(self.sill > 0.0 && self.sill.is_finite()) {
            return Err(Error::invalid("covariance.sill", format!("must be > 0, got {}", self.sill)));
        }
        if !self.mean.is_finite() {
            return Err(Error::invalid("covariance.mean", "must be finite"));
        }
        Ok(())
    }

    /// Covariance at separation `h`; zero at and beyond the range.
    pub fn eval(&self, h: f64) -> f64 {
        match self.kind {
            CovarianceKind::Spherical => {
                let r = h / self.range;
                if r >= 1.0 {
                    0.0
                } else {
                    self.sill * (1.0 - 1.5 * r + 0.5 * r * r * r)
                }
            }
        }
    }
}

pub fn covariance_matrix(grid: &GridSpec, model: &CovarianceModel) -> Result<DMatrix<f64>> {
    grid.validate()?;
    model.validate()?;
    let centers = grid.cell_centers();
    let n = centers.len();
    let mut c = DMatrix::zeros(n, n);
    for a in 0..n {
        c[(a, a)] = model.sill;
        for b in (a + 1)..n {
            let h = (centers[a].0 - centers[b].0).hypot(centers[a].1 - centers[b].1);
            let v = model.eval(h);
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    Ok(c)
}

/// Cholesky factor of `cov + jitter * I`, escalating jitter from
/// `1e-10 * scale` by factors of ten up to `1e-6 * scale`.
pub fn factor_with_jitter(cov: &DMatrix<f64>, scale: f64) -> Result<(DMatrix<f64>, f64)> {
    let mut jitter = 1e-10 * scale;
    let max = 1e-6 * scale * (1.0 + 1e-9);
    loop {
        let mut shifted = cov.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::<f64, Dyn>::new(shifted) {
            return Ok((ch.unpack(), jitter));
        }
        jitter *= 10.0;
        if jitter > max {
            return Err(Error::Factorization { jitter: jitter / 10.0 });
        }
    }
}

/// Draws `n` columns of `mean + L z` with `z` standard normal.
pub fn sample_gaussian(
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
    n: usize,
    rng: &mut Rng,
) -> Result<Ensemble> {
    if factor.nrows() != mean.len() {
        return Err(Error::DimensionMismatch {
            context: "sample_gaussian factor rows",
            expected: mean.len(),
            actual: factor.nrows(),
        });
    }
    let dim = factor.ncols();
    let z = DMatrix::from_fn(dim, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut out = factor * z;
    for mut col in out.column_iter_mut() {
        col += mean;
    }
    Ensemble::new(out)
}

/// Reusable sampler holding the factorized covariance of one grid/model pair.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    grid: GridSpec,
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl FieldSampler {
    pub fn new(grid: &GridSpec, model: &CovarianceModel) -> Result<Self> {
        let cov = covariance_matrix(grid, model)?;
        let (factor, jitter) = factor_with_jitter(&cov, model.sill)?;
        Ok(FieldSampler {
            grid: *grid,
            mean: DVector::from_element(grid.n_cells(), model.mean),
            factor,
            jitter,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Ensemble> {
        sample_gaussian(&self.mean, &self.factor, n, rng)
    }
}

/// `n_realizations` fields drawn from a generator seeded with `seed`.
pub fn sample_field(
    grid: &GridSpec,
    model: &CovarianceModel,
    n_realizations: usize,
    seed: u64,
) -> Result<Ensemble> {
    let mut g = rng::seeded(seed);
    FieldSampler::new(grid, model)?.sample(n_realizations, &mut g)
}
