//! Steady single-phase Darcy flow on a 2D grid with fixed-pressure wells.
//!
//! Solves `div(k grad p) = 0` with the five-point stencil, no-flow outer
//! boundaries and Dirichlet well cells. Interface transmissibilities are the
//! harmonic mean of the two cell permeabilities times the mobility (square
//! cells, so the geometric factor is one).

use nalgebra::{DVector, DVectorView};
use serde::{Deserialize, Serialize};

use super::banded::BandedSpd;
use super::ForwardModel;
use crate::fieldgen::GridSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WellRole {
    Producer,
    Injector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub i: usize,
    pub j: usize,
    pub role: WellRole,
    /// Bottom-hole pressure held fixed in the well cell.
    pub pressure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Darcy2D {
    grid: GridSpec,
    wells: Vec<Well>,
    mobility: f64,
    survey_repeats: usize,
    log_perm_bounds: Option<(f64, f64)>,
    well_cell: Vec<Option<usize>>,
}

impl Darcy2D {
    pub fn new(grid: GridSpec, wells: Vec<Well>, mobility: f64) -> Result<Self> {
        grid.validate()?;
        if !(mobility > 0.0 && mobility.is_finite()) {
            return Err(Error::invalid("mobility", format!("must be > 0, got {mobility}")));
        }
        let has = |role| wells.iter().any(|w| w.role == role);
        if !has(WellRole::Producer) || !has(WellRole::Injector) {
            return Err(Error::invalid("wells", "need at least one producer and one injector"));
        }
        let mut well_cell = vec![None; grid.n_cells()];
        for (w_idx, w) in wells.iter().enumerate() {
            if w.i >= grid.nx || w.j >= grid.ny {
                return Err(Error::invalid(
                    "wells",
                    format!("well {w_idx} at ({}, {}) is outside the grid", w.i, w.j),
                ));
            }
            if !w.pressure.is_finite() {
                return Err(Error::invalid("wells", format!("well {w_idx} pressure is not finite")));
            }
            let c = grid.index(w.i, w.j);
            if well_cell[c].is_some() {
                return Err(Error::invalid(
                    "wells",
                    format!("two wells share cell ({}, {})", w.i, w.j),
                ));
            }
            well_cell[c] = Some(w_idx);
        }
        Ok(Darcy2D {
            grid,
            wells,
            mobility,
            survey_repeats: 1,
            log_perm_bounds: None,
            well_cell,
        })
    }

    /// Four adjacent five-spot patterns: producers on a 3x3 lattice with an
    /// injector at the center of each of the four lattice squares.
    pub fn four_five_spot(grid: GridSpec, producer_pressure: f64, injector_pressure: f64) -> Result<Self> {
        let lattice = |n: usize| {
            let m = n / 8;
            [m, n / 2, n.saturating_sub(1 + m)]
        };
        let (xs, ys) = (lattice(grid.nx), lattice(grid.ny));
        let mut wells = Vec::with_capacity(13);
        for &j in &ys {
            for &i in &xs {
                wells.push(Well {
                    i,
                    j,
                    role: WellRole::Producer,
                    pressure: producer_pressure,
                });
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                wells.push(Well {
                    i: (xs[b] + xs[b + 1]) / 2,
                    j: (ys[a] + ys[a + 1]) / 2,
                    role: WellRole::Injector,
                    pressure: injector_pressure,
                });
            }
        }
        Darcy2D::new(grid, wells, 1.0)
    }

    /// Repeats the producer-rate block `n` times in the data vector so each
    /// copy can carry its own noise draw.
    pub fn with_survey_repeats(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("survey_repeats", "must be at least 1"));
        }
        self.survey_repeats = n;
        Ok(self)
    }

    /// Clamps log-permeability to `[lo, hi]` before exponentiation, so
    /// overcorrected members keep a solvable system.
    pub fn with_log_perm_bounds(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::invalid("log_perm_bounds", format!("need finite lo < hi, got [{lo}, {hi}]")));
        }
        self.log_perm_bounds = Some((lo, hi));
        Ok(self)
    }

    pub fn log_perm_bounds(&self) -> Option<(f64, f64)> {
        self.log_perm_bounds
    }

    fn perm(&self, log_perm: f64) -> f64 {
        match self.log_perm_bounds {
            Some((lo, hi)) => log_perm.clamp(lo, hi).exp(),
            None => log_perm.exp(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn wells(&self) -> &[Well] {
        &self.wells
    }

    pub fn survey_repeats(&self) -> usize {
        self.survey_repeats
    }

    fn producers(&self) -> impl Iterator<Item = (usize, &Well)> {
        self.wells
            .iter()
            .enumerate()
            .filter(|(_, w)| w.role == WellRole::Producer)
    }

    fn neighbors(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.grid.ij(c);
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        [
            (i > 0).then(|| c - 1),
            (i + 1 < nx).then(|| c + 1),
            (j > 0).then(|| c - nx),
            (j + 1 < ny).then(|| c + nx),
        ]
        .into_iter()
        .flatten()
    }

    /// Cell pressures for the given log-permeability field.
    pub fn pressure(&self, log_perm: DVectorView<'_, f64>) -> Result<DVector<f64>> {
        let n = self.grid.n_cells();
        if log_perm.len() != n {
            return Err(Error::DimensionMismatch {
                context: "darcy log-permeability length",
                expected: n,
                actual: log_perm.len(),
            });
        }
        if log_perm.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log-permeability"));
        }
        let perm: Vec<f64> = log_perm.iter().map(|&v| self.perm(v)).collect();
        let trans = |a: usize, b: usize| {
            let (ka, kb) = (perm[a], perm[b]);
            let s = ka + kb;
            if s > 0.0 {
                self.mobility * 2.0 * ka * kb / s
            } else {
                0.0
            }
        };

        let mut a = BandedSpd::zeros(n, self.grid.nx);
        let mut rhs = vec![0.0; n];
        for c in 0..n {
            if let Some(w) = self.well_cell[c] {
                a.add(c, c, 1.0);
                rhs[c] = self.wells[w].pressure;
                continue;
            }
            for nb in self.neighbors(c) {
                let t = trans(c, nb);
                a.add(c, c, t);
                match self.well_cell[nb] {
                    Some(w) => rhs[c] += t * self.wells[w].pressure,
                    None if nb < c => a.add(c, nb, -t),
                    None => {}
                }
            }
        }
        let chol = a.factor()?;
        chol.solve_in_place(&mut rhs);
        Ok(DVector::from_vec(rhs))
    }

    /// Net flux from each well cell into the reservoir, in well order.
    /// Injectors are positive, producers negative.
    pub fn darcy_solve(&self, log_perm: DVectorView<'_, f64>) -> Result<DVector<f64>> {
        let p = self.pressure(log_perm)?;
        let k = |c: usize| self.perm(log_perm[c]);
        Ok(DVector::from_iterator(
            self.wells.len(),
            self.wells.iter().map(|w| {
                let c = self.grid.index(w.i, w.j);
                self.neighbors(c)
                    .map(|nb| {
                        let (ka, kb) = (k(c), k(nb));
                        let t = self.mobility * 2.0 * ka * kb / (ka + kb);
                        t * (p[c] - p[nb])
                    })
                    .sum::<f64>()
            }),
        ))
    }

    /// Coordinates of each datum produced by [`ForwardModel::predict`].
    pub fn producer_coords(&self) -> Vec<(f64, f64)> {
        let one: Vec<(f64, f64)> = self
            .producers()
            .map(|(_, w)| self.grid.cell_center(self.grid.index(w.i, w.j)))
            .collect();
        one.iter().cycle().take(one.len() * self.survey_repeats).copied().collect()
    }
}

impl ForwardModel for Darcy2D {
    fn n_params(&self) -> usize {
        self.grid.n_cells()
    }

    fn n_data(&self) -> usize {
        self.producers().count() * self.survey_repeats
    }

    /// Producer rates, tiled `survey_repeats` times.
    fn predict(&self, m: DVectorView<'_, f64>) -> Result<DVector<f64>> {
        let rates = self.darcy_solve(m)?;
        let prod: Vec<f64> = self.producers().map(|(w, _)| rates[w]).collect();
        Ok(DVector::from_iterator(
            prod.len() * self.survey_repeats,
            prod.iter().cycle().take(prod.len() * self.survey_repeats).copied(),
        ))
    }

    fn data_coords(&self) -> Option<Vec<(f64, f64)>> {
        Some(self.producer_coords())
    }
}
