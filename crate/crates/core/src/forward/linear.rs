use nalgebra::{DMatrix, DVector, DVectorView};

use super::ForwardModel;
use crate::{Error, Result};

/// Exact linear operator `d = G m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    g: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear operator"));
        }
        Ok(LinearModel { g })
    }

    pub fn operator(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn apply_linear(&self, m: DVectorView<'_, f64>) -> Result<DVector<f64>> {
        if m.len() != self.g.ncols() {
            return Err(Error::DimensionMismatch {
                context: "apply_linear parameter length",
                expected: self.g.ncols(),
                actual: m.len(),
            });
        }
        Ok(&self.g * m)
    }
}

impl ForwardModel for LinearModel {
    fn n_params(&self) -> usize {
        self.g.ncols()
    }

    fn n_data(&self) -> usize {
        self.g.nrows()
    }

    fn predict(&self, m: DVectorView<'_, f64>) -> Result<DVector<f64>> {
        self.apply_linear(m)
    }
}
