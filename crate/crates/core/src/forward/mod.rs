//! Forward models `g(m)` and ensemble evaluation.

mod banded;
mod darcy;
mod linear;

use nalgebra::{DMatrix, DVector, DVectorView};

pub use banded::{BandedCholesky, BandedSpd};
pub use darcy::{Darcy2D, Well, WellRole};
pub use linear::LinearModel;

use crate::ensemble::{Ensemble, PredictedData};
use crate::parallel::{map_indexed, Execution};
use crate::{Error, Result};

/// Maps a parameter vector to predicted data. Implementations must be pure.
pub trait ForwardModel: Sync {
    fn n_params(&self) -> usize;
    fn n_data(&self) -> usize;
    fn predict(&self, m: DVectorView<'_, f64>) -> Result<DVector<f64>>;

    /// Planar position of each datum, if it has one.
    fn data_coords(&self) -> Option<Vec<(f64, f64)>> {
        None
    }
}

/// Either of the bundled forward models.
#[derive(Debug, Clone)]
pub enum Forward {
    Linear(LinearModel),
    Darcy(Darcy2D),
}

impl ForwardModel for Forward {
    fn n_params(&self) -> usize {
        match self {
            Forward::Linear(m) => m.n_params(),
            Forward::Darcy(m) => m.n_params(),
        }
    }

    fn n_data(&self) -> usize {
        match self {
            Forward::Linear(m) => m.n_data(),
            Forward::Darcy(m) => m.n_data(),
        }
    }

    fn predict(&self, m: DVectorView<'_, f64>) -> Result<DVector<f64>> {
        match self {
            Forward::Linear(l) => l.predict(m),
            Forward::Darcy(d) => d.predict(m),
        }
    }

    fn data_coords(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Forward::Linear(m) => m.data_coords(),
            Forward::Darcy(m) => m.data_coords(),
        }
    }
}

/// Column `j` of the result is `forward(column j)`, evaluated in parallel when
/// the `parallel` feature is enabled.
pub fn evaluate_ensemble<F: ForwardModel + ?Sized>(forward: &F, ens: &Ensemble) -> Result<PredictedData> {
    evaluate_ensemble_with(forward, ens, Execution::Parallel)
}

pub fn evaluate_ensemble_with<F: ForwardModel + ?Sized>(
    forward: &F,
    ens: &Ensemble,
    exec: Execution,
) -> Result<PredictedData> {
    if ens.n_params() != forward.n_params() {
        return Err(Error::DimensionMismatch {
            context: "evaluate_ensemble parameter count",
            expected: forward.n_params(),
            actual: ens.n_params(),
        });
    }
    let n_d = forward.n_data();
    let columns = map_indexed(ens.n_members(), exec, |j| {
        forward.predict(ens.member(j)).and_then(|d| {
            if d.len() == n_d {
                Ok(d)
            } else {
                Err(Error::DimensionMismatch {
                    context: "forward output length",
                    expected: n_d,
                    actual: d.len(),
                })
            }
        })
    });
    let mut out = DMatrix::zeros(n_d, ens.n_members());
    for (j, col) in columns.into_iter().enumerate() {
        let col = col.map_err(|e| Error::Member {
            member: j,
            source: Box::new(e),
        })?;
        out.set_column(j, &col);
    }
    PredictedData::new(out)
}
