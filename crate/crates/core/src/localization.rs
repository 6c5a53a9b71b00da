//! Distance-based Schur-product localization of the Kalman gain.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Gaspari-Cohn fifth-order compactly supported correlation with critical
/// length `c`: one at zero distance, zero from `2c` on.
pub fn gaspari_cohn(d: f64, c: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::invalid("distance", format!("must be >= 0, got {d}")));
    }
    if !(c > 0.0) {
        return Err(Error::invalid("localization length", format!("must be > 0, got {c}")));
    }
    Ok(gc_unchecked(d / c))
}

fn gc_unchecked(z: f64) -> f64 {
    if z <= 1.0 {
        let z2 = z * z;
        let z3 = z2 * z;
        -0.25 * z3 * z2 + 0.5 * z2 * z2 + 0.625 * z3 - 5.0 / 3.0 * z2 + 1.0
    } else if z < 2.0 {
        let z2 = z * z;
        let z3 = z2 * z;
        let v = z3 * z2 / 12.0 - 0.5 * z2 * z2 + 0.625 * z3 + 5.0 / 3.0 * z2 - 5.0 * z + 4.0
            - 2.0 / (3.0 * z);
        v.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Positions and length scale for tapering an `N_m x N_d` gain. Parameters
/// without a position (global scalars) are not localized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSpec {
    pub model_coords: Vec<Option<(f64, f64)>>,
    pub data_coords: Vec<Option<(f64, f64)>>,
    pub length: f64,
    pub enabled: bool,
}

impl LocalizationSpec {
    pub fn new(
        model_coords: Vec<Option<(f64, f64)>>,
        data_coords: Vec<Option<(f64, f64)>>,
        length: f64,
    ) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid("localization length", format!("must be > 0, got {length}")));
        }
        Ok(LocalizationSpec {
            model_coords,
            data_coords,
            length,
            enabled: true,
        })
    }

    pub fn check_dims(&self, n_m: usize, n_d: usize) -> Result<()> {
        if self.model_coords.len() != n_m {
            return Err(Error::DimensionMismatch {
                context: "localization model coordinates",
                expected: n_m,
                actual: self.model_coords.len(),
            });
        }
        if self.data_coords.len() != n_d {
            return Err(Error::DimensionMismatch {
                context: "localization data coordinates",
                expected: n_d,
                actual: self.data_coords.len(),
            });
        }
        Ok(())
    }
}

/// Taper entry `(i, j)` = `gaspari_cohn(|model_i - data_j|, length)`.
pub fn gain_taper(spec: &LocalizationSpec) -> Result<DMatrix<f64>> {
    if !spec.enabled {
        return Err(Error::invalid("localization", "taper requested while disabled"));
    }
    if !(spec.length > 0.0) {
        return Err(Error::invalid("localization length", "must be > 0"));
    }
    let (n_m, n_d) = (spec.model_coords.len(), spec.data_coords.len());
    Ok(DMatrix::from_fn(n_m, n_d, |i, j| {
        match (spec.model_coords[i], spec.data_coords[j]) {
            (Some(a), Some(b)) => gc_unchecked((a.0 - b.0).hypot(a.1 - b.1) / spec.length),
            _ => 1.0,
        }
    }))
}
