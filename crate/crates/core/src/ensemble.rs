//! Ensemble algebra: member means, scaled anomaly matrices and
//! cross-covariances.
//!
//! Members are stored as matrix columns. Anomalies are scaled by
//! `1/sqrt(N_e - 1)` so that `anomalies * anomalies^T` is the unbiased sample
//! covariance.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::{Error, Result};

macro_rules! member_matrix {
    ($name:ident, $rows:ident, $what:literal) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(DMatrix<f64>);

        impl $name {
            /// Wraps a matrix whose columns are members. Entries must be finite.
            pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
                if matrix.ncols() == 0 {
                    return Err(Error::TooFewMembers {
                        required: 1,
                        actual: 0,
                    });
                }
                if matrix.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite($what));
                }
                Ok(Self(matrix))
            }

            pub fn from_columns(columns: &[DVector<f64>]) -> Result<Self> {
                if columns.is_empty() {
                    return Err(Error::TooFewMembers {
                        required: 1,
                        actual: 0,
                    });
                }
                Self::new(DMatrix::from_columns(columns))
            }

            pub fn matrix(&self) -> &DMatrix<f64> {
                &self.0
            }

            pub fn into_matrix(self) -> DMatrix<f64> {
                self.0
            }

            pub fn n_members(&self) -> usize {
                self.0.ncols()
            }

            pub fn $rows(&self) -> usize {
                self.0.nrows()
            }

            pub fn member(&self, j: usize) -> DVectorView<'_, f64> {
                self.0.column(j)
            }

            pub fn mean(&self) -> DVector<f64> {
                mean(&self.0)
            }

            pub fn anomalies(&self) -> Result<DMatrix<f64>> {
                anomalies(&self.0)
            }
        }
    };
}

member_matrix!(Ensemble, n_params, "ensemble");
member_matrix!(PredictedData, n_data, "predicted data");

/// Row-wise arithmetic mean of the columns.
pub fn mean(members: &DMatrix<f64>) -> DVector<f64> {
    let n = members.ncols() as f64;
    let mut out = DVector::zeros(members.nrows());
    for col in members.column_iter() {
        out += col;
    }
    out / n
}

/// Column `j` is `(member_j - mean) / sqrt(N_e - 1)`.
pub fn anomalies(members: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n_e = members.ncols();
    if n_e < 2 {
        return Err(Error::TooFewMembers {
            required: 2,
            actual: n_e,
        });
    }
    let mu = mean(members);
    let scale = 1.0 / ((n_e - 1) as f64).sqrt();
    let mut out = members.clone();
    for mut col in out.column_iter_mut() {
        col -= &mu;
        col *= scale;
    }
    Ok(out)
}

/// `dm * dd^T`; with `dd == dm` this is the sample covariance.
pub fn cross_cov(dm: &DMatrix<f64>, dd: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if dm.ncols() != dd.ncols() {
        return Err(Error::DimensionMismatch {
            context: "cross_cov member count",
            expected: dm.ncols(),
            actual: dd.ncols(),
        });
    }
    Ok(dm * dd.transpose())
}

/// Unbiased sample variance of each row.
pub fn row_variance(members: &DMatrix<f64>) -> Result<DVector<f64>> {
    let da = anomalies(members)?;
    Ok(DVector::from_iterator(
        da.nrows(),
        da.row_iter().map(|r| r.norm_squared()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut g = rng::seeded(seed);
        DMatrix::from_fn(r, c, |_, _| g.sample(StandardNormal))
    }

    #[test]
    fn mean_of_identical_columns() {
        let col = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        let m = DMatrix::from_columns(&[col.clone(), col.clone(), col.clone()]);
        assert_eq!(mean(&m), col);
    }

    #[test]
    fn mean_of_two_members() {
        let a = DVector::from_vec(vec![1.0, 2.0]);
        let b = DVector::from_vec(vec![3.0, -6.0]);
        let m = DMatrix::from_columns(&[a.clone(), b.clone()]);
        assert_eq!(mean(&m), (a + b) / 2.0);
    }

    #[test]
    fn mean_matches_naive_loop() {
        let m = random_matrix(3, 7, 11);
        let mu = mean(&m);
        for i in 0..3 {
            let mut s = 0.0;
            for j in 0..7 {
                s += m[(i, j)];
            }
            assert!((mu[i] - s / 7.0).abs() < 1e-14);
        }
    }

    #[test]
    fn anomalies_of_equal_members_vanish() {
        let col = DVector::from_vec(vec![4.0, 5.0]);
        let m = DMatrix::from_columns(&[col.clone(), col.clone(), col]);
        assert!(anomalies(&m).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn anomalies_two_members() {
        let mid = DVector::from_vec(vec![1.0, 1.0]);
        let v = DVector::from_vec(vec![0.5, -2.0]);
        let m = DMatrix::from_columns(&[&mid + &v, &mid - &v]);
        let da = anomalies(&m).unwrap();
        assert!((da.column(0) - &v).amax() < 1e-15);
        assert!((da.column(1) + &v).amax() < 1e-15);
    }

    #[test]
    fn anomalies_reproduce_sample_covariance() {
        let m = random_matrix(4, 9, 5);
        let da = anomalies(&m).unwrap();
        let c = &da * da.transpose();
        let mu = mean(&m);
        for a in 0..4 {
            for b in 0..4 {
                let mut s = 0.0;
                for j in 0..9 {
                    s += (m[(a, j)] - mu[a]) * (m[(b, j)] - mu[b]);
                }
                assert!((c[(a, b)] - s / 8.0).abs() < 1e-12);
            }
        }
        for row in da.row_iter() {
            assert!(row.sum().abs() < 1e-13);
        }
    }

    #[test]
    fn anomalies_need_two_members() {
        let m = DMatrix::<f64>::zeros(3, 1);
        assert!(matches!(
            anomalies(&m),
            Err(Error::TooFewMembers { required: 2, actual: 1 })
        ));
    }

    #[test]
    fn cross_cov_cases() {
        let dm = random_matrix(5, 6, 1);
        let dd = random_matrix(3, 6, 2);
        let gram = cross_cov(&dm, &dm).unwrap();
        assert_eq!(gram, gram.transpose());
        assert!(gram.clone().symmetric_eigenvalues().min() > -1e-12);

        let zero = cross_cov(&dm, &DMatrix::zeros(3, 6)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        let c = cross_cov(&dm, &dd).unwrap();
        for i in 0..5 {
            for k in 0..3 {
                let mut s = 0.0;
                for j in 0..6 {
                    s += dm[(i, j)] * dd[(k, j)];
                }
                assert!((c[(i, k)] - s).abs() < 1e-12);
            }
        }

        assert!(cross_cov(&dm, &random_matrix(3, 5, 3)).is_err());
    }

    #[test]
    fn predicted_anomaly_rank_is_bounded_by_members() {
        // N_d = 8 data, N_e = 4 members: rank <= 3.
        let d = random_matrix(8, 4, 9);
        let dd = anomalies(&d).unwrap();
        let cdd = &dd * dd.transpose();
        let sv = cdd.singular_values();
        let tol = 1e-10 * sv.max();
        let rank = sv.iter().filter(|&&s| s > tol).count();
        assert!(rank <= 3, "rank {rank}");
    }

    #[test]
    fn rejects_non_finite_entries() {
        let mut m = DMatrix::<f64>::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(Ensemble::new(m).is_err());
    }
}
