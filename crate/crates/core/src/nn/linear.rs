//! Closed-form ridge and ordinary least squares.

use super::NnError;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

/// Relative pivot size below which a design matrix is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

fn to_matrix(x: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]])
}

fn check_shapes(x: &Array2<f64>, y: &Array1<f64>) -> Result<(), NnError> {
    if x.nrows() != y.len() {
        return Err(NnError::ShapeMismatch { expected: x.nrows(), got: y.len() });
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(NnError::EmptyBatch);
    }
    Ok(())
}

/// `(XᵀX + λI)⁻¹Xᵀy` without an intercept. `λ = 0` solves by QR and reports
/// `Singular` on a rank-deficient design.
pub fn fit_ridge(x: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> Result<Array1<f64>, NnError> {
    check_shapes(x, y)?;
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(NnError::InvalidConfig(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    if lambda == 0.0 {
        return fit_least_squares(x, y);
    }
    let xm = to_matrix(x);
    let yv = DVector::from_iterator(y.len(), y.iter().copied());
    let mut gram = xm.transpose() * &xm;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let chol = gram.cholesky().ok_or(NnError::Singular)?;
    let w = chol.solve(&(xm.transpose() * yv));
    Ok(Array1::from_iter(w.iter().copied()))
}

/// Ordinary least squares through a QR factorization of `X`.
pub fn fit_least_squares(x: &Array2<f64>, y: &Array1<f64>) -> Result<Array1<f64>, NnError> {
    check_shapes(x, y)?;
    if x.nrows() < x.ncols() {
        return Err(NnError::Singular);
    }
    let xm = to_matrix(x);
    let yv = DVector::from_iterator(y.len(), y.iter().copied());
    let qr = xm.qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || r.diagonal().iter().any(|v| v.abs() <= RANK_TOL * scale) {
        return Err(NnError::Singular);
    }
    let qty = qr.q().transpose() * yv;
    let w = r.solve_upper_triangular(&qty).ok_or(NnError::Singular)?;
    Ok(Array1::from_iter(w.iter().copied()))
}

/// Linear model with an unpenalized intercept, fit on centred data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl LinearModel {
    pub fn fit(x: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> Result<Self, NnError> {
        check_shapes(x, y)?;
        let x_mean = x.mean_axis(Axis(0)).ok_or(NnError::EmptyBatch)?;
        let y_mean = y.mean().ok_or(NnError::EmptyBatch)?;
        let xc = x - &x_mean;
        let yc = y - y_mean;
        let w = fit_ridge(&xc, &yc, lambda)?;
        let intercept = y_mean - w.dot(&x_mean);
        Ok(Self { weights: w.to_vec(), intercept, lambda })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Array1<f64> {
        x.dot(&Array1::from_vec(self.weights.clone())) + self.intercept
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Normal equations solved by Gauss-Jordan elimination with partial pivoting.
    fn naive_normal_equations(x: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> Vec<f64> {
        let p = x.ncols();
        let mut a = vec![vec![0.0; p + 1]; p];
        for i in 0..p {
            for j in 0..p {
                a[i][j] = (0..x.nrows()).map(|r| x[[r, i]] * x[[r, j]]).sum::<f64>();
            }
            a[i][i] += lambda;
            a[i][p] = (0..x.nrows()).map(|r| x[[r, i]] * y[r]).sum::<f64>();
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=p {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p] / a[i][i]).collect()
    }

    fn random_system(seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((50, 5), |_| rng.gen_range(-1.0..1.0));
        let y = Array1::from_shape_fn(50, |_| rng.gen_range(-1.0..1.0));
        (x, y)
    }

    #[test]
    fn noise_free_slope() {
        let x = array![[1.0], [2.0], [3.0], [-4.0]];
        let y = array![2.0, 4.0, 6.0, -8.0];
        assert!((fit_ridge(&x, &y, 0.0).unwrap()[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn large_lambda_shrinks_to_zero() {
        let (x, y) = random_system(1);
        let w = fit_ridge(&x, &y, 1e12).unwrap();
        assert!(w.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn matches_normal_equations_oracle() {
        for (seed, lambda) in [(2, 0.0), (3, 0.5), (4, 10.0)] {
            let (x, y) = random_system(seed);
            let w = fit_ridge(&x, &y, lambda).unwrap();
            let oracle = naive_normal_equations(&x, &y, lambda);
            for (a, b) in w.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn rank_deficient_without_penalty_is_singular() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let y = array![1.0, 2.0, 3.0];
        assert_eq!(fit_ridge(&x, &y, 0.0), Err(NnError::Singular));
        assert!(fit_ridge(&x, &y, 0.1).is_ok());
    }

    #[test]
    fn intercept_model_recovers_affine_map() {
        let (x, _) = random_system(5);
        let y = x.column(0).mapv(|v| 3.0 * v) - x.column(3).to_owned() + 0.7;
        let m = LinearModel::fit(&x, &y, 0.0).unwrap();
        assert!((m.intercept - 0.7).abs() < 1e-10);
        let p = m.predict(&x);
        assert!(p.iter().zip(y.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
        let r = LinearModel::fit(&x, &y, 1e-9).unwrap();
        assert!(r.weights.iter().zip(&m.weights).all(|(a, b)| (a - b).abs() < 1e-8));
    }
}
