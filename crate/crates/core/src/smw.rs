//! `M = [I − λ(βS_B + S_W)]⁻¹` applied through the Woodbury identity
//!
//! ```text
//! M = I − Dᵀ B⁻¹ D,   B = (−λ Lτ)⁻¹ + D Dᵀ
//! ```
//!
//! so only the `(n+1) × (n+1)` matrix `B` is ever factored and nothing of
//! size `d × d` is allocated.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::dataset::LabeledMatrix;
use crate::error::{Error, Result};
use crate::scatter::{symmetrize, PopulationFactor};

/// Largest admissible λ: `1/λ_max(βS_B + S_W)`, with the eigenvalue taken
/// from the small `(n+1)`-dimensional matrix. `+∞` when the scatter is zero.
pub fn lambda_cap(factor: &PopulationFactor) -> f64 {
    let top = factor
        .small_spectrum_matrix()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    if top > 0.0 {
        1.0 / top
    } else {
        f64::INFINITY
    }
}

/// λ for a fraction `gamma` of the admissible range. When the scatter is
/// zero every λ gives `M = I` and `gamma` itself is returned.
pub fn lambda_from_fraction(factor: &PopulationFactor, gamma: f64) -> f64 {
    let cap = lambda_cap(factor);
    if cap.is_finite() {
        gamma * cap
    } else {
        gamma
    }
}

#[derive(Debug, Clone)]
pub struct SmwOperator {
    factor: PopulationFactor,
    lambda: f64,
    middle: LU<f64, Dyn, Dyn>,
}

impl SmwOperator {
    pub fn new(factor: PopulationFactor, lambda: f64) -> Result<Self> {
        let cap = lambda_cap(&factor);
        if !(lambda > 0.0 && lambda < cap) {
            return Err(Error::LambdaOutOfRange { lambda, cap });
        }
        let mut b = &factor.d_mat * factor.d_mat.transpose();
        for (i, &l) in factor.l_tau.iter().enumerate() {
            b[(i, i)] += -1.0 / (lambda * l);
        }
        let norm = b.norm();
        let middle = b.lu();
        let pivot = middle
            .u()
            .diagonal()
            .iter()
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min);
        if !(pivot > 1e-12 * norm) {
            return Err(Error::SingularMiddle { pivot, norm });
        }
        Ok(Self {
            factor,
            lambda,
            middle,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn factor(&self) -> &PopulationFactor {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.d_mat.ncols()
    }

    fn solve_middle(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.middle
            .solve(rhs)
            .expect("middle factorization checked non-singular at construction")
    }

    /// `M·V = V − Dᵀ B⁻¹ (D V)` for a `d × k` block.
    pub fn apply_inverse(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if v.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.nrows(),
            });
        }
        let dv = &self.factor.d_mat * v;
        let correction = self.factor.d_mat.transpose() * self.solve_middle(&dv);
        Ok(v - correction)
    }

    pub fn apply_vector(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let out = self.apply_inverse(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()))?;
        Ok(out.column(0).into_owned())
    }

    /// Dual Gram matrix `G = Y X M Xᵀ Y`, computed as
    /// `Y[XXᵀ − (XDᵀ) B⁻¹ (XDᵀ)ᵀ]Y` and symmetrized. Fails when `G` is not
    /// PSD to within `1e-8 · ‖G‖`.
    pub fn gram(&self, data: &LabeledMatrix) -> Result<DMatrix<f64>> {
        if data.d() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: data.d(),
            });
        }
        let x = data.samples();
        let xdt = x * self.factor.d_mat.transpose();
        let z = self.solve_middle(&xdt.transpose());
        let mut g = x * x.transpose() - &xdt * z;
        scale_by_labels(&mut g, data.labels());
        symmetrize(&mut g);
        check_psd(&g)?;
        Ok(g)
    }
}

/// Rejects `g` whose smallest eigenvalue is below `-1e-8 · ‖g‖₂`.
pub(crate) fn check_psd(g: &DMatrix<f64>) -> Result<()> {
    let eig = g.clone().symmetric_eigenvalues();
    let min_eig = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let norm = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if min_eig < -1e-8 * norm {
        return Err(Error::NotPsd { min_eig, norm });
    }
    Ok(())
}

/// `g ← Y g Y` for the diagonal label matrix `Y`.
pub(crate) fn scale_by_labels(g: &mut DMatrix<f64>, labels: &[i8]) {
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            g[(i, j)] *= f64::from(labels[i] * labels[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::class_stats;
    use crate::rng::SeededRng;
    use crate::scatter::{build_factor, dense_scatter};

    fn one_d(pos: &[f64], neg: &[f64]) -> LabeledMatrix {
        let rows: Vec<Vec<f64>> = pos.iter().chain(neg).map(|&v| vec![v]).collect();
        let labels = pos.iter().map(|_| 1).chain(neg.iter().map(|_| -1)).collect();
        LabeledMatrix::from_rows(&rows, labels).unwrap()
    }

    fn random_data(n: usize, d: usize, seed: u64) -> LabeledMatrix {
        let mut rng = SeededRng::new(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.standard_normal());
        let labels = (0..n).map(|i| if i % 3 == 0 { -1 } else { 1 }).collect();
        LabeledMatrix::new(x, labels).unwrap()
    }

    fn dense_m(data: &LabeledMatrix, lambda: f64) -> DMatrix<f64> {
        let s = dense_scatter(data, &class_stats(data));
        (DMatrix::identity(data.d(), data.d()) - s * lambda).try_inverse().unwrap()
    }

    #[test]
    fn scalar_example() {
        let data = one_d(&[0.0, 2.0], &[5.0, 7.0]);
        let f = build_factor(&data, &class_stats(&data));
        assert!((lambda_cap(&f) - 1.0 / 27.0).abs() < 1e-15);
        let op = SmwOperator::new(f, 1.0 / 54.0).unwrap();
        let out = op.apply_vector(&DVector::from_vec(vec![1.0])).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-12);
        let out = op.apply_vector(&DVector::from_vec(vec![3.0])).unwrap();
        assert!((out[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_lambda_is_identity() {
        let data = random_data(8, 12, 1);
        let f = build_factor(&data, &class_stats(&data));
        let op = SmwOperator::new(f, 1e-12).unwrap();
        let v = DVector::from_fn(12, |i, _| (i as f64).sin());
        let out = op.apply_vector(&v).unwrap();
        assert!((out - &v).norm() <= 1e-6 * v.norm());
    }

    #[test]
    fn lambda_range_enforced() {
        let data = random_data(6, 4, 2);
        let f = build_factor(&data, &class_stats(&data));
        let cap = lambda_cap(&f);
        assert!(matches!(SmwOperator::new(f.clone(), 0.0), Err(Error::LambdaOutOfRange { .. })));
        assert!(matches!(SmwOperator::new(f.clone(), cap), Err(Error::LambdaOutOfRange { .. })));
        assert!(SmwOperator::new(f, -1.0).is_err());
    }

    #[test]
    fn zero_scatter_cap_is_infinite() {
        let data = one_d(&[1.0, 1.0], &[1.0, 1.0]);
        let f = build_factor(&data, &class_stats(&data));
        assert_eq!(lambda_cap(&f), f64::INFINITY);
    }

    #[test]
    fn cap_scales_inverse_square() {
        let data = random_data(7, 5, 3);
        let scaled = data.map_samples(|x| x * 3.0).unwrap();
        let c1 = lambda_cap(&build_factor(&data, &class_stats(&data)));
        let c2 = lambda_cap(&build_factor(&scaled, &class_stats(&scaled)));
        assert!((c2 * 9.0 / c1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cap_matches_dense_eigenvalue() {
        for seed in 0..10 {
            let data = random_data(9, 30, seed);
            let f = build_factor(&data, &class_stats(&data));
            let dense_top = dense_scatter(&data, &class_stats(&data))
                .symmetric_eigenvalues()
                .max();
            assert!((1.0 / lambda_cap(&f) / dense_top - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn random_5x20_matches_dense() {
        let data = random_data(5, 20, 4);
        let f = build_factor(&data, &class_stats(&data));
        let lambda = 0.3 * lambda_cap(&f);
        let op = SmwOperator::new(f, lambda).unwrap();
        let eye = DMatrix::identity(20, 20);
        let smw = op.apply_inverse(&eye).unwrap();
        let dense = dense_m(&data, lambda);
        assert!((smw - &dense).amax() <= 1e-8 * dense.amax());
    }

    #[test]
    fn inverse_consistency() {
        let data = random_data(10, 15, 5);
        let s = dense_scatter(&data, &class_stats(&data));
        let f = build_factor(&data, &class_stats(&data));
        let lambda = 0.7 * lambda_cap(&f);
        let op = SmwOperator::new(f, lambda).unwrap();
        let v = DVector::from_fn(15, |i, _| 1.0 + i as f64 * 0.1);
        let forward = &v - &s * &v * lambda;
        let back = op.apply_vector(&forward).unwrap();
        assert!((back - &v).norm() <= 1e-8 * v.norm());
        assert_eq!(op.apply_inverse(&DMatrix::zeros(15, 2)).unwrap(), DMatrix::zeros(15, 2));
        assert!(op.apply_inverse(&DMatrix::zeros(14, 1)).is_err());
    }

    #[test]
    fn gram_two_points() {
        let data = one_d(&[1.0], &[-1.0]);
        let f = build_factor(&data, &class_stats(&data));
        // scatter = 4 (S_W = 0, S_B = 4); tiny λ
        let op = SmwOperator::new(f, 1e-14).unwrap();
        let g = op.gram(&data).unwrap();
        for v in g.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_matches_dense() {
        for seed in 0..5 {
            let data = random_data(12, 25, 10 + seed);
            let f = build_factor(&data, &class_stats(&data));
            let lambda = 0.9 * lambda_cap(&f);
            let op = SmwOperator::new(f, lambda).unwrap();
            let g = op.gram(&data).unwrap();
            let x = data.samples();
            let mut dense = x * dense_m(&data, lambda) * x.transpose();
            scale_by_labels(&mut dense, data.labels());
            assert!((&g - &dense).amax() <= 1e-8 * dense.amax());
            assert_eq!(g.transpose(), g);
        }
    }

    #[test]
    fn psd_check_rejects_indefinite() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(check_psd(&g), Err(Error::NotPsd { .. })));
    }
}
