//! Centralized linear solvers shared by the model modules.

use nalgebra::Cholesky;

use crate::error::{invalid, Error, Result};
use crate::{Mat, Vector};

/// Regularized least squares: `½‖Hβ − y‖² + (λ/2)‖β‖²`.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    pub design: Mat,
    pub targets: Mat,
    pub lambda: f64,
}

impl RidgeProblem {
    pub fn new(design: Mat, targets: Mat, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return invalid(format!("ridge lambda must be positive, got {lambda}"));
        }
        if design.nrows() != targets.nrows() {
            return invalid(format!(
                "design has {} rows but targets have {}",
                design.nrows(),
                targets.nrows()
            ));
        }
        Ok(RidgeProblem { design, targets, lambda })
    }

    pub fn objective(&self, beta: &Mat) -> f64 {
        ridge_objective(&self.design, &self.targets, beta, self.lambda)
    }
}

pub fn ridge_objective(h: &Mat, y: &Mat, beta: &Mat, lambda: f64) -> f64 {
    0.5 * (h * beta - y).norm_squared() + 0.5 * lambda * beta.norm_squared()
}

/// Cholesky factor of `A + shift·I`, failing loudly when not positive definite.
pub fn spd_factor(mut a: Mat, shift: f64) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    for i in 0..a.nrows() {
        a[(i, i)] += shift;
    }
    Cholesky::new(a).ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))
}

/// `(HᵀH + λI)⁻¹Hᵀy`.
pub fn ridge_primal(p: &RidgeProblem) -> Result<Mat> {
    let h = &p.design;
    let chol = spd_factor(h.tr_mul(h), p.lambda)?;
    Ok(chol.solve(&h.tr_mul(&p.targets)))
}

/// `Hᵀ(HHᵀ + λI)⁻¹y`.
pub fn ridge_dual(p: &RidgeProblem) -> Result<Mat> {
    let h = &p.design;
    let chol = spd_factor(h * h.transpose(), p.lambda)?;
    Ok(h.tr_mul(&chol.solve(&p.targets)))
}

/// Picks the cheaper of the two closed forms.
pub fn ridge(p: &RidgeProblem) -> Result<Mat> {
    if p.design.nrows() < p.design.ncols() {
        ridge_dual(p)
    } else {
        ridge_primal(p)
    }
}

pub fn soft_threshold_scalar(v: f64, kappa: f64) -> f64 {
    v.signum() * (v.abs() - kappa).max(0.0)
}

/// Coordinate-wise shrinkage `sign(v)·max(|v| − κ, 0)`.
pub fn soft_threshold(v: &Vector, kappa: f64) -> Vector {
    v.map(|x| soft_threshold_scalar(x, kappa))
}

pub fn soft_threshold_mat(v: &Mat, kappa: f64) -> Mat {
    v.map(|x| soft_threshold_scalar(x, kappa))
}

/// `(HᵀH + γI)⁻¹` through the `N×N` system `γI + HHᵀ`.
pub fn inversion_lemma_gram(h: &Mat, gamma: f64) -> Result<Mat> {
    if !(gamma > 0.0) {
        return invalid("gamma must be positive");
    }
    let b = h.ncols();
    let chol = spd_factor(h * h.transpose(), gamma)?;
    let inner = h.tr_mul(&chol.solve(h));
    Ok((Mat::identity(b, b) - inner) / gamma)
}

/// `(HᵀH + γI)⁻¹`, choosing the smaller factorization.
pub fn gram_inverse(h: &Mat, gamma: f64) -> Result<Mat> {
    if h.nrows() < h.ncols() {
        inversion_lemma_gram(h, gamma)
    } else {
        let b = h.ncols();
        Ok(spd_factor(h.tr_mul(h), gamma)?.solve(&Mat::identity(b, b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn rand_mat(r: usize, c: usize, seed: u64) -> Mat {
        let mut rng = crate::rng_from_seed(seed);
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_design() {
        let p = RidgeProblem::new(Mat::identity(3, 3), Mat::from_column_slice(3, 1, &[1., 2., 3.]), 1e-12).unwrap();
        let b = ridge_primal(&p).unwrap();
        for i in 0..3 {
            assert!((b[i] - (i + 1) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn heavy_shrinkage() {
        let h = rand_mat(10, 4, 1);
        let y = rand_mat(10, 1, 2);
        let p = RidgeProblem::new(h.clone(), y.clone(), 1e6).unwrap();
        assert!(ridge_primal(&p).unwrap().norm() < 1e-3 * h.tr_mul(&y).norm());
        assert!(ridge_dual(&p).unwrap().norm() < 1e-5);
    }

    #[test]
    fn matches_gradient_descent() {
        let h = rand_mat(20, 5, 3);
        let y = rand_mat(20, 1, 4);
        let lambda = 0.7;
        let p = RidgeProblem::new(h.clone(), y.clone(), lambda).unwrap();
        let exact = ridge_primal(&p).unwrap();
        // independent oracle: plain gradient descent on the objective
        let step = 1.0 / ((h.tr_mul(&h)).norm() + lambda);
        let mut b = Mat::zeros(5, 1);
        for _ in 0..20000 {
            let g = h.tr_mul(&(&h * &b - &y)) + &b * lambda;
            b -= g * step;
        }
        assert!((b - exact).norm() < 1e-6);
    }

    #[test]
    fn dual_scalar_case() {
        let p = RidgeProblem::new(Mat::from_row_slice(1, 2, &[1.0, 0.0]), Mat::from_element(1, 1, 1.0), 1.0).unwrap();
        let b = ridge_dual(&p).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-15 && b[1].abs() < 1e-15);
    }

    #[test]
    fn primal_equals_dual_wide() {
        let p = RidgeProblem::new(rand_mat(5, 50, 5), rand_mat(5, 1, 6), 0.3).unwrap();
        let a = ridge_primal(&p).unwrap();
        let b = ridge_dual(&p).unwrap();
        assert!((&a - &b).norm() / a.norm() < 1e-8);
    }

    #[test]
    fn shrink_examples() {
        let v = Vector::from_vec(vec![3.0, -1.0, 0.5]);
        assert_eq!(soft_threshold(&v, 1.0), Vector::from_vec(vec![2.0, 0.0, 0.0]));
        assert_eq!(soft_threshold(&v, 0.0), v);
        assert_eq!(soft_threshold_scalar(-3.0, 1.0), -2.0);
    }

    #[test]
    fn lasso_admm_matches_coordinate_descent() {
        let h = rand_mat(10, 4, 7);
        let y = Vector::from_iterator(10, rand_mat(10, 1, 8).iter().copied());
        let lam = 0.5;
        // ADMM with the shrinkage operator
        let rho = 1.0;
        let chol = spd_factor(h.tr_mul(&h), rho).unwrap();
        let hty = h.tr_mul(&y);
        let (mut z, mut u) = (Vector::zeros(4), Vector::zeros(4));
        for _ in 0..5000 {
            let x = chol.solve(&(&hty + (&z - &u) * rho));
            z = soft_threshold(&(&x + &u), lam / rho);
            u += x - &z;
        }
        // coordinate descent oracle on ½‖Hx−y‖² + λ‖x‖₁
        let mut x = Vector::zeros(4);
        for _ in 0..5000 {
            for j in 0..4 {
                let col = h.column(j);
                let r = &y - &h * &x + col * x[j];
                x[j] = soft_threshold_scalar(col.dot(&r), lam) / col.norm_squared();
            }
        }
        assert!((z - x).amax() < 1e-4);
    }

    #[test]
    fn inversion_lemma_cases() {
        let z = inversion_lemma_gram(&Mat::zeros(3, 4), 2.0).unwrap();
        assert!((z - Mat::identity(4, 4) * 0.5).norm() < 1e-15);
        for (r, c, g, s) in [(3, 10, 1.0, 1), (50, 5, 0.1, 2)] {
            let h = rand_mat(r, c, s);
            let direct = spd_factor(h.tr_mul(&h), g).unwrap().inverse();
            let lem = inversion_lemma_gram(&h, g).unwrap();
            assert!((&lem - &direct).norm() / direct.norm() < 1e-8);
        }
    }
}
