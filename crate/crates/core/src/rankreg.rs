//! Nuclear-norm machinery.
//!
//! The tensor nuclear norm is intractable for order ≥ 3, so training
//! penalizes the dimension-scaled Frobenius bound
//! `‖𝒳‖_* ≤ √(Π d_i / max d_i) · ‖𝒳‖_F`. For the temporally fused tensor
//! `ℳ = Σ_t a_t ⊗ b_t ⊗ c_t` the squared Frobenius norm has the closed form
//! `Σ_{t,t'} ⟨a_t,a_t'⟩⟨b_t,b_t'⟩⟨c_t,c_t'⟩`, which is what
//! [`fused_frobenius_sq`] evaluates.

use alloc::format;

use crate::linalg::singular_values;
use crate::matrix::Matrix;
use crate::tensor::DenseTensor;
use crate::{Error, Result};

/// Sum of singular values.
pub fn nuclear_norm_matrix(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub frobenius: f64,
    /// `√(Π d_i / max d_i)`.
    pub scale: f64,
    /// `scale · frobenius`.
    pub bound: f64,
}

/// `√(Π d_i / max d_i)` for a tensor of the given shape.
pub fn bound_scale(shape: &[usize]) -> Result<f64> {
    if shape.len() < 2 {
        return Err(Error::invalid(format!(
            "nuclear norm bound needs order >= 2, got order {}",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(Error::invalid("zero dimension in shape"));
    }
    let prod: f64 = shape.iter().map(|&d| d as f64).product();
    let max = *shape.iter().max().expect("nonempty") as f64;
    Ok(libm::sqrt(prod / max))
}

/// Frobenius upper bound on the nuclear norm of `t`.
pub fn nuclear_upper_bound(t: &DenseTensor) -> Result<BoundReport> {
    let scale = bound_scale(t.shape())?;
    let frobenius = t.frobenius_norm();
    Ok(BoundReport {
        frobenius,
        scale,
        bound: scale * frobenius,
    })
}

fn check_rows(hl: &Matrix, hv: &Matrix, ha: &Matrix) -> Result<()> {
    if hl.rows() != hv.rows() || hl.rows() != ha.rows() {
        return Err(Error::invalid(format!(
            "fused inputs need equal row counts, got {}, {}, {}",
            hl.rows(),
            hv.rows(),
            ha.rows()
        )));
    }
    Ok(())
}

/// `‖Σ_t hl_t ⊗ hv_t ⊗ ha_t‖_F²` through the Gram identity; rows are time steps.
pub fn fused_frobenius_sq(hl: &Matrix, hv: &Matrix, ha: &Matrix) -> Result<f64> {
    check_rows(hl, hv, ha)?;
    let mut g = hl.outer_gram();
    g.hadamard_assign(&hv.outer_gram());
    g.hadamard_assign(&ha.outer_gram());
    Ok(g.data().iter().sum())
}

/// [`fused_frobenius_sq`] together with its gradient with respect to each input matrix.
pub fn fused_frobenius_sq_with_grad(
    hl: &Matrix,
    hv: &Matrix,
    ha: &Matrix,
) -> Result<(f64, [Matrix; 3])> {
    check_rows(hl, hv, ha)?;
    let grams = [hl.outer_gram(), hv.outer_gram(), ha.outer_gram()];
    let mut total = grams[0].clone();
    total.hadamard_assign(&grams[1]);
    total.hadamard_assign(&grams[2]);
    let value = total.data().iter().sum();

    let inputs = [hl, hv, ha];
    let grad = core::array::from_fn(|m| {
        // d/dH_m = 2 · (∘_{k≠m} G_k) · H_m, all Grams being symmetric
        let mut coupling = Matrix::from_fn(hl.rows(), hl.rows(), |_, _| 2.0);
        for (k, g) in grams.iter().enumerate() {
            if k != m {
                coupling.hadamard_assign(g);
            }
        }
        coupling.matmul(inputs[m]).expect("square coupling")
    });
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identity_and_diagonal() {
        assert!((nuclear_norm_matrix(&Matrix::identity(2)).unwrap() - 2.0).abs() < 1e-14);
        let d = Matrix::from_rows(&[[3.0, 0.0], [0.0, 4.0]]).unwrap();
        assert!((nuclear_norm_matrix(&d).unwrap() - 7.0).abs() < 1e-14);
    }

    #[test]
    fn non_finite_rejected() {
        let m = Matrix::from_rows(&[[1.0, f64::INFINITY]]).unwrap();
        assert!(matches!(nuclear_norm_matrix(&m), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn identity_bound_is_tight() {
        let r = nuclear_upper_bound(&DenseTensor::from(Matrix::identity(2))).unwrap();
        assert!((r.scale - 2f64.sqrt()).abs() < 1e-15);
        assert!((r.bound - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bound_by_substitution() {
        let n = 60f64.sqrt();
        let t = DenseTensor::from_fn(vec![3, 4, 5], |_| 1.0 / n).unwrap();
        let r = nuclear_upper_bound(&t).unwrap();
        assert!((r.frobenius - 1.0).abs() < 1e-12);
        assert!((r.bound - 12f64.sqrt()).abs() < 1e-12);
        assert!((r.bound - 3.46410).abs() < 1e-5);
    }

    #[test]
    fn order_one_rejected() {
        let t = DenseTensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(nuclear_upper_bound(&t).is_err());
    }

    #[test]
    fn single_step_is_product_of_norms() {
        let a = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[[2.0, 1.0]]).unwrap();
        let c = Matrix::from_rows(&[[0.5, 1.0, 1.0]]).unwrap();
        let v = fused_frobenius_sq(&a, &b, &c).unwrap();
        assert!((v - 2.0 * 5.0 * 2.25).abs() < 1e-12);
    }

    #[test]
    fn zero_hidden_states_leave_the_corner() {
        let h = Matrix::from_rows(&[[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(fused_frobenius_sq(&h, &h, &h).unwrap(), 9.0);
    }

    #[test]
    fn row_mismatch_rejected() {
        let a = Matrix::zeros(2, 2);
        let b = Matrix::zeros(3, 2);
        assert!(fused_frobenius_sq(&a, &a, &b).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let hl = Matrix::from_rows(&[[0.3, -0.2, 1.0], [0.5, 0.1, 1.0]]).unwrap();
        let hv = Matrix::from_rows(&[[0.7, 1.0], [-0.4, 1.0]]).unwrap();
        let ha = Matrix::from_rows(&[[0.2, 0.9, 1.0], [0.6, -0.3, 1.0]]).unwrap();
        let (_, grads) = fused_frobenius_sq_with_grad(&hl, &hv, &ha).unwrap();
        let inputs = [hl, hv, ha];
        for m in 0..3 {
            for k in 0..inputs[m].data().len() {
                let eval = |delta: f64| {
                    let mut p = inputs.clone();
                    p[m].data_mut()[k] += delta;
                    fused_frobenius_sq(&p[0], &p[1], &p[2]).unwrap()
                };
                let fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
                assert!((fd - grads[m].data()[k]).abs() < 1e-6);
            }
        }
    }
}
