//! Tensor primitives checked against independent brute-force oracles.

mod common;

use common::*;
use proptest::prelude::*;
use rankfuse_core::tensor::{fold, frobenius_norm, khatri_rao, outer_product, reconstruct, unfold, CpFactors};
use rankfuse_core::{DenseTensor, Matrix};

#[test]
fn frobenius_matches_direct_summation() {
    let mut g = gen(1);
    let t = gaussian_tensor(&[3, 4, 5], &mut g);
    let mut sum = 0.0;
    for i in 0..3 {
        for j in 0..4 {
            for k in 0..5 {
                sum += t.get(&[i, j, k]).powi(2);
            }
        }
    }
    assert!(rel_diff(frobenius_norm(&t), sum.sqrt()) < 1e-14);
}

#[test]
fn khatri_rao_matches_kronecker_oracle() {
    let mut g = gen(2);
    let a = gaussian_matrix(3, 2, &mut g);
    let b = gaussian_matrix(4, 2, &mut g);
    let kr = khatri_rao(&a, &b).unwrap();
    assert_eq!(kr.shape(), (12, 2));
    for col in 0..2 {
        // Kronecker product of the two columns, built independently.
        let mut kron = Vec::new();
        for i in 0..3 {
            for j in 0..4 {
                kron.push(a.get(i, col) * b.get(j, col));
            }
        }
        for (row, v) in kron.iter().enumerate() {
            assert_eq!(kr.get(row, col), *v);
        }
    }
}

#[test]
fn reconstruct_matches_triple_loop() {
    let mut g = gen(3);
    let f = random_factors(&[4, 4, 4], 3, &mut g);
    let weights = [0.5, -1.25, 2.0];
    let f = CpFactors::new(weights.to_vec(), f.factors().to_vec()).unwrap();
    let t = reconstruct(&f);
    let [a, b, c] = [&f.factors()[0], &f.factors()[1], &f.factors()[2]];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                let mut v = 0.0;
                for r in 0..3 {
                    v += weights[r] * a.get(i, r) * b.get(j, r) * c.get(k, r);
                }
                assert!((t.get(&[i, j, k]) - v).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn unfolding_of_outer_product_is_rank_one() {
    let mut g = gen(4);
    let vs: Vec<Vec<f64>> = [3, 2, 4].iter().map(|&n| gaussian_vec(n, &mut g)).collect();
    let t = outer_product(&vs).unwrap();
    for mode in 0..3 {
        let others: Vec<&Vec<f64>> = (0..3).filter(|&m| m != mode).map(|m| &vs[m]).collect();
        // Columns enumerate the remaining modes, last one fastest.
        let mut kr = Vec::new();
        for &x in others[0].iter() {
            for &y in others[1].iter() {
                kr.push(x * y);
            }
        }
        let expected = Matrix::from_fn(vs[mode].len(), kr.len(), |i, j| vs[mode][i] * kr[j]);
        let u = unfold(&t, mode).unwrap();
        for (x, y) in u.data().iter().zip(expected.data()) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

#[test]
fn invalid_arguments() {
    let empty: [Vec<f64>; 0] = [];
    assert!(outer_product(&empty).is_err());
    let t = DenseTensor::zeros(vec![2, 2]).unwrap();
    assert!(unfold(&t, 2).is_err());
    assert!(khatri_rao(&Matrix::zeros(2, 2), &Matrix::zeros(2, 3)).is_err());
}

fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 1..5)
}

proptest! {
    #[test]
    fn outer_product_scaling(seed in any::<u64>(), shape in shape_strategy(), which in 0usize..4, c in -5.0f64..5.0) {
        let mut g = gen(seed);
        let mut vs: Vec<Vec<f64>> = shape.iter().map(|&n| gaussian_vec(n, &mut g)).collect();
        let base = outer_product(&vs).unwrap().frobenius_norm();
        let k = which % vs.len();
        vs[k].iter_mut().for_each(|v| *v *= c);
        let scaled = outer_product(&vs).unwrap().frobenius_norm();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * (1.0 + c.abs() * base));
    }

    #[test]
    fn gram_formula_matches_reconstruction(seed in any::<u64>(), shape in prop::collection::vec(1usize..5, 2..5), rank in 1usize..5) {
        let mut g = gen(seed);
        let f = random_factors(&shape, rank, &mut g);
        let weights: Vec<f64> = (0..rank).map(|_| normal(&mut g)).collect();
        let f = CpFactors::new(weights.clone(), f.factors().to_vec()).unwrap();
        let direct = reconstruct(&f).frobenius_norm().powi(2);
        let grams: Vec<Matrix> = f.factors().iter().map(Matrix::gram).collect();
        let mut formula = 0.0;
        for i in 0..rank {
            for j in 0..rank {
                formula += weights[i] * weights[j] * grams.iter().map(|gm| gm.get(i, j)).product::<f64>();
            }
        }
        prop_assert!(rel_diff(direct, formula) < 1e-8 || direct < 1e-12);
    }

    #[test]
    fn unfold_fold_round_trip(seed in any::<u64>(), shape in shape_strategy()) {
        let mut g = gen(seed);
        let t = gaussian_tensor(&shape, &mut g);
        for mode in 0..shape.len() {
            let back = fold(&unfold(&t, mode).unwrap(), mode, &shape).unwrap();
            prop_assert_eq!(&back, &t);
            let bits: Vec<u64> = back.data().iter().map(|v| v.to_bits()).collect();
            let orig: Vec<u64> = t.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, orig);
        }
    }
}
