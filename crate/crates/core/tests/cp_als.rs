//! CP-ALS fits, rank curves and surrogate ranks on tensors of known rank.

mod common;

use common::*;
use proptest::prelude::*;
use rankfuse_core::cp::{cp_als, cp_als_traced, rank_curve, surrogate_rank, AlsConfig, RankCurve};
use rankfuse_core::tensor::outer_product;
use rankfuse_core::{DenseTensor, Error};

#[test]
fn exact_rank_one_input() {
    let t = outer_product(&[vec![1.0, 2.0], vec![1.0, 1.0], vec![2.0, 1.0]]).unwrap();
    let (f, eps) = cp_als(&t, 1, &AlsConfig::default()).unwrap();
    assert!(eps <= 1e-6, "{eps}");
    assert!(f.is_normalized(1e-9));
}

#[test]
fn known_rank_three_is_recovered() {
    let t = low_rank_tensor(&[6, 6, 6], 3, 10);
    let cfg = AlsConfig {
        restarts: 5,
        ..AlsConfig::default()
    };
    let (_, e3) = cp_als(&t, 3, &cfg).unwrap();
    let (_, e1) = cp_als(&t, 1, &cfg).unwrap();
    assert!(e3 <= 1e-4, "{e3}");
    assert!(e1 > 10.0 * e3);
}

#[test]
fn zero_tensor_and_bad_input() {
    let z = DenseTensor::zeros(vec![2, 3, 2]).unwrap();
    let (f, eps) = cp_als(&z, 2, &AlsConfig::default()).unwrap();
    assert_eq!(eps, 0.0);
    assert!(f.weights().iter().all(|&w| w == 0.0));

    let nan = DenseTensor::new(vec![1, 2], vec![1.0, f64::NAN]).unwrap();
    assert!(matches!(cp_als(&nan, 1, &AlsConfig::default()), Err(Error::InvalidArgument(_))));
    assert!(cp_als(&z, 0, &AlsConfig::default()).is_err());
    let bad = AlsConfig {
        restarts: 0,
        ..AlsConfig::default()
    };
    assert!(cp_als(&z, 1, &bad).is_err());
}

#[test]
fn rank_curves_of_known_tensors() {
    let cfg = AlsConfig::default();
    let t1 = outer_product(&[vec![1.0, -2.0, 0.5], vec![3.0, 1.0], vec![1.0, 1.0, 2.0]]).unwrap();
    let c1 = rank_curve(&t1, &[1, 2, 3], &cfg).unwrap();
    assert!(c1.points().iter().all(|&(_, e)| e <= 1e-6));

    let t3 = low_rank_tensor(&[6, 6, 6], 3, 11);
    let curve = rank_curve(&t3, &[1, 2, 3, 4], &AlsConfig { restarts: 5, ..cfg }).unwrap();
    let e = |r| curve.epsilon_at(r).unwrap();
    assert!(e(2) > 100.0 * e(3), "{:?}", curve.points());
    assert!(e(3) <= 1e-4);
    assert_eq!(surrogate_rank(&curve, 0.05).unwrap().rank, 3);
    // Running minimum: never increasing.
    assert!(curve.points().windows(2).all(|w| w[1].1 <= w[0].1));
}

#[test]
fn surrogate_rank_rules() {
    let c = RankCurve::new(vec![(1, 0.0)]).unwrap();
    let r = surrogate_rank(&c, 0.05).unwrap();
    assert_eq!((r.rank, r.saturated), (1, false));
    let c = RankCurve::new(vec![(1, 0.5), (2, 0.2), (4, 0.1)]).unwrap();
    let r = surrogate_rank(&c, 0.05).unwrap();
    assert_eq!((r.rank, r.saturated), (4, true));
    assert!(RankCurve::new(vec![(2, 0.1), (2, 0.05)]).is_err());
    assert!(RankCurve::new(vec![(1, -0.1)]).is_err());
}

#[test]
fn gaussian_tensor_has_higher_surrogate_rank_than_rank_two() {
    let cfg = AlsConfig::default();
    let ranks: Vec<usize> = (1..=8).collect();
    let noise = gaussian_tensor(&[8, 8, 8], &mut gen(12));
    let low = low_rank_tensor(&[8, 8, 8], 2, 13);
    let r_noise = surrogate_rank(&rank_curve(&noise, &ranks, &cfg).unwrap(), 0.05).unwrap();
    let r_low = surrogate_rank(&rank_curve(&low, &ranks, &cfg).unwrap(), 0.05).unwrap();
    assert_eq!(r_low.rank, 2);
    assert!(r_noise.rank > r_low.rank);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn objective_is_monotone(seed in any::<u64>(), rank in 1usize..5, true_rank in 1usize..5) {
        let t = low_rank_tensor(&[4, 5, 3], true_rank, seed);
        let noisy = DenseTensor::new(
            t.shape().to_vec(),
            t.data().iter().zip(gaussian_tensor(&[4, 5, 3], &mut gen(seed ^ 1)).data()).map(|(a, b)| a + 0.1 * b).collect(),
        ).unwrap();
        let out = cp_als_traced(&noisy, rank, &AlsConfig { seed, restarts: 1, ..AlsConfig::default() }).unwrap();
        for w in out.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10, "{:?}", out.trace);
        }
    }

    #[test]
    fn scale_equivariance(seed in any::<u64>(), rank in 1usize..4, c in prop_oneof![0.001f64..0.1, 10.0f64..1000.0]) {
        let t = gaussian_tensor(&[3, 4, 3], &mut gen(seed));
        let cfg = AlsConfig { seed, ..AlsConfig::default() };
        let (_, e) = cp_als(&t, rank, &cfg).unwrap();
        let (_, ec) = cp_als(&t.scaled(c), rank, &cfg).unwrap();
        prop_assert!((e - ec).abs() <= 1e-6, "{} vs {}", e, ec);
    }
}
