mod common;

use cutexplore::geometry::{bounding_box, l2_distance, lp_distance, sample_in_hyperball, sample_uniform_box};
use cutexplore::{BoundingBox, Norm, RngStream};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn small_ball_mean_and_radius() {
    let eps = 0.1;
    let mut rng = RngStream::new(2024, 0).rng();
    let draws: Vec<Vec<f64>> = (0..1000).map(|_| sample_in_hyperball(&[5.0, 5.0], eps, &mut rng).unwrap()).collect();
    assert!(draws.iter().all(|q| l2_distance(q, &[5.0, 5.0]) <= eps));
    for axis in 0..2 {
        let m = draws.iter().map(|q| q[axis]).sum::<f64>() / 1000.0;
        assert!((m - 5.0).abs() < 0.02, "axis {axis} mean {m}");
    }
    // Radius of a uniform disk draw: E = 2ε/3, Var = ε²/18.
    let radii: Vec<f64> = draws.iter().map(|q| l2_distance(q, &[5.0, 5.0])).collect();
    let (m, _) = common::mean_var(&radii);
    let se = eps / 18f64.sqrt() / 1000f64.sqrt();
    assert!((m - 2.0 * eps / 3.0).abs() < 3.0 * se, "mean radius {m}");
}

#[test]
fn one_dimensional_ball_is_uniform() {
    let mut rng = RngStream::new(77, 0).rng();
    let xs: Vec<f64> = (0..10_000).map(|_| sample_in_hyperball(&[0.0], 2.0, &mut rng).unwrap()[0]).collect();
    let d = common::ks_statistic(xs, |x| ((x + 2.0) / 4.0).clamp(0.0, 1.0));
    // Asymptotic KS critical value at significance 0.01.
    assert!(d < 1.628 / 100.0, "KS statistic {d}");
}

#[test]
fn three_dimensional_ball_radius_law() {
    // P(r <= t) = (t/ε)^3 for a uniform ball in R^3.
    let mut rng = RngStream::new(5, 0).rng();
    let radii: Vec<f64> =
        (0..10_000).map(|_| l2_distance(&sample_in_hyperball(&[1.0, 2.0, 3.0], 0.5, &mut rng).unwrap(), &[1.0, 2.0, 3.0])).collect();
    let d = common::ks_statistic(radii, |t| (t / 0.5).clamp(0.0, 1.0).powi(3));
    assert!(d < 1.628 / 100.0, "KS statistic {d}");
}

#[test]
fn hyperball_containment_fuzz() {
    let mut meta = RngStream::new(1, 0).rng();
    for _ in 0..100_000 {
        let m = meta.random_range(1..=8);
        let center: Vec<f64> = (0..m).map(|_| meta.random_range(-100.0..100.0)).collect();
        let eps = 10f64.powf(meta.random_range(-6.0..3.0));
        let q = sample_in_hyperball(&center, eps, &mut meta).unwrap();
        assert!(l2_distance(&center, &q) <= eps, "eps {eps} center {center:?}");
    }
}

#[test]
fn uniform_box_mean() {
    let b = BoundingBox::new(vec![0.0], vec![10.0]).unwrap();
    let mut rng = RngStream::new(3, 0).rng();
    let m = (0..10_000).map(|_| sample_uniform_box(&b, &mut rng)[0]).sum::<f64>() / 10_000.0;
    assert!((4.7..=5.3).contains(&m), "mean {m}");
}

#[test]
fn seeded_draws_repeat() {
    let a: Vec<Vec<f64>> = {
        let mut rng = RngStream::new(8, 2).rng();
        (0..10).map(|_| sample_in_hyperball(&[0.0, 0.0], 1.0, &mut rng).unwrap()).collect()
    };
    let b: Vec<Vec<f64>> = {
        let mut rng = RngStream::new(8, 2).rng();
        (0..10).map(|_| sample_in_hyperball(&[0.0, 0.0], 1.0, &mut rng).unwrap()).collect()
    };
    assert_eq!(a, b);
}

#[test]
fn triangle_inequality_fuzz() {
    let mut rng = RngStream::new(4, 0).rng();
    for _ in 0..10_000 {
        let m = rng.random_range(1..=6);
        let mut p = || (0..m).map(|_| rng.random_range(-10.0..10.0)).collect::<Vec<f64>>();
        let (a, b, c) = (p(), p(), p());
        for norm in [Norm::L1, Norm::L2, Norm::Infinity] {
            let ab = lp_distance(&a, &b, norm).unwrap();
            let bc = lp_distance(&b, &c, norm).unwrap();
            let ac = lp_distance(&a, &c, norm).unwrap();
            assert!(ac <= ab + bc + 1e-9 * (1.0 + ab + bc));
            assert_eq!(ab, lp_distance(&b, &a, norm).unwrap());
        }
    }
}

proptest! {
    #[test]
    fn box_is_idempotent_under_duplication(pts in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..40)) {
        let once = bounding_box(pts.iter().map(|p| p.as_slice())).unwrap();
        let twice = bounding_box(pts.iter().chain(pts.iter()).map(|p| p.as_slice())).unwrap();
        prop_assert_eq!(&once, &twice);
        for p in &pts {
            prop_assert!(once.contains(p));
        }
        // Tight: every face touches a point.
        for i in 0..3 {
            prop_assert!(pts.iter().any(|p| p[i] == once.min[i]));
            prop_assert!(pts.iter().any(|p| p[i] == once.max[i]));
        }
    }
}
