//! Property tests across modules.

use clusterpp::calculus::beta_vector;
use clusterpp::configspace::{project_lifted, ClusterVector, LiftedConfiguration, SmoothTestFunction, Window};
use clusterpp::laplace::laplace_poisson_closed;
use clusterpp::measures::{ClusterProcessModel, IntensityModel};
use clusterpp::quasiinv::CompactDiffeo;
use clusterpp::sampler::{sample_lifted, sample_poisson};
use clusterpp::stats::substream;
use proptest::prelude::*;

fn cluster() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_keeps_every_point(clusters in prop::collection::vec(cluster(), 0..6)) {
        let lifted = LiftedConfiguration::new(clusters.iter().map(|c| ClusterVector::scalar(c)).collect());
        let total: usize = clusters.iter().map(Vec::len).sum();
        prop_assert_eq!(project_lifted(&lifted).total() as usize, total);
    }

    #[test]
    fn gaussian_beta_is_translation_invariant(y in cluster(), shift in -2.0..2.0f64) {
        let m = ClusterProcessModel::gaussian_lebesgue(vec![1.3], vec![0.0, 0.25, 0.25, 0.25, 0.25]).unwrap();
        let b = beta_vector(&m, &ClusterVector::scalar(&y)).unwrap();
        let moved: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let c = beta_vector(&m, &ClusterVector::scalar(&moved)).unwrap();
        prop_assert!(b.iter().sum::<f64>().abs() < 1e-12);
        for (u, v) in b.iter().zip(&c) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn diffeo_round_trip(c in -1.0..1.0f64, r in 0.3..2.0f64, eps in -0.2..0.2f64, x in -3.0..3.0f64) {
        let phi = CompactDiffeo::new(SmoothTestFunction::bump(vec![c], r, 1.0), vec![1.0], eps).unwrap();
        let y = phi.apply(&[x]);
        prop_assert!((phi.apply_inverse(&y)[0] - x).abs() < 1e-10);
        prop_assert!(phi.jacobian(&[x]) > 0.0);
    }

    #[test]
    fn poisson_laplace_decreases_with_amplitude(a in 0.1..3.0f64, extra in 0.01..2.0f64) {
        let lam = IntensityModel::lebesgue();
        let lo = laplace_poisson_closed(&lam, &SmoothTestFunction::bump(vec![0.0], 1.0, a)).unwrap().value;
        let hi = laplace_poisson_closed(&lam, &SmoothTestFunction::bump(vec![0.0], 1.0, a + extra)).unwrap().value;
        prop_assert!(hi < lo && lo < 1.0 && hi > 0.0);
    }

    #[test]
    fn samplers_are_seed_deterministic(seed in any::<u64>()) {
        let w = Window::interval(0.0, 3.0).unwrap();
        let lam = IntensityModel::lebesgue();
        prop_assert_eq!(sample_poisson(&lam, &w, &mut substream(seed, 0)).unwrap(), sample_poisson(&lam, &w, &mut substream(seed, 0)).unwrap());
        let m = ClusterProcessModel::gaussian_lebesgue(vec![1.0], vec![0.2, 0.4, 0.4]).unwrap();
        let a = sample_lifted(&m, &w, &mut substream(seed, 1)).unwrap();
        let b = sample_lifted(&m, &w, &mut substream(seed, 1)).unwrap();
        prop_assert!(a.clusters().iter().all(|x| x.meets(&w.bounds())));
        prop_assert_eq!(a, b);
    }
}
