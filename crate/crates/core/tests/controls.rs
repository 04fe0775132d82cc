//! Negative controls: checks that must fail when the model is wrong.

use clusterpp::catalog;
use clusterpp::configspace::Window;
use clusterpp::dynamics::{direct_ensemble, simulate, stationarity_report, StepConfig};
use clusterpp::laplace::{laplace_empirical, laplace_mucl_closed};
use clusterpp::measures::ClusterProcessModel;
use clusterpp::sampler::sample_mucl_many;

#[test]
fn negated_drift_is_flagged() {
    let model = ClusterProcessModel::gaussian_lebesgue(vec![0.5], vec![0.0, 0.0, 1.0]).unwrap();
    let k = Window::interval(0.0, 2.0).unwrap();
    let obs = catalog::observables(1);
    let step = StepConfig { dt: 1e-3, drift_scale: -1.0 };
    let table = simulate(&model, &k, 1.0, step, 1000, &obs, &[1.0], 7).unwrap();
    let reference = direct_ensemble(&model, &k, &obs, 1000, 8).unwrap();
    let report = stationarity_report(&table, &reference, 0.01);
    let worst = report
        .entries
        .iter()
        .flat_map(|e| [e.mean_drift, e.variance_drift])
        .map(|e| (e.mean / e.se).abs())
        .fold(0.0, f64::max);
    println!("negated drift: max |z| = {worst:.2}, KS flagged = {}", report.any_flagged());
    assert!(worst > 3.0 || report.any_flagged(), "{report:?}");
}

#[test]
fn wrong_cluster_law_breaks_projection_identity() {
    let truth = ClusterProcessModel::gaussian_lebesgue(vec![1.0], vec![0.0, 0.0, 1.0]).unwrap();
    let wrong = ClusterProcessModel::gaussian_lebesgue(vec![1.0], vec![0.0, 1.0]).unwrap();
    let f = &catalog::laplace_functions(1)[0];
    let k = Window::interval(-1.0, 3.0).unwrap();
    let samples = sample_mucl_many(&truth, &k, 20_000, 3).unwrap();
    let emp = laplace_empirical(&samples, f).unwrap();
    let closed = laplace_mucl_closed(&wrong, f, 4).unwrap();
    assert!(!emp.minus(&closed.value).within(0.0, 3.0));
}
