//! Fixed test functions, vector fields, cylinder functions and
//! diffeomorphisms shared by the CLI defaults and the acceptance suite.
//!
//! Every item is built from a scalar centre replicated across coordinates, so
//! the catalog exists in any dimension; in one dimension the supports lie in
//! `[-1.5, 2.5]`.

use crate::calculus::CylinderVectorField;
use crate::configspace::{CylinderFunction, OuterFunction, Profile, SmoothTestFunction, SmoothVectorField};
use crate::quasiinv::CompactDiffeo;

fn at(x: f64, d: usize) -> Vec<f64> {
    vec![x; d]
}

fn bump(c: f64, r: f64, a: f64, d: usize) -> SmoothTestFunction {
    SmoothTestFunction::bump(at(c, d), r, a)
}

/// Unit diagonal direction.
pub fn direction(d: usize) -> Vec<f64> {
    vec![1.0 / (d as f64).sqrt(); d]
}

/// Five nonnegative bumps.
pub fn bumps(d: usize) -> Vec<SmoothTestFunction> {
    vec![
        bump(0.5, 0.5, 1.0, d),
        bump(1.0, 0.8, 0.5, d),
        bump(1.5, 0.4, 2.0, d),
        bump(0.8, 1.0, 1.5, d),
        bump(0.2, 0.3, 3.0, d),
    ]
}

/// Nonnegative functions for Laplace functionals: two bumps and a plateau.
pub fn laplace_functions(d: usize) -> Vec<SmoothTestFunction> {
    vec![
        bump(0.5, 1.0, 1.0, d),
        bump(1.2, 0.6, 2.0, d),
        SmoothTestFunction::plateau(at(0.3, d), at(1.0, d), 0.3, 0.5),
    ]
}

/// Observables for the dynamics.
pub fn observables(d: usize) -> Vec<SmoothTestFunction> {
    vec![
        bump(1.0, 1.0, 1.0, d),
        bump(0.5, 0.5, 2.0, d),
        SmoothTestFunction::plateau(at(0.5, d), at(1.5, d), 0.25, 1.0),
    ]
}

/// Three cylinder functions: two single pairings and a two-pairing composite.
pub fn cylinders(d: usize) -> Vec<CylinderFunction> {
    vec![
        CylinderFunction::of_pairing(Profile::Tanh, bump(0.5, 1.0, 1.0, d)),
        CylinderFunction::of_pairing(Profile::Gauss, bump(1.0, 0.8, 1.5, d)),
        CylinderFunction::new(
            OuterFunction::apply(Profile::Sin, OuterFunction::linear(vec![1.0, -0.5], 0.3)),
            vec![bump(0.3, 0.7, 1.0, d), bump(1.2, 0.9, 2.0, d)],
        ),
    ]
}

/// Three vector fields `b(x) u` along the diagonal direction.
pub fn fields(d: usize) -> Vec<SmoothVectorField> {
    let u = direction(d);
    vec![
        SmoothVectorField::along(&u, bump(0.2, 1.2, 1.0, d)),
        SmoothVectorField::along(&u, bump(0.8, 0.7, -0.5, d)),
        SmoothVectorField::along(&u, bump(0.0, 1.5, 0.7, d)),
    ]
}

/// Three fields with configuration-dependent coefficients.
pub fn cylinder_fields(d: usize) -> Vec<CylinderVectorField> {
    let v = fields(d);
    vec![
        CylinderVectorField::new(vec![(CylinderFunction::of_pairing(Profile::Tanh, bump(0.6, 0.9, 1.0, d)), v[0].clone())]),
        CylinderVectorField::new(vec![
            (CylinderFunction::of_pairing(Profile::Gauss, bump(0.9, 1.0, 1.0, d)), v[1].clone()),
            (CylinderFunction::constant(0.5), v[2].clone()),
        ]),
        CylinderVectorField::new(vec![
            (CylinderFunction::of_pairing(Profile::Sin, bump(0.4, 1.1, 1.0, d)), v[2].clone()),
            (CylinderFunction::of_pairing(Profile::Identity, bump(1.0, 0.6, 1.0, d)), v[0].clone()),
        ]),
    ]
}

/// Three bump-driven diffeomorphisms `x + ε b(x) u`.
pub fn diffeos(d: usize) -> Vec<CompactDiffeo> {
    let u = direction(d);
    [(bump(0.5, 1.0, 1.0, d), 0.1), (bump(1.0, 0.7, 1.0, d), -0.08), (bump(0.2, 1.5, 2.0, d), 0.15)]
        .into_iter()
        .map(|(b, eps)| CompactDiffeo::new(b, u.clone(), eps).expect("catalog diffeomorphisms satisfy the Lipschitz bound"))
        .collect()
}
