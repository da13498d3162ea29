//! The two worked examples built directly through the `SystemSpec` API,
//! independently of the JSON config layer.
#![allow(dead_code)]

use std::sync::Arc;

use fts_core::{EtaChoice, FtsQuery, SystemSpec};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

fn delay() -> (Arc<dyn Fn(f64) -> f64 + Send + Sync>, f64) {
    (Arc::new(|s: f64| 0.4 * s.cos().powi(2) * s.sin().powi(2)), 0.1)
}

fn rotating(rho: f64) -> Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync> {
    Arc::new(move |t: f64| dvector![rho * t.sin(), rho * t.cos()])
}

pub fn example1() -> (SystemSpec, FtsQuery) {
    let (g, g_max) = delay();
    let spec = SystemSpec::linear(
        0.9,
        0.0,
        0.385,
        dmatrix![0.0, -2.0; 1.0, 0.0],
        dmatrix![0.0, 3.0; 0.0, 4.0],
        dmatrix![0.0, -0.8; 1.0, 0.0],
    )
    .with_nonlinearity(
        Arc::new(|_, x, xd, _| dvector![(0.01 * x[1]).sin(), (0.01 * xd[0]).sin()]),
        Arc::new(|_| 0.01),
    )
    .with_delay(g, g_max)
    .with_history(Arc::new(|_| dvector![0.0, 0.09]))
    .with_disturbance(rotating(0.1), 0.1);
    let query = FtsQuery::for_spec(&spec, 0.1, 50.0, EtaChoice::Fixed(1.0));
    (spec, query)
}

pub fn example2() -> (SystemSpec, FtsQuery) {
    let (g, g_max) = delay();
    let spec = SystemSpec::linear(
        0.6,
        0.0,
        0.49,
        dmatrix![0.0, -1.0; 2.0, 0.0],
        dmatrix![0.5, 0.0; 0.0, 1.0],
        dmatrix![0.0, 0.4; -1.0, 0.0],
    )
    .with_nonlinearity(
        Arc::new(|_, x, xd, _| dvector![(0.01 * xd[1]).sin(), (0.01 * x[0]).sin()]),
        Arc::new(|_| 0.01),
    )
    .with_delay(g, g_max)
    .with_history(Arc::new(|_| dvector![0.06, 0.07]))
    .with_disturbance(rotating(0.1), 0.1);
    let query = FtsQuery::for_spec(&spec, 0.1, 100.0, EtaChoice::Fixed(1.0));
    (spec, query)
}

/// Scalar `ᶜD^β x = θ x`, `x(0) = 1`, on `[0, 1]`; solution `E_β(θ t^β)`.
pub fn scalar_linear(beta: f64, theta: f64) -> SystemSpec {
    SystemSpec::linear(
        beta,
        0.0,
        1.0,
        DMatrix::from_element(1, 1, theta),
        DMatrix::zeros(1, 1),
        DMatrix::zeros(1, 1),
    )
    .with_history(Arc::new(|_| dvector![1.0]))
}
