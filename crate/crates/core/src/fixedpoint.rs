//! Weighted-metric Picard iteration for the Volterra form of the system.
//!
//! On grid functions over `[t0 - g_max, T]` the generalized metric is
//! `ϖ(x1, x2) = sup_t ‖x1(t) - x2(t)‖ / h(t)` with `h = 1` on the history
//! segment and `h(t) = E_β(θ (t - t0)^β)` after `t0`, `θ = a0 + a1 + η`.
//! In this metric the solution operator `𝒱` contracts with factor
//! `(a0 + a1)/θ`, which is what the certificate rests on. This module
//! measures that contraction and the resulting a-priori bound on a grid.
//!
//! `𝒱` uses the same product-trapezoidal weights as the simulator's
//! corrector, so its discrete fixed point is the implicit trapezoidal
//! solution on the shared grid.

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::certificate::{compute_certificate, compute_coefficients, Certificate, Provenance};
use crate::quadrature::ProductWeights;
use crate::simulator::{delayed_state, integrate_on, TimeGrid};
use crate::specfun::{gamma, mittag_leffler, MlfParams};
use crate::system::{EtaChoice, FtsQuery, SystemSpec};
use crate::{Error, Result};

/// Multiplicative slack on discrete contraction estimates.
pub const CONTRACTION_SLACK: f64 = 0.02;
/// Additive slack on measured Picard ratios.
pub const RATIO_SLACK: f64 = 0.01;
/// Additive slack on the a-priori distance bound.
pub const APRIORI_SLACK: f64 = 1e-6;

/// A function sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Arc<TimeGrid>,
    pub values: Vec<DVector<f64>>,
}

impl GridFunction {
    pub fn new(grid: Arc<TimeGrid>, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() != grid.times.len() {
            return Err(Error::Domain(format!(
                "grid function has {} values for {} grid times",
                values.len(),
                grid.times.len()
            )));
        }
        if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Domain("grid function values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    /// The anchor `y0`: `ν` on the history segment, `ν(t0)` afterwards.
    pub fn anchor(spec: &SystemSpec, grid: Arc<TimeGrid>) -> Self {
        let start_value = (spec.history)(spec.t0);
        let values = grid
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| if i < grid.start { (spec.history)(t) } else { start_value.clone() })
            .collect();
        Self { grid, values }
    }

    pub fn main_values(&self) -> &[DVector<f64>] {
        &self.values[self.grid.start..]
    }

    fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.times == other.grid.times
    }
}

/// `h(t)`: 1 up to `t0`, `E_β(θ (t - t0)^β)` after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFunction {
    pub beta: f64,
    pub theta: f64,
    pub t0: f64,
    params: MlfParams,
}

impl WeightFunction {
    pub fn new(beta: f64, theta: f64, t0: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Domain(format!("weight needs theta > 0, got {theta}")));
        }
        Ok(Self {
            beta,
            theta,
            t0,
            params: MlfParams::with_default_tol(beta)?,
        })
    }

    /// Overflowing weights are returned as `+∞`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t <= self.t0 {
            return Ok(1.0);
        }
        match mittag_leffler(&self.params, self.theta * (t - self.t0).powf(self.beta)) {
            Ok(v) => Ok(v),
            Err(Error::Overflow(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }

    pub fn on_grid(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        grid.times.iter().map(|&t| self.eval(t)).collect()
    }
}

/// `ϖ` with the weights tabulated once for a grid.
#[derive(Debug, Clone)]
pub struct WeightedMetric {
    grid: Arc<TimeGrid>,
    weights: Vec<f64>,
}

impl WeightedMetric {
    pub fn new(grid: Arc<TimeGrid>, weight: &WeightFunction) -> Result<Self> {
        let weights = weight.on_grid(&grid)?;
        Ok(Self { grid, weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sup ‖x1 - x2‖ / h` over the grid. Grid functions are bounded, so the
    /// generalized metric's `+∞` never arises here.
    pub fn distance(&self, x1: &GridFunction, x2: &GridFunction) -> Result<f64> {
        if !(x1.same_grid(x2) && x1.grid.times == self.grid.times) {
            return Err(Error::Domain("weighted distance needs functions on the metric's grid".into()));
        }
        Ok(x1
            .values
            .iter()
            .zip(&x2.values)
            .zip(&self.weights)
            .map(|((a, b), &w)| (a - b).norm() / w)
            .fold(0.0, f64::max))
    }
}

/// One-off `ϖ(x1, x2)`.
pub fn weighted_distance(x1: &GridFunction, x2: &GridFunction, w: &WeightFunction) -> Result<f64> {
    WeightedMetric::new(x1.grid.clone(), w)?.distance(x1, x2)
}

/// The solution operator `𝒱` on a fixed grid.
pub struct Operator<'a> {
    spec: &'a SystemSpec,
    grid: Arc<TimeGrid>,
    weights: ProductWeights,
}

impl<'a> Operator<'a> {
    pub fn new(spec: &'a SystemSpec, grid: Arc<TimeGrid>) -> Result<Self> {
        spec.check_structure()?;
        let weights = ProductWeights::new(spec.beta, grid.step, grid.steps)?;
        Ok(Self { spec, grid, weights })
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    /// `(𝒱y)(t) = ν(t)` on the history and
    /// `ν(t0) + (1/Γ(β)) ∫ (t-s)^(β-1) F(s, y(s), y(s - g(s))) ds` after.
    pub fn apply(&self, y: &GridFunction) -> Result<GridFunction> {
        if y.grid.times != self.grid.times {
            return Err(Error::Domain("operator applied to a function on another grid".into()));
        }
        let spec = self.spec;
        let grid = &*self.grid;
        let main = y.main_values();
        let rhs = (0..=grid.steps)
            .map(|m| {
                let xd = delayed_state(spec, grid, m, &main[..m], &main[m])?;
                Ok(spec.rhs(grid.main_time(m), &main[m], &xd))
            })
            .collect::<Result<Vec<_>>>()?;

        let y0 = (spec.history)(spec.t0);
        let mut values: Vec<DVector<f64>> = grid.history_times().iter().map(|&t| (spec.history)(t)).collect();
        values.push(y0.clone());
        for m in 1..=grid.steps {
            let mut acc = DVector::zeros(spec.dim());
            for (j, f) in rhs[..=m].iter().enumerate() {
                acc.axpy(self.weights.trapezoid(m, j), f, 1.0);
            }
            values.push(&y0 + acc * self.weights.c_trap);
        }
        if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Domain("operator produced non-finite values".into()));
        }
        Ok(GridFunction {
            grid: self.grid.clone(),
            values,
        })
    }
}

/// One-off `𝒱y` on `y`'s grid.
pub fn apply_v(spec: &SystemSpec, y: &GridFunction) -> Result<GridFunction> {
    Operator::new(spec, y.grid.clone())?.apply(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `ϖ(y_k, y_{k-1})`
    pub distance: f64,
    /// `ϖ(y_k, y_{k-1}) / ϖ(y_{k-1}, y_{k-2})`
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardLog {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// `(a0 + a1)/(a0 + a1 + η)`
    pub contraction_bound: f64,
    pub theta: f64,
}

impl PicardLog {
    pub fn ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().filter_map(|r| r.ratio)
    }

    pub fn last_ratio(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.ratio)
    }
}

pub struct PicardOutcome {
    pub limit: GridFunction,
    pub anchor: GridFunction,
    pub log: PicardLog,
    pub metric: WeightedMetric,
}

/// Iterate `y ← 𝒱y` from the anchor until `ϖ(y_{k+1}, y_k) ≤ tol` or
/// `max_iters` applications. Non-convergence is reported in the log.
pub fn picard_iterate(
    spec: &SystemSpec,
    eta: f64,
    max_iters: usize,
    tol: f64,
    grid: Arc<TimeGrid>,
) -> Result<PicardOutcome> {
    if max_iters < 2 {
        return Err(Error::Domain(format!("max_iters must be >= 2, got {max_iters}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }
    let coef = compute_coefficients(spec, Provenance::default().coefficient_grid)?;
    let theta = coef.a01() + eta;
    let metric = WeightedMetric::new(grid.clone(), &WeightFunction::new(spec.beta, theta, spec.t0)?)?;
    let op = Operator::new(spec, grid.clone())?;

    let anchor = GridFunction::anchor(spec, grid);
    let mut y = anchor.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    for k in 1..=max_iters {
        let next = op.apply(&y)?;
        let distance = metric.distance(&next, &y)?;
        let ratio = records
            .last()
            .and_then(|prev| (prev.distance > 0.0).then(|| distance / prev.distance));
        records.push(IterationRecord {
            iteration: k,
            distance,
            ratio,
        });
        y = next;
        if distance <= tol {
            converged = true;
            break;
        }
    }
    Ok(PicardOutcome {
        limit: y,
        anchor,
        log: PicardLog {
            records,
            converged,
            contraction_bound: coef.a01() / theta,
            theta,
        },
        metric,
    })
}

/// A single inequality with both sides and whether it held.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub passed: bool,
}

impl Check {
    fn le(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            margin: rhs - lhs,
            passed: lhs <= rhs,
        }
    }
}

/// Settings for [`verify_a_priori_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub step: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub corrector_iters: usize,
}

impl VerifyOptions {
    pub fn for_spec(spec: &SystemSpec) -> Self {
        Self {
            step: (spec.t_end - spec.t0) / crate::simulator::DEFAULT_STEPS as f64,
            max_iters: 200,
            tol: 1e-10,
            corrector_iters: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AprioriReport {
    pub certificate: Certificate,
    pub picard: PicardLog,
    /// Every measured ratio `q_k ≤ (a0+a1)/θ + RATIO_SLACK`.
    pub ratio_check: Check,
    /// `ϖ(y_k, y_{k-1}) ≤ q^(k-1) ϖ(y_1, y_0) (1 + CONTRACTION_SLACK)`, worst case.
    pub geometric_decay: Check,
    /// `ϖ(𝒱y0, y0) ≤ M [(a0+a1)‖ν‖ + a2 ρ] / Γ(β+1)`.
    pub first_step: Check,
    /// `ϖ(x*, y0) ≤ r1 ε1 + r2 ρ + APRIORI_SLACK`.
    pub distance_to_anchor: Check,
    /// `max_t ‖x*(t)‖ - ‖y0(t)‖ - (r1 ε1 + r2 ρ) h(T) ≤ APRIORI_SLACK`.
    pub pointwise: Check,
    /// `ϖ(𝒱x*, x*)`
    pub fixed_point_residual: f64,
    /// `ϖ(x*, x_abm) ≤ 10 max(tol, ϖ(𝒱x_abm, x_abm)/(1 - q))`.
    pub solver_agreement: Check,
}

impl AprioriReport {
    pub fn all_passed(&self) -> bool {
        self.picard.converged
            && self.ratio_check.passed
            && self.geometric_decay.passed
            && self.first_step.passed
            && self.distance_to_anchor.passed
            && self.pointwise.passed
            && self.solver_agreement.passed
    }
}

/// Run the Picard iteration for the query's `η` and check every inequality
/// of the bound's derivation against the certificate's constants.
pub fn verify_a_priori_bound(
    spec: &SystemSpec,
    query: &FtsQuery,
    options: &VerifyOptions,
) -> Result<AprioriReport> {
    let eta = match query.eta {
        EtaChoice::Fixed(eta) => eta,
        EtaChoice::Search { .. } => {
            return Err(Error::InvalidQuery("a-priori verification needs a fixed eta".into()))
        }
    };
    let cert = compute_certificate(spec, query)?;
    let grid = Arc::new(TimeGrid::new(spec, options.step)?);
    let outcome = picard_iterate(spec, eta, options.max_iters, options.tol, grid.clone())?;
    let q = outcome.log.contraction_bound;
    let metric = &outcome.metric;
    let op = Operator::new(spec, grid.clone())?;

    let worst_ratio = outcome.log.ratios().fold(0.0, f64::max);
    let ratio_check = Check::le(worst_ratio, q + RATIO_SLACK);

    let records = &outcome.log.records;
    let first = records.first().map_or(0.0, |r| r.distance);
    let mut decay = Check::le(0.0, 0.0);
    for (k, r) in records.iter().enumerate() {
        let c = Check::le(r.distance, q.powi(k as i32) * first * (1.0 + CONTRACTION_SLACK));
        if c.margin < decay.margin || k == 0 {
            decay = c;
        }
    }

    let nu_norm = spec.history_norm();
    let g1 = gamma(spec.beta + 1.0)?;
    let first_bound = cert.m * (cert.a01() * nu_norm + cert.a2 * query.rho) / g1;
    let first_step = Check::le(first, first_bound * (1.0 + 1e-9) + 1e-15);

    let radius = cert.r1 * query.eps1 + cert.r2 * query.rho;
    let to_anchor = metric.distance(&outcome.limit, &outcome.anchor)?;
    let distance_to_anchor = Check::le(to_anchor, radius + APRIORI_SLACK);

    let h_end = *metric.weights().last().expect("grid is nonempty");
    let worst_pointwise = outcome
        .limit
        .main_values()
        .iter()
        .zip(outcome.anchor.main_values())
        .map(|(x, y0)| x.norm() - y0.norm() - radius * h_end)
        .fold(f64::NEG_INFINITY, f64::max);
    let pointwise = Check::le(worst_pointwise, APRIORI_SLACK);

    let fixed_point_residual = metric.distance(&op.apply(&outcome.limit)?, &outcome.limit)?;

    let abm = integrate_on(spec, &grid, options.corrector_iters)?;
    let solver_agreement = if abm.blow_up.is_some() {
        Check::le(f64::INFINITY, 0.0)
    } else {
        let x_abm = GridFunction::new(grid.clone(), abm.states)?;
        let residual = metric.distance(&op.apply(&x_abm)?, &x_abm)?;
        let combined = options.tol.max(residual / (1.0 - q));
        Check::le(metric.distance(&outcome.limit, &x_abm)?, 10.0 * combined)
    };

    Ok(AprioriReport {
        certificate: cert,
        picard: outcome.log,
        ratio_check,
        geometric_decay: decay,
        first_step,
        distance_to_anchor,
        pointwise,
        fixed_point_residual,
        solver_agreement,
    })
}
