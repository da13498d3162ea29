//! Predictor-corrector integration of the Caputo delay system.
//!
//! The equation is integrated in its Volterra form
//! `x(t) = ν(t0) + (1/Γ(β)) ∫_{t0}^t (t - s)^(β-1) F(s, x(s), x(s - g(s))) ds`
//! with the fractional Adams-Bashforth-Moulton scheme: product-rectangle
//! predictor, product-trapezoidal corrector, full memory. Delayed states
//! come from `ν` when `t - g(t) ≤ t0` and from linear interpolation on the
//! grid otherwise; inside the current step the latest iterate is used.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::quadrature::ProductWeights;
use crate::system::{FtsQuery, SystemSpec, VectorFn};
use crate::{Error, Result};

/// Grid resolution used when no step is requested.
pub const DEFAULT_STEPS: usize = 2048;

/// Uniform grid on `[t0, T]` preceded by samples of the history segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    /// All grid times, strictly increasing, from `t0 - g_max` to `T`.
    pub times: Vec<f64>,
    /// Index of `t0` in `times`.
    pub start: usize,
    pub t0: f64,
    /// Actual step, `(T - t0) / steps`.
    pub step: f64,
    pub steps: usize,
}

impl TimeGrid {
    /// Build the grid for `spec` with a step as close to `step` as divides
    /// `[t0, T]` evenly (never larger).
    pub fn new(spec: &SystemSpec, step: f64) -> Result<Self> {
        spec.check_structure()?;
        let span = spec.t_end - spec.t0;
        if !(step > 0.0 && step <= span / 10.0 * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!(
                "step must lie in (0, (T - t0)/10 = {}], got {step}",
                span / 10.0
            )));
        }
        let ratio = span / step;
        let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio {
            ratio.round() as usize
        } else {
            ratio.ceil() as usize
        };
        let h = span / steps as f64;

        let mut times = Vec::new();
        if spec.g_max > 0.0 {
            let k_max = (spec.g_max / h * (1.0 + 1e-12)).floor() as usize;
            let last_on_grid = spec.t0 - k_max as f64 * h;
            if last_on_grid - spec.history_start() > 1e-12 * h {
                times.push(spec.history_start());
            }
            for k in (1..=k_max).rev() {
                let t = spec.t0 - k as f64 * h;
                times.push(t.max(spec.history_start()));
            }
        }
        let start = times.len();
        for m in 0..=steps {
            times.push(if m == steps { spec.t_end } else { spec.t0 + m as f64 * h });
        }
        Ok(Self {
            times,
            start,
            t0: spec.t0,
            step: h,
            steps,
        })
    }

    /// Grid with the default resolution `(T - t0) / DEFAULT_STEPS`.
    pub fn default_for(spec: &SystemSpec) -> Result<Self> {
        Self::new(spec, (spec.t_end - spec.t0) / DEFAULT_STEPS as f64)
    }

    /// Time of main-grid node `m` (node 0 is `t0`).
    pub fn main_time(&self, m: usize) -> f64 {
        self.times[self.start + m]
    }

    pub fn history_times(&self) -> &[f64] {
        &self.times[..self.start]
    }
}

/// `x(t - g(t))` at main node `m`.
///
/// `known` holds main-grid values for nodes `0..m`; `current` is the value
/// (or current iterate) at node `m`.
pub(crate) fn delayed_state(
    spec: &SystemSpec,
    grid: &TimeGrid,
    m: usize,
    known: &[DVector<f64>],
    current: &DVector<f64>,
) -> Result<DVector<f64>> {
    let t = grid.main_time(m);
    let g = (spec.delay)(t);
    let tau = t - g;
    let slack = 1e-12 * grid.step.max(t.abs());
    if tau < spec.history_start() - slack || tau > t + slack {
        return Err(Error::InvalidSpec(format!(
            "delay at t={t} points to {tau}, outside [t0 - g_max, t] = [{}, {t}]",
            spec.history_start()
        )));
    }
    if tau <= grid.t0 {
        return Ok((spec.history)(tau.max(spec.history_start())));
    }
    let pos = (tau - grid.t0) / grid.step;
    let i = (pos.floor() as usize).min(m.saturating_sub(1));
    let frac = (pos - i as f64).clamp(0.0, 1.0);
    let left = &known[i];
    let right = if i + 1 == m { current } else { &known[i + 1] };
    Ok(left * (1.0 - frac) + right * frac)
}

/// Discretised solution on `[t0 - g_max, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    #[serde(serialize_with = "serialize_states")]
    pub states: Vec<DVector<f64>>,
    /// Index of `t0` in `times`.
    pub start: usize,
    /// Max Euclidean norm over stored states on `[t0, T]`.
    pub sup_norm: f64,
    pub step: f64,
    pub corrector_iters: usize,
    /// Time of the first non-finite state, if the run blew up. The
    /// trajectory is truncated just before it.
    pub blow_up: Option<f64>,
}

fn serialize_states<S: serde::Serializer>(states: &[DVector<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(states.len()))?;
    for v in states {
        seq.serialize_element(v.as_slice())?;
    }
    seq.end()
}

impl Trajectory {
    /// States on `[t0, T]`.
    pub fn main_states(&self) -> &[DVector<f64>] {
        &self.states[self.start..]
    }

    pub fn main_times(&self) -> &[f64] {
        &self.times[self.start..]
    }

    pub fn recompute_sup_norm(&self) -> f64 {
        self.main_states().iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

/// Integrate `spec` with step `step` and `corrector_iters` corrector sweeps.
pub fn integrate(spec: &SystemSpec, step: f64, corrector_iters: usize) -> Result<Trajectory> {
    let grid = TimeGrid::new(spec, step)?;
    integrate_on(spec, &grid, corrector_iters)
}

pub fn integrate_on(spec: &SystemSpec, grid: &TimeGrid, corrector_iters: usize) -> Result<Trajectory> {
    if corrector_iters == 0 {
        return Err(Error::Domain("at least one corrector iteration is required".into()));
    }
    let n_steps = grid.steps;
    let weights = ProductWeights::new(spec.beta, grid.step, n_steps)?;
    let y0 = (spec.history)(spec.t0);
    let dim = spec.dim();

    let mut main: Vec<DVector<f64>> = Vec::with_capacity(n_steps + 1);
    let mut rhs: Vec<DVector<f64>> = Vec::with_capacity(n_steps + 1);
    main.push(y0.clone());
    let xd0 = delayed_state(spec, grid, 0, &[], &y0)?;
    rhs.push(spec.rhs(spec.t0, &y0, &xd0));

    let mut blow_up = None;
    if !rhs[0].iter().all(|v| v.is_finite()) {
        blow_up = Some(spec.t0);
    }

    if blow_up.is_none() {
        for m in 1..=n_steps {
            let t = grid.main_time(m);
            let mut pred = DVector::zeros(dim);
            let mut memory = DVector::zeros(dim);
            for (j, f) in rhs.iter().enumerate() {
                pred.axpy(weights.rectangle(m, j), f, 1.0);
                memory.axpy(weights.trapezoid(m, j), f, 1.0);
            }
            let pred = &y0 + pred * weights.c_rect;
            let memory = &y0 + memory * weights.c_trap;

            let mut y = pred;
            for _ in 0..corrector_iters {
                let xd = delayed_state(spec, grid, m, &main, &y)?;
                let f = spec.rhs(t, &y, &xd);
                y = &memory + f * weights.c_trap;
            }
            let xd = delayed_state(spec, grid, m, &main, &y)?;
            let f = spec.rhs(t, &y, &xd);
            if !(y.iter().all(|v| v.is_finite()) && f.iter().all(|v| v.is_finite())) {
                blow_up = Some(t);
                break;
            }
            main.push(y);
            rhs.push(f);
        }
    }

    let mut times: Vec<f64> = grid.history_times().to_vec();
    let mut states: Vec<DVector<f64>> = times.iter().map(|&s| (spec.history)(s)).collect();
    times.extend((0..main.len()).map(|m| grid.main_time(m)));
    states.extend(main);
    let sup_norm = states[grid.start..].iter().map(|x| x.norm()).fold(0.0, f64::max);
    Ok(Trajectory {
        times,
        states,
        start: grid.start,
        sup_norm,
        step: grid.step,
        corrector_iters,
        blow_up,
    })
}

/// Reference solution for a convergence study.
#[derive(Clone)]
pub enum Reference {
    Analytic(VectorFn),
    /// Integrate once more at half the finest step.
    HalfFinestStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub step: f64,
    /// Max-norm error over `[t0, T]`.
    pub error: f64,
    /// `ln(e_prev / e) / ln(h_prev / h)`; absent on the first row and when
    /// either error is zero.
    pub order: Option<f64>,
}

pub fn convergence_study(
    spec: &SystemSpec,
    steps: &[f64],
    corrector_iters: usize,
    reference: &Reference,
) -> Result<Vec<ConvergenceRow>> {
    if steps.len() < 3 {
        return Err(Error::Domain(format!("convergence study needs >= 3 steps, got {}", steps.len())));
    }
    if steps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Domain("steps must be strictly decreasing".into()));
    }
    let reference_run = match reference {
        Reference::HalfFinestStep => Some(integrate(spec, steps[steps.len() - 1] / 2.0, corrector_iters)?),
        Reference::Analytic(_) => None,
    };

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(steps.len());
    for &h in steps {
        let traj = integrate(spec, h, corrector_iters)?;
        if let Some(t) = traj.blow_up {
            return Err(Error::Domain(format!("blow-up at t={t} during convergence study (step {h})")));
        }
        let mut err = 0.0f64;
        for (m, (t, x)) in traj.main_times().iter().zip(traj.main_states()).enumerate() {
            let exact = match (reference, &reference_run) {
                (Reference::Analytic(f), _) => f(*t),
                (_, Some(r)) => {
                    let ratio = traj.step / r.step;
                    let k = ratio.round();
                    if (ratio - k).abs() > 1e-6 {
                        return Err(Error::Domain(format!(
                            "step {h} is not a multiple of the reference step {}",
                            r.step
                        )));
                    }
                    r.main_states()[m * k as usize].clone()
                }
                _ => unreachable!("reference run exists for HalfFinestStep"),
            };
            err = err.max((x - exact).amax());
        }
        let order = rows.last().and_then(|prev| {
            (prev.error > 0.0 && err > 0.0).then(|| (prev.error / err).ln() / (prev.step / traj.step).ln())
        });
        rows.push(ConvergenceRow {
            step: traj.step,
            error: err,
            order,
        });
    }
    Ok(rows)
}

/// How the envelope picks histories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistorySampling {
    /// Random continuous histories on the sphere `‖ν(s)‖ = ε1`.
    RandomBoundary,
    /// Keep the system's own history for every run.
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeOptions {
    pub step: f64,
    pub corrector_iters: usize,
    pub histories: HistorySampling,
}

impl EnvelopeOptions {
    pub fn for_spec(spec: &SystemSpec) -> Self {
        Self {
            step: (spec.t_end - spec.t0) / DEFAULT_STEPS as f64,
            corrector_iters: 1,
            histories: HistorySampling::RandomBoundary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    /// Random Fourier-mode disturbance on the ρ-sphere.
    Random,
    /// Constant disturbance `±ρ eᵢ`.
    Extreme,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeRun {
    pub index: usize,
    pub kind: RunKind,
    pub sup_norm: f64,
    pub blow_up: Option<f64>,
    pub within_eps2: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub runs: Vec<EnvelopeRun>,
    pub max_sup_norm: f64,
    pub eps2: f64,
    pub all_within_eps2: bool,
}

/// A random smooth vector field on the sphere of radius `radius`:
/// `radius · u(t)/‖u(t)‖` with `u = c + Σ aₖ sin(ωₖ t + φₖ)` and
/// `‖c‖ > Σ ‖aₖ‖`, so `u` never vanishes.
fn random_sphere_signal(rng: &mut ChaCha8Rng, dim: usize, radius: f64, time_scale: f64) -> VectorFn {
    let unit = |rng: &mut ChaCha8Rng| {
        let v = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-6 {
            v / n
        } else {
            DVector::from_fn(dim, |i, _| if i == 0 { 1.0 } else { 0.0 })
        }
    };
    let c = unit(rng);
    let modes: Vec<(DVector<f64>, f64, f64)> = (0..3)
        .map(|_| {
            let a = unit(rng) * rng.gen_range(0.0..0.3);
            let omega = 2.0 * std::f64::consts::PI * rng.gen_range(0.5..8.0) / time_scale;
            let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            (a, omega, phase)
        })
        .collect();
    Arc::new(move |t| {
        let mut u = c.clone();
        for (a, omega, phase) in &modes {
            u.axpy((omega * t + phase).sin(), a, 1.0);
        }
        let n = u.norm();
        u * (radius / n)
    })
}

/// Probe the "for all admissible d and ν" quantifier by sampling.
///
/// Runs `samples` random disturbances (each paired with a random history
/// unless [`HistorySampling::Nominal`]) plus the `2p` constant extremes
/// `±ρ eᵢ`. Runs execute in parallel and are reported by index; a failed
/// run is recorded, not fatal.
pub fn disturbance_envelope_run(
    spec: &SystemSpec,
    query: &FtsQuery,
    samples: usize,
    seed: u64,
    options: &EnvelopeOptions,
) -> Result<EnvelopeReport> {
    query.validate_for(spec)?;
    if samples == 0 {
        return Err(Error::Domain("envelope needs at least one sample".into()));
    }
    let n = spec.dim();
    let p = spec.disturbance_dim();
    let span = spec.t_end - spec.t0;
    let history_scale = if spec.g_max > 0.0 { spec.g_max } else { span };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut variants: Vec<(RunKind, SystemSpec)> = Vec::with_capacity(samples + 2 * p);
    for _ in 0..samples {
        let d = random_sphere_signal(&mut rng, p, query.rho, span);
        let mut s = spec.clone().with_disturbance(d, query.rho);
        if options.histories == HistorySampling::RandomBoundary {
            s = s.with_history(random_sphere_signal(&mut rng, n, query.eps1, history_scale));
        }
        variants.push((RunKind::Random, s));
    }
    for i in 0..2 * p {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let axis = i / 2;
        let d = DVector::from_fn(p, |k, _| if k == axis { sign * query.rho } else { 0.0 });
        let mut s = spec.clone().with_disturbance(Arc::new(move |_| d.clone()), query.rho);
        if options.histories == HistorySampling::RandomBoundary {
            let x = DVector::from_fn(n, |k, _| if k == axis % n { sign * query.eps1 } else { 0.0 });
            s = s.with_history(Arc::new(move |_| x.clone()));
        }
        variants.push((RunKind::Extreme, s));
    }

    let runs: Vec<EnvelopeRun> = variants
        .par_iter()
        .enumerate()
        .map(|(index, (kind, s))| match integrate(s, options.step, options.corrector_iters) {
            Ok(traj) => EnvelopeRun {
                index,
                kind: *kind,
                sup_norm: traj.sup_norm,
                blow_up: traj.blow_up,
                within_eps2: traj.blow_up.is_none() && traj.sup_norm <= query.eps2,
                error: None,
            },
            Err(e) => EnvelopeRun {
                index,
                kind: *kind,
                sup_norm: f64::NAN,
                blow_up: None,
                within_eps2: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let max_sup_norm = runs
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.sup_norm)
        .fold(0.0, f64::max);
    let all_within_eps2 = runs.iter().all(|r| r.within_eps2);
    Ok(EnvelopeReport {
        runs,
        max_sup_norm,
        eps2: query.eps2,
        all_within_eps2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, DMatrix};

    fn scalar(beta: f64, theta: f64) -> SystemSpec {
        SystemSpec::linear(beta, 0.0, 1.0, dmatrix![theta], DMatrix::zeros(1, 1), DMatrix::zeros(1, 1))
            .with_history(Arc::new(|_| DVector::from_element(1, 1.0)))
    }

    #[test]
    fn grid_layout() {
        let spec = scalar(0.5, 1.0).with_delay(Arc::new(|_| 0.05), 0.1);
        let g = TimeGrid::new(&spec, 0.03).unwrap();
        // 1/0.03 is not an integer; the step shrinks to 1/34
        assert_eq!(g.steps, 34);
        assert!((g.step - 1.0 / 34.0).abs() < 1e-15);
        assert_eq!(g.times[0], -0.1);
        assert!(g.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g.main_time(0), 0.0);
        assert_eq!(*g.times.last().unwrap(), 1.0);
    }

    #[test]
    fn step_too_large_rejected() {
        assert!(TimeGrid::new(&scalar(0.5, 1.0), 0.2).is_err());
    }

    #[test]
    fn zero_system_stays_zero() {
        let z = DMatrix::zeros(2, 2);
        let spec = SystemSpec::linear(0.7, 0.0, 1.0, dmatrix![1.0, 2.0; -3.0, 0.5], z.clone(), z);
        let traj = integrate(&spec, 1.0 / 64.0, 1).unwrap();
        assert!(traj.states.iter().all(|x| x.norm() == 0.0));
        assert_eq!(traj.sup_norm, 0.0);
    }

    #[test]
    fn history_segment_is_exact() {
        let spec = scalar(0.5, -1.0)
            .with_delay(Arc::new(|t: f64| 0.1 * t.sin().powi(2)), 0.1)
            .with_history(Arc::new(|s: f64| DVector::from_element(1, 1.0 + s)));
        let traj = integrate(&spec, 1.0 / 128.0, 1).unwrap();
        for (t, x) in traj.times[..=traj.start].iter().zip(&traj.states) {
            assert_eq!(x[0], 1.0 + t);
        }
        assert_eq!(traj.sup_norm, traj.recompute_sup_norm());
    }

    #[test]
    fn delay_beyond_history_is_rejected() {
        let spec = scalar(0.5, 1.0).with_delay(Arc::new(|_| 0.5), 0.1);
        assert!(matches!(integrate(&spec, 0.01, 1), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn blow_up_is_flagged_and_truncated() {
        let f = Arc::new(|_: f64, x: &DVector<f64>, _: &DVector<f64>, _: &DVector<f64>| x.map(|v| v.powi(8)));
        let spec = scalar(0.9, 1.0).with_nonlinearity(f, Arc::new(|_| 1.0)).with_horizon(10.0);
        let traj = integrate(&spec, 0.01, 1).unwrap();
        let t = traj.blow_up.expect("blow-up expected");
        assert!(t < 10.0);
        assert!(*traj.times.last().unwrap() < t);
        assert!(traj.states.iter().all(|x| x.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn integer_order_matches_exponential() {
        let traj = integrate(&scalar(1.0, -1.0), 1.0 / 256.0, 1).unwrap();
        let last = traj.states.last().unwrap()[0];
        assert!((last - (-1.0f64).exp()).abs() < 1e-5);
    }
}
