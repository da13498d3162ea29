//! Problem instances: the delay system and the stability question asked of it.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;
/// `f(t, x, x_delayed, d)`
pub type NonlinearFn =
    Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;

const PROBES: usize = 256;
const PROBE_SEED: u64 = 0x5eed_f75;

/// A fractional-order delay system
/// `D^β x = A0 x + A1 x(t-g(t)) + A2 d + f(t, x, x(t-g(t)), d)` on `[t0, T]`.
#[derive(Clone)]
pub struct SystemSpec {
    pub beta: f64,
    pub t0: f64,
    pub t_end: f64,
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    /// Lipschitz envelope of `f`.
    pub kappa: ScalarFn,
    pub f: NonlinearFn,
    pub delay: ScalarFn,
    /// Upper bound on the delay; the history lives on `[t0 - g_max, t0]`.
    pub g_max: f64,
    pub history: VectorFn,
    pub disturbance: VectorFn,
    /// Disturbance bound, `d(t)ᵀd(t) ≤ ρ²`.
    pub rho: f64,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("beta", &self.beta)
            .field("t0", &self.t0)
            .field("t_end", &self.t_end)
            .field("a0", &self.a0)
            .field("a1", &self.a1)
            .field("a2", &self.a2)
            .field("g_max", &self.g_max)
            .field("rho", &self.rho)
            .finish_non_exhaustive()
    }
}

impl SystemSpec {
    /// A linear, undelayed, undisturbed system with zero history. Use the
    /// `with_*` methods to fill in the rest.
    pub fn linear(
        beta: f64,
        t0: f64,
        t_end: f64,
        a0: DMatrix<f64>,
        a1: DMatrix<f64>,
        a2: DMatrix<f64>,
    ) -> Self {
        let n = a0.nrows();
        let p = a2.ncols();
        Self {
            beta,
            t0,
            t_end,
            a0,
            a1,
            a2,
            kappa: Arc::new(|_| 0.0),
            f: Arc::new(move |_, _, _, _| DVector::zeros(n)),
            delay: Arc::new(|_| 0.0),
            g_max: 0.0,
            history: Arc::new(move |_| DVector::zeros(n)),
            disturbance: Arc::new(move |_| DVector::zeros(p)),
            rho: 0.0,
        }
    }

    pub fn with_nonlinearity(mut self, f: NonlinearFn, kappa: ScalarFn) -> Self {
        self.f = f;
        self.kappa = kappa;
        self
    }

    pub fn with_delay(mut self, delay: ScalarFn, g_max: f64) -> Self {
        self.delay = delay;
        self.g_max = g_max;
        self
    }

    pub fn with_history(mut self, history: VectorFn) -> Self {
        self.history = history;
        self
    }

    pub fn with_disturbance(mut self, disturbance: VectorFn, rho: f64) -> Self {
        self.disturbance = disturbance;
        self.rho = rho;
        self
    }

    pub fn with_horizon(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    /// Disturbance dimension `p`.
    pub fn disturbance_dim(&self) -> usize {
        self.a2.ncols()
    }

    pub fn history_start(&self) -> f64 {
        self.t0 - self.g_max
    }

    /// Right-hand side `A0 x + A1 xd + A2 d(t) + f(t, x, xd, d(t))`.
    pub fn rhs(&self, t: f64, x: &DVector<f64>, xd: &DVector<f64>) -> DVector<f64> {
        let d = (self.disturbance)(t);
        let mut out = &self.a0 * x + &self.a1 * xd + &self.a2 * &d;
        out += (self.f)(t, x, xd, &d);
        out
    }

    /// Scalar and dimensional invariants. Cheap; called by every consumer.
    pub fn check_structure(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if !(self.t0.is_finite() && self.t_end.is_finite() && self.t_end > self.t0) {
            return bad(format!("need finite T > t0, got t0={}, T={}", self.t0, self.t_end));
        }
        if !(self.g_max >= 0.0 && self.g_max.is_finite()) {
            return bad(format!("g_max must be finite and >= 0, got {}", self.g_max));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be finite and >= 0, got {}", self.rho));
        }
        let n = self.a0.nrows();
        if n == 0 || self.a0.ncols() != n {
            return bad(format!("A0 must be square and nonempty, got {}x{}", n, self.a0.ncols()));
        }
        if self.a1.shape() != (n, n) {
            return bad(format!(
                "A1 must be {n}x{n} to match A0, got {}x{}",
                self.a1.nrows(),
                self.a1.ncols()
            ));
        }
        if self.a2.nrows() != n || self.a2.ncols() == 0 {
            return bad(format!(
                "A2 must have {n} rows and at least one column, got {}x{}",
                self.a2.nrows(),
                self.a2.ncols()
            ));
        }
        for (name, m) in [("A0", &self.a0), ("A1", &self.a1), ("A2", &self.a2)] {
            if m.iter().any(|v| !v.is_finite()) {
                return bad(format!("{name} has non-finite entries"));
            }
        }
        Ok(())
    }

    /// Full validation: structure plus sampled checks of the hypotheses on
    /// `f`, `κ`, `g`, `d` and `ν`.
    pub fn validate(&self) -> Result<()> {
        self.check_structure()?;
        let n = self.dim();
        let p = self.disturbance_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
        let span = self.t_end - self.t0;
        let zero_n = DVector::zeros(n);
        let zero_p = DVector::zeros(p);

        for i in 0..=PROBES {
            let t = self.t0 + span * i as f64 / PROBES as f64;

            let k = (self.kappa)(t);
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::InvalidSpec(format!("kappa({t}) = {k} must be finite and >= 0")));
            }
            let g = (self.delay)(t);
            if !(g >= -1e-12 && g <= self.g_max * (1.0 + 1e-12) + 1e-12) {
                return Err(Error::InvalidSpec(format!(
                    "delay g({t}) = {g} outside [0, g_max = {}]",
                    self.g_max
                )));
            }
            let d = (self.disturbance)(t);
            if d.len() != p {
                return Err(Error::InvalidSpec(format!(
                    "disturbance has dimension {}, A2 expects {p}",
                    d.len()
                )));
            }
            if d.dot(&d) > self.rho * self.rho * (1.0 + 1e-9) {
                return Err(Error::InvalidSpec(format!(
                    "disturbance violates dᵀd <= ρ² at t={t}: {} > {}",
                    d.dot(&d),
                    self.rho * self.rho
                )));
            }
            let f0 = (self.f)(t, &zero_n, &zero_n, &zero_p);
            if f0.len() != n {
                return Err(Error::InvalidSpec(format!(
                    "nonlinearity returns dimension {}, expected {n}",
                    f0.len()
                )));
            }
            if f0.norm() > 1e-14 {
                return Err(Error::InvalidSpec(format!(
                    "f(t, 0, 0, 0) must vanish, got norm {} at t={t}",
                    f0.norm()
                )));
            }
        }

        for _ in 0..PROBES {
            let t = self.t0 + span * rng.gen::<f64>();
            let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
            let mut draw = |len: usize| DVector::from_fn(len, |_, _| scale * rng.gen_range(-1.0..1.0));
            let (u1, u2, u3) = (draw(n), draw(n), draw(p));
            let (w1, w2, w3) = (draw(n), draw(n), draw(p));
            let lhs = ((self.f)(t, &u1, &u2, &u3) - (self.f)(t, &w1, &w2, &w3)).norm();
            let rhs = (self.kappa)(t) * ((&u1 - &w1).norm() + (&u2 - &w2).norm() + (&u3 - &w3).norm());
            if lhs > rhs * (1.0 + 1e-9) + 1e-14 {
                return Err(Error::InvalidSpec(format!(
                    "nonlinearity violates its Lipschitz envelope at t={t}: {lhs} > {rhs}"
                )));
            }
        }

        for i in 0..=PROBES {
            let s = self.history_start() + self.g_max * i as f64 / PROBES as f64;
            let v = (self.history)(s);
            if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "history must be a finite {n}-vector, got {v:?} at s={s}"
                )));
            }
        }
        Ok(())
    }

    /// Sup over `[t0 - g_max, t0]` of the Euclidean norm of the history,
    /// sampled on a fine grid.
    pub fn history_norm(&self) -> f64 {
        if self.g_max == 0.0 {
            return (self.history)(self.t0).norm();
        }
        let samples = 1024;
        (0..=samples)
            .map(|i| {
                let s = self.history_start() + self.g_max * i as f64 / samples as f64;
                (self.history)(s).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// How `η` is chosen for the certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaChoice {
    Fixed(f64),
    /// Log-spaced search over `[lo, hi]` with `points` grid nodes.
    Search { lo: f64, hi: f64, points: usize },
}

/// The robust-FTS question `{ε1, ε2, ρ, T}` plus the free parameter `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtsQuery {
    pub eps1: f64,
    pub eps2: f64,
    pub rho: f64,
    pub t_end: f64,
    pub eta: EtaChoice,
}

impl FtsQuery {
    /// A query whose `ρ` and `T` are taken from `spec`.
    pub fn for_spec(spec: &SystemSpec, eps1: f64, eps2: f64, eta: EtaChoice) -> Self {
        Self {
            eps1,
            eps2,
            rho: spec.rho,
            t_end: spec.t_end,
            eta,
        }
    }

    pub fn with_eta(mut self, eta: EtaChoice) -> Self {
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidQuery(msg));
        if !(self.eps1 > 0.0 && self.eps1.is_finite()) {
            return bad(format!("eps1 must be positive, got {}", self.eps1));
        }
        if !(self.eps2 > self.eps1 && self.eps2.is_finite()) {
            return bad(format!("need eps1 < eps2, got eps1={}, eps2={}", self.eps1, self.eps2));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be >= 0, got {}", self.rho));
        }
        match self.eta {
            EtaChoice::Fixed(eta) if !(eta > 0.0 && eta.is_finite()) => {
                bad(format!("eta must be positive, got {eta}"))
            }
            EtaChoice::Search { lo, hi, points } => {
                if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                    bad(format!("eta search range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"))
                } else if points == 0 {
                    bad("eta search needs at least one point".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Query validation plus consistency with the system's horizon.
    pub fn validate_for(&self, spec: &SystemSpec) -> Result<()> {
        self.validate()?;
        if (self.t_end - spec.t_end).abs() > 1e-12 * spec.t_end.abs().max(1.0) {
            return Err(Error::InvalidQuery(format!(
                "query horizon T={} differs from system horizon T={}",
                self.t_end, spec.t_end
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn base() -> SystemSpec {
        SystemSpec::linear(
            0.9,
            0.0,
            1.0,
            dmatrix![0.0, -2.0; 1.0, 0.0],
            dmatrix![0.0, 3.0; 0.0, 4.0],
            dmatrix![0.0, -0.8; 1.0, 0.0],
        )
    }

    #[test]
    fn linear_defaults_validate() {
        base().validate().unwrap();
        assert_eq!(base().dim(), 2);
        assert_eq!(base().disturbance_dim(), 2);
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let mut s = base();
        s.a1 = DMatrix::zeros(3, 3);
        assert!(matches!(s.check_structure(), Err(Error::InvalidSpec(_))));
        let mut s = base();
        s.a2 = DMatrix::zeros(3, 1);
        assert!(s.check_structure().is_err());
    }

    #[test]
    fn rejects_bad_scalars() {
        let mut s = base();
        s.beta = 1.5;
        assert!(s.check_structure().is_err());
        let s = base().with_horizon(0.0);
        assert!(s.check_structure().is_err());
    }

    #[test]
    fn rejects_disturbance_outside_ball() {
        let s = base().with_disturbance(Arc::new(|_| DVector::from_vec(vec![0.2, 0.0])), 0.1);
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_lipschitz_violation() {
        let f: NonlinearFn = Arc::new(|_, x, _, _| x.map(|v| (0.5 * v).sin()));
        let s = base().with_nonlinearity(f, Arc::new(|_| 0.1));
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(m)) if m.contains("Lipschitz")));
    }

    #[test]
    fn rejects_nonzero_f_at_origin() {
        let f: NonlinearFn = Arc::new(|_, x, _, _| x.map(|v| v + 1.0));
        let s = base().with_nonlinearity(f, Arc::new(|_| 1.0));
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(m)) if m.contains("vanish")));
    }

    #[test]
    fn rejects_delay_above_cap() {
        let s = base().with_delay(Arc::new(|_| 0.5), 0.1);
        assert!(s.validate().is_err());
    }

    #[test]
    fn query_validation() {
        let s = base();
        let q = FtsQuery::for_spec(&s, 0.1, 50.0, EtaChoice::Fixed(1.0));
        q.validate_for(&s).unwrap();
        assert!(FtsQuery { eps2: 0.05, ..q }.validate().is_err());
        assert!(q.with_eta(EtaChoice::Fixed(0.0)).validate().is_err());
        assert!(q
            .with_eta(EtaChoice::Search { lo: 2.0, hi: 1.0, points: 16 })
            .validate()
            .is_err());
        assert!(FtsQuery { t_end: 2.0, ..q }.validate_for(&s).is_err());
    }
}
