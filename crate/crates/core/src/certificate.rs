//! Sufficient-condition certificate for robust finite-time stability.
//!
//! With `aᵢ = ‖Aᵢ‖ + max κ`, `θ = a0 + a1 + η` and
//! `E = E_β(θ (T - t0)^β)`:
//!
//! ```text
//! M  = sup_{s ∈ [t0, T]} (s - t0)^β / E_β(θ (s - t0)^β)
//! r1 = M θ (a0 + a1) / (η Γ(β+1))      r2 = M θ a2 / (η Γ(β+1))
//! C  = (r1 E + 1) ε1 + r2 E ρ
//! D  = ((a0 + a1)/η · E + 1) ε1 + (a2/η) E ρ
//! ```
//!
//! `C ≤ ε2` certifies robust FTS; `D` replaces `M` by its upper bound
//! `Γ(β+1)/θ` and is therefore never smaller than `C`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::specfun::{gamma, ln_mittag_leffler, mittag_leffler, MlfParams, DEFAULT_REL_TOL};
use crate::system::{EtaChoice, FtsQuery, SystemSpec};
use crate::{Error, Result};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Largest singular value of `a`.
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("spectral norm of a matrix with non-finite entries".into()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.singular_values().max())
}

/// `(a0, a1, a2)` together with the maximum of `κ` that went into them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub kappa_max: f64,
}

impl Coefficients {
    pub fn a01(&self) -> f64 {
        self.a0 + self.a1
    }
}

/// `aᵢ = ‖Aᵢ‖ + max_{[t0,T]} κ`, the max located on a grid and refined by
/// golden-section search around the best node.
pub fn compute_coefficients(spec: &SystemSpec, grid_points: usize) -> Result<Coefficients> {
    spec.check_structure()?;
    if grid_points < 100 {
        return Err(Error::Domain(format!("coefficient grid needs >= 100 points, got {grid_points}")));
    }
    let kappa = |t: f64| -> Result<f64> {
        let k = (spec.kappa)(t);
        if k >= 0.0 && k.is_finite() {
            Ok(k)
        } else {
            Err(Error::InvalidSpec(format!("kappa({t}) = {k} must be finite and >= 0")))
        }
    };
    let (t0, t1) = (spec.t0, spec.t_end);
    let step = (t1 - t0) / (grid_points - 1) as f64;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..grid_points {
        let k = kappa(t0 + step * i as f64)?;
        if k > best {
            best = k;
            best_i = i;
        }
    }
    let lo = t0 + step * best_i.saturating_sub(1) as f64;
    let hi = (t0 + step * (best_i + 1) as f64).min(t1);
    let mut err = None;
    let (_, refined) = golden_max(
        |t| match kappa(t) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        lo,
        hi,
        1e-9,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let kappa_max = best.max(refined);
    Ok(Coefficients {
        a0: spectral_norm(&spec.a0)? + kappa_max,
        a1: spectral_norm(&spec.a1)? + kappa_max,
        a2: spectral_norm(&spec.a2)? + kappa_max,
        kappa_max,
    })
}

/// Maximise a scalar function on `[lo, hi]` by golden-section search,
/// stopping once successive best values differ by less than `rel` relative
/// and the bracket has collapsed. Returns `(argmax, max)`, endpoints included.
fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, rel: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut best = (a, f(a));
    let fb = f(b);
    if fb > best.1 {
        best = (b, fb);
    }
    if b <= a {
        return best;
    }
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let width0 = b - a;
    for _ in 0..200 {
        let prev = best.1;
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        }
        for (x, v) in [(x1, f1), (x2, f2)] {
            if v > best.1 {
                best = (x, v);
            }
        }
        let settled = (best.1 - prev).abs() <= rel * best.1.abs();
        if settled && (b - a) <= 1e-12 * width0.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    best
}

/// `M = sup_{s∈[t0,T]} (s - t0)^β / E_β(θ (s - t0)^β)`.
///
/// A uniform grid locates every local maximum within `1e-3` of the grid
/// maximum; each is refined by golden-section search. The result is checked
/// against the analytic bound `Γ(β+1)/θ`.
pub fn compute_m(beta: f64, theta: f64, t0: f64, t_end: f64, grid_points: usize) -> Result<f64> {
    if !(t_end >= t0) {
        return Err(Error::Domain(format!("need T >= t0, got t0={t0}, T={t_end}")));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    if grid_points < 200 {
        return Err(Error::Domain(format!("M grid needs >= 200 points, got {grid_points}")));
    }
    if t_end == t0 {
        return Ok(0.0);
    }
    let params = MlfParams::with_default_tol(beta)?;
    let phi = |s: f64| -> Result<f64> {
        let tau = s - t0;
        if tau <= 0.0 {
            return Ok(0.0);
        }
        let u = tau.powf(beta);
        match ln_mittag_leffler(&params, theta * u) {
            Ok(ln_e) => Ok((beta * tau.ln() - ln_e).exp()),
            // E_β beyond even log range: the ratio is zero to f64 precision
            Err(Error::Overflow(_)) => Ok(0.0),
            Err(e) => Err(e),
        }
    };

    let step = (t_end - t0) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| if i + 1 == grid_points { t_end } else { t0 + step * i as f64 })
        .collect();
    let values = grid.iter().map(|&s| phi(s)).collect::<Result<Vec<_>>>()?;
    let grid_max = values.iter().cloned().fold(0.0, f64::max);
    let mut best = grid_max;

    let last = grid_points - 1;
    for i in 1..=last {
        let left_ok = values[i] >= values[i - 1];
        let right_ok = i == last || values[i] >= values[i + 1];
        if !(left_ok && right_ok && values[i] >= grid_max * (1.0 - 1e-3)) {
            continue;
        }
        let lo = grid[i - 1];
        let hi = if i == last { t_end } else { grid[i + 1] };
        let mut err = None;
        let (_, v) = golden_max(
            |s| match phi(s) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            lo,
            hi,
            1e-10,
        );
        if let Some(e) = err {
            return Err(e);
        }
        best = best.max(v);
    }

    let bound = gamma(beta + 1.0)? / theta;
    if best > bound * (1.0 + 1e-8) {
        return Err(Error::Inconsistent(format!(
            "M = {best} exceeds the analytic bound Γ(β+1)/θ = {bound}"
        )));
    }
    Ok(best)
}

/// Outcome of a certificate evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// `C ≤ ε2` (and hence robust FTS holds).
    Certified,
    /// The sufficient condition fails. This says nothing about instability.
    NotCertified,
    /// `E_β(θ (T - t0)^β)` overflows; the bound carries no information.
    VacuousOverflow,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Certified => 0,
            Status::NotCertified => 1,
            Status::VacuousOverflow => 2,
        }
    }
}

/// Numerical settings recorded alongside a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Provenance {
    pub coefficient_grid: usize,
    pub m_grid: usize,
    pub mlf_rel_tol: f64,
}

impl Default for Provenance {
    fn default() -> Self {
        Self {
            coefficient_grid: 1000,
            m_grid: 2000,
            mlf_rel_tol: DEFAULT_REL_TOL,
        }
    }
}

/// All constants of the certificate for one `η`.
///
/// Bounds that overflow are stored as `+∞` (serialised as `null`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub r1: f64,
    pub r2: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
    /// `E_β(θ (T - t0)^β)`
    #[serde(rename = "E")]
    pub e: f64,
    pub eta: f64,
    #[serde(rename = "verdict_C")]
    pub verdict_c: bool,
    #[serde(rename = "verdict_D")]
    pub verdict_d: bool,
    pub status: Status,
    pub provenance: Provenance,
}

impl Certificate {
    pub fn a01(&self) -> f64 {
        self.a0 + self.a1
    }
}

/// Certificate with `η` fixed by the query.
pub fn compute_certificate(spec: &SystemSpec, query: &FtsQuery) -> Result<Certificate> {
    compute_certificate_with(spec, query, &Provenance::default())
}

pub fn compute_certificate_with(
    spec: &SystemSpec,
    query: &FtsQuery,
    settings: &Provenance,
) -> Result<Certificate> {
    query.validate_for(spec)?;
    let eta = match query.eta {
        EtaChoice::Fixed(eta) => eta,
        EtaChoice::Search { .. } => {
            return Err(Error::InvalidQuery(
                "query asks for an eta search; use optimize_eta".into(),
            ))
        }
    };
    let coef = compute_coefficients(spec, settings.coefficient_grid)?;
    certificate_at(spec, query, &coef, eta, settings)
}

fn certificate_at(
    spec: &SystemSpec,
    query: &FtsQuery,
    coef: &Coefficients,
    eta: f64,
    settings: &Provenance,
) -> Result<Certificate> {
    let beta = spec.beta;
    let theta = coef.a01() + eta;
    let m = compute_m(beta, theta, spec.t0, spec.t_end, settings.m_grid)?;
    let g1 = gamma(beta + 1.0)?;
    let r1 = m * theta * coef.a01() / (eta * g1);
    let r2 = m * theta * coef.a2 / (eta * g1);

    let e = horizon_mlf(beta, theta, spec.t_end - spec.t0, settings.mlf_rel_tol)?;
    let (c, d) = match e {
        Some(e) => bounds(coef, eta, r1, r2, e, query.eps1, query.rho),
        None => (f64::INFINITY, f64::INFINITY),
    };
    let verdict_c = c <= query.eps2;
    let verdict_d = d <= query.eps2;
    let status = if e.is_none() {
        Status::VacuousOverflow
    } else if verdict_c || verdict_d {
        Status::Certified
    } else {
        Status::NotCertified
    };
    Ok(Certificate {
        a0: coef.a0,
        a1: coef.a1,
        a2: coef.a2,
        m,
        r1,
        r2,
        c,
        d,
        e: e.unwrap_or(f64::INFINITY),
        eta,
        verdict_c,
        verdict_d,
        status,
        provenance: *settings,
    })
}

/// `E_β(θ τ^β)`, or `None` when it overflows. At `β = 1` this is `exp(θ τ)`.
fn horizon_mlf(beta: f64, theta: f64, tau: f64, rel_tol: f64) -> Result<Option<f64>> {
    let params = MlfParams::new(beta, rel_tol)?;
    match mittag_leffler(&params, theta * tau.powf(beta)) {
        Ok(v) => Ok(Some(v)),
        Err(Error::Overflow(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn bounds(coef: &Coefficients, eta: f64, r1: f64, r2: f64, e: f64, eps1: f64, rho: f64) -> (f64, f64) {
    let c = (r1 * e + 1.0) * eps1 + r2 * e * rho;
    let d = (coef.a01() / eta * e + 1.0) * eps1 + coef.a2 / eta * e * rho;
    (c, d)
}

/// One row of an η sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub eta: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "verdict_D")]
    pub verdict_d: bool,
}

/// Result of an η search: the full grid and the certificate at the refined
/// minimiser of `D`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaSearch {
    pub rows: Vec<SweepRow>,
    pub best: Certificate,
}

/// Optimise η over the query's search range. Requires at least 16 grid
/// points unless the range is a single point.
pub fn optimize_eta(spec: &SystemSpec, query: &FtsQuery) -> Result<EtaSearch> {
    let (lo, hi, points) = match query.eta {
        EtaChoice::Search { lo, hi, points } => (lo, hi, points),
        EtaChoice::Fixed(eta) => (eta, eta, 1),
    };
    if hi > lo && points < 16 {
        return Err(Error::InvalidQuery(format!("eta search needs >= 16 points, got {points}")));
    }
    sweep_eta(spec, query, lo, hi, points)
}

/// Evaluate `C` and `D` on a log-spaced η grid over `[lo, hi]`, then refine
/// the best `D` by golden-section search in `ln η` to relative `1e-4`.
///
/// Grid points are evaluated in parallel; the minimiser is chosen by `D`
/// with ties going to the smaller η.
pub fn sweep_eta(spec: &SystemSpec, query: &FtsQuery, lo: f64, hi: f64, points: usize) -> Result<EtaSearch> {
    let q = query.with_eta(EtaChoice::Fixed(lo));
    q.validate_for(spec)?;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidQuery(format!("need 0 < eta_min <= eta_max, got [{lo}, {hi}]")));
    }
    if points == 0 || (hi > lo && points < 2) {
        return Err(Error::InvalidQuery(format!(
            "eta sweep over a non-degenerate range needs >= 2 points, got {points}"
        )));
    }
    let settings = Provenance::default();
    let coef = compute_coefficients(spec, settings.coefficient_grid)?;

    let etas: Vec<f64> = if hi == lo {
        vec![lo]
    } else {
        let (llo, lhi) = (lo.ln(), hi.ln());
        (0..points)
            .map(|i| match i {
                0 => lo,
                i if i + 1 == points => hi,
                i => (llo + (lhi - llo) * i as f64 / (points - 1) as f64).exp(),
            })
            .collect()
    };

    let certs = etas
        .par_iter()
        .map(|&eta| certificate_at(spec, &q, &coef, eta, &settings))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<SweepRow> = certs
        .iter()
        .map(|c| SweepRow {
            eta: c.eta,
            c: c.c,
            d: c.d,
            verdict_d: c.verdict_d,
        })
        .collect();

    let mut best_i: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        if row.d.is_finite() && best_i.map_or(true, |b| row.d < rows[b].d) {
            best_i = Some(i);
        }
    }
    let best_i = best_i.ok_or(Error::VacuousRange { lo, hi })?;
    if etas.len() == 1 {
        return Ok(EtaSearch {
            rows,
            best: certs.into_iter().next().expect("one certificate"),
        });
    }

    // D needs no M, so the refinement evaluates it directly.
    let d_of = |eta: f64| -> f64 {
        let theta = coef.a01() + eta;
        match horizon_mlf(spec.beta, theta, spec.t_end - spec.t0, settings.mlf_rel_tol) {
            Ok(Some(e)) => bounds(&coef, eta, 0.0, 0.0, e, q.eps1, q.rho).1,
            _ => f64::INFINITY,
        }
    };
    let mut a = etas[best_i.saturating_sub(1)].ln();
    let mut b = etas[(best_i + 1).min(etas.len() - 1)].ln();
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = d_of(x1.exp());
    let mut f2 = d_of(x2.exp());
    while (b - a).exp() - 1.0 > 1e-4 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = d_of(x1.exp());
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = d_of(x2.exp());
        }
    }
    let refined_eta = if f1 <= f2 { x1.exp() } else { x2.exp() };
    let refined = certificate_at(spec, &q, &coef, refined_eta, &settings)?;
    let best = if refined.d < certs[best_i].d {
        refined
    } else {
        certs[best_i].clone()
    };
    Ok(EtaSearch { rows, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use std::sync::Arc;

    /// Power iteration on AᵀA, independent of the SVD route.
    fn power_norm(a: &DMatrix<f64>) -> f64 {
        let ata = a.transpose() * a;
        let mut v = nalgebra::DVector::from_fn(a.ncols(), |i, _| 1.0 + 0.1 * i as f64);
        let mut lambda = 0.0;
        for _ in 0..2000 {
            let w = &ata * &v;
            let n = w.norm();
            if n == 0.0 {
                return 0.0;
            }
            lambda = n;
            v = w / n;
        }
        lambda.sqrt()
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&dmatrix![0.0, -2.0; 1.0, 0.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!((spectral_norm(&dmatrix![0.0, 3.0; 0.0, 4.0]).unwrap() - 5.0).abs() < 1e-12);
        for n in 1..6 {
            let id = DMatrix::<f64>::identity(n, n);
            assert!((spectral_norm(&id).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn spectral_norm_matches_power_iteration() {
        let a = dmatrix![1.0, 2.0, -0.5; 0.3, -1.2, 4.0];
        let s = spectral_norm(&a).unwrap();
        assert!((s - power_norm(&a)).abs() / s < 1e-10);
    }

    #[test]
    fn spectral_norm_rejects_nan() {
        assert!(spectral_norm(&dmatrix![f64::NAN, 0.0; 0.0, 1.0]).is_err());
    }

    #[test]
    fn coefficients_refine_a_moving_kappa_peak() {
        // κ peaks at t = 0.3217 between grid nodes
        let spec = SystemSpec::linear(0.5, 0.0, 1.0, DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1))
            .with_nonlinearity(Arc::new(|_, x, _, _| x * 0.0), Arc::new(|t| 1.0 - (t - 0.3217).powi(2)));
        let c = compute_coefficients(&spec, 100).unwrap();
        assert!((c.kappa_max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coefficients_zero_system() {
        let z = DMatrix::zeros(2, 2);
        let spec = SystemSpec::linear(0.5, 0.0, 1.0, z.clone(), z.clone(), z);
        let c = compute_coefficients(&spec, 100).unwrap();
        assert_eq!((c.a0, c.a1, c.a2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn coefficients_reject_negative_kappa() {
        let z = DMatrix::zeros(1, 1);
        let spec = SystemSpec::linear(0.5, 0.0, 1.0, z.clone(), z.clone(), z)
            .with_nonlinearity(Arc::new(|_, x, _, _| x * 0.0), Arc::new(|t| t - 0.5));
        assert!(compute_coefficients(&spec, 100).is_err());
    }

    #[test]
    fn m_degenerate_horizon_is_zero() {
        assert_eq!(compute_m(0.9, 8.02, 0.0, 0.0, 200).unwrap(), 0.0);
    }

    #[test]
    fn m_matches_dense_grid_oracle() {
        // 10^6-point brute-force grid, independent of the refinement path
        let (beta, theta, t_end) = (0.9, 8.02, 0.385);
        let p = MlfParams::with_default_tol(beta).unwrap();
        let n = 1_000_000;
        let mut oracle = 0.0f64;
        for i in 1..=n {
            let s = t_end * i as f64 / n as f64;
            let u = s.powf(beta);
            oracle = oracle.max(u / mittag_leffler(&p, theta * u).unwrap());
        }
        let m = compute_m(beta, theta, 0.0, t_end, 2000).unwrap();
        assert!((m - oracle).abs() / oracle < 1e-6, "M={m}, oracle={oracle}");
        assert!(m >= oracle * (1.0 - 1e-12));
    }

    #[test]
    fn m_respects_analytic_bound() {
        for &(beta, theta, t_end) in &[(0.3, 0.5, 10.0), (0.6, 4.02, 0.49), (1.0, 3.0, 2.0), (0.95, 50.0, 1.0)] {
            let m = compute_m(beta, theta, 0.0, t_end, 500).unwrap();
            assert!(m <= gamma(beta + 1.0).unwrap() / theta * (1.0 + 1e-8));
            assert!(m > 0.0);
        }
    }

    #[test]
    fn status_exit_codes() {
        assert_eq!(Status::Certified.exit_code(), 0);
        assert_eq!(Status::NotCertified.exit_code(), 1);
        assert_eq!(Status::VacuousOverflow.exit_code(), 2);
    }
}
