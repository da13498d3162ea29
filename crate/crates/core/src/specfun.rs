//! Gamma and one-parameter Mittag-Leffler functions.
//!
//! `E_σ(t) = Σ_{b≥0} t^b / Γ(bσ + 1)` is evaluated with two branches:
//!
//! * the power series, summed directly, whenever `X = t^(1/σ)` is at most
//!   [`SERIES_LIMIT`] (and for every `t ≤ 0`);
//! * the exponential asymptotic form
//!   `E_σ(t) ≈ exp(X)/σ - Σ_{k≥1} t^(-k) / Γ(1 - kσ)` beyond it.
//!
//! For real `t > 0` and `σ < 1` the exponential saddle is the only one that
//! contributes, so the asymptotic form carries only the algebraic tail. In
//! the window `[OVERLAP_START, SERIES_LIMIT]` both branches are valid and
//! must agree; [`branch_overlap_discrepancy`] measures that.

use std::f64::consts::PI;

use crate::quadrature::GaussLegendre;
use crate::{Error, Result};

/// Largest argument accepted by [`gamma`] before `Γ(x)` leaves the `f64` range.
pub const GAMMA_MAX_ARG: f64 = 171.624_376_956_302_7;

/// Series branch is used while `t^(1/σ) ≤ SERIES_LIMIT`.
pub const SERIES_LIMIT: f64 = 40.0;
/// Lower edge of the window where both branches are evaluated for agreement.
pub const OVERLAP_START: f64 = 28.0;

/// Default relative tolerance for Mittag-Leffler evaluations.
pub const DEFAULT_REL_TOL: f64 = 1e-12;

const MAX_SERIES_TERMS: usize = 20_000_000;
const MAX_ASYMPTOTIC_TERMS: usize = 1_000_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `Γ(x)` for `x > 0`.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("gamma requires x > 0, got {x}")));
    }
    if x > GAMMA_MAX_ARG {
        return Err(Error::Overflow(format!("gamma({x}) exceeds f64 range")));
    }
    Ok(gamma_positive(x))
}

fn gamma_positive(x: f64) -> f64 {
    if x < 1.0 {
        return gamma_positive(x + 1.0) / x;
    }
    if x == x.floor() && x <= 30.0 {
        // exact factorials
        return (1..x as u64).fold(1.0, |acc, k| acc * k as f64);
    }
    let z = x - 1.0;
    let mut series = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        series += c / (z + i as f64);
    }
    let w = z + LANCZOS_G + 0.5;
    // split the power so that w^(z+1/2) e^-w does not overflow before Γ does
    let half = w.powf(0.5 * (z + 0.5));
    (2.0 * PI).sqrt() * half * (-w).exp() * half * series
}

/// `1/Γ(z)` for any real `z`; zero at the poles of `Γ`.
pub fn reciprocal_gamma(z: f64) -> f64 {
    if z > 0.0 {
        if z > GAMMA_MAX_ARG {
            0.0
        } else {
            1.0 / gamma_positive(z)
        }
    } else if z == z.floor() {
        0.0
    } else {
        // reflection: 1/Γ(z) = sin(πz) Γ(1-z) / π
        let g = if 1.0 - z > GAMMA_MAX_ARG {
            f64::INFINITY
        } else {
            gamma_positive(1.0 - z)
        };
        sin_pi(z) * g / PI
    }
}

fn sin_pi(z: f64) -> f64 {
    let r = z - 2.0 * (0.5 * z).round();
    // r in [-1, 1]
    if r.abs() > 0.5 {
        (PI * (r.signum() - r)).sin()
    } else {
        (PI * r).sin()
    }
}

/// Order and accuracy request for a Mittag-Leffler evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlfParams {
    sigma: f64,
    rel_tol: f64,
}

impl MlfParams {
    pub fn new(sigma: f64, rel_tol: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma <= 1.0) {
            return Err(Error::Domain(format!("MLF order must lie in (0, 1], got {sigma}")));
        }
        if !(rel_tol > 0.0 && rel_tol < 1e-3) {
            return Err(Error::Domain(format!(
                "MLF tolerance must lie in (0, 1e-3), got {rel_tol}"
            )));
        }
        Ok(Self { sigma, rel_tol })
    }

    pub fn with_default_tol(sigma: f64) -> Result<Self> {
        Self::new(sigma, DEFAULT_REL_TOL)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }
}

/// Which evaluation branch a given argument uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Series,
    Asymptotic,
    Exponential,
}

pub fn branch_for(params: &MlfParams, t: f64) -> Branch {
    if params.sigma == 1.0 {
        Branch::Exponential
    } else if t > 0.0 && t.powf(1.0 / params.sigma) > SERIES_LIMIT {
        Branch::Asymptotic
    } else {
        Branch::Series
    }
}

/// `E_σ(t)` to relative accuracy `params.rel_tol()`.
///
/// Accuracy is guaranteed for `t ≥ -1`. Below that the series is still
/// attempted, and an [`Error::Accuracy`] is returned once cancellation makes
/// the tolerance uncertifiable.
pub fn mittag_leffler(params: &MlfParams, t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("MLF argument must be finite, got {t}")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    match branch_for(params, t) {
        Branch::Exponential => {
            let v = t.exp();
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Overflow(format!("exp({t}) exceeds f64 range")))
            }
        }
        Branch::Series => series(params, t),
        Branch::Asymptotic => {
            let a = asymptotic(params, t)?;
            let lead = (a.big_x - params.sigma.ln()).exp();
            if !lead.is_finite() {
                return Err(Error::Overflow(format!(
                    "E_{}({t}) exceeds f64 range (t^(1/σ) = {})",
                    params.sigma, a.big_x
                )));
            }
            Ok(lead - a.tail)
        }
    }
}

/// `ln E_σ(t)`, usable where `E_σ(t)` itself would overflow.
///
/// Fails with [`Error::Overflow`] only when `t^(1/σ)` itself is infinite.
pub fn ln_mittag_leffler(params: &MlfParams, t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("MLF argument must be finite, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    match branch_for(params, t) {
        Branch::Exponential => Ok(t),
        Branch::Series => Ok(series(params, t)?.ln()),
        Branch::Asymptotic => {
            let a = asymptotic(params, t)?;
            let rel = params.sigma * (-a.big_x).exp() * a.tail;
            Ok(a.big_x - params.sigma.ln() + (-rel).ln_1p())
        }
    }
}

fn series(params: &MlfParams, t: f64) -> Result<f64> {
    let sigma = params.sigma;
    let tol = params.rel_tol;
    let mag = t.abs();
    let negative = t < 0.0;

    // Neumaier-compensated sum
    let mut sum = 1.0f64;
    let mut comp = 0.0;
    let mut abs_sum = 1.0;
    let mut prev = 1.0f64;
    let mut decreasing = 0usize;
    let mut converged = false;

    for b in 1..MAX_SERIES_TERMS {
        let bf = b as f64;
        let num = mag.powf(bf);
        let den_arg = bf * sigma + 1.0;
        let abs_term = if den_arg > GAMMA_MAX_ARG {
            if num.is_finite() && prev < f64::EPSILON * tol * sum.abs() {
                0.0
            } else {
                return Err(Error::Accuracy(format!(
                    "series for E_{sigma}({t}) did not settle before Γ overflow"
                )));
            }
        } else {
            num / gamma_positive(den_arg)
        };
        if !abs_term.is_finite() {
            return Err(Error::Accuracy(format!(
                "series term overflow evaluating E_{sigma}({t})"
            )));
        }
        let term = if negative && b % 2 == 1 { -abs_term } else { abs_term };

        let s = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - s) + term;
        } else {
            comp += (term - s) + sum;
        }
        sum = s;
        abs_sum += abs_term;

        if abs_term < prev {
            decreasing += 1;
        } else {
            decreasing = 0;
        }
        if decreasing >= 3 {
            let ratio = abs_term / prev;
            let tail = if ratio < 1.0 {
                abs_term * ratio / (1.0 - ratio)
            } else {
                f64::INFINITY
            };
            if tail <= 0.1 * tol * (sum + comp).abs() || abs_term == 0.0 {
                converged = true;
                break;
            }
        }
        prev = abs_term;
    }

    let value = sum + comp;
    if !converged {
        return Err(Error::Accuracy(format!(
            "series for E_{sigma}({t}) did not converge in {MAX_SERIES_TERMS} terms"
        )));
    }
    // each term carries a few ulps from pow and Γ
    let rounding = 8.0 * f64::EPSILON * abs_sum;
    if rounding > tol * value.abs() {
        return Err(Error::Accuracy(format!(
            "cancellation in series for E_{sigma}({t}): estimated relative error {:.3e}",
            rounding / value.abs()
        )));
    }
    Ok(value)
}

struct Asymptotic {
    /// `t^(1/σ)`
    big_x: f64,
    /// `Σ_{k≥1} t^(-k) / Γ(1 - kσ)`
    tail: f64,
}

fn asymptotic(params: &MlfParams, t: f64) -> Result<Asymptotic> {
    let sigma = params.sigma;
    let big_x = t.powf(1.0 / sigma);
    if big_x.is_infinite() {
        return Err(Error::Overflow(format!(
            "t^(1/σ) overflows for E_{sigma}({t})"
        )));
    }
    // The tail matters relative to exp(X)/σ; it is negligible once a term
    // drops below this magnitude.
    let ln_lead = big_x - sigma.ln();
    let ln_negligible = (0.01 * params.rel_tol).ln() + ln_lead;

    let ln_t = t.ln();
    let mut tail = 0.0;
    let mut smallest = f64::INFINITY;
    let mut settled = false;
    for k in 1..MAX_ASYMPTOTIC_TERMS {
        let kf = k as f64;
        let rg = reciprocal_gamma(1.0 - kf * sigma);
        if rg == 0.0 {
            continue;
        }
        let ln_mag = -kf * ln_t + rg.abs().ln();
        if ln_mag < ln_negligible {
            settled = true;
            break;
        }
        let mag = ln_mag.exp();
        if mag > smallest && kf * sigma > big_x {
            // past the optimal truncation point of the divergent tail
            break;
        }
        smallest = smallest.min(mag);
        tail += rg * (-kf * ln_t).exp();
    }
    if !settled {
        let rel_err = (smallest.ln() - ln_lead).exp();
        if !(rel_err <= params.rel_tol) {
            return Err(Error::Accuracy(format!(
                "asymptotic tail for E_{sigma}({t}) cannot reach relative {:e}",
                params.rel_tol
            )));
        }
    }
    Ok(Asymptotic { big_x, tail })
}

/// Largest relative disagreement between the series and asymptotic branches
/// over the overlap window `t^(1/σ) ∈ [OVERLAP_START, SERIES_LIMIT]`.
///
/// At `σ = 1` both branches reduce to `exp` and the result is zero.
pub fn branch_overlap_discrepancy(params: &MlfParams, samples: usize) -> Result<f64> {
    if params.sigma == 1.0 {
        return Ok(0.0);
    }
    let samples = samples.max(2);
    let mut worst = 0.0f64;
    for i in 0..samples {
        let big_x = OVERLAP_START + (SERIES_LIMIT - OVERLAP_START) * i as f64 / (samples - 1) as f64;
        let t = big_x.powf(params.sigma);
        let s = series(params, t)?;
        let a = asymptotic(params, t)?;
        let asym = (a.big_x - params.sigma.ln()).exp() - a.tail;
        worst = worst.max((s - asym).abs() / s.abs());
    }
    Ok(worst)
}

/// Validation probe for the fractional-integral identity of
/// `ψ(s) = E_σ(θ (s - r)^σ)`:
///
/// `(1/Γ(σ)) ∫_r^s (s - λ)^(σ-1) ψ(λ) dλ = (ψ(s) - 1) / θ`.
///
/// The integral is split at the midpoint; each half is graded with
/// `λ - r ∝ y^q` (resp. `s - λ ∝ y^q`), `q = ⌈4/σ⌉`, which absorbs both the
/// `(λ - r)^σ` behaviour of `ψ` and the weakly singular kernel, then
/// integrated by Gauss-Legendre. Returns the relative residual
/// `|lhs - rhs| / max(1, |rhs|)`.
pub fn psi_eigenfunction_residual(
    sigma: f64,
    theta: f64,
    r: f64,
    s: f64,
    quadrature_points: usize,
) -> Result<f64> {
    let params = MlfParams::with_default_tol(sigma)?;
    if !(theta != 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("theta must be nonzero and finite, got {theta}")));
    }
    if !(s > r) || !r.is_finite() || !s.is_finite() {
        return Err(Error::Domain(format!("need finite r < s, got r={r}, s={s}")));
    }
    if quadrature_points < 64 {
        return Err(Error::Domain(format!(
            "at least 64 quadrature points required, got {quadrature_points}"
        )));
    }

    let psi = |lambda: f64| -> Result<f64> {
        let arg = theta * (lambda - r).max(0.0).powf(sigma);
        mittag_leffler(&params, arg)
    };

    let q = (4.0 / sigma).ceil();
    let mid = 0.5 * (r + s);
    let left_len = mid - r;
    let right_len = s - mid;

    let integrate = |n: usize| -> Result<f64> {
        let rule = GaussLegendre::new(n);
        let mut total = 0.0;
        for (&y, &w) in rule.nodes.iter().zip(&rule.weights) {
            let yq = y.powf(q);
            // left half: λ = r + left_len * y^q
            let lam = r + left_len * yq;
            let jac = q * left_len * y.powf(q - 1.0);
            total += w * (s - lam).powf(sigma - 1.0) * psi(lam)? * jac;
            // right half: λ = s - right_len * y^q, kernel folded into y^(qσ-1)
            let lam = s - right_len * yq;
            total += w * q * right_len.powf(sigma) * y.powf(q * sigma - 1.0) * psi(lam)?;
        }
        Ok(total / gamma_positive(sigma))
    };

    let n = quadrature_points / 2;
    let fine = integrate(n)?;
    let coarse = integrate(n / 2)?;
    let rhs = (psi(s)? - 1.0) / theta;
    let scale = rhs.abs().max(1.0);
    if (fine - coarse).abs() / scale > 1e-6 {
        return Err(Error::Quadrature(format!(
            "{quadrature_points} points do not resolve the kernel singularity to 1e-6 \
             (refinement change {:.3e})",
            (fine - coarse).abs() / scale
        )));
    }
    Ok((fine - rhs).abs() / scale)
}
