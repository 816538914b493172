//! Convex upper envelopes of a cumulant generating function and the inverse
//! of their Legendre dual.
//!
//! For a convex `psi: [0, b) -> R` with `psi(0) = psi'(0) = 0`, the inverse of
//! its Legendre dual is
//!
//! ```text
//! psi*^{-1}(u) = inf_{0 < lambda < b} (u + psi(lambda)) / lambda
//! ```
//!
//! The ratio is quasi-convex in `lambda` (convex numerator, linear positive
//! denominator) and stays so in `ln lambda`, so a bracketed golden-section
//! search in log space finds the infimum.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which tail of the loss the envelope controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvelopeSide {
    Plus,
    Minus,
}

type PsiFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    /// `psi = 0`; its dual inverse is identically zero.
    Zero,
    /// `psi(lambda) = r_sq * lambda^2 / 2`.
    Quadratic {
        r_sq: f64,
    },
    Custom(PsiFn),
}

/// A CGF envelope `psi` on `[0, domain_bound)`.
#[derive(Clone)]
pub struct PsiEnvelope {
    shape: Shape,
    domain_bound: f64,
    side: EnvelopeSide,
}

impl fmt::Debug for PsiEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match &self.shape {
            Shape::Zero => "zero".to_string(),
            Shape::Quadratic { r_sq } => format!("quadratic(R^2={r_sq})"),
            Shape::Custom(_) => "custom".to_string(),
        };
        f.debug_struct("PsiEnvelope")
            .field("shape", &shape)
            .field("domain_bound", &self.domain_bound)
            .field("side", &self.side)
            .finish()
    }
}

/// Sub-Gaussian envelope `psi(lambda) = R^2 lambda^2 / 2` on `[0, inf)`.
pub fn subgaussian_envelope(r: f64, side: EnvelopeSide) -> Result<PsiEnvelope> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sub-Gaussian scale must be positive (got {r})"
        )));
    }
    Ok(PsiEnvelope {
        shape: Shape::Quadratic { r_sq: r * r },
        domain_bound: f64::INFINITY,
        side,
    })
}

impl PsiEnvelope {
    /// The zero envelope, whose dual inverse vanishes everywhere.
    pub fn zero(side: EnvelopeSide) -> Self {
        Self {
            shape: Shape::Zero,
            domain_bound: f64::INFINITY,
            side,
        }
    }

    /// The quadratic envelope whose dual inverse is `coefficient * sqrt(u)`.
    ///
    /// `sqrt(2 R^2 u) = c sqrt(u)` gives `R = c / sqrt(2)`.
    pub fn with_sqrt_dual(coefficient: f64, side: EnvelopeSide) -> Result<Self> {
        subgaussian_envelope(coefficient / std::f64::consts::SQRT_2, side)
    }

    /// A user-supplied envelope. The shape conditions are checked on a grid.
    pub fn custom<F>(psi: F, domain_bound: f64, side: EnvelopeSide) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(domain_bound > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "envelope domain bound must be positive (got {domain_bound})"
            )));
        }
        let env = Self {
            shape: Shape::Custom(Arc::new(psi)),
            domain_bound,
            side,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        match &self.shape {
            Shape::Zero => 0.0,
            Shape::Quadratic { r_sq } => 0.5 * r_sq * lambda * lambda,
            Shape::Custom(f) => f(lambda),
        }
    }

    pub fn domain_bound(&self) -> f64 {
        self.domain_bound
    }

    pub fn side(&self) -> EnvelopeSide {
        self.side
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.shape, Shape::Zero)
    }

    /// Checks `psi(0) = 0`, `psi'(0) = 0`, monotonicity and convexity on a
    /// sampled grid inside the domain.
    pub fn validate(&self) -> Result<()> {
        let reach = if self.domain_bound.is_finite() {
            0.99 * self.domain_bound
        } else {
            10.0
        };
        let at_zero = self.eval(0.0);
        if at_zero.abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "psi(0) = {at_zero}, expected 0"
            )));
        }
        let h = 1e-6 * reach;
        let slope = (self.eval(h) - at_zero) / h;
        if slope.abs() > 1e-4 * (1.0 + self.eval(reach).abs() / reach) {
            return Err(Error::InvalidParameter(format!(
                "psi'(0) ~ {slope}, expected 0"
            )));
        }
        let points = 64;
        let values: Vec<f64> = (0..=points)
            .map(|i| self.eval(reach * i as f64 / points as f64))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "psi is not finite on its domain".into(),
            ));
        }
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-9 * scale;
        for w in values.windows(2) {
            if w[1] < w[0] - tol {
                return Err(Error::InvalidParameter("psi is not nondecreasing".into()));
            }
        }
        for w in values.windows(3) {
            if w[0] + w[2] - 2.0 * w[1] < -tol {
                return Err(Error::InvalidParameter("psi is not convex".into()));
            }
        }
        Ok(())
    }

    /// Closed-form dual inverse where one is known.
    pub fn closed_form_dual_inverse(&self, u: f64) -> Option<f64> {
        match &self.shape {
            Shape::Zero => Some(0.0),
            Shape::Quadratic { r_sq } => Some((2.0 * r_sq * u.max(0.0)).sqrt()),
            Shape::Custom(_) => None,
        }
    }

    /// Dual inverse, in closed form when available and numerically otherwise.
    pub fn dual_inverse(&self, u: f64) -> Result<f64> {
        if u < 0.0 || u.is_nan() {
            return Err(Error::NegativeInformation(u));
        }
        match self.closed_form_dual_inverse(u) {
            Some(v) => Ok(v),
            None => legendre_dual_inverse(self, u),
        }
    }
}

const RELATIVE_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 500;
const LOG_LAMBDA_LIMIT: f64 = 700.0;
/// Minimizers beyond `lambda = 1e15` are taken as an infimum at infinity.
const LOG_LAMBDA_ESCAPE: f64 = 34.538_776_394_910_684;

/// `inf_{0 < lambda < b} (u + psi(lambda)) / lambda`, found numerically.
///
/// The zero envelope short-circuits to 0. An infimum that is only approached
/// as `lambda -> inf` is reported as non-convergence.
pub fn legendre_dual_inverse(psi: &PsiEnvelope, u: f64) -> Result<f64> {
    if u < 0.0 || u.is_nan() {
        return Err(Error::NegativeInformation(u));
    }
    if u == 0.0 || psi.is_zero() {
        return Ok(0.0);
    }
    let objective = |x: f64| {
        let lambda = x.exp();
        (u + psi.eval(lambda)) / lambda
    };
    let upper_limit = if psi.domain_bound.is_finite() {
        // Stay strictly inside the open domain.
        (psi.domain_bound * (1.0 - 1e-12)).ln()
    } else {
        LOG_LAMBDA_LIMIT
    };

    // Bracket the minimum in x = ln(lambda).
    let mut mid = upper_limit.min(0.0);
    let mut f_mid = objective(mid);
    let mut step = 1.0;
    let mut lo = mid - step;
    let mut f_lo = objective(lo);
    while f_lo < f_mid {
        mid = lo;
        f_mid = f_lo;
        step *= 2.0;
        lo = mid - step;
        if lo < -LOG_LAMBDA_LIMIT {
            return Err(Error::NonConvergence(format!(
                "dual inverse at u={u}: infimum approached as lambda -> 0"
            )));
        }
        f_lo = objective(lo);
    }
    step = 1.0;
    let mut hi = (mid + step).min(upper_limit);
    let mut f_hi = objective(hi);
    while f_hi < f_mid {
        if hi >= upper_limit {
            if psi.domain_bound.is_finite() {
                // Infimum at the domain edge.
                return Ok(f_hi);
            }
            return Err(Error::NonConvergence(format!(
                "dual inverse at u={u}: objective still decreasing at lambda = e^{hi:.0}"
            )));
        }
        lo = mid;
        mid = hi;
        f_mid = f_hi;
        step *= 2.0;
        hi = (mid + step).min(upper_limit);
        f_hi = objective(hi);
    }

    // Golden-section search on [lo, hi].
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..MAX_ITERATIONS {
        if b - a <= RELATIVE_TOLERANCE {
            if psi.domain_bound.is_infinite() && a > LOG_LAMBDA_ESCAPE {
                return Err(Error::NonConvergence(format!(
                    "dual inverse at u={u}: infimum approached as lambda -> inf (lambda ~ e^{a:.1})"
                )));
            }
            return Ok(fc.min(fd).min(f_mid));
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
    }
    Err(Error::NonConvergence(format!(
        "dual inverse at u={u}: bracket width {} after {MAX_ITERATIONS} iterations",
        b - a
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_values() {
        let psi = subgaussian_envelope(1.0, EnvelopeSide::Minus).unwrap();
        assert_eq!(psi.eval(2.0), 2.0);
        assert_eq!(psi.eval(0.0), 0.0);
        psi.validate().unwrap();
        assert!(subgaussian_envelope(0.0, EnvelopeSide::Minus).is_err());
        assert!(subgaussian_envelope(-1.0, EnvelopeSide::Plus).is_err());
    }

    #[test]
    fn numeric_inverse_of_quadratic() {
        let psi = subgaussian_envelope(1.0, EnvelopeSide::Minus).unwrap();
        assert!((legendre_dual_inverse(&psi, 2.0).unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(legendre_dual_inverse(&psi, 0.0).unwrap(), 0.0);
        for u in [0.1, 1.0, 10.0] {
            let numeric = legendre_dual_inverse(&psi, u).unwrap();
            assert!((numeric - (2.0 * u).sqrt()).abs() < 1e-9);
        }
        let a = legendre_dual_inverse(&psi, 1.0).unwrap();
        let b = legendre_dual_inverse(&psi, 4.0).unwrap();
        assert!(a < b);
        assert!(legendre_dual_inverse(&psi, -1.0).is_err());
    }

    #[test]
    fn inverse_is_monotone_and_concave() {
        let psi = subgaussian_envelope(1.7, EnvelopeSide::Minus).unwrap();
        let us: Vec<f64> = (0..20).map(|i| 0.25 * i as f64).collect();
        let vals: Vec<f64> = us
            .iter()
            .map(|&u| legendre_dual_inverse(&psi, u).unwrap())
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in vals.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] <= 1e-9);
        }
    }

    #[test]
    fn sqrt_dual_round_trip() {
        let env = PsiEnvelope::with_sqrt_dual(3.0, EnvelopeSide::Minus).unwrap();
        for u in [0.01, 0.5, 2.0] {
            let numeric = legendre_dual_inverse(&env, u).unwrap();
            assert!((numeric - 3.0 * u.sqrt()).abs() < 1e-9);
            assert!((env.dual_inverse(u).unwrap() - 3.0 * u.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_envelope() {
        let z = PsiEnvelope::zero(EnvelopeSide::Plus);
        assert_eq!(legendre_dual_inverse(&z, 5.0).unwrap(), 0.0);
        assert_eq!(z.dual_inverse(5.0).unwrap(), 0.0);
    }

    #[test]
    fn bounded_domain_custom_envelope() {
        // Sub-gamma envelope: psi(l) = v l^2 / (2 (1 - c l)) on [0, 1/c).
        let (v, c) = (1.0, 0.5);
        let env = PsiEnvelope::custom(
            move |l| v * l * l / (2.0 * (1.0 - c * l)),
            1.0 / c,
            EnvelopeSide::Minus,
        )
        .unwrap();
        for u in [0.1, 1.0, 5.0] {
            let expected = (2.0 * v * u).sqrt() + c * u;
            let numeric = env.dual_inverse(u).unwrap();
            assert!(
                (numeric - expected).abs() < 1e-8,
                "u={u}: {numeric} vs {expected}"
            );
        }
    }

    #[test]
    fn custom_envelope_validation() {
        assert!(PsiEnvelope::custom(|l| l, f64::INFINITY, EnvelopeSide::Plus).is_err());
        assert!(PsiEnvelope::custom(|l| 1.0 + l * l, f64::INFINITY, EnvelopeSide::Plus).is_err());
        assert!(PsiEnvelope::custom(|l| -l * l, f64::INFINITY, EnvelopeSide::Plus).is_err());
        assert!(PsiEnvelope::custom(|l| l.powi(4), f64::INFINITY, EnvelopeSide::Plus).is_ok());
    }

    #[test]
    fn sublinear_growth_reports_non_convergence() {
        // Huber-type envelope: asymptotically linear, so the infimum is the
        // asymptotic slope and is never attained.
        let env = PsiEnvelope::custom(
            |l: f64| if l <= 1.0 { 0.5 * l * l } else { l - 0.5 },
            f64::INFINITY,
            EnvelopeSide::Minus,
        )
        .unwrap();
        assert!(matches!(
            legendre_dual_inverse(&env, 1.0),
            Err(Error::NonConvergence(_))
        ));
    }
}
