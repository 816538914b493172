//! Closed-form generalization error, per-sample mutual information, privacy
//! leakage and envelope inverses for Gaussian mean estimation.
//!
//! In all three settings the plus-side dual inverse is identically zero and
//! the minus-side one has the form `c * sqrt(u)`, so both are returned as
//! [`PsiEnvelope`] values.

use super::envelope::{EnvelopeSide, PsiEnvelope};
use crate::domain::ExtendedReal;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ClosedFormReport {
    /// Expected generalization error.
    pub gen: f64,
    /// For the federated setting: the same quantity with the active-user
    /// count `K_a` in the denominator instead of `K`.
    pub gen_active_users: Option<f64>,
    /// `I(S_{k,i}; W_hat)` in nats.
    pub mi_per_sample: f64,
    /// `max_i I(S_{k,i}; W_hat | S_k^{-i})`; `None` where no closed form exists.
    pub privacy: Option<ExtendedReal>,
    pub psi_plus: PsiEnvelope,
    pub psi_minus: PsiEnvelope,
}

impl ClosedFormReport {
    /// `psi-*^{-1}(u)`.
    pub fn psi_minus_inverse(&self, u: f64) -> Result<f64> {
        self.psi_minus.dual_inverse(u)
    }

    /// `psi+*^{-1}(u)`; zero in every Gaussian case here.
    pub fn psi_plus_inverse(&self, u: f64) -> Result<f64> {
        self.psi_plus.dual_inverse(u)
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite (got {value})"
        )));
    }
    Ok(())
}

/// Single learner, `N(nu, sigma^2 I_d)` data, sample-mean estimator.
///
/// gen = 2 sigma^2 d / n, I = (d/2) ln(n / (n-1)), privacy infinite,
/// psi-*^{-1}(u) = 2 sigma^2 sqrt(d u) (1 + 1/n).
pub fn lemma2_closed_forms(n: usize, d: usize, variance: f64) -> Result<ClosedFormReport> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "centralized closed forms require n >= 2 (got n = {n})"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidParameter(
            "dimension must be at least 1".into(),
        ));
    }
    positive("variance", variance)?;
    let (nf, df) = (n as f64, d as f64);
    let coefficient = 2.0 * variance * df.sqrt() * (1.0 + 1.0 / nf);
    Ok(ClosedFormReport {
        gen: 2.0 * variance * df / nf,
        gen_active_users: None,
        mi_per_sample: 0.5 * df * (nf / (nf - 1.0)).ln(),
        privacy: Some(ExtendedReal::Infinite),
        psi_plus: PsiEnvelope::zero(EnvelopeSide::Plus),
        psi_minus: PsiEnvelope::with_sqrt_dual(coefficient, EnvelopeSide::Minus)?,
    })
}

/// One-shot distributed learning with `pi_k = N(nu, sigma_k^2 I_d)`, one
/// report per user.
///
/// With `V = sum_i n_i sigma_i^2` and `n = sum_i n_i`:
/// gen = 2 d V / n^2, I_k = (d/2) ln(1 + sigma_k^2 / (V - sigma_k^2)),
/// priv_k = (d/2) ln(1 + sigma_k^2 / (V - n_k sigma_k^2)) (infinite for K = 1),
/// psi_k-*^{-1}(u) = 2 sqrt(d u) (V / n^2 + sigma_k^2).
pub fn lemma3_closed_forms(
    sizes: &[usize],
    variances: &[f64],
    d: usize,
) -> Result<Vec<ClosedFormReport>> {
    if sizes.is_empty() || sizes.len() != variances.len() {
        return Err(Error::LengthMismatch(format!(
            "{} sizes and {} variances",
            sizes.len(),
            variances.len()
        )));
    }
    if d == 0 {
        return Err(Error::InvalidParameter(
            "dimension must be at least 1".into(),
        ));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidParameter(
            "every user needs at least one sample".into(),
        ));
    }
    for v in variances {
        positive("variance", *v)?;
    }
    let df = d as f64;
    let n: f64 = sizes.iter().map(|&k| k as f64).sum();
    let weighted: f64 = sizes
        .iter()
        .zip(variances)
        .map(|(&nk, v)| nk as f64 * v)
        .sum();
    let gen = 2.0 * df * weighted / (n * n);

    sizes
        .iter()
        .zip(variances)
        .enumerate()
        .map(|(k, (&nk, &var_k))| {
            let rest = weighted - var_k;
            if !(rest > 0.0) {
                return Err(Error::Degenerate(format!(
                    "user {k}: sum n_i sigma_i^2 - sigma_k^2 = {rest} must be positive \
                     (a single user needs n >= 2)"
                )));
            }
            let others = weighted - nk as f64 * var_k;
            let privacy = if sizes.len() == 1 {
                ExtendedReal::Infinite
            } else {
                ExtendedReal::Finite(0.5 * df * (1.0 + var_k / others).ln())
            };
            let coefficient = 2.0 * df.sqrt() * (weighted / (n * n) + var_k);
            Ok(ClosedFormReport {
                gen,
                gen_active_users: None,
                mi_per_sample: 0.5 * df * (1.0 + var_k / rest).ln(),
                privacy: Some(privacy),
                psi_plus: PsiEnvelope::zero(EnvelopeSide::Plus),
                psi_minus: PsiEnvelope::with_sqrt_dual(coefficient, EnvelopeSide::Minus)?,
            })
        })
        .collect()
}

/// Federated iterative aggregation at round `t` with `K` symmetric users,
/// batch size `n` and `K_a` uniformly chosen active users per round.
///
/// `gen` is `2 d sigma^2 / (t n K)`; `gen_active_users` is
/// `2 d sigma^2 / (t n K_a)`, the value obtained by unrolling the update into
/// an average of `t n K_a` samples. They coincide when `K_a = K`.
/// I = (d/2) ln(1 + 1/(t n K_a - 1)),
/// psi-*^{-1}(u) = 2 sqrt(d) (1 + 1/(t n K_a)) sigma^2 sqrt(u).
/// Privacy has no closed form here and is left as `None`.
pub fn lemma4_closed_forms(
    t: usize,
    n: usize,
    users: usize,
    active: usize,
    variance: f64,
    d: usize,
) -> Result<ClosedFormReport> {
    if t == 0 || n == 0 || active == 0 || d == 0 {
        return Err(Error::InvalidParameter(
            "round, batch size, active users and dimension must all be at least 1".into(),
        ));
    }
    if active > users {
        return Err(Error::InvalidParameter(format!(
            "active users {active} exceed user count {users}"
        )));
    }
    positive("variance", variance)?;
    let seen = (t * n * active) as f64;
    if seen < 2.0 {
        return Err(Error::InvalidParameter(format!(
            "federated closed forms require t * n * K_a >= 2 (got {seen})"
        )));
    }
    let df = d as f64;
    let base = (t * n) as f64;
    let coefficient = 2.0 * df.sqrt() * (1.0 + 1.0 / seen) * variance;
    Ok(ClosedFormReport {
        gen: 2.0 * df * variance / (base * users as f64),
        gen_active_users: Some(2.0 * df * variance / seen),
        mi_per_sample: 0.5 * df * (1.0 + 1.0 / (seen - 1.0)).ln(),
        privacy: None,
        psi_plus: PsiEnvelope::zero(EnvelopeSide::Plus),
        psi_minus: PsiEnvelope::with_sqrt_dual(coefficient, EnvelopeSide::Minus)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lemma2_values() {
        let r = lemma2_closed_forms(10, 5, 1.0).unwrap();
        assert_eq!(r.gen, 1.0);
        assert!((r.mi_per_sample - 0.263_401_289_144_565_75).abs() < 1e-15);
        assert_eq!(r.privacy, Some(ExtendedReal::Infinite));
        assert_eq!(r.psi_plus_inverse(3.0).unwrap(), 0.0);
        let u: f64 = 0.7;
        let expected = 2.0 * (5.0 * u).sqrt() * 1.1;
        assert!((r.psi_minus_inverse(u).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn lemma2_vanishing_information() {
        let r = lemma2_closed_forms(1_000_000, 5, 1.0).unwrap();
        assert!(r.mi_per_sample < 3e-6);
        assert_eq!(
            lemma2_closed_forms(7, 2, 3.0).unwrap().privacy,
            Some(ExtendedReal::Infinite)
        );
    }

    #[test]
    fn lemma2_rejects_single_sample() {
        let err = lemma2_closed_forms(1, 5, 1.0).unwrap_err();
        assert!(err.to_string().contains("n >= 2"));
    }

    #[test]
    fn lemma3_equal_case() {
        let reports = lemma3_closed_forms(&[4; 10], &[1.0; 10], 1).unwrap();
        assert_eq!(reports.len(), 10);
        let r = &reports[3];
        assert!((r.gen - 0.05).abs() < 1e-15);
        let priv_k = r.privacy.unwrap().finite().unwrap();
        assert!((priv_k - 0.013_699_487_094_057_2).abs() < 1e-12);
        assert!((r.mi_per_sample - 0.012_658_903_992_144_94).abs() < 1e-15);
        // gen = 2 d sigma^2 / (K n)
        let r = &lemma3_closed_forms(&[3; 5], &[2.0; 5], 4).unwrap()[0];
        assert!((r.gen - 2.0 * 4.0 * 2.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn lemma3_single_user_is_lemma2() {
        let a = lemma2_closed_forms(10, 5, 1.0).unwrap();
        let b = &lemma3_closed_forms(&[10], &[1.0], 5).unwrap()[0];
        assert!((a.gen - b.gen).abs() < 1e-15);
        assert!((a.mi_per_sample - b.mi_per_sample).abs() < 1e-15);
        assert_eq!(b.privacy, Some(ExtendedReal::Infinite));
        for u in [0.0, 0.3, 2.0] {
            let (x, y) = (
                a.psi_minus_inverse(u).unwrap(),
                b.psi_minus_inverse(u).unwrap(),
            );
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lemma3_asymmetric_values() {
        let r = lemma3_closed_forms(&[2, 3, 5], &[0.5, 1.0, 2.0], 2).unwrap();
        let expected_mi = [
            0.036_367_644_170_874_85,
            0.074_107_972_153_721_88,
            0.154_150_679_827_258_3,
        ];
        let expected_priv = [
            0.037_740_327_982_847_03,
            0.087_011_376_989_629_77,
            0.405_465_108_108_164_4,
        ];
        for k in 0..3 {
            assert!((r[k].gen - 0.56).abs() < 1e-15);
            assert!((r[k].mi_per_sample - expected_mi[k]).abs() < 1e-14);
            let p = r[k].privacy.unwrap().finite().unwrap();
            assert!((p - expected_priv[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn lemma3_degenerate() {
        assert!(matches!(
            lemma3_closed_forms(&[1], &[1.0], 1),
            Err(Error::Degenerate(_))
        ));
        assert!(lemma3_closed_forms(&[1, 2], &[1.0], 1).is_err());
    }

    #[test]
    fn lemma4_values() {
        let r = lemma4_closed_forms(1, 4, 10, 10, 1.0, 1).unwrap();
        assert!((r.gen - 0.05).abs() < 1e-15);
        assert_eq!(r.gen_active_users, Some(r.gen));
        assert!((r.mi_per_sample - 0.012_658_903_992_144_94).abs() < 1e-15);
        assert!(r.privacy.is_none());
        let r2 = lemma4_closed_forms(2, 4, 10, 10, 1.0, 1).unwrap();
        assert!((r2.gen - r.gen / 2.0).abs() < 1e-15);
        let partial = lemma4_closed_forms(1, 4, 10, 5, 1.0, 1).unwrap();
        assert!((partial.gen - 0.05).abs() < 1e-15);
        assert!((partial.gen_active_users.unwrap() - 0.1).abs() < 1e-15);
        assert!(lemma4_closed_forms(1, 1, 3, 1, 1.0, 1).is_err());
        assert!(lemma4_closed_forms(1, 2, 3, 4, 1.0, 1).is_err());
    }

    #[test]
    fn lemma4_first_round_matches_lemma3_information() {
        let f = lemma4_closed_forms(1, 4, 10, 10, 1.0, 1).unwrap();
        let d = &lemma3_closed_forms(&[4; 10], &[1.0; 10], 1).unwrap()[0];
        assert!((f.mi_per_sample - d.mi_per_sample).abs() < 1e-15);
    }

    #[test]
    fn closed_forms_are_nonnegative() {
        for &k in &[1usize, 2, 5, 10] {
            for &n in &[2usize, 4, 16] {
                for &d in &[1usize, 5] {
                    for &v in &[0.5, 1.0, 2.0] {
                        for r in lemma3_closed_forms(&vec![n; k], &vec![v; k], d).unwrap() {
                            assert!(r.gen >= 0.0 && r.mi_per_sample >= 0.0);
                            assert!(r.mi_per_sample.is_finite());
                            match r.privacy.unwrap() {
                                ExtendedReal::Finite(p) => assert!(p >= 0.0 && k > 1),
                                ExtendedReal::Infinite => assert_eq!(k, 1),
                            }
                        }
                    }
                }
            }
        }
    }
}
