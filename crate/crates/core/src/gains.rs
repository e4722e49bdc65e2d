//! Injection gains for both estimation stages.
//!
//! The first stage uses the classic high-gain pattern `k_i / eps^i`. The
//! second stage folds a Taylor expansion of the delay into the same gains:
//!
//! ```text
//! g_i = sum_{j=i}^{n}  k_j * d^(j-i) / ((j-i)! * eps^j),    d = delay + chain_lag
//! ```
//!
//! so for `d = 0` the two stages coincide exactly — not just to rounding:
//! [`second_step_gains`] is arranged so the collapse is bit-for-bit.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every characteristic root must sit at least this far left of the
/// imaginary axis before a gain vector is accepted. Guards against
/// eigensolver round-off promoting a marginal polynomial to "stable".
pub const HURWITZ_MARGIN: f64 = 1e-9;

/// Floor applied to ramped gain rates so `eps = 1/rate` stays finite at t = 0.
pub const DEFAULT_MIN_RATE: f64 = 1e-3;

fn default_min_rate() -> f64 {
    DEFAULT_MIN_RATE
}

/// Coefficients `k_1..k_n` of the monic characteristic polynomial
/// `s^n + k_1 s^(n-1) + ... + k_n`. At least two entries, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GainVector(Vec<f64>);

impl GainVector {
    pub fn new(k: Vec<f64>) -> Result<Self> {
        Self::try_from(k)
    }

    /// Observer order `n`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires n >= 2
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for GainVector {
    type Error = Error;

    fn try_from(k: Vec<f64>) -> Result<Self> {
        if k.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "gain vector needs at least 2 entries, got {}",
                k.len()
            )));
        }
        if let Some(i) = k.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "gain k_{} = {} is not finite",
                i + 1,
                k[i]
            )));
        }
        Ok(GainVector(k))
    }
}

impl From<GainVector> for Vec<f64> {
    fn from(k: GainVector) -> Vec<f64> {
        k.0
    }
}

/// Outcome of [`verify_hurwitz`]: the characteristic roots and the verdict.
#[derive(Debug, Clone)]
pub struct HurwitzCheck {
    /// All roots satisfy `Re < -HURWITZ_MARGIN`.
    pub stable: bool,
    /// Roots sorted by real part, then imaginary part.
    pub roots: Vec<Complex64>,
    /// Largest real part over all roots.
    pub max_real_part: f64,
}

/// Checks that `s^n + k_1 s^(n-1) + ... + k_n` is Hurwitz by computing the
/// eigenvalues of its companion matrix.
pub fn verify_hurwitz(k: &GainVector) -> HurwitzCheck {
    let n = k.len();
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for i in 0..n - 1 {
        companion[(i, i + 1)] = 1.0;
    }
    // Last row carries the negated coefficients, constant term first.
    for j in 0..n {
        companion[(n - 1, j)] = -k.as_slice()[n - 1 - j];
    }
    let mut roots: Vec<Complex64> = companion.complex_eigenvalues().iter().copied().collect();
    roots.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    let max_real_part = roots.iter().map(|r| r.re).fold(f64::NEG_INFINITY, f64::max);
    HurwitzCheck {
        stable: max_real_part < -HURWITZ_MARGIN,
        roots,
        max_real_part,
    }
}

/// `eps^1, eps^2, ..., eps^n` by successive multiplication.
///
/// Both stages must see identical powers, so this is the only place they are
/// computed; `powi` is free to use a different rounding path.
pub(crate) fn scaled_powers(eps: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut p = 1.0;
    for _ in 0..n {
        p *= eps;
        out.push(p);
    }
    out
}

/// First-stage injection gains `k_i / eps^i`.
pub fn stage1_injection(k: &GainVector, eps: f64) -> Result<Vec<f64>> {
    check_eps(eps)?;
    let pow = scaled_powers(eps, k.len());
    let mut out = Vec::with_capacity(k.len());
    for (i, (&ki, &ei)) in k.as_slice().iter().zip(&pow).enumerate() {
        let g = ki / ei;
        if !g.is_finite() {
            return Err(Error::Range {
                index: i + 1,
                detail: format!("k_{}/eps^{} = {} with eps = {}", i + 1, i + 1, g, eps),
            });
        }
        out.push(g);
    }
    Ok(out)
}

/// Second-stage injection gains for an effective delay `delta_eff >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondStepGains {
    g: Vec<f64>,
    /// The `delay + chain_lag` the gains were built for.
    pub delta_eff: f64,
}

impl SecondStepGains {
    pub fn as_slice(&self) -> &[f64] {
        &self.g
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }
}

/// Taylor-corrected gains `g_i = sum_{j>=i} k_j d^(j-i) / ((j-i)! eps^j)`.
///
/// The `j = i` term is accumulated as literally `k_i / eps^i * 1.0 / 1.0`, so
/// with `delta_eff = 0` every later term is `+0.0` and `g_i` carries exactly
/// the first-stage bits.
pub fn second_step_gains(k: &GainVector, eps: f64, delta_eff: f64) -> Result<SecondStepGains> {
    check_eps(eps)?;
    if !delta_eff.is_finite() || delta_eff < 0.0 {
        return Err(Error::InvalidInput(format!(
            "effective delay must be finite and >= 0, got {delta_eff}"
        )));
    }
    let n = k.len();
    let eps_pow = scaled_powers(eps, n);
    let mut g = Vec::with_capacity(n);
    for i in 1..=n {
        let mut acc = 0.0;
        let mut delta_pow = 1.0; // d^(j-i)
        let mut fact = 1.0; // (j-i)!
        for j in i..=n {
            if j > i {
                delta_pow *= delta_eff;
                fact *= (j - i) as f64;
            }
            let term = k.as_slice()[j - 1] * delta_pow / (fact * eps_pow[j - 1]);
            if !term.is_finite() {
                return Err(Error::Range {
                    index: i,
                    detail: format!(
                        "term j = {j} of g_{i} is {term} (eps = {eps}, delay = {delta_eff})"
                    ),
                });
            }
            acc += term;
        }
        if !acc.is_finite() {
            return Err(Error::Range {
                index: i,
                detail: format!("g_{i} overflowed (eps = {eps}, delay = {delta_eff})"),
            });
        }
        g.push(acc);
    }
    Ok(SecondStepGains { g, delta_eff })
}

fn check_eps(eps: f64) -> Result<()> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "eps must be finite and > 0, got {eps}"
        )));
    }
    Ok(())
}

/// Time profile of the gain rate `R(t) = 1/eps(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainSchedule {
    /// Fixed rate for the whole run.
    Constant { rate: f64 },
    /// `R(t) = max(min_rate, coeff * t^exponent)` until `ramp_end`, frozen at
    /// its `ramp_end` value afterwards. The floor keeps `eps` finite at t = 0.
    Ramp {
        coeff: f64,
        exponent: f64,
        ramp_end: f64,
        #[serde(default = "default_min_rate")]
        min_rate: f64,
    },
}

impl GainSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GainSchedule::Constant { rate } => {
                if !rate.is_finite() || rate <= 0.0 {
                    return Err(Error::Config {
                        field: "schedule.rate".into(),
                        detail: format!("must be finite and > 0, got {rate}"),
                    });
                }
            }
            GainSchedule::Ramp {
                coeff,
                exponent,
                ramp_end,
                min_rate,
            } => {
                if !coeff.is_finite() || coeff <= 0.0 {
                    return Err(Error::Config {
                        field: "schedule.coeff".into(),
                        detail: format!("must be finite and > 0, got {coeff}"),
                    });
                }
                if !exponent.is_finite() || exponent < 1.0 {
                    return Err(Error::Config {
                        field: "schedule.exponent".into(),
                        detail: format!("must be finite and >= 1, got {exponent}"),
                    });
                }
                if !ramp_end.is_finite() || ramp_end <= 0.0 {
                    return Err(Error::Config {
                        field: "schedule.ramp_end".into(),
                        detail: format!("must be finite and > 0, got {ramp_end}"),
                    });
                }
                if !min_rate.is_finite() || min_rate <= 0.0 {
                    return Err(Error::Config {
                        field: "schedule.min_rate".into(),
                        detail: format!("must be finite and > 0, got {min_rate}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Rate at time `t >= 0`. Non-decreasing in `t`, continuous at `ramp_end`.
    pub fn rate_at(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidInput(format!(
                "schedule evaluated at t = {t}; need finite t >= 0"
            )));
        }
        Ok(match *self {
            GainSchedule::Constant { rate } => rate,
            GainSchedule::Ramp {
                coeff,
                exponent,
                ramp_end,
                min_rate,
            } => {
                let tc = t.min(ramp_end);
                min_rate.max(coeff * tc.powf(exponent))
            }
        })
    }

    /// Largest rate the schedule ever reaches; used for step-size guards.
    pub fn peak_rate(&self) -> f64 {
        match *self {
            GainSchedule::Constant { rate } => rate,
            GainSchedule::Ramp {
                coeff,
                exponent,
                ramp_end,
                min_rate,
            } => min_rate.max(coeff * ramp_end.powf(exponent)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn rejects_short_and_non_finite_vectors() {
        assert!(GainVector::new(vec![1.0]).is_err());
        assert!(GainVector::new(vec![]).is_err());
        assert!(GainVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(GainVector::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(GainVector::new(vec![4.0, 6.0, 4.0, 1.0]).is_ok());
    }

    #[test]
    fn quadruple_pole_at_minus_one_is_hurwitz() {
        // (s+1)^4 = s^4 + 4s^3 + 6s^2 + 4s + 1
        let k = GainVector::new(vec![4.0, 6.0, 4.0, 1.0]).unwrap();
        let check = verify_hurwitz(&k);
        assert!(check.stable);
        assert_eq!(check.roots.len(), 4);
        // a fourfold root is maximally ill-conditioned: coefficient rounding
        // of order machine-eps scatters the computed roots by ~eps^(1/4)
        for r in &check.roots {
            assert_relative_eq!(r.re, -1.0, max_relative = 1e-3);
            assert!(r.im.abs() < 1e-3);
        }
    }

    #[test]
    fn detects_unstable_and_marginal_polynomials() {
        // s^2 - s + 1: roots in the right half plane.
        let k = GainVector::new(vec![-1.0, 1.0]).unwrap();
        assert!(!verify_hurwitz(&k).stable);

        // s^2 + 1: roots exactly on the axis must not pass the margin.
        let k = GainVector::new(vec![0.0, 1.0]).unwrap();
        let check = verify_hurwitz(&k);
        assert!(!check.stable);
        assert!(check.max_real_part.abs() < 1e-9);

        // s^2 + 3s + 2 = (s+1)(s+2)
        let k = GainVector::new(vec![3.0, 2.0]).unwrap();
        assert!(verify_hurwitz(&k).stable);
    }

    #[test]
    fn second_step_gains_match_hand_expansion() {
        let k = GainVector::new(vec![4.0, 6.0, 4.0, 1.0]).unwrap();
        let g = second_step_gains(&k, 1.0, 0.5).unwrap();
        // g_1 = 4 + 6*0.5 + 4*0.25/2 + 1*0.125/6
        // g_2 = 6 + 4*0.5 + 1*0.25/2
        // g_3 = 4 + 1*0.5
        // g_4 = 1
        let expect = [7.520833333333333, 8.125, 4.5, 1.0];
        for (a, b) in g.as_slice().iter().zip(expect) {
            assert_relative_eq!(*a, b, max_relative = 1e-15);
        }
    }

    #[test]
    fn second_step_gains_scale_with_eps() {
        let k = GainVector::new(vec![4.0, 6.0, 4.0, 1.0]).unwrap();
        let eps = 0.1;
        let g = second_step_gains(&k, eps, 0.5).unwrap();
        // g_i * eps^i is a polynomial in q = d/eps with coefficients k_j/(j-i)!
        let q: f64 = 0.5 / eps;
        let ks = k.as_slice();
        for i in 1..=4 {
            let mut b = 0.0;
            let mut qp = 1.0;
            let mut fact = 1.0;
            for j in i..=4 {
                if j > i {
                    qp *= q;
                    fact *= (j - i) as f64;
                }
                b += ks[j - 1] * qp / fact;
            }
            assert_relative_eq!(
                g.as_slice()[i - 1] * eps.powi(i as i32),
                b,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn zero_delay_collapses_to_first_stage_bits() {
        let k = GainVector::new(vec![4.0, 6.0, 4.0, 1.0]).unwrap();
        for eps in [1.0, 0.1, 0.01, 3.7e-3] {
            let s1 = stage1_injection(&k, eps).unwrap();
            let s2 = second_step_gains(&k, eps, 0.0).unwrap();
            for (a, b) in s1.iter().zip(s2.as_slice()) {
                assert_eq!(a.to_bits(), b.to_bits(), "eps = {eps}");
            }
        }
    }

    #[test]
    fn tiny_eps_overflows_with_index() {
        let k = GainVector::new(vec![4.0, 6.0, 4.0, 1.0]).unwrap();
        match second_step_gains(&k, 1e-100, 0.5) {
            Err(Error::Range { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected range error, got {other:?}"),
        }
        assert!(stage1_injection(&k, 1e-100).is_err());
        assert!(second_step_gains(&k, 0.0, 0.5).is_err());
        assert!(second_step_gains(&k, 0.1, -1.0).is_err());
    }

    #[test]
    fn ramp_schedule_floors_freezes_and_validates() {
        let s = GainSchedule::Ramp {
            coeff: 100.0,
            exponent: 7.0,
            ramp_end: 1.0,
            min_rate: DEFAULT_MIN_RATE,
        };
        assert!(s.validate().is_ok());
        assert_eq!(s.rate_at(0.0).unwrap(), DEFAULT_MIN_RATE);
        assert_relative_eq!(s.rate_at(0.5).unwrap(), 100.0 * 0.5f64.powi(7));
        assert_eq!(s.rate_at(1.0).unwrap(), 100.0);
        assert_eq!(s.rate_at(5.0).unwrap(), 100.0);
        assert_eq!(s.peak_rate(), 100.0);
        assert!(s.rate_at(-0.1).is_err());

        let c = GainSchedule::Constant { rate: 6.0 };
        assert_eq!(c.rate_at(0.0).unwrap(), 6.0);
        assert_eq!(c.rate_at(123.0).unwrap(), 6.0);
        assert_eq!(c.peak_rate(), 6.0);
        assert!(GainSchedule::Constant { rate: 0.0 }.validate().is_err());
        assert!(GainSchedule::Ramp {
            coeff: 100.0,
            exponent: 0.5,
            ramp_end: 1.0,
            min_rate: 1e-3
        }
        .validate()
        .is_err());
    }

    #[test]
    fn gain_vector_serde_round_trip() {
        let k = GainVector::new(vec![4.0, 6.0, 4.0, 1.0]).unwrap();
        let json = serde_json::to_string(&k).unwrap();
        assert_eq!(json, "[4.0,6.0,4.0,1.0]");
        let back: GainVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, k);
        assert!(serde_json::from_str::<GainVector>("[1.0]").is_err());
    }

    proptest! {
        /// Stable factored polynomials prod (s + a_i), a_i > 0, must pass the
        /// Hurwitz check; flipping the constant term's sign must fail it.
        #[test]
        fn hurwitz_on_factored_polynomials(roots in proptest::collection::vec(0.05f64..20.0, 2..6)) {
            // Expand prod (s + a_i) to monic coefficients.
            let mut coeffs = vec![1.0f64];
            for a in &roots {
                let mut next = vec![0.0; coeffs.len() + 1];
                for (i, c) in coeffs.iter().enumerate() {
                    next[i] += c;          // s * c
                    next[i + 1] += a * c;  // a * c
                }
                coeffs = next;
            }
            let k = GainVector::new(coeffs[1..].to_vec()).unwrap();
            prop_assert!(verify_hurwitz(&k).stable);

            let mut flipped: Vec<f64> = k.as_slice().to_vec();
            let last = flipped.len() - 1;
            flipped[last] = -flipped[last];
            let k_bad = GainVector::new(flipped).unwrap();
            prop_assert!(!verify_hurwitz(&k_bad).stable);
        }

        /// Collapse identity over random gains and eps.
        #[test]
        fn zero_delay_collapse_holds_everywhere(
            k in proptest::collection::vec(0.1f64..50.0, 2..7),
            eps in 1e-3f64..10.0,
        ) {
            let k = GainVector::new(k).unwrap();
            let s1 = stage1_injection(&k, eps).unwrap();
            let s2 = second_step_gains(&k, eps, 0.0).unwrap();
            for (a, b) in s1.iter().zip(s2.as_slice()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        /// The ramp is non-decreasing and respects its floor.
        #[test]
        fn ramp_is_monotone(
            coeff in 0.1f64..500.0,
            exponent in 1.0f64..9.0,
            ramp_end in 0.1f64..5.0,
            t1 in 0.0f64..10.0,
            t2 in 0.0f64..10.0,
        ) {
            let s = GainSchedule::Ramp { coeff, exponent, ramp_end, min_rate: 1e-3 };
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let r_lo = s.rate_at(lo).unwrap();
            let r_hi = s.rate_at(hi).unwrap();
            prop_assert!(r_lo <= r_hi);
            prop_assert!(r_lo >= 1e-3);
            prop_assert!(r_hi <= s.peak_rate());
        }
    }
}
