//! Observer dynamics: the plain high-gain differentiator and the two-stage
//! delay-compensating pair.
//!
//! Both stages are driven by the *same* innovation `e = m - x1_1`, the
//! first stage's output error. The first stage converges to derivatives of
//! the delayed signal; the second stage, fed through the Taylor-corrected
//! gains of [`crate::gains::second_step_gains`], shifts those estimates
//! forward to the current time. Its last row keeps the plain `k_n / eps^n`
//! injection (the correction sum for `i = n` has a single term), which is
//! what makes the zero-delay collapse exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::{self, GainSchedule, GainVector, SecondStepGains};

/// Everything needed to build the observer pair: order, characteristic
/// gains, the delay split, and the gain-rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentiatorSpec {
    /// Observer order `n`; must equal `gains.len()`.
    pub order: usize,
    pub gains: GainVector,
    /// Known measurement delay the second stage compensates.
    pub delay: f64,
    /// Extra lag folded into the correction (sensor chains, filters, ...).
    #[serde(default)]
    pub chain_lag: f64,
    pub schedule: GainSchedule,
}

impl DifferentiatorSpec {
    pub fn new(gains: GainVector, delay: f64, schedule: GainSchedule) -> Self {
        DifferentiatorSpec {
            order: gains.len(),
            gains,
            delay,
            chain_lag: 0.0,
            schedule,
        }
    }

    /// Full delay the gain correction targets: `delay + chain_lag`.
    pub fn effective_delay(&self) -> f64 {
        self.delay + self.chain_lag
    }

    pub fn validate(&self) -> Result<()> {
        if self.order != self.gains.len() {
            return Err(Error::Config {
                field: "differentiator.order".into(),
                detail: format!(
                    "order {} does not match {} gains",
                    self.order,
                    self.gains.len()
                ),
            });
        }
        if !self.delay.is_finite() || self.delay < 0.0 {
            return Err(Error::Config {
                field: "differentiator.delay".into(),
                detail: format!("must be finite and >= 0, got {}", self.delay),
            });
        }
        if !self.chain_lag.is_finite() || self.chain_lag < 0.0 {
            return Err(Error::Config {
                field: "differentiator.chain_lag".into(),
                detail: format!("must be finite and >= 0, got {}", self.chain_lag),
            });
        }
        self.schedule.validate()?;
        let check = gains::verify_hurwitz(&self.gains);
        if !check.stable {
            return Err(Error::Config {
                field: "differentiator.gains".into(),
                detail: format!(
                    "characteristic polynomial is not Hurwitz: max Re(root) = {:e}",
                    check.max_real_part
                ),
            });
        }
        Ok(())
    }

    /// Both stages' injection gains at a fixed `eps`.
    pub fn injection_gains(&self, eps: f64) -> Result<StageGains> {
        Ok(StageGains {
            stage1: gains::stage1_injection(&self.gains, eps)?,
            stage2: gains::second_step_gains(&self.gains, eps, self.effective_delay())?,
            eps,
        })
    }
}

/// Injection gains for one `eps`, ready for the right-hand sides.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGains {
    pub stage1: Vec<f64>,
    pub stage2: SecondStepGains,
    pub eps: f64,
}

/// States of the observer pair. `stage1[i]` tracks `v^(i)(t - delay)`,
/// `stage2[i]` tracks `v^(i)(t)`; both are scaled estimates of the signal's
/// derivatives, not of any internal coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub stage1: Vec<f64>,
    pub stage2: Vec<f64>,
}

impl ObserverState {
    pub fn zeros(order: usize) -> Self {
        ObserverState {
            stage1: vec![0.0; order],
            stage2: vec![0.0; order],
        }
    }

    pub fn order(&self) -> usize {
        self.stage1.len()
    }

    /// Flat layout `[stage1..., stage2...]` used by the integrator.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.order());
        y.extend_from_slice(&self.stage1);
        y.extend_from_slice(&self.stage2);
        y
    }

    pub fn from_flat(order: usize, y: &[f64]) -> Self {
        assert_eq!(y.len(), 2 * order, "flat state arity");
        ObserverState {
            stage1: y[..order].to_vec(),
            stage2: y[order..].to_vec(),
        }
    }

    /// First non-finite entry as `(block, 1-based index)`, if any.
    pub fn first_non_finite(&self) -> Option<(&'static str, usize)> {
        for (name, block) in [("stage1", &self.stage1), ("stage2", &self.stage2)] {
            if let Some(i) = block.iter().position(|v| !v.is_finite()) {
                return Some((name, i + 1));
            }
        }
        None
    }
}

/// How the observer state is seeded at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Everything starts at zero.
    #[default]
    Zero,
    /// Both position states start at the first measurement, which trims the
    /// initial innovation spike; derivative states start at zero.
    Measured,
}

/// Initial observer state for a given policy and first measurement `m0`.
pub fn initial_state(order: usize, policy: InitPolicy, m0: f64) -> ObserverState {
    let mut state = ObserverState::zeros(order);
    if policy == InitPolicy::Measured {
        state.stage1[0] = m0;
        state.stage2[0] = m0;
    }
    state
}

/// Baseline differentiator: `dx_i = x_{i+1} + (k_i/eps^i)(m - x_1)`.
pub fn baseline_rhs(x: &[f64], m: f64, k: &GainVector, eps: f64) -> Result<Vec<f64>> {
    if x.len() != k.len() {
        return Err(Error::InvalidInput(format!(
            "state has {} entries, gains expect {}",
            x.len(),
            k.len()
        )));
    }
    check_finite_inputs(x, m)?;
    let g1 = gains::stage1_injection(k, eps)?;
    Ok(baseline_rhs_with(x, m, &g1))
}

/// Baseline right-hand side with precomputed injection gains.
pub fn baseline_rhs_with(x: &[f64], m: f64, g1: &[f64]) -> Vec<f64> {
    let n = x.len();
    let e = m - x[0];
    let mut dx = Vec::with_capacity(n);
    for i in 0..n {
        let chain = if i + 1 < n { x[i + 1] } else { 0.0 };
        dx.push(chain + g1[i] * e);
    }
    dx
}

/// Two-stage right-hand side at a fixed `eps`.
pub fn two_step_rhs(
    state: &ObserverState,
    m: f64,
    spec: &DifferentiatorSpec,
    eps: f64,
) -> Result<ObserverState> {
    if state.order() != spec.order || state.stage2.len() != spec.order {
        return Err(Error::InvalidInput(format!(
            "state order {} does not match spec order {}",
            state.order(),
            spec.order
        )));
    }
    check_finite_inputs(&state.stage1, m)?;
    check_finite_inputs(&state.stage2, m)?;
    let g = spec.injection_gains(eps)?;
    Ok(two_step_rhs_with(state, m, &g))
}

/// Two-stage right-hand side with precomputed gains.
///
/// The stage-1 rows are written with exactly the same expression as
/// [`baseline_rhs_with`], so the pair's first block reproduces the baseline
/// bit-for-bit under identical inputs.
pub fn two_step_rhs_with(state: &ObserverState, m: f64, g: &StageGains) -> ObserverState {
    let flat = state.to_flat();
    let dy = two_step_rhs_flat(&flat, m, &g.stage1, g.stage2.as_slice());
    ObserverState::from_flat(state.order(), &dy)
}

/// Flat-layout variant used in the integrator's inner loop.
pub(crate) fn two_step_rhs_flat(y: &[f64], m: f64, g1: &[f64], g2: &[f64]) -> Vec<f64> {
    let n = g1.len();
    debug_assert_eq!(y.len(), 2 * n);
    let e = m - y[0]; // innovation of the *first* stage drives both
    let mut dy = Vec::with_capacity(2 * n);
    for i in 0..n {
        let chain = if i + 1 < n { y[i + 1] } else { 0.0 };
        dy.push(chain + g1[i] * e);
    }
    for i in 0..n {
        let chain = if i + 1 < n { y[n + i + 1] } else { 0.0 };
        dy.push(chain + g2[i] * e);
    }
    dy
}

fn check_finite_inputs(x: &[f64], m: f64) -> Result<()> {
    if !m.is_finite() {
        return Err(Error::InvalidInput(format!(
            "measurement {m} is not finite"
        )));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "state entry {} = {} is not finite",
            i + 1,
            x[i]
        )));
    }
    Ok(())
}
