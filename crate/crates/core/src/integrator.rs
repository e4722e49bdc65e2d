//! Fixed-step integration of the observer pair.
//!
//! Time never drifts: the step index is the source of truth and
//! `t_k = k * dt`. Measurement noise is sampled once per step (at the step's
//! start time) and held constant across RK sub-stages, like a zero-order-hold
//! sensor; the delayed clean signal and the gain schedule are evaluated at
//! the true sub-stage times.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, DifferentiatorSpec, InitPolicy, StageGains};
use crate::error::{Error, Result};
use crate::signals::SignalSpec;
use crate::trace::Trace;

/// Above this `dt * max_rate` product the run is refused outright.
pub const STEP_PRODUCT_LIMIT: f64 = 2.5;

/// Above this product a warning is logged; the scaled observer poles start
/// crowding the RK4 stability boundary.
pub const STEP_PRODUCT_WARN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub method: Method,
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::Config {
                field: "integrator.dt".into(),
                detail: format!("must be finite and > 0, got {}", self.dt),
            });
        }
        if !self.t_end.is_finite() || self.t_end < self.dt {
            return Err(Error::Config {
                field: "integrator.t_end".into(),
                detail: format!("must be finite and >= dt, got {}", self.t_end),
            });
        }
        Ok(())
    }

    /// Number of steps; `round` keeps `steps * dt` on top of `t_end` even
    /// when `t_end / dt` is not exactly an integer in binary.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// One explicit step of the chosen method, from `t` to `t + dt`.
///
/// The right-hand side may be queried at `t`, `t + dt/2` and `t + dt`; any
/// error it returns aborts the step unchanged.
pub fn step_once<F>(y: &[f64], t: f64, dt: f64, method: Method, rhs: &mut F) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    match method {
        Method::Euler => {
            let k1 = rhs(t, y)?;
            Ok(y.iter().zip(&k1).map(|(a, b)| a + dt * b).collect())
        }
        Method::Rk4 => {
            let half = 0.5 * dt;
            let k1 = rhs(t, y)?;
            let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + half * b).collect();
            let k2 = rhs(t + half, &y2)?;
            let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + half * b).collect();
            let k3 = rhs(t + half, &y3)?;
            let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
            let k4 = rhs(t + dt, &y4)?;
            Ok((0..y.len())
                .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect())
        }
    }
}

/// Runs the observer pair against a signal and records the full trace.
pub fn integrate(
    spec: &DifferentiatorSpec,
    signal: &SignalSpec,
    cfg: &IntegratorConfig,
) -> Result<Trace> {
    integrate_from(spec, signal, cfg, InitPolicy::Zero)
}

/// [`integrate`] with an explicit initial-state policy.
pub fn integrate_from(
    spec: &DifferentiatorSpec,
    signal: &SignalSpec,
    cfg: &IntegratorConfig,
    init: InitPolicy,
) -> Result<Trace> {
    spec.validate()?;
    signal.validate()?;
    cfg.validate()?;

    let product = cfg.dt * spec.schedule.peak_rate();
    if product > STEP_PRODUCT_LIMIT {
        return Err(Error::UnstableStep {
            product,
            limit: STEP_PRODUCT_LIMIT,
        });
    }
    if product > STEP_PRODUCT_WARN {
        log::warn!(
            "dt * max gain rate = {product:.3}: inside the refusal limit {STEP_PRODUCT_LIMIT} \
             but expect degraded accuracy"
        );
    }

    let n = spec.order;
    let steps = cfg.steps();
    let m0 = signal.measure(0.0)?;
    let mut y = dynamics::initial_state(n, init, m0).to_flat();
    let mut trace = Trace::with_capacity(n, steps + 1);
    let mut truth_row = vec![0.0; n];

    // Gains are recomputed only when the schedule actually moves; once a ramp
    // freezes, every step reuses the same gains.
    let mut cache: Option<StageGains> = None;

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let noise_k = signal.noise_at(t);
        let v = signal.truth(t, 0).unwrap_or(f64::NAN);
        let v_delayed = signal.delayed_clean(t)?;
        let m = v_delayed + noise_k;
        for (ord, slot) in truth_row.iter_mut().enumerate() {
            // recorded waveforms have no closed-form derivatives; mark those
            // columns instead of failing the run
            *slot = signal.truth(t, ord).unwrap_or(f64::NAN);
        }
        trace.push_row(t, v, v_delayed, m, &y[..n], &y[n..], &truth_row);

        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            let (block, idx) = if i < n {
                ("stage1", i + 1)
            } else {
                ("stage2", i - n + 1)
            };
            return Err(Error::Divergence {
                t,
                detail: format!("{block} entry {idx} is not finite"),
            });
        }
        if k == steps {
            break;
        }

        let mut rhs = |tau: f64, state: &[f64]| -> Result<Vec<f64>> {
            let rate = spec.schedule.rate_at(tau)?;
            let eps = 1.0 / rate;
            let fresh = match &cache {
                Some(g) => g.eps != eps,
                None => true,
            };
            if fresh {
                cache = Some(spec.injection_gains(eps)?);
            }
            let g = cache.as_ref().expect("gain cache populated above");
            let m_tau = signal.delayed_clean(tau)? + noise_k;
            Ok(dynamics::two_step_rhs_flat(
                state,
                m_tau,
                &g.stage1,
                g.stage2.as_slice(),
            ))
        };
        y = step_once(&y, t, cfg.dt, cfg.method, &mut rhs)?;
    }
    Ok(trace)
}
