//! Numerical differentiation under a known measurement delay.
//!
//! A classic high-gain differentiator fed a delayed measurement `v(t - Δ)`
//! converges to the derivatives of the *delayed* signal. This crate adds a
//! second estimation stage that re-uses the first stage's innovation through
//! Taylor-corrected injection gains, so the pair reports derivative estimates
//! at the *current* time `t` instead of `t - Δ`.
//!
//! The crate is organized around plain data types (`GainVector`,
//! [`SignalSpec`], [`DifferentiatorSpec`], [`Scenario`]) plus a fixed-step
//! integrator and a Laplace-domain oracle used to cross-check the time-domain
//! results. Everything is deterministic: a scenario file pins every input,
//! including the noise seed, and repeated runs produce byte-identical CSV.
//!
//! [`GainVector`]: gains::GainVector
//! [`SignalSpec`]: signals::SignalSpec
//! [`DifferentiatorSpec`]: dynamics::DifferentiatorSpec
//! [`Scenario`]: harness::Scenario

pub mod dynamics;
pub mod error;
pub mod freq;
pub mod gains;
pub mod harness;
pub mod integrator;
pub mod signals;
pub mod trace;

pub use dynamics::{DifferentiatorSpec, InitPolicy, ObserverState, StageGains};
pub use error::{Error, Result};
// the frequency-domain API speaks this type, so hand it to downstreams too
pub use freq::BodeTable;
pub use gains::{GainSchedule, GainVector, HurwitzCheck, SecondStepGains};
pub use harness::{Comparison, ErrorReport, RunResult, Scenario, SweepOutcome};
pub use integrator::{IntegratorConfig, Method};
pub use num_complex::Complex64;
pub use signals::{NoiseKind, NoiseSpec, SignalSpec, Waveform};
pub use trace::Trace;
