//! Test signals: analytic waveforms, the delay model, and measurement noise.
//!
//! A [`SignalSpec`] owns three things: the clean waveform `v`, the
//! measurement delay, and an optional noise model. The measurement handed to
//! the observer is `m(t) = v(t - delay) + noise(t)`; `truth(t, order)`
//! evaluates `v^(order)(t)` for error metrics. Noise is a pure function of
//! `(seed, t)` so a query at the same time always returns the same value —
//! integrators rely on that to hold noise constant across RK sub-stages.

use std::io::BufRead;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::parse_csv_table;

/// One sinusoidal component `amplitude * sin(frequency * t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineTerm {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

impl SineTerm {
    fn derivative(&self, t: f64, order: usize) -> f64 {
        // d^m/dt^m [a sin(wt + p)] = a w^m sin(wt + p + m pi/2)
        let shift = order as f64 * std::f64::consts::FRAC_PI_2;
        self.amplitude
            * self.frequency.powi(order as i32)
            * (self.frequency * t + self.phase + shift).sin()
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("frequency", self.frequency),
            ("phase", self.phase),
        ] {
            if !v.is_finite() {
                return Err(Error::Config {
                    field: format!("signal.{name}"),
                    detail: format!("must be finite, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// The clean signal `v(t)`.
///
/// Analytic variants have closed-form derivatives of every order. `Recorded`
/// wraps a sample buffer; it supports value queries only and never appears in
/// scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    Sine(SineTerm),
    /// Coefficients in ascending order: `c[0] + c[1] t + c[2] t^2 + ...`.
    Polynomial {
        coeffs: Vec<f64>,
    },
    SumOfSines {
        terms: Vec<SineTerm>,
    },
    #[serde(skip)]
    Recorded(DelayBuffer),
}

impl Waveform {
    pub fn sine(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Waveform::Sine(SineTerm {
            amplitude,
            frequency,
            phase,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Waveform::Sine(term) => term.validate(),
            Waveform::Polynomial { coeffs } => {
                if coeffs.is_empty() {
                    return Err(Error::Config {
                        field: "signal.coeffs".into(),
                        detail: "polynomial needs at least one coefficient".into(),
                    });
                }
                if let Some(c) = coeffs.iter().find(|c| !c.is_finite()) {
                    return Err(Error::Config {
                        field: "signal.coeffs".into(),
                        detail: format!("must be finite, got {c}"),
                    });
                }
                Ok(())
            }
            Waveform::SumOfSines { terms } => {
                if terms.is_empty() {
                    return Err(Error::Config {
                        field: "signal.terms".into(),
                        detail: "sum needs at least one term".into(),
                    });
                }
                terms.iter().try_for_each(SineTerm::validate)
            }
            Waveform::Recorded(buf) => {
                if buf.is_empty() {
                    return Err(Error::Config {
                        field: "signal.recorded".into(),
                        detail: "buffer is empty".into(),
                    });
                }
                Ok(())
            }
        }
    }

    /// `v^(order)(t)`. For `Recorded` only `order = 0` is defined.
    pub fn derivative(&self, t: f64, order: usize) -> Result<f64> {
        match self {
            Waveform::Sine(term) => Ok(term.derivative(t, order)),
            Waveform::Polynomial { coeffs } => Ok(polynomial_derivative(coeffs, t, order)),
            Waveform::SumOfSines { terms } => {
                Ok(terms.iter().map(|s| s.derivative(t, order)).sum())
            }
            Waveform::Recorded(buf) => {
                if order == 0 {
                    buf.sample_at(t)
                } else {
                    Err(Error::InvalidInput(format!(
                        "derivative of order {order} is not available for a recorded signal"
                    )))
                }
            }
        }
    }
}

fn polynomial_derivative(coeffs: &[f64], t: f64, order: usize) -> f64 {
    if order >= coeffs.len() {
        return 0.0;
    }
    // Differentiate the coefficient vector `order` times, then Horner.
    let mut c: Vec<f64> = coeffs.to_vec();
    for _ in 0..order {
        for i in 1..c.len() {
            c[i - 1] = c[i] * i as f64;
        }
        c.pop();
    }
    c.iter().rev().fold(0.0, |acc, &ci| acc * t + ci)
}

/// Measurement noise, reproducible from `(seed, t)` alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Uniform on `[-amplitude, amplitude]`.
    Uniform { amplitude: f64 },
    /// Zero-mean Gaussian.
    Gaussian { std_dev: f64 },
}

impl NoiseSpec {
    /// Uniform noise with the conventional bench values.
    pub fn default_uniform() -> Self {
        NoiseSpec {
            kind: NoiseKind::Uniform { amplitude: 0.01 },
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NoiseKind::Uniform { amplitude } => {
                if !amplitude.is_finite() || amplitude < 0.0 {
                    return Err(Error::Config {
                        field: "noise.amplitude".into(),
                        detail: format!("must be finite and >= 0, got {amplitude}"),
                    });
                }
            }
            NoiseKind::Gaussian { std_dev } => {
                if !std_dev.is_finite() || std_dev <= 0.0 {
                    return Err(Error::Config {
                        field: "noise.std_dev".into(),
                        detail: format!("must be finite and > 0, got {std_dev}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Noise value at time `t`. Pure: same `(seed, t)` always gives the same
    /// draw, so callers may re-query freely instead of storing samples.
    pub fn sample(&self, t: f64) -> f64 {
        let mixed = self.seed ^ t.to_bits().wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(mixed);
        match self.kind {
            NoiseKind::Uniform { amplitude } => {
                if amplitude == 0.0 {
                    0.0
                } else {
                    rng.random_range(-amplitude..=amplitude)
                }
            }
            NoiseKind::Gaussian { std_dev } => Normal::new(0.0, std_dev)
                .expect("validated std_dev")
                .sample(&mut rng),
        }
    }
}

/// A signal as the observer sees it: waveform, delay, optional noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub form: Waveform,
    /// Measurement delay in seconds, >= 0.
    pub delay: f64,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

impl SignalSpec {
    pub fn new(form: Waveform, delay: f64) -> Self {
        SignalSpec {
            form,
            delay,
            noise: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.form.validate()?;
        if !self.delay.is_finite() || self.delay < 0.0 {
            return Err(Error::Config {
                field: "signal.delay".into(),
                detail: format!("must be finite and >= 0, got {}", self.delay),
            });
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        Ok(())
    }

    /// Reference derivative `v^(order)(t)` of the *undelayed* signal.
    pub fn truth(&self, t: f64, order: usize) -> Result<f64> {
        self.form.derivative(t, order)
    }

    /// `v(t - delay)` without noise.
    pub fn delayed_clean(&self, t: f64) -> Result<f64> {
        self.form.derivative(t - self.delay, 0)
    }

    /// What the sensor reports: `v(t - delay) + noise(t)`.
    pub fn measure(&self, t: f64) -> Result<f64> {
        Ok(self.delayed_clean(t)? + self.noise_at(t))
    }

    /// Noise contribution at `t` (zero when no noise is configured).
    pub fn noise_at(&self, t: f64) -> f64 {
        self.noise.as_ref().map_or(0.0, |n| n.sample(t))
    }
}

/// Time-stamped samples with linear interpolation between them.
///
/// Sample times must be strictly increasing. Queries on a stored timestamp
/// return the stored value exactly; queries before the first sample report a
/// buffer underflow carrying both times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DelayBuffer {
    samples: Vec<(f64, f64)>,
}

impl DelayBuffer {
    pub fn new() -> Self {
        DelayBuffer::default()
    }

    pub fn from_samples(samples: Vec<(f64, f64)>) -> Result<Self> {
        let mut buf = DelayBuffer::new();
        for (t, v) in samples {
            buf.push(t, v)?;
        }
        Ok(buf)
    }

    pub fn push(&mut self, t: f64, v: f64) -> Result<()> {
        if !t.is_finite() || !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "buffer sample ({t}, {v}) is not finite"
            )));
        }
        if let Some(&(last_t, _)) = self.samples.last() {
            if t <= last_t {
                return Err(Error::InvalidInput(format!(
                    "sample times must be strictly increasing: {t} after {last_t}"
                )));
            }
        }
        self.samples.push((t, v));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time span `[first, last]` covered by the buffer.
    pub fn span(&self) -> Option<(f64, f64)> {
        match (self.samples.first(), self.samples.last()) {
            (Some(&(a, _)), Some(&(b, _))) => Some((a, b)),
            _ => None,
        }
    }

    /// Value at `t`, linearly interpolated between neighbours.
    pub fn sample_at(&self, t: f64) -> Result<f64> {
        let (first, last) = self
            .span()
            .ok_or_else(|| Error::InvalidInput("cannot sample an empty buffer".into()))?;
        if t < first {
            return Err(Error::BufferUnderflow { t, earliest: first });
        }
        if t > last {
            return Err(Error::InvalidInput(format!(
                "query at t = {t} is past the latest sample at t = {last}"
            )));
        }
        // Index of the first sample with time >= t.
        let idx = self.samples.partition_point(|&(st, _)| st < t);
        let (t1, v1) = self.samples[idx];
        if t1 == t {
            return Ok(v1); // exact grid hit, no interpolation round-off
        }
        let (t0, v0) = self.samples[idx - 1];
        Ok(v0 + (v1 - v0) * ((t - t0) / (t1 - t0)))
    }

    /// `buffer(t - delta)` — the delayed read used by replay experiments.
    pub fn sample_delayed(&self, t: f64, delta: f64) -> Result<f64> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::InvalidInput(format!(
                "delay must be finite and >= 0, got {delta}"
            )));
        }
        self.sample_at(t - delta)
    }

    /// Loads a two-column `t,v` CSV (header row required).
    pub fn from_csv_reader<R: BufRead>(reader: R) -> Result<Self> {
        let (_, rows) = parse_csv_table(reader)?;
        let mut buf = DelayBuffer::new();
        for (line, row) in rows.iter().enumerate() {
            if row.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "csv row {} has {} columns, need at least t,v",
                    line + 2,
                    row.len()
                )));
            }
            buf.push(row[0], row[1])?;
        }
        Ok(buf)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }
}
