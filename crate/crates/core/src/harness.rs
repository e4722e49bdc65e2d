//! Scenario files, error metrics, delta sweeps, comparisons, and artifact
//! emission.
//!
//! A scenario JSON pins *everything* — gains, schedule, signal, noise seed,
//! step size, metrics window — so a run is a pure function of the file.
//! Metrics never look before `metrics_window.0`: transients (and for ramped
//! schedules, the whole ramp) are excluded by construction.

use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DifferentiatorSpec, InitPolicy};
use crate::error::{Error, Result};
use crate::gains::GainSchedule;
use crate::integrator::{self, IntegratorConfig};
use crate::signals::SignalSpec;
use crate::trace::{fmt_f64, Trace};

/// Scenario schema version this build reads and writes.
pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    /// Used as the stem of every emitted file name.
    pub name: String,
    pub differentiator: DifferentiatorSpec,
    pub signal: SignalSpec,
    pub integrator: IntegratorConfig,
    /// `[start, end]` of the steady-state window all metrics use.
    pub metrics_window: (f64, f64),
    #[serde(default)]
    pub init: InitPolicy,
}

impl Scenario {
    pub fn from_json_str(json: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(json)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::Config {
                field: "version".into(),
                detail: format!("expected {}, got {}", SCENARIO_VERSION, self.version),
            });
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config {
                field: "name".into(),
                detail: "must be non-empty and free of path separators".into(),
            });
        }
        self.differentiator.validate()?;
        self.signal.validate()?;
        self.integrator.validate()?;

        if self.signal.delay != self.differentiator.delay {
            return Err(Error::Config {
                field: "differentiator.delay".into(),
                detail: format!(
                    "delay is assumed known exactly: signal has {}, differentiator corrects {}",
                    self.signal.delay, self.differentiator.delay
                ),
            });
        }
        let (a, b) = self.metrics_window;
        if !(a.is_finite() && b.is_finite()) || a < 0.0 || a >= b || b > self.integrator.t_end {
            return Err(Error::Config {
                field: "metrics_window".into(),
                detail: format!(
                    "need 0 <= start < end <= t_end = {}, got [{a}, {b}]",
                    self.integrator.t_end
                ),
            });
        }
        if let GainSchedule::Ramp { ramp_end, .. } = self.differentiator.schedule {
            if a < ramp_end {
                return Err(Error::Config {
                    field: "metrics_window".into(),
                    detail: format!(
                        "window starts at {a} but the gain ramp only freezes at {ramp_end}"
                    ),
                });
            }
        }
        Ok(())
    }

    /// Validates, integrates, and measures in one go.
    pub fn run(&self) -> Result<RunResult> {
        self.validate()?;
        let trace = integrator::integrate_from(
            &self.differentiator,
            &self.signal,
            &self.integrator,
            self.init,
        )?;
        let report = ErrorReport::from_trace(&trace, &self.signal, self.metrics_window)?;
        Ok(RunResult {
            scenario: self.clone(),
            trace,
            report,
        })
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: Scenario,
    pub trace: Trace,
    pub report: ErrorReport,
}

impl RunResult {
    pub fn write_trace_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.trace.write_csv(std::io::BufWriter::new(file))
    }

    pub fn write_report_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.report.to_json_string().as_bytes())?;
        Ok(())
    }

    pub fn write_figure_csv<P: AsRef<Path>>(&self, figure: u8, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        write_figure_csv(&self.trace, figure, std::io::BufWriter::new(file))
    }

    /// Writes `<name>.trace.csv`, `<name>.report.json` and any requested
    /// figure CSVs into `dir`; returns the paths written.
    pub fn emit_all(&self, dir: &Path, figures: &[u8]) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let stem = &self.scenario.name;
        let mut written = Vec::new();

        let trace_path = dir.join(format!("{stem}.trace.csv"));
        self.write_trace_csv(&trace_path)?;
        written.push(trace_path);

        let report_path = dir.join(format!("{stem}.report.json"));
        self.write_report_json(&report_path)?;
        written.push(report_path);

        for &fig in figures {
            let fig_path = dir.join(format!("{stem}.fig{fig}.csv"));
            self.write_figure_csv(fig, &fig_path)?;
            written.push(fig_path);
        }
        Ok(written)
    }
}

/// Sup and RMS error of one output over the metrics window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputError {
    /// 1-based output index.
    pub output: usize,
    pub sup: f64,
    pub rms: f64,
}

/// Windowed error metrics for both stages against both references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub window: (f64, f64),
    /// Stage 1 against the delayed derivatives — what the baseline is for.
    pub stage1_vs_delayed: Vec<OutputError>,
    /// Stage 1 against the undelayed derivatives — the delay penalty.
    pub stage1_vs_undelayed: Vec<OutputError>,
    /// Stage 2 against the undelayed derivatives — the compensated result.
    pub stage2_vs_undelayed: Vec<OutputError>,
}

impl ErrorReport {
    pub fn from_trace(trace: &Trace, signal: &SignalSpec, window: (f64, f64)) -> Result<Self> {
        let range = window_indices(&trace.t, window)?;
        let n = trace.order;
        let mut s1_delayed = Vec::with_capacity(n);
        let mut s1_undelayed = Vec::with_capacity(n);
        let mut s2_undelayed = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = [ErrAcc::new(), ErrAcc::new(), ErrAcc::new()];
            for r in range.clone() {
                let t = trace.t[r];
                let ref_delayed = signal.truth(t - signal.delay, i)?;
                let ref_undelayed = trace.truth[i][r];
                acc[0].add(trace.stage1[i][r] - ref_delayed);
                acc[1].add(trace.stage1[i][r] - ref_undelayed);
                acc[2].add(trace.stage2[i][r] - ref_undelayed);
            }
            let [d, u, c] = acc;
            s1_delayed.push(d.finish(i + 1));
            s1_undelayed.push(u.finish(i + 1));
            s2_undelayed.push(c.finish(i + 1));
        }
        Ok(ErrorReport {
            window,
            stage1_vs_delayed: s1_delayed,
            stage1_vs_undelayed: s1_undelayed,
            stage2_vs_undelayed: s2_undelayed,
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

struct ErrAcc {
    sup: f64,
    sum_sq: f64,
    count: usize,
}

impl ErrAcc {
    fn new() -> Self {
        ErrAcc {
            sup: 0.0,
            sum_sq: 0.0,
            count: 0,
        }
    }

    fn add(&mut self, err: f64) {
        self.sup = self.sup.max(err.abs());
        self.sum_sq += err * err;
        self.count += 1;
    }

    fn finish(self, output: usize) -> OutputError {
        OutputError {
            output,
            sup: self.sup,
            rms: (self.sum_sq / self.count as f64).sqrt(),
        }
    }
}

/// Row range of `t` (sorted, ascending) falling inside `[window.0, window.1]`,
/// with a relative slack of 1e-9 so grid points landing on the boundary are
/// kept regardless of rounding direction.
pub fn window_indices(t: &[f64], window: (f64, f64)) -> Result<Range<usize>> {
    let (a, b) = window;
    let slack_a = 1e-9 * a.abs().max(1.0);
    let slack_b = 1e-9 * b.abs().max(1.0);
    let start = t.partition_point(|&x| x < a - slack_a);
    let end = t.partition_point(|&x| x <= b + slack_b);
    if start >= end {
        return Err(Error::Analysis(format!(
            "metrics window [{a}, {b}] contains no samples"
        )));
    }
    Ok(start..end)
}

/// One delta's worth of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub sup: f64,
}

/// Log-log fit of one output's sup error against delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    /// 1-based output index (the top output `x2_n` is not swept).
    pub output: usize,
    pub slope: f64,
    pub r_squared: f64,
    pub points: Vec<SweepPoint>,
}

/// Re-runs `base` for each delta and fits `log(sup error)` against
/// `log(delta)` per output `1..n-1`. Runs execute in parallel on the ambient
/// rayon pool; results are merged in ascending delta order regardless of
/// completion order.
pub fn sweep_delta(base: &Scenario, deltas: &[f64]) -> Result<Vec<SweepOutcome>> {
    base.validate()?;
    if deltas.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "a sweep needs at least 3 deltas, got {}",
            deltas.len()
        )));
    }
    for &d in deltas {
        if !d.is_finite() || d <= 0.0 || d >= 1.0 {
            return Err(Error::InvalidInput(format!(
                "sweep deltas must lie in (0, 1), got {d}"
            )));
        }
    }

    let mut reports: Vec<(f64, ErrorReport)> = deltas
        .par_iter()
        .map(|&d| {
            let mut scenario = base.clone();
            scenario.name = format!("{}-delta{d}", base.name);
            scenario.differentiator.delay = d;
            scenario.signal.delay = d;
            scenario.run().map(|r| (d, r.report))
        })
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    let n = base.differentiator.order;
    let mut outcomes = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let points: Vec<SweepPoint> = reports
            .iter()
            .map(|(d, rep)| SweepPoint {
                delta: *d,
                sup: rep.stage2_vs_undelayed[i].sup,
            })
            .collect();
        let (slope, r_squared) = log_log_fit(&points)?;
        outcomes.push(SweepOutcome {
            output: i + 1,
            slope,
            r_squared,
            points,
        });
    }
    Ok(outcomes)
}

fn log_log_fit(points: &[SweepPoint]) -> Result<(f64, f64)> {
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for p in points {
        if p.sup <= 0.0 {
            return Err(Error::Analysis(format!(
                "sup error {} at delta {} has no logarithm",
                p.sup, p.delta
            )));
        }
        xs.push(p.delta.ln());
        ys.push(p.sup.ln());
    }
    let m = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / m;
    let mean_y = ys.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::Analysis(
            "zero variance in the delta grid; duplicate deltas?".into(),
        ));
    }
    let slope = sxy / sxx;
    let ss_res = syy - slope * sxy;
    let r_squared = if syy == 0.0 {
        1.0 // constant responses perfectly fit by a flat line
    } else {
        1.0 - ss_res / syy
    };
    Ok((slope, r_squared))
}

/// Baseline stage 1 vs compensated stage 2 on one output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub output: usize,
    pub baseline_sup: f64,
    pub baseline_rms: f64,
    pub two_step_sup: f64,
    pub two_step_rms: f64,
    /// `baseline_sup / two_step_sup`; > 1 means the correction helped.
    pub sup_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Runs both scenarios and tabulates stage-1 (of `baseline`) against
/// stage-2 (of `candidate`) errors, all versus the undelayed truth.
/// Signals, horizons, and windows must match or the comparison is refused.
pub fn compare(baseline: &Scenario, candidate: &Scenario) -> Result<Comparison> {
    if baseline.signal != candidate.signal {
        return Err(Error::Config {
            field: "signal".into(),
            detail: "scenarios must share the signal for a fair comparison".into(),
        });
    }
    if baseline.integrator.t_end != candidate.integrator.t_end {
        return Err(Error::Config {
            field: "integrator.t_end".into(),
            detail: "scenarios must share the horizon".into(),
        });
    }
    if baseline.metrics_window != candidate.metrics_window {
        return Err(Error::Config {
            field: "metrics_window".into(),
            detail: "scenarios must share the metrics window".into(),
        });
    }
    if baseline.differentiator.order != candidate.differentiator.order {
        return Err(Error::Config {
            field: "differentiator.order".into(),
            detail: "scenarios must share the observer order".into(),
        });
    }
    let (base, cand) = rayon::join(|| baseline.run(), || candidate.run());
    let (base, cand) = (base?, cand?);
    let rows = base
        .report
        .stage1_vs_undelayed
        .iter()
        .zip(&cand.report.stage2_vs_undelayed)
        .map(|(b, c)| ComparisonRow {
            output: b.output,
            baseline_sup: b.sup,
            baseline_rms: b.rms,
            two_step_sup: c.sup,
            two_step_rms: c.rms,
            sup_ratio: if c.sup == 0.0 {
                f64::INFINITY
            } else {
                b.sup / c.sup
            },
        })
        .collect();
    Ok(Comparison { rows })
}

/// Column selections for the ten standard plots.
///
/// 1: delayed tracking of stage 1; 2-3: stage-1 derivatives vs delayed truth
/// targets; 4-6: stage-2 outputs vs undelayed truth; 7: what noise does to
/// the measurement; 8-10: stage-2 outputs under noise.
fn figure_columns(figure: u8, order: usize) -> Result<Vec<&'static str>> {
    let cols: Vec<&'static str> = match figure {
        1 => vec!["t", "signal", "delayed_signal", "stage1_1"],
        2 => vec!["t", "truth_2", "stage1_2"],
        3 => vec!["t", "truth_3", "stage1_3"],
        4 | 8 => vec!["t", "signal", "stage2_1"],
        5 | 9 => vec!["t", "truth_2", "stage2_2"],
        6 | 10 => vec!["t", "truth_3", "stage2_3"],
        7 => vec!["t", "delayed_signal", "measurement"],
        other => {
            return Err(Error::InvalidInput(format!(
                "figure must be in 1..=10, got {other}"
            )))
        }
    };
    let needs = match figure {
        3 | 6 | 10 => 3,
        2 | 5 | 9 => 2,
        _ => 1,
    };
    if order < needs {
        return Err(Error::InvalidInput(format!(
            "figure {figure} needs observer order >= {needs}, trace has {order}"
        )));
    }
    Ok(cols)
}

/// Writes the column subset for one standard figure.
pub fn write_figure_csv<W: Write>(trace: &Trace, figure: u8, mut w: W) -> Result<()> {
    let cols = figure_columns(figure, trace.order)?;
    writeln!(w, "{}", cols.join(","))?;
    let select = |name: &str| -> &[f64] {
        match name {
            "t" => &trace.t,
            "signal" => &trace.signal,
            "delayed_signal" => &trace.delayed_signal,
            "measurement" => &trace.measurement,
            "stage1_1" => &trace.stage1[0],
            "stage1_2" => &trace.stage1[1],
            "stage1_3" => &trace.stage1[2],
            "stage2_1" => &trace.stage2[0],
            "stage2_2" => &trace.stage2[1],
            "stage2_3" => &trace.stage2[2],
            "truth_2" => &trace.truth[1],
            "truth_3" => &trace.truth[2],
            _ => unreachable!("column list is static"),
        }
    };
    let columns: Vec<&[f64]> = cols.iter().map(|c| select(c)).collect();
    let mut line = String::with_capacity(32 * columns.len());
    for r in 0..trace.rows() {
        line.clear();
        for (c, col) in columns.iter().enumerate() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&fmt_f64(col[r]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn figure_csv_string(trace: &Trace, figure: u8) -> Result<String> {
    let mut out = Vec::with_capacity(trace.rows() * 80 + 64);
    write_figure_csv(trace, figure, &mut out)?;
    Ok(String::from_utf8(out).expect("csv output is ascii"))
}

/// Least-squares fit of `y ~ a sin(omega t) + b cos(omega t)` over the rows
/// given; returns `(magnitude, phase)` with `y ~ magnitude * sin(omega t + phase)`.
///
/// Used to read gain and phase out of a steady-state sinusoidal run for
/// comparison against the Laplace oracle.
pub fn fit_sinusoid(t: &[f64], y: &[f64], omega: f64) -> Result<(f64, f64)> {
    if t.len() != y.len() || t.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "need matching t/y with at least 4 samples, got {} and {}",
            t.len(),
            y.len()
        )));
    }
    if !omega.is_finite() || omega <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "omega must be finite and > 0, got {omega}"
        )));
    }
    // Normal equations for the 2-parameter linear model.
    let (mut ss, mut cc, mut sc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&ti, &yi) in t.iter().zip(y) {
        let s = (omega * ti).sin();
        let c = (omega * ti).cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        ys += yi * s;
        yc += yi * c;
    }
    let det = ss * cc - sc * sc;
    if det.abs() < 1e-12 * ss.max(cc).max(1.0) {
        return Err(Error::Analysis(
            "sinusoid fit is degenerate; window too short for this omega?".into(),
        ));
    }
    let a = (ys * cc - yc * sc) / det;
    let b = (yc * ss - ys * sc) / det;
    Ok((a.hypot(b), b.atan2(a)))
}
