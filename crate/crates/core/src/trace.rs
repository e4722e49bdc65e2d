//! Dense simulation traces and the one CSV dialect used everywhere.
//!
//! Floats are written as `{:.16e}` — 17 significant digits — which
//! round-trips every finite f64 bit-exactly. Trace serialization is fully
//! deterministic: fixed column order, fixed formatting, `\n` line endings.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Column-major record of a run: time, signal views, both observer stages,
/// and the reference derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Observer order `n`; every per-stage block has this many columns.
    pub order: usize,
    pub t: Vec<f64>,
    /// Undelayed clean signal `v(t)`.
    pub signal: Vec<f64>,
    /// Delayed clean signal `v(t - delay)`.
    pub delayed_signal: Vec<f64>,
    /// What the observer consumed: delayed signal plus noise.
    pub measurement: Vec<f64>,
    /// First-stage states; `stage1[i]` estimates `v^(i)(t - delay)`.
    pub stage1: Vec<Vec<f64>>,
    /// Second-stage states; `stage2[i]` estimates `v^(i)(t)`.
    pub stage2: Vec<Vec<f64>>,
    /// Reference derivatives `truth[i] = v^(i)(t)`.
    pub truth: Vec<Vec<f64>>,
}

impl Trace {
    pub fn with_capacity(order: usize, rows: usize) -> Self {
        let block = |_: usize| vec![Vec::with_capacity(rows); order];
        Trace {
            order,
            t: Vec::with_capacity(rows),
            signal: Vec::with_capacity(rows),
            delayed_signal: Vec::with_capacity(rows),
            measurement: Vec::with_capacity(rows),
            stage1: block(rows),
            stage2: block(rows),
            truth: block(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.t.len()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push_row(
        &mut self,
        t: f64,
        signal: f64,
        delayed_signal: f64,
        measurement: f64,
        stage1: &[f64],
        stage2: &[f64],
        truth: &[f64],
    ) {
        assert_eq!(stage1.len(), self.order, "stage1 arity");
        assert_eq!(stage2.len(), self.order, "stage2 arity");
        assert_eq!(truth.len(), self.order, "truth arity");
        self.t.push(t);
        self.signal.push(signal);
        self.delayed_signal.push(delayed_signal);
        self.measurement.push(measurement);
        for (col, &v) in self.stage1.iter_mut().zip(stage1) {
            col.push(v);
        }
        for (col, &v) in self.stage2.iter_mut().zip(stage2) {
            col.push(v);
        }
        for (col, &v) in self.truth.iter_mut().zip(truth) {
            col.push(v);
        }
    }

    pub fn header(&self) -> String {
        let mut h = String::from("t,signal,delayed_signal,measurement");
        for i in 1..=self.order {
            h.push_str(&format!(",stage1_{i}"));
        }
        for i in 1..=self.order {
            h.push_str(&format!(",stage2_{i}"));
        }
        for i in 1..=self.order {
            h.push_str(&format!(",truth_{i}"));
        }
        h
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header())?;
        let mut line = String::with_capacity(32 * (4 + 3 * self.order));
        for r in 0..self.rows() {
            line.clear();
            line.push_str(&fmt_f64(self.t[r]));
            for v in [self.signal[r], self.delayed_signal[r], self.measurement[r]] {
                line.push(',');
                line.push_str(&fmt_f64(v));
            }
            for block in [&self.stage1, &self.stage2, &self.truth] {
                for col in block.iter() {
                    line.push(',');
                    line.push_str(&fmt_f64(col[r]));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::with_capacity(self.rows() * 26 * (4 + 3 * self.order) + 256);
        self.write_csv(&mut out).expect("write to Vec cannot fail");
        String::from_utf8(out).expect("csv output is ascii")
    }
}

/// Parses a header + numeric-rows CSV into `(header names, rows)`.
///
/// Every data row must have as many fields as the header. Empty lines are
/// skipped. Reported errors carry 1-based line numbers.
pub fn parse_csv_table<R: BufRead>(reader: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match &header {
            None => {
                header = Some(line.split(',').map(|s| s.trim().to_string()).collect());
            }
            Some(h) => {
                let mut row = Vec::with_capacity(h.len());
                for field in line.split(',') {
                    let v: f64 = field.trim().parse().map_err(|_| {
                        Error::InvalidInput(format!(
                            "line {}: `{}` is not a number",
                            idx + 1,
                            field.trim()
                        ))
                    })?;
                    row.push(v);
                }
                if row.len() != h.len() {
                    return Err(Error::InvalidInput(format!(
                        "line {}: {} fields, header has {}",
                        idx + 1,
                        row.len(),
                        h.len()
                    )));
                }
                rows.push(row);
            }
        }
    }
    match header {
        Some(h) => Ok((h, rows)),
        None => Err(Error::InvalidInput("csv is empty".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_trace() -> Trace {
        let mut tr = Trace::with_capacity(2, 3);
        tr.push_row(0.0, 1.0, 2.0, 3.0, &[4.0, 5.0], &[6.0, 7.0], &[8.0, 9.0]);
        tr.push_row(
            0.1,
            -1.5e-13,
            0.1 + 0.2, // deliberately not 0.3
            std::f64::consts::PI,
            &[1.0 / 3.0, 2.0f64.sqrt()],
            &[-0.0, 1e300],
            &[1e-300, 6.02214076e23],
        );
        tr
    }

    #[test]
    fn header_lists_all_columns_in_order() {
        let tr = tiny_trace();
        assert_eq!(
            tr.header(),
            "t,signal,delayed_signal,measurement,stage1_1,stage1_2,stage2_1,stage2_2,truth_1,truth_2"
        );
    }

    #[test]
    fn csv_round_trips_bit_exactly() {
        let tr = tiny_trace();
        let csv = tr.to_csv_string();
        let (header, rows) = parse_csv_table(csv.as_bytes()).unwrap();
        assert_eq!(header.len(), 10);
        assert_eq!(rows.len(), 2);
        let expect_row1 = [
            0.1,
            -1.5e-13,
            0.1 + 0.2,
            std::f64::consts::PI,
            1.0 / 3.0,
            2.0f64.sqrt(),
            -0.0,
            1e300,
            1e-300,
            6.02214076e23,
        ];
        for (a, b) in rows[1].iter().zip(expect_row1) {
            assert_eq!(a.to_bits(), b.to_bits(), "{a} vs {b}");
        }
    }

    #[test]
    fn serialization_is_deterministic() {
        let tr = tiny_trace();
        assert_eq!(tr.to_csv_string(), tr.to_csv_string());
    }

    #[test]
    fn parse_rejects_ragged_and_non_numeric_rows() {
        assert!(parse_csv_table("a,b\n1.0\n".as_bytes()).is_err());
        assert!(parse_csv_table("a,b\n1.0,2.0,3.0\n".as_bytes()).is_err());
        assert!(parse_csv_table("a,b\n1.0,x\n".as_bytes()).is_err());
        assert!(parse_csv_table("".as_bytes()).is_err());
        let (h, rows) = parse_csv_table("a,b\n\n1.0,2.0\n".as_bytes()).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows, vec![vec![1.0, 2.0]]);
    }
}
