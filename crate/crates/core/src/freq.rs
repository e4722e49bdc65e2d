//! Laplace-domain oracle for the observer pair.
//!
//! Every transfer function here is an algebraic consequence of the
//! time-domain equations, evaluated in the scaled variable `z = s * eps` so
//! that magnitudes stay tame over wide frequency sweeps. They exist to
//! cross-check simulations: a long sinusoidal run must reproduce
//! `stage2_tf(i, j*omega)` in amplitude and phase, and the deviation of
//! `stage2_tf(i, s)` from the ideal `s^(i-1)` splits exactly into a
//! finite-gain head plus Taylor-truncation tails (see `tests`).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gains::GainVector;

/// Refuse transfer-function evaluation when `|D(z)|` drops below this.
pub const POLE_PROXIMITY_LIMIT: f64 = 1e-300;

/// `D(z) = z^n + k_1 z^(n-1) + ... + k_n` by Horner.
fn char_poly(k: &GainVector, z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for &ki in k.as_slice() {
        acc = acc * z + ki;
    }
    acc
}

fn denom_checked(k: &GainVector, z: Complex64, s: Complex64) -> Result<Complex64> {
    let d = char_poly(k, z);
    let magnitude = d.norm();
    if magnitude < POLE_PROXIMITY_LIMIT {
        return Err(Error::PoleProximity { s, magnitude });
    }
    Ok(d)
}

fn check_eps(eps: f64) -> Result<()> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "eps must be finite and > 0, got {eps}"
        )));
    }
    Ok(())
}

/// First stage, from its own (delayed) input to `x1_1`:
/// `(k_1 z^(n-1) + ... + k_n) / D(z)`.
pub fn stage1_tf(s: Complex64, k: &GainVector, eps: f64) -> Result<Complex64> {
    check_eps(eps)?;
    let z = s * eps;
    let d = denom_checked(k, z, s)?;
    let mut num = Complex64::new(0.0, 0.0);
    for &ki in k.as_slice() {
        num = num * z + ki;
    }
    Ok(num / d)
}

/// Innovation `e = u - x1_1` relative to the input: `z^n / D(z)`.
///
/// Complements [`stage1_tf`]: the two sum to exactly 1.
pub fn innovation_tf(s: Complex64, k: &GainVector, eps: f64) -> Result<Complex64> {
    check_eps(eps)?;
    let z = s * eps;
    let d = denom_checked(k, z, s)?;
    let mut zn = Complex64::new(1.0, 0.0);
    for _ in 0..k.len() {
        zn *= z;
    }
    Ok(zn / d)
}

/// Second stage, from the *undelayed* signal to `x2_i` (the `e^(-s*delta)`
/// of the measurement path is part of this function):
///
/// ```text
/// stage2_tf(i, s) = s^(i-1) * e^(-s*delta) * sum_{m=i}^{n} b_m z^(n-m) / D(z)
/// b_m = sum_{j=m}^{n} k_j q^(j-m) / (j-m)!,   q = delta/eps
/// ```
///
/// Dividing by the ideal `s^(i-1)` and letting `eps -> 0` leaves
/// `1 + taylor_truncation(n-i, s, delta)` — the irreducible part of the
/// delay compensation error.
pub fn stage2_tf(
    i: usize,
    s: Complex64,
    k: &GainVector,
    eps: f64,
    delta: f64,
) -> Result<Complex64> {
    let n = k.len();
    if i == 0 || i > n {
        return Err(Error::InvalidInput(format!(
            "output index must be in 1..={n}, got {i}"
        )));
    }
    check_eps(eps)?;
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidInput(format!(
            "delta must be finite and >= 0, got {delta}"
        )));
    }
    let z = s * eps;
    let d = denom_checked(k, z, s)?;
    let q = delta / eps;

    // Horner over m: num = b_i z^(n-i) + ... + b_n
    let mut num = Complex64::new(0.0, 0.0);
    for m in i..=n {
        let mut b = 0.0;
        let mut qp = 1.0; // q^(j-m)
        let mut fact = 1.0; // (j-m)!
        for j in m..=n {
            if j > m {
                qp *= q;
                fact *= (j - m) as f64;
            }
            b += k.as_slice()[j - 1] * qp / fact;
        }
        if !b.is_finite() {
            return Err(Error::Range {
                index: m,
                detail: format!("b_{m} overflowed (q = {q:e})"),
            });
        }
        num = num * z + b;
    }

    let mut si = Complex64::new(1.0, 0.0);
    for _ in 1..i {
        si *= s;
    }
    Ok(si * (num / d) * (-s * delta).exp())
}

/// `e^(-s*delta) * sum_{m=0}^{order} (s*delta)^m / m!  -  1`
///
/// The gap left by approximating the delay with a Taylor polynomial of the
/// given order; identically zero when `delta = 0`.
pub fn taylor_truncation(order: usize, s: Complex64, delta: f64) -> Complex64 {
    let x = s * delta;
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for m in 1..=order {
        term = term * x / (m as f64);
        sum += term;
    }
    (-x).exp() * sum - 1.0
}

/// What a perfect differentiator of output `i` would apply: `s^(i-1)`.
pub fn ideal_tf(i: usize, s: Complex64) -> Complex64 {
    assert!(i >= 1, "outputs are 1-based");
    let mut p = Complex64::new(1.0, 0.0);
    for _ in 1..i {
        p *= s;
    }
    p
}

/// Logarithmically spaced grid with exact endpoints.
pub fn log_grid(wmin: f64, wmax: f64, points: usize) -> Result<Vec<f64>> {
    if !(wmin.is_finite() && wmax.is_finite()) || wmin <= 0.0 || wmax <= wmin {
        return Err(Error::InvalidInput(format!(
            "need 0 < wmin < wmax, got [{wmin}, {wmax}]"
        )));
    }
    if points < 2 {
        return Err(Error::InvalidInput(format!(
            "grid needs at least 2 points, got {points}"
        )));
    }
    let ratio = wmax / wmin;
    let mut out = Vec::with_capacity(points);
    out.push(wmin);
    for j in 1..points - 1 {
        out.push(wmin * ratio.powf(j as f64 / (points - 1) as f64));
    }
    out.push(wmax);
    Ok(out)
}

/// Frequency response of the stage-2 outputs on a log grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BodeTable {
    /// 1-based output indices, in the order requested.
    pub outputs: Vec<usize>,
    pub omega: Vec<f64>,
    /// `response[row][col]` is `stage2_tf(outputs[col], j*omega[row])`.
    pub response: Vec<Vec<Complex64>>,
}

impl BodeTable {
    pub fn header(&self) -> String {
        let mut h = String::from("omega");
        for i in &self.outputs {
            h.push_str(&format!(",mag_{i},phase_deg_{i}"));
        }
        h
    }

    /// CSV with magnitude and phase (degrees) per output.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header())?;
        for (row, &omega) in self.omega.iter().enumerate() {
            let mut line = crate::trace::fmt_f64(omega);
            for h in &self.response[row] {
                line.push(',');
                line.push_str(&crate::trace::fmt_f64(h.norm()));
                line.push(',');
                line.push_str(&crate::trace::fmt_f64(h.arg().to_degrees()));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("write to Vec cannot fail");
        String::from_utf8(out).expect("csv output is ascii")
    }
}

/// Tabulates `stage2_tf` for the requested outputs over `[wmin, wmax]`.
pub fn bode_grid(
    k: &GainVector,
    eps: f64,
    delta: f64,
    outputs: &[usize],
    wmin: f64,
    wmax: f64,
    points: usize,
) -> Result<BodeTable> {
    if outputs.is_empty() {
        return Err(Error::InvalidInput("no outputs requested".into()));
    }
    for &i in outputs {
        if i == 0 || i > k.len() {
            return Err(Error::InvalidInput(format!(
                "output index must be in 1..={}, got {i}",
                k.len()
            )));
        }
    }
    let omega = log_grid(wmin, wmax, points)?;
    let mut response = Vec::with_capacity(omega.len());
    for &w in &omega {
        let s = Complex64::new(0.0, w);
        let mut row = Vec::with_capacity(outputs.len());
        for &i in outputs {
            row.push(stage2_tf(i, s, k, eps, delta)?);
        }
        response.push(row);
    }
    Ok(BodeTable {
        outputs: outputs.to_vec(),
        omega,
        response,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn k4() -> GainVector {
        GainVector::new(vec![4.0, 6.0, 4.0, 1.0]).unwrap()
    }

    fn jw(w: f64) -> Complex64 {
        Complex64::new(0.0, w)
    }

    #[test]
    fn dc_values() {
        let k = k4();
        assert_relative_eq!(stage1_tf(jw(0.0), &k, 0.01).unwrap().re, 1.0);
        assert_eq!(
            innovation_tf(jw(0.0), &k, 0.01).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        let h1 = stage2_tf(1, jw(0.0), &k, 0.01, 0.5).unwrap();
        assert_relative_eq!(h1.re, 1.0, max_relative = 1e-14);
        assert_eq!(h1.im, 0.0);
        // differentiating outputs vanish at DC
        assert_eq!(stage2_tf(2, jw(0.0), &k, 0.01, 0.5).unwrap().norm(), 0.0);
    }

    #[test]
    fn stage1_and_innovation_partition_unity() {
        let k = k4();
        for &w in &[1e-2, 0.1, 1.0, 10.0, 1e3, 1e6] {
            let s = jw(w);
            let total = stage1_tf(s, &k, 0.01).unwrap() + innovation_tf(s, &k, 0.01).unwrap();
            assert!((total - 1.0).norm() < 1e-12, "w = {w}: {total}");
        }
    }

    #[test]
    fn stage1_rolls_off_as_k1_over_z() {
        let k = k4();
        let eps = 0.01;
        let w = 1e6;
        let mag = stage1_tf(jw(w), &k, eps).unwrap().norm();
        assert_relative_eq!(mag, 4.0 / (eps * w), max_relative = 1e-2);
    }

    #[test]
    fn taylor_truncation_basics() {
        // delta = 0 is *exactly* zero, any order
        for order in 0..5 {
            assert_eq!(
                taylor_truncation(order, jw(3.0), 0.0),
                Complex64::new(0.0, 0.0)
            );
        }
        // order 0: e^{-s d} - 1
        let s = jw(1.0);
        let d = 0.5;
        let expect = (-s * d).exp() - 1.0;
        assert!((taylor_truncation(0, s, d) - expect).norm() < 1e-15);
        // consecutive orders differ by e^{-x} x^m / m!
        for m in 1..6usize {
            let x = s * d;
            let gap = taylor_truncation(m, s, d) - taylor_truncation(m - 1, s, d);
            let mut pow = Complex64::new(1.0, 0.0);
            let mut fact = 1.0;
            for r in 1..=m {
                pow *= x;
                fact *= r as f64;
            }
            let expect = (-x).exp() * pow / fact;
            assert!((gap - expect).norm() < 1e-14);
        }
    }

    /// The deviation from ideal differentiation splits exactly into a
    /// finite-gain head and Taylor-truncation tails:
    ///
    /// dev_i = [-(z^n + sum_{j<i} k_j z^(n-j))
    ///          + sum_{j>=i} k_j z^(n-j) trunc_{j-i}(s)] / D(z)
    #[test]
    fn deviation_partition_is_exact() {
        let k = k4();
        let n = k.len();
        let eps = 0.01;
        let delta = 0.5;
        for &w in &[1e-2, 0.3, 1.0, 7.0, 100.0, 1e3] {
            let s = jw(w);
            let z = s * eps;
            for i in 1..=n {
                let dev = stage2_tf(i, s, &k, eps, delta).unwrap() / ideal_tf(i, s) - 1.0;

                let mut head = z.powu(n as u32);
                let mut tails = Complex64::new(0.0, 0.0);
                for j in 1..=n {
                    let zp = z.powu((n - j) as u32);
                    if j < i {
                        head += k.as_slice()[j - 1] * zp;
                    } else {
                        tails += k.as_slice()[j - 1] * zp * taylor_truncation(j - i, s, delta);
                    }
                }
                let d = {
                    let mut acc = Complex64::new(1.0, 0.0);
                    for &ki in k.as_slice() {
                        acc = acc * z + ki;
                    }
                    acc
                };
                let rhs = (tails - head) / d;
                assert!(
                    (dev - rhs).norm() <= 1e-12 * (1.0 + dev.norm()),
                    "i = {i}, w = {w}: {dev} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn deviation_approaches_taylor_floor_as_eps_shrinks() {
        let k = k4();
        let delta = 0.1;
        let s = jw(1.0);
        for i in 1..=3usize {
            let floor = taylor_truncation(k.len() - i, s, delta);
            let mut prev_gap = f64::INFINITY;
            for &eps in &[1e-1, 1e-2, 1e-3, 1e-4] {
                let dev = stage2_tf(i, s, &k, eps, delta).unwrap() / ideal_tf(i, s) - 1.0;
                let gap = (dev - floor).norm();
                assert!(gap < prev_gap, "i = {i}, eps = {eps}: {gap} !< {prev_gap}");
                prev_gap = gap;
            }
            let dev = stage2_tf(i, s, &k, 1e-4, delta).unwrap() / ideal_tf(i, s) - 1.0;
            assert!(
                (dev.norm() / floor.norm() - 1.0).abs() <= 0.05,
                "i = {i}: {} vs floor {}",
                dev.norm(),
                floor.norm()
            );
        }
    }

    #[test]
    fn evaluation_at_a_pole_is_refused() {
        // (s+1)^4 scaled: z = -1 is a root, i.e. s = -1/eps
        let k = k4();
        let s = Complex64::new(-100.0, 0.0);
        match stage1_tf(s, &k, 0.01) {
            Err(Error::PoleProximity { magnitude, .. }) => assert!(magnitude < 1e-300),
            other => panic!("expected pole proximity, got {other:?}"),
        }
        assert!(stage2_tf(2, s, &k, 0.01, 0.5).is_err());
    }

    #[test]
    fn argument_validation() {
        let k = k4();
        assert!(stage2_tf(0, jw(1.0), &k, 0.01, 0.5).is_err());
        assert!(stage2_tf(5, jw(1.0), &k, 0.01, 0.5).is_err());
        assert!(stage2_tf(1, jw(1.0), &k, -0.01, 0.5).is_err());
        assert!(stage2_tf(1, jw(1.0), &k, 0.01, -0.5).is_err());
        assert!(stage2_tf(1, jw(1.0), &k, 1e-200, 0.5).is_err()); // q overflows b_m
        assert_eq!(ideal_tf(3, jw(2.0)), Complex64::new(-4.0, 0.0));
    }

    #[test]
    fn log_grid_shape() {
        let g = log_grid(0.01, 1000.0, 11).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[10], 1000.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_relative_eq!(g[5], (0.01f64 * 1000.0).sqrt(), max_relative = 1e-12);
        assert!(log_grid(0.0, 1.0, 5).is_err());
        assert!(log_grid(2.0, 1.0, 5).is_err());
        assert!(log_grid(1.0, 2.0, 1).is_err());
    }

    #[test]
    fn bode_table_layout() {
        let k = k4();
        let table = bode_grid(&k, 0.01, 0.5, &[1, 3], 0.01, 100.0, 25).unwrap();
        assert_eq!(table.header(), "omega,mag_1,phase_deg_1,mag_3,phase_deg_3");
        assert_eq!(table.omega.len(), 25);
        assert_eq!(table.response.len(), 25);
        assert_eq!(table.response[0].len(), 2);
        assert_eq!(table.to_csv_string(), table.to_csv_string());
        assert!(bode_grid(&k, 0.01, 0.5, &[9], 0.01, 100.0, 25).is_err());
        assert!(bode_grid(&k, 0.01, 0.5, &[], 0.01, 100.0, 25).is_err());
    }
}
