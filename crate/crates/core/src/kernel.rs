//! Binomial channel law `P(y|x) = C(n,y) x^y (1-x)^(n-y)` evaluated in the log
//! domain, plus binary and binomial entropies and the closed-form entropy
//! bounds used by the capacity lower/upper bounds.
//!
//! All logarithms are natural; entropies are in nats. `0 * log 0` is taken to
//! be `0` everywhere, so endpoint inputs give finite entropies and exact
//! degenerate rows.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// The binomial channel with `n` trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChannelSpec {
    n: usize,
}

impl ChannelSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTrials(0));
        }
        Ok(Self { n })
    }

    /// Number of trials.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Size of the output alphabet, `n + 1`.
    pub fn outputs(&self) -> usize {
        self.n + 1
    }

    /// The channel with one fewer trial, if `n >= 2`.
    pub fn reduced(&self) -> Option<ChannelSpec> {
        (self.n >= 2).then(|| ChannelSpec { n: self.n - 1 })
    }
}

pub(crate) fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::InputOutOfRange(x))
    }
}

/// `log C(n, k)` via log-gamma.
pub fn log_binomial_coefficient(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// Log binomial coefficients for every output of a channel, reused across
/// many rows.
#[derive(Debug, Clone)]
pub struct LogPmfTable {
    n: usize,
    log_coef: Vec<f64>,
}

impl LogPmfTable {
    pub fn new(spec: ChannelSpec) -> Self {
        let n = spec.n();
        let log_coef = (0..=n).map(|y| log_binomial_coefficient(n, y)).collect();
        Self { n, log_coef }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `log P(y|x)` for `x` already known to be in `[0, 1]`.
    #[inline]
    pub fn log_pmf(&self, y: usize, x: f64) -> f64 {
        let n = self.n;
        if x <= 0.0 {
            return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        if x >= 1.0 {
            return if y == n { 0.0 } else { f64::NEG_INFINITY };
        }
        let (lx, l1x) = (x.ln(), (-x).ln_1p());
        self.log_coef[y] + y as f64 * lx + (n - y) as f64 * l1x
    }

    /// Fills `out` (length `n + 1`) with `log P(.|x)`.
    pub fn log_row_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n + 1);
        let n = self.n;
        if x <= 0.0 || x >= 1.0 {
            let hot = if x <= 0.0 { 0 } else { n };
            for (y, v) in out.iter_mut().enumerate() {
                *v = if y == hot { 0.0 } else { f64::NEG_INFINITY };
            }
            return;
        }
        let (lx, l1x) = (x.ln(), (-x).ln_1p());
        for (y, v) in out.iter_mut().enumerate() {
            *v = self.log_coef[y] + y as f64 * lx + (n - y) as f64 * l1x;
        }
    }

    pub fn log_row(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n + 1];
        self.log_row_into(x, &mut out);
        out
    }

    pub fn row(&self, x: f64) -> Vec<f64> {
        let mut out = self.log_row(x);
        out.iter_mut().for_each(|v| *v = v.exp());
        out
    }
}

/// `log P(y|x)`; `-inf` where the probability is exactly zero.
pub fn log_pmf(spec: ChannelSpec, y: usize, x: f64) -> Result<f64> {
    let n = spec.n();
    if y > n {
        return Err(Error::OutputOutOfRange { y: y as u64, n: n as u64 });
    }
    check_unit(x)?;
    if x == 0.0 {
        return Ok(if y == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if x == 1.0 {
        return Ok(if y == n { 0.0 } else { f64::NEG_INFINITY });
    }
    Ok(log_binomial_coefficient(n, y) + y as f64 * x.ln() + (n - y) as f64 * (-x).ln_1p())
}

/// The full output row `P(.|x)` of length `n + 1`.
pub fn pmf_row(spec: ChannelSpec, x: f64) -> Result<Vec<f64>> {
    check_unit(x)?;
    Ok(LogPmfTable::new(spec).row(x))
}

/// Binary entropy in nats.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_unit(x)?;
    Ok(-xlogx(x) - xlogx(1.0 - x))
}

/// `x log x` with the `0 log 0 = 0` convention.
pub(crate) fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Exact entropy of `Binomial(n, x)`, summed over the non-zero entries.
pub fn binomial_entropy_exact(spec: ChannelSpec, x: f64) -> Result<f64> {
    check_unit(x)?;
    let table = LogPmfTable::new(spec);
    let h = table.log_row(x).into_iter().filter(|lp| lp.is_finite()).map(|lp| -lp.exp() * lp).sum();
    Ok(h)
}

/// Gaussian-maximum-entropy upper bound `1/2 log(2 pi e (n x(1-x) + 1/12))`.
pub fn binomial_entropy_upper(spec: ChannelSpec, x: f64) -> Result<f64> {
    check_unit(x)?;
    let n = spec.n() as f64;
    Ok(0.5 * (2.0 * PI * std::f64::consts::E * (n * x * (1.0 - x) + 1.0 / 12.0)).ln())
}

/// Lower bound
/// `(1-(1-x)^n-x^n)/2 log(2 pi n) + (1-(1-x)^n)/2 log x + (1-x^n)/2 log(1-x) - 1`,
/// evaluated as written (no sharpening). At the endpoints the vanishing
/// coefficients kill the log terms and the value is `-1`.
pub fn binomial_entropy_lower(spec: ChannelSpec, x: f64) -> Result<f64> {
    check_unit(x)?;
    let n = spec.n();
    let a = one_minus_pow(x, n); // 1 - (1-x)^n
    let b = 1.0 - x.powi(n as i32); // 1 - x^n
    let c = a - x.powi(n as i32);
    let mut value = c * 0.5 * (2.0 * PI * n as f64).ln() - 1.0;
    if x > 0.0 {
        value += 0.5 * a * x.ln();
    }
    if x < 1.0 {
        value += 0.5 * b * (-x).ln_1p();
    }
    Ok(value)
}

/// `1 - (1-x)^n` without cancellation for small `x`.
pub(crate) fn one_minus_pow(x: f64, n: usize) -> f64 {
    if x >= 1.0 {
        return 1.0;
    }
    -(n as f64 * (-x).ln_1p()).exp_m1()
}
