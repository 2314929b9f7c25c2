//! Derivatives of the information density `x -> i(x; P_Y)`, the binomial
//! Bregman divergence, sign-change counting and the cardinality estimate
//! that follows from the zeros of `i''`.
//!
//! Every conditional-mean ratio needed here is a ratio of input moments
//! `m_n(y) = E[X^y (1-X)^(n-y)]`:
//!
//! * `E_n[1-X | y+1] / E_n[X | y] = m_n(y) / m_n(y+1)`, and the same ratio
//!   arises from the `(n-1)`-trial posteriors `E_(n-1)[1-X | y] / E_(n-1)[X | y]`;
//! * the `G(x)` log term `E[X|y] E[1-X|y+2] / (E[1-X|y+1] E[X|y+1])` equals
//!   `m_n(y+1)^2 / (m_n(y) m_n(y+2))`.
//!
//! Both are evaluated from `log m_n`, so no posterior is ever formed as `0/0`.

use std::io::Write;

use rayon::prelude::*;

use crate::distributions::{induce_output_with, info_density_logs, log_moment, DiscreteInput};
use crate::error::{Error, Result};
use crate::kernel::{ChannelSpec, LogPmfTable};
use crate::report::format_real;

/// `l_b(x, xhat) = x log(x(1-xhat) / ((1-x) xhat)) - (x - xhat)/(1 - xhat)`.
pub fn bregman_binomial(x: f64, xhat: f64) -> Result<f64> {
    for v in [x, xhat] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::NotInterior(v));
        }
    }
    if x == xhat {
        return Ok(0.0);
    }
    let log_ratio = x.ln() + (-xhat).ln_1p() - (-x).ln_1p() - xhat.ln();
    Ok(x * log_ratio - (x - xhat) / (1.0 - xhat))
}

/// Log input moments `log m_n(y)` for `y = 0..=n`.
#[derive(Debug, Clone)]
struct LogMoments {
    values: Vec<f64>,
}

impl LogMoments {
    fn new(dist: &DiscreteInput, n: usize) -> Self {
        Self { values: (0..=n).map(|y| log_moment(dist, y, n - y)).collect() }
    }

    /// `log(m(y) / m(y+1))`; errors if either moment vanishes.
    fn step(&self, y: usize) -> Result<f64> {
        let (a, b) = (self.values[y], self.values[y + 1]);
        if a == f64::NEG_INFINITY {
            return Err(Error::UndefinedPosterior { y: y as u64 });
        }
        if b == f64::NEG_INFINITY {
            return Err(Error::UndefinedPosterior { y: (y + 1) as u64 });
        }
        Ok(a - b)
    }
}

/// Precomputed state for evaluating `i`, `i'` and `i''` of one input law at
/// many points.
#[derive(Debug, Clone)]
pub struct DensityEvaluator {
    spec: ChannelSpec,
    table: LogPmfTable,
    reduced: Option<LogPmfTable>,
    log_out: Vec<f64>,
    /// `log(m_n(y) / m_n(y+1))` for `y = 0..n`, or the first undefined index.
    steps: std::result::Result<Vec<f64>, Error>,
}

impl DensityEvaluator {
    pub fn new(dist: &DiscreteInput, spec: ChannelSpec) -> Self {
        let table = LogPmfTable::new(spec);
        let out = induce_output_with(dist, &table);
        let moments = LogMoments::new(dist, spec.n());
        let steps = (0..spec.n()).map(|y| moments.step(y)).collect();
        Self { spec, reduced: spec.reduced().map(LogPmfTable::new), table, log_out: out.log_probs().to_vec(), steps }
    }

    pub fn spec(&self) -> ChannelSpec {
        self.spec
    }

    /// `i(x; P_Y)`.
    pub fn value(&self, x: f64) -> f64 {
        info_density_logs(&self.table.log_row(x), &self.log_out)
    }

    fn steps(&self) -> Result<&[f64]> {
        self.steps.as_deref().map_err(Clone::clone)
    }

    /// `i'(x)`. For `n >= 2` this is
    /// `n log(x/(1-x)) + n E_(n-1)[log(E[1-X|Y] / E[X|Y]) | X=x]`;
    /// for `n = 1` it is `log(x/(1-x)) + log(m_1(0)/m_1(1))`.
    pub fn first(&self, x: f64) -> Result<f64> {
        check_interior(x)?;
        let n = self.spec.n();
        let steps = self.steps()?;
        let logit = x.ln() - (-x).ln_1p();
        let Some(reduced) = &self.reduced else {
            return Ok(logit + steps[0]);
        };
        let mut acc = 0.0;
        for (y, lp) in reduced.log_row(x).into_iter().enumerate() {
            let p = lp.exp();
            if p > 0.0 {
                acc += p * steps[y];
            }
        }
        Ok(n as f64 * (logit + acc))
    }

    /// `G(x) = E_n[(n-Y)(n-Y-1) log(E[X|Y] E[1-X|Y+2] / (E[1-X|Y+1] E[X|Y+1])) | X=x]`,
    /// summed over `y <= n-2`; identically zero for `n = 1`.
    pub fn g_functional(&self, x: f64) -> Result<f64> {
        check_interior(x)?;
        let n = self.spec.n();
        if n < 2 {
            return Ok(0.0);
        }
        let steps = self.steps()?;
        let mut acc = 0.0;
        for y in 0..=n - 2 {
            let p = self.table.log_pmf(y, x).exp();
            if p > 0.0 {
                let log_term = steps[y + 1] - steps[y];
                acc += p * ((n - y) * (n - y - 1)) as f64 * log_term;
            }
        }
        Ok(acc)
    }

    /// `i''(x) = n/(x(1-x)) + G(x)/(1-x)^2`.
    pub fn second(&self, x: f64) -> Result<f64> {
        let g = self.g_functional(x)?;
        let n = self.spec.n() as f64;
        Ok(n / (x * (1.0 - x)) + g / ((1.0 - x) * (1.0 - x)))
    }
}

fn check_interior(x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::NotInterior(x))
    }
}

/// `i'(x; P_Y)` for the output induced by `dist`.
pub fn info_density_prime(x: f64, dist: &DiscreteInput, spec: ChannelSpec) -> Result<f64> {
    check_interior(x)?;
    DensityEvaluator::new(dist, spec).first(x)
}

/// `i''(x; P_Y)` for the output induced by `dist`.
pub fn info_density_second(x: f64, dist: &DiscreteInput, spec: ChannelSpec) -> Result<f64> {
    check_interior(x)?;
    DensityEvaluator::new(dist, spec).second(x)
}

/// Number of strict sign alternations, ignoring exact zeros.
pub fn count_sign_changes(values: &[f64]) -> usize {
    let mut last = 0.0f64;
    let mut changes = 0;
    for &v in values {
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            changes += 1;
        }
        last = v;
    }
    changes
}

/// `2 + floor(k/2)`, where `k` counts the sign changes of `i''` on
/// `grid_size` evenly spaced interior points. Errors if the estimate exceeds
/// `2 + floor(n/2)`.
pub fn cardinality_upper_via_second_derivative(
    dist: &DiscreteInput,
    spec: ChannelSpec,
    grid_size: usize,
) -> Result<usize> {
    if grid_size < 1000 {
        return Err(Error::InvalidConfig(format!("grid_size {grid_size} < 1000")));
    }
    let eval = DensityEvaluator::new(dist, spec);
    let values = (1..=grid_size)
        .into_par_iter()
        .map(|j| eval.second(j as f64 / (grid_size + 1) as f64))
        .collect::<Result<Vec<_>>>()?;
    let estimate = 2 + count_sign_changes(&values) / 2;
    let bound = 2 + spec.n() / 2;
    if estimate > bound {
        return Err(Error::CardinalityBound { estimate, bound });
    }
    Ok(estimate)
}

/// `i`, `i'` and `i''` sampled on a uniform grid over `[0, 1]`. Derivatives
/// are `None` at the endpoints and wherever a posterior is undefined.
#[derive(Debug, Clone)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub d1: Vec<Option<f64>>,
    pub d2: Vec<Option<f64>>,
}

impl DensityCurve {
    pub fn new(dist: &DiscreteInput, spec: ChannelSpec, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidConfig("a curve needs at least 2 points".into()));
        }
        let eval = DensityEvaluator::new(dist, spec);
        let last = (points - 1) as f64;
        let rows: Vec<(f64, f64, Option<f64>, Option<f64>)> = (0..points)
            .into_par_iter()
            .map(|j| {
                let x = if j + 1 == points { 1.0 } else { j as f64 / last };
                (x, eval.value(x), eval.first(x).ok(), eval.second(x).ok())
            })
            .collect();
        let mut curve = Self { grid: vec![], values: vec![], d1: vec![], d2: vec![] };
        for (x, v, a, b) in rows {
            curve.grid.push(x);
            curve.values.push(v);
            curve.d1.push(a);
            curve.d2.push(b);
        }
        Ok(curve)
    }

    /// CSV with header `x,i,d1,d2`; undefined cells are left empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "i", "d1", "d2"])?;
        let opt = |v: Option<f64>| v.map(format_real).unwrap_or_default();
        for k in 0..self.grid.len() {
            w.write_record([format_real(self.grid[k]), format_real(self.values[k]), opt(self.d1[k]), opt(self.d2[k])])?;
        }
        w.flush()?;
        Ok(())
    }
}
