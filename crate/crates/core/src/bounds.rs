//! Closed-form bounds: capacity lower/upper bounds, the auxiliary function
//! `g_n` behind the upper bound and its uniform bound, crest-factor identities
//! and lower bounds, the exact support-count formula and cardinality bounds.

use std::f64::consts::{LN_2, PI};
use std::io::Write;

use serde::Serialize;

use crate::distributions::log_sum_exp;
use crate::error::{Error, Result};
use crate::kernel::{one_minus_pow, ChannelSpec, LogPmfTable};
use crate::report::format_real;
use crate::solver::SolveReport;

/// Agreement required between the two crest-factor routes.
pub const CREST_CROSS_CHECK_TOL: f64 = 1e-8;

/// `max{log 2, log(pi n) - 1/2 log(2 pi e (n/8 + 1/12)) + log(1/(16 n^2)) / sqrt(pi (n + 1/4)) - log 4 - 1}`.
pub fn capacity_lower_bound(spec: ChannelSpec) -> f64 {
    let n = spec.n() as f64;
    let second = (PI * n).ln()
        - 0.5 * (2.0 * PI * std::f64::consts::E * (n / 8.0 + 1.0 / 12.0)).ln()
        - (16.0 * n * n).ln() / (PI * (n + 0.25)).sqrt()
        - 4f64.ln()
        - 1.0;
    LN_2.max(second)
}

/// `min{log(3 + floor((n-1)/2)), log(pi (n+1)) - 1/2 log n + 3/2 + 2^-(n+1) log n + 1/2 log(3/2 (1 + 1/n))}`.
pub fn capacity_upper_bound(spec: ChannelSpec) -> f64 {
    let n = spec.n();
    let cardinality = ((3 + (n - 1) / 2) as f64).ln();
    let nf = n as f64;
    let dual = (PI * (nf + 1.0)).ln() - 0.5 * nf.ln() + 1.5 + tail(n) + 0.5 * (1.5 * (1.0 + 1.0 / nf)).ln();
    cardinality.min(dual)
}

/// `2^-(n+1) log n`.
fn tail(n: usize) -> f64 {
    0.5f64.powi(n.min(2000) as i32 + 1) * (n as f64).ln()
}

/// The function maximized in the dual upper bound:
/// `((1-x)^n + x^n)/2 log(2 pi n) - (1-(1-x)^n)/2 log x - (1-x^n)/2 log(1-x) + 1/2 log(u (1-u))`
/// with `u = (n x + 1/2)/(n+1)`.
/// The log terms vanish with their coefficients at the endpoints.
pub fn g_n(spec: ChannelSpec, x: f64) -> Result<f64> {
    crate::kernel::check_unit(x)?;
    let n = spec.n();
    let nf = n as f64;
    let pow_one = x.powi(n as i32);
    let lower_tail = one_minus_pow(x, n);
    let mut value = 0.5 * (1.0 - lower_tail + pow_one) * (2.0 * PI * nf).ln();
    if x > 0.0 {
        value -= 0.5 * lower_tail * x.ln();
    }
    if x < 1.0 {
        value -= 0.5 * (1.0 - pow_one) * (-x).ln_1p();
    }
    let u = (nf * x + 0.5) / (nf + 1.0);
    value += 0.5 * (u * (1.0 - u)).ln();
    Ok(value)
}

/// `1/2 log(2 pi) + 1/2 + 2^-(n+1) log n + 1/2 log(3/2 (1 + 1/n))`.
pub fn g_n_uniform_bound(spec: ChannelSpec) -> f64 {
    let nf = spec.n() as f64;
    0.5 * (2.0 * PI).ln() + 0.5 + tail(spec.n()) + 0.5 * (1.5 * (1.0 + 1.0 / nf)).ln()
}

/// The two routes to the crest factor of an atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrestFactorParts {
    /// `-C - log P_X(x)`.
    pub identity: f64,
    /// `-sum_y P(y|x) log P_{X|Y}(x|y)`.
    pub direct: f64,
}

/// Both crest-factor routes for the atom `x_star` of the report's input.
pub fn crest_factor_parts(report: &SolveReport, x_star: f64) -> Result<CrestFactorParts> {
    let k = report.input.atom_index(x_star).ok_or(Error::NotAnAtom(x_star))?;
    let log_w = report.input.weights()[k].ln();
    let x = report.input.points()[k];
    let table = LogPmfTable::new(ChannelSpec::new(report.n)?);
    let log_out = report.output.log_probs();
    let direct = table
        .log_row(x)
        .iter()
        .zip(log_out)
        .filter(|(lp, _)| lp.is_finite())
        .map(|(&lp, &lq)| -lp.exp() * (log_w + lp - lq))
        .sum();
    Ok(CrestFactorParts { identity: -report.capacity_nats - log_w, direct })
}

/// Crest factor of the atom `x_star`: the expected log-posterior deficit
/// `-sum_y P(y|x) log P_{X|Y}(x|y)`. The identity route is cross-checked
/// against it.
pub fn crest_factor(report: &SolveReport, x_star: f64) -> Result<f64> {
    let parts = crest_factor_parts(report, x_star)?;
    if (parts.identity - parts.direct).abs() > CREST_CROSS_CHECK_TOL {
        return Err(Error::CrestFactorMismatch { identity: parts.identity, direct: parts.direct });
    }
    Ok(parts.direct)
}

fn check_interior(x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::NotInterior(x))
    }
}

/// Crest-factor lower bound for interior atoms:
/// `((1-x)^n log (1-x)^n + x^n log x^n) / ((1-x)^n + x^n - 1)`.
/// The denominator vanishes identically for `n = 1`, which is rejected.
pub fn crest_factor_lb1(spec: ChannelSpec, x: f64) -> Result<f64> {
    check_interior(x)?;
    let n = spec.n();
    if n < 2 {
        return Err(Error::InvalidConfig("the first crest-factor bound needs n >= 2".into()));
    }
    let nf = n as f64;
    let log_a = nf * (-x).ln_1p();
    let log_b = nf * x.ln();
    let (a, b) = (log_a.exp(), log_b.exp());
    let numerator = a * log_a + b * log_b;
    let denominator = b - one_minus_pow(x, n);
    Ok(numerator / denominator)
}

/// Crest-factor lower bound for atoms other than `1/2`:
/// `log(1 + (x/(1-x))^(n(1-2x)))`.
pub fn crest_factor_lb2(spec: ChannelSpec, x: f64) -> Result<f64> {
    check_interior(x)?;
    if x == 0.5 {
        return Err(Error::ExcludedPoint(x));
    }
    let t = spec.n() as f64 * (1.0 - 2.0 * x) * (x.ln() - (-x).ln_1p());
    Ok(if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() })
}

/// Support size recovered from the capacity and the crest factors:
/// `e^C / mean_k e^(-D(x_k))`.
pub fn support_count_identity(report: &SolveReport) -> Result<f64> {
    let mut logs = Vec::with_capacity(report.input.len());
    for &x in report.input.points() {
        logs.push(-crest_factor(report, x)?);
    }
    let log_mean = log_sum_exp(logs.iter().copied()) - (logs.len() as f64).ln();
    Ok((report.capacity_nats - log_mean).exp())
}

/// `(e^C, 2 + floor(n/2))`: the support size lies between the ceiling of the
/// first and the second.
pub fn cardinality_bounds(spec: ChannelSpec, capacity_nats: f64) -> (f64, usize) {
    (capacity_nats.exp(), 2 + spec.n() / 2)
}

/// Closed-form bounds for one trial count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub n: usize,
    pub cap_lower: f64,
    pub cap_upper: f64,
    /// `e^C` for a solved capacity, otherwise `e^cap_lower`.
    pub card_lower: f64,
    pub card_upper: usize,
    /// The generic `n + 1` support bound.
    pub witsenhausen: usize,
}

impl BoundsReport {
    pub fn new(spec: ChannelSpec, capacity_nats: Option<f64>) -> Self {
        let cap_lower = capacity_lower_bound(spec);
        let (card_lower, card_upper) = cardinality_bounds(spec, capacity_nats.unwrap_or(cap_lower));
        Self {
            n: spec.n(),
            cap_lower,
            cap_upper: capacity_upper_bound(spec),
            card_lower,
            card_upper,
            witsenhausen: spec.n() + 1,
        }
    }
}

/// One row of the bounds-versus-solution sweep. Solver columns are empty
/// when the capacity was not computed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub bounds: BoundsReport,
    pub capacity: Option<f64>,
    pub support_size: Option<usize>,
    pub kkt_slack: Option<f64>,
}

impl SweepRow {
    pub fn new(spec: ChannelSpec, report: Option<&SolveReport>) -> Self {
        Self {
            bounds: BoundsReport::new(spec, report.map(|r| r.capacity_nats)),
            capacity: report.map(|r| r.capacity_nats),
            support_size: report.map(|r| r.support_size),
            kkt_slack: report.map(|r| r.kkt_slack),
        }
    }
}

fn optional_real(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

/// Writes sweep rows as CSV with a header. `scale` multiplies every capacity
/// column (1 for nats, `1/ln 2` for bits).
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], scale: f64, writer: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "n",
        "cap_lower",
        "capacity",
        "cap_upper",
        "card_lower",
        "support_size",
        "card_upper",
        "kkt_slack",
    ])?;
    for row in rows {
        let b = &row.bounds;
        out.write_record([
            b.n.to_string(),
            format_real(b.cap_lower * scale),
            optional_real(row.capacity.map(|c| c * scale)),
            format_real(b.cap_upper * scale),
            format_real(b.card_lower),
            row.support_size.map(|s| s.to_string()).unwrap_or_default(),
            b.card_upper.to_string(),
            optional_real(row.kkt_slack.map(|s| s * scale)),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Both crest-factor lower bounds on an interior grid; `lb2` is absent at `1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrestCurves {
    pub x: Vec<f64>,
    pub lb1: Vec<Option<f64>>,
    pub lb2: Vec<Option<f64>>,
}

impl CrestCurves {
    /// `points` evenly spaced interior abscissae `j/(points+1)`.
    pub fn new(spec: ChannelSpec, points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::InvalidConfig("crest curves need at least one point".into()));
        }
        let x: Vec<f64> = (1..=points).map(|j| j as f64 / (points + 1) as f64).collect();
        let lb1 = x.iter().map(|&v| crest_factor_lb1(spec, v).ok()).collect();
        let lb2 = x.iter().map(|&v| crest_factor_lb2(spec, v).ok()).collect();
        Ok(Self { x, lb1, lb2 })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["x", "lb1", "lb2"])?;
        for ((&x, &lb1), &lb2) in self.x.iter().zip(&self.lb1).zip(&self.lb2) {
            out.write_record([format_real(x), optional_real(lb1), optional_real(lb2)])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_capacity, SolverConfig};
    use proptest::prelude::*;

    fn spec(n: usize) -> ChannelSpec {
        ChannelSpec::new(n).unwrap()
    }

    fn solved(n: usize) -> SolveReport {
        solve_capacity(spec(n), &SolverConfig::default()).unwrap()
    }

    #[test]
    fn capacity_bound_examples() {
        assert!((capacity_lower_bound(spec(1)) - LN_2).abs() < 1e-15);
        assert!(capacity_lower_bound(spec(3)) <= (19.0f64 / 8.0).ln());
        let half_log = 0.5 * 1000f64.ln();
        assert!((capacity_lower_bound(spec(1000)) - half_log).abs() <= 3.0);
        assert!((capacity_upper_bound(spec(1)) - 3f64.ln()).abs() < 1e-15);
        assert!(capacity_upper_bound(spec(2)) >= (17.0f64 / 8.0).ln());
        assert!((capacity_upper_bound(spec(1000)) - half_log).abs() <= 4.0);
    }

    #[test]
    fn lower_bound_second_branch_at_one_trial() {
        let second = PI.ln()
            - 0.5 * (2.0 * PI * std::f64::consts::E * (1.0 / 8.0 + 1.0 / 12.0)).ln()
            - 16f64.ln() / (1.25 * PI).sqrt()
            - 4f64.ln()
            - 1.0;
        assert!((second - -3.275).abs() < 1e-3, "{second}");
    }

    #[test]
    fn uniform_bound_examples() {
        let expected = 0.5 * (2.0 * PI).ln() + 0.5 + 0.5 * 3f64.ln();
        assert!((g_n_uniform_bound(spec(1)) - expected).abs() < 1e-15);
        assert!((g_n_uniform_bound(spec(1)) - 1.968).abs() < 1e-3);
        let limit = 0.5 * (2.0 * PI).ln() + 0.5 + 0.5 * 1.5f64.ln();
        assert!((g_n_uniform_bound(spec(4000)) - limit).abs() < 1e-3);
    }

    #[test]
    fn g_n_examples() {
        let bound = g_n_uniform_bound(spec(10));
        let mid = g_n(spec(10), 0.5).unwrap();
        assert!(mid.is_finite() && mid <= bound);
        assert!(g_n(spec(5), 0.001).unwrap() <= g_n_uniform_bound(spec(5)));
        assert!(g_n(spec(5), 0.0).unwrap().is_finite());
        assert!(g_n(spec(5), 1.5).is_err());
    }

    #[test]
    fn g_n_grid_max_below_uniform_bound() {
        for n in 1..=50 {
            let s = spec(n);
            let max = (0..=10000).map(|j| g_n(s, j as f64 / 10000.0).unwrap()).fold(f64::MIN, f64::max);
            assert!(max <= g_n_uniform_bound(s), "n={n}: {max}");
        }
    }

    #[test]
    fn crest_factor_at_two_trials() {
        let report = solved(2);
        assert!((crest_factor(&report, 0.5).unwrap() - 4f64.ln()).abs() < 1e-8);
        assert!((crest_factor(&report, 0.0).unwrap() - (16.0f64 / 15.0).ln()).abs() < 1e-8);
        assert!((crest_factor_lb1(spec(2), 0.5).unwrap() - 4f64.ln()).abs() < 1e-14);
        assert!(matches!(crest_factor(&report, 0.3), Err(Error::NotAnAtom(_))));
    }

    #[test]
    fn crest_factor_at_one_trial_is_zero() {
        let report = solved(1);
        assert!(crest_factor(&report, 0.0).unwrap().abs() < 1e-12);
        assert!((support_count_identity(&report).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn support_count_identity_matches_support() {
        assert!((support_count_identity(&solved(2)).unwrap() - 3.0).abs() < 1e-9);
        let report = solved(12);
        let count = support_count_identity(&report).unwrap();
        assert!((count - report.support_size as f64).abs() <= 1e-6 * report.support_size as f64);
    }

    #[test]
    fn crest_bounds_dominated_on_solved_atoms() {
        for n in [3, 5, 10] {
            let report = solved(n);
            for &x in report.input.points() {
                let actual = crest_factor(&report, x).unwrap();
                if x > 0.0 && x < 1.0 {
                    assert!(crest_factor_lb1(spec(n), x).unwrap() <= actual + 1e-8, "n={n} x={x}");
                }
                if x != 0.5 && x > 0.0 && x < 1.0 {
                    assert!(crest_factor_lb2(spec(n), x).unwrap() <= actual + 1e-8, "n={n} x={x}");
                }
            }
        }
    }

    #[test]
    fn crest_lb2_examples() {
        let expected = (1.0f64 / 9.0).powi(8).ln_1p();
        let value = crest_factor_lb2(spec(10), 0.1).unwrap();
        assert!((value - expected).abs() < 1e-20);
        assert!((value - 2.32e-8).abs() < 1e-10);
        assert!((crest_factor_lb2(spec(7), 0.5 + 1e-9).unwrap() - LN_2).abs() < 1e-7);
        assert!(crest_factor_lb2(spec(2), 0.25).unwrap() >= 0.0);
        assert!(matches!(crest_factor_lb2(spec(2), 0.5), Err(Error::ExcludedPoint(_))));
        assert!(crest_factor_lb2(spec(2), 0.0).is_err());
    }

    #[test]
    fn crest_lb1_examples() {
        let value = crest_factor_lb1(spec(10), 0.1).unwrap();
        assert!(value.is_finite() && value >= 0.0);
        assert!(crest_factor_lb1(spec(3), 0.5).unwrap() <= crest_factor(&solved(3), 0.5).unwrap() + 1e-8);
        assert!(crest_factor_lb1(spec(3), 1.0).is_err());
        assert!(crest_factor_lb1(spec(1), 0.3).is_err());
    }

    #[test]
    fn cardinality_examples() {
        let (lower, upper) = cardinality_bounds(spec(2), (17.0f64 / 8.0).ln());
        assert!((lower - 2.125).abs() < 1e-14);
        assert_eq!(upper, 3);
        let (lower, upper) = cardinality_bounds(spec(1), LN_2);
        assert!((lower - 2.0).abs() < 1e-14);
        assert_eq!(upper, 2);
        assert_eq!(cardinality_bounds(spec(100), 2.0).1, 52);
    }

    #[test]
    fn bounds_report_invariants() {
        for n in 1..=300 {
            let r = BoundsReport::new(spec(n), None);
            assert!(r.cap_lower <= r.cap_upper, "n={n}");
            if n >= 2 {
                assert!(r.card_upper <= r.witsenhausen);
            }
        }
    }

    #[test]
    fn sweep_csv_has_header_and_blank_solver_columns() {
        let rows = vec![SweepRow::new(spec(2), Some(&solved(2))), SweepRow::new(spec(3), None)];
        let mut buf = Vec::new();
        write_sweep_csv(&rows, 1.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,cap_lower,capacity,cap_upper,card_lower,support_size,card_upper,kkt_slack");
        assert!(lines[1].starts_with("2,"));
        assert!(lines[1].split(',').nth(5) == Some("3"));
        assert!(lines[2].split(',').nth(2) == Some(""));
    }

    #[test]
    fn crest_curves_skip_lb2_at_half() {
        let curves = CrestCurves::new(spec(10), 99).unwrap();
        assert_eq!(curves.x[49], 0.5);
        assert!(curves.lb2[49].is_none());
        let mut buf = Vec::new();
        curves.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,lb1,lb2\n"));
    }

    proptest! {
        #[test]
        fn g_n_is_mirror_symmetric(n in 1usize..200, x in 0.0f64..=1.0) {
            let s = spec(n);
            let a = g_n(s, x).unwrap();
            let b = g_n(s, 1.0 - x).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn crest_lower_bounds_nonnegative(n in 1usize..200, x in 1e-6f64..(1.0 - 1e-6)) {
            if n >= 2 {
                prop_assert!(crest_factor_lb1(spec(n), x).unwrap() >= 0.0);
            }
            if x != 0.5 {
                prop_assert!(crest_factor_lb2(spec(n), x).unwrap() >= 0.0);
            }
        }
    }
}
