//! Reference solutions: exact capacity-achieving laws for `n <= 3`, stored
//! as rationals, and an independent brute-force grid capacity.

use num_rational::Ratio;

use crate::distributions::{DiscreteInput, OutputPmf};
use crate::error::{Error, Result};
use crate::kernel::{ChannelSpec, LogPmfTable};

/// Iteration cap for the grid oracle.
pub const ORACLE_MAX_ITERS: usize = 2_000_000;

/// Exact optimal input and output for a small trial count. The capacity is
/// `log(capacity_exp)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub n: usize,
    pub capacity_exp: Ratio<i64>,
    pub points: Vec<Ratio<i64>>,
    pub weights: Vec<Ratio<i64>>,
    pub outputs: Vec<Ratio<i64>>,
    pub capacity_nats: f64,
    pub input: DiscreteInput,
    pub output: OutputPmf,
}

fn to_f64(r: &Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn ratios(pairs: &[(i64, i64)]) -> Vec<Ratio<i64>> {
    pairs.iter().map(|&(a, b)| Ratio::new(a, b)).collect()
}

/// The closed-form solution for `n` in `{1, 2, 3}`.
pub fn exact_solution(n: usize) -> Result<ExactSolution> {
    let (capacity_exp, points, weights, outputs) = match n {
        1 => (Ratio::from_integer(2), ratios(&[(0, 1), (1, 1)]), ratios(&[(1, 2), (1, 2)]), ratios(&[(1, 2), (1, 2)])),
        2 => (
            Ratio::new(17, 8),
            ratios(&[(0, 1), (1, 2), (1, 1)]),
            ratios(&[(15, 34), (2, 17), (15, 34)]),
            ratios(&[(8, 17), (1, 17), (8, 17)]),
        ),
        3 => (
            Ratio::new(19, 8),
            ratios(&[(0, 1), (1, 2), (1, 1)]),
            ratios(&[(15, 38), (4, 19), (15, 38)]),
            ratios(&[(8, 19), (3, 38), (3, 38), (8, 19)]),
        ),
        _ => return Err(Error::InvalidConfig(format!("exact solutions exist only for n in 1..=3 (got {n})"))),
    };
    let input = DiscreteInput::new(points.iter().map(to_f64).collect(), weights.iter().map(to_f64).collect())?;
    let output = OutputPmf::new(outputs.iter().map(to_f64).collect())?;
    Ok(ExactSolution {
        n,
        capacity_nats: to_f64(&capacity_exp).ln(),
        capacity_exp,
        points,
        weights,
        outputs,
        input,
        output,
    })
}

/// Plain Blahut–Arimoto on the uniform grid `j/(grid_points-1)`, run until
/// the duality gap is at most `tol`; returns the lower capacity estimate.
pub fn brute_force_grid_capacity(spec: ChannelSpec, grid_points: usize, tol: f64) -> Result<f64> {
    if grid_points < 101 || grid_points.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("grid needs an odd number >= 101 of points (got {grid_points})")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive (got {tol})")));
    }
    let table = LogPmfTable::new(spec);
    let last = (grid_points - 1) as f64;
    let rows: Vec<Vec<f64>> = (0..grid_points)
        .map(|j| table.row(j as f64 / last).into_iter().map(|p| if p < f64::MIN_POSITIVE { 0.0 } else { p }).collect())
        .collect();
    // D(x_j || q) = sum_y p log p - sum_y p log q; the first sum is fixed.
    let neg_entropy: Vec<f64> =
        rows.iter().map(|row| row.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum()).collect();
    let outputs = spec.outputs();
    let mut weights = vec![1.0 / grid_points as f64; grid_points];
    let mut q = vec![0.0; outputs];
    let mut d = vec![0.0; grid_points];
    for _ in 0..ORACLE_MAX_ITERS {
        q.iter_mut().for_each(|v| *v = 0.0);
        for (w, row) in weights.iter().zip(&rows).filter(|(w, _)| **w > 0.0) {
            for (qy, p) in q.iter_mut().zip(row) {
                *qy += w * p;
            }
        }
        let log_q: Vec<f64> = q.iter().map(|v| v.ln()).collect();
        for ((dj, row), h) in d.iter_mut().zip(&rows).zip(&neg_entropy) {
            *dj = h - row.iter().zip(&log_q).map(|(p, lq)| p * lq).sum::<f64>();
        }
        let low: f64 = weights.iter().zip(&d).map(|(w, dj)| w * dj).sum();
        let high = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if high - low <= tol {
            return Ok(low);
        }
        let mut total = 0.0;
        for (w, dj) in weights.iter_mut().zip(&d) {
            *w *= (dj - high).exp();
            // Subnormal weights carry no information and are very slow.
            if *w < f64::MIN_POSITIVE {
                *w = 0.0;
            }
            total += *w;
        }
        weights.iter_mut().for_each(|w| *w /= total);
    }
    Err(Error::IterationCap(ORACLE_MAX_ITERS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{induce_output, mutual_information};
    use crate::solver::kkt_check;

    fn spec(n: usize) -> ChannelSpec {
        ChannelSpec::new(n).unwrap()
    }

    #[test]
    fn fixtures_match_closed_forms() {
        let s1 = exact_solution(1).unwrap();
        assert_eq!(s1.capacity_nats, 2f64.ln());
        assert_eq!(s1.input.points(), &[0.0, 1.0]);
        let s2 = exact_solution(2).unwrap();
        assert_eq!(s2.weights, ratios(&[(15, 34), (2, 17), (15, 34)]));
        assert!((s2.capacity_nats - (17.0f64 / 8.0).ln()).abs() < 1e-15);
        let s3 = exact_solution(3).unwrap();
        assert_eq!(s3.outputs[1], Ratio::new(3, 38));
        assert!(exact_solution(4).is_err());
        assert!(exact_solution(0).is_err());
    }

    #[test]
    fn fixture_weights_and_outputs_are_exact_laws() {
        for n in 1..=3 {
            let s = exact_solution(n).unwrap();
            let one = Ratio::from_integer(1);
            assert_eq!(s.weights.iter().sum::<Ratio<i64>>(), one);
            assert_eq!(s.outputs.iter().sum::<Ratio<i64>>(), one);
            // Output law of the endpoint/midpoint input, computed exactly.
            let two = Ratio::from_integer(2);
            for y in 0..=n {
                let mut p = Ratio::from_integer(0);
                for (x, w) in s.points.iter().zip(&s.weights) {
                    let binom = (0..y).fold(Ratio::from_integer(1), |acc, i| {
                        acc * Ratio::from_integer((n - i) as i64) / Ratio::from_integer((i + 1) as i64)
                    });
                    let term = if *x == Ratio::from_integer(0) {
                        Ratio::from_integer(i64::from(y == 0))
                    } else if *x == one {
                        Ratio::from_integer(i64::from(y == n))
                    } else {
                        assert_eq!(*x, one / two);
                        binom / Ratio::from_integer(1 << n)
                    };
                    p += w * term;
                }
                assert_eq!(p, s.outputs[y], "n={n} y={y}");
            }
            // P_Y(0) = e^-C.
            assert_eq!(s.outputs[0], one / s.capacity_exp);
        }
    }

    #[test]
    fn fixtures_are_consistent_in_floating_point() {
        for n in 1..=3 {
            let s = exact_solution(n).unwrap();
            let out = induce_output(&s.input, spec(n));
            for (a, b) in out.probs().iter().zip(s.output.probs()) {
                assert!((a - b).abs() < 1e-15);
            }
            assert!((mutual_information(&s.input, spec(n)) - s.capacity_nats).abs() < 1e-14);
        }
    }

    #[test]
    fn fixtures_pass_kkt_certification() {
        for n in 1..=3 {
            let s = exact_solution(n).unwrap();
            let summary = kkt_check(&s.input, spec(n), 10001, 1e-10).unwrap();
            assert!(summary.kkt_slack <= 1e-10, "n={n}: {}", summary.kkt_slack);
            assert!(summary.flags.all_pass(), "n={n}: {:?}", summary.flags);
        }
    }

    #[test]
    fn midpoint_weight_identities() {
        let c2 = exact_solution(2).unwrap().capacity_nats;
        assert!((2.0 * (1.0 - 2.0 * (-c2).exp()) - 2.0 / 17.0).abs() < 1e-15);
        let c3 = exact_solution(3).unwrap().capacity_nats;
        assert!((4.0 / 3.0 * (1.0 - 2.0 * (-c3).exp()) - 4.0 / 19.0).abs() < 1e-15);
    }

    #[test]
    fn grid_oracle_examples() {
        let c1 = brute_force_grid_capacity(spec(1), 101, 1e-10).unwrap();
        assert!((c1 - 2f64.ln()).abs() < 1e-9);
        let c2 = brute_force_grid_capacity(spec(2), 1001, 2e-6).unwrap();
        assert!((c2 - (17.0f64 / 8.0).ln()).abs() < 1e-5);
        assert!(c2 <= (17.0f64 / 8.0).ln());
    }

    #[test]
    fn grid_oracle_rejects_bad_grids() {
        assert!(brute_force_grid_capacity(spec(2), 100, 1e-6).is_err());
        assert!(brute_force_grid_capacity(spec(2), 51, 1e-6).is_err());
        assert!(brute_force_grid_capacity(spec(2), 101, 0.0).is_err());
    }
}
