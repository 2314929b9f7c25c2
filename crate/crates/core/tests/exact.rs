//! Cross-checks of floating-point routines against exact rational arithmetic.

use bincap::distributions::{channel_matrix_logdet, induce_output, mutual_information};
use bincap::kernel::binomial_entropy_exact;
use bincap::oracles::exact_solution;
use bincap::ChannelSpec;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

fn spec(n: usize) -> ChannelSpec {
    ChannelSpec::new(n).unwrap()
}

fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn binomial(n: usize, k: usize) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i) / BigInt::from(i + 1))
}

/// `P(y | x)` for rational `x`, exactly.
fn pmf(n: usize, y: usize, x: &BigRational) -> BigRational {
    let one = BigRational::one();
    let mut p = BigRational::from_integer(binomial(n, y));
    for _ in 0..y {
        p *= x;
    }
    for _ in y..n {
        p *= &one - x;
    }
    p
}

/// Determinant by fraction-exact Gaussian elimination.
fn determinant(mut m: Vec<Vec<BigRational>>) -> BigRational {
    let size = m.len();
    let mut det = BigRational::one();
    for col in 0..size {
        let Some(pivot) = (col..size).find(|&r| !m[r][col].is_zero()) else {
            return BigRational::zero();
        };
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= &m[col][col];
        for r in col + 1..size {
            let factor = &m[r][col] / &m[col][col];
            for c in col..size {
                let delta = &factor * &m[col][c];
                m[r][c] -= delta;
            }
        }
    }
    det
}

#[test]
fn equispaced_determinant_matches_exact_value() {
    for n in [2usize, 4, 6] {
        let points: Vec<BigRational> = (0..=n).map(|k| rational(k as i64, n as i64)).collect();
        let matrix: Vec<Vec<BigRational>> = (0..=n).map(|i| points.iter().map(|x| pmf(n, i, x)).collect()).collect();
        let exact = determinant(matrix);
        assert!(!exact.is_zero());
        let support: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let (sign, log_abs) = channel_matrix_logdet(spec(n), &support).unwrap();
        assert_eq!(sign, if exact.is_positive() { 1 } else { -1 }, "n={n}");
        let exact_log = exact.abs().to_f64().unwrap().ln();
        assert!((log_abs - exact_log).abs() <= 1e-10 * exact_log.abs().max(1.0), "n={n}: {log_abs} vs {exact_log}");
    }
}

#[test]
fn n2_midpoint_determinant_is_one_half() {
    let points = [rational(0, 1), rational(1, 2), rational(1, 1)];
    let matrix: Vec<Vec<BigRational>> = (0..=2).map(|i| points.iter().map(|x| pmf(2, i, x)).collect()).collect();
    assert_eq!(determinant(matrix), rational(1, 2));
}

#[test]
fn entropy_matches_exact_probabilities() {
    for (num, den) in [(1i64, 2i64), (1, 3), (2, 7), (9, 10), (1, 1000)] {
        let x = rational(num, den);
        let xf = num as f64 / den as f64;
        for n in [1usize, 2, 5, 17, 40, 80] {
            let reference: f64 =
                (0..=n).map(|y| pmf(n, y, &x).to_f64().unwrap()).filter(|p| *p > 0.0).map(|p| -p * p.ln()).sum();
            let value = binomial_entropy_exact(spec(n), xf).unwrap();
            assert!((value - reference).abs() <= 1e-12 * reference.max(1.0), "x={xf} n={n}: {value} vs {reference}");
        }
    }
}

#[test]
fn exact_laws_reproduce_output_and_information() {
    for n in 1..=3 {
        let s = exact_solution(n).unwrap();
        let points: Vec<BigRational> = s.points.iter().map(|r| rational(*r.numer(), *r.denom())).collect();
        let weights: Vec<BigRational> = s.weights.iter().map(|r| rational(*r.numer(), *r.denom())).collect();
        let out = induce_output(&s.input, spec(n));
        for y in 0..=n {
            let exact: BigRational = points.iter().zip(&weights).map(|(x, w)| w * pmf(n, y, x)).sum();
            assert!((out.probs()[y] - exact.to_f64().unwrap()).abs() <= 1e-15, "n={n} y={y}");
        }
        let info = mutual_information(&s.input, spec(n));
        assert!((info - s.capacity_nats).abs() <= 1e-14, "n={n}");
    }
}
