//! Finite input laws on `[0, 1]`, the output laws they induce, and the
//! information quantities built from them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_unit, ChannelSpec, LogPmfTable};

/// Minimum separation between two atoms.
pub const MIN_ATOM_GAP: f64 = 1e-12;

/// Tolerance on `sum(weights) == 1` and `sum(probs) == 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A discrete input law: strictly increasing atoms in `[0, 1]` with positive
/// weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInput")]
pub struct DiscreteInput {
    points: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawInput {
    #[serde(alias = "support")]
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<RawInput> for DiscreteInput {
    type Error = Error;

    fn try_from(raw: RawInput) -> Result<Self> {
        DiscreteInput::new(raw.points, raw.weights)
    }
}

impl DiscreteInput {
    /// Validates and wraps the given atoms. Nothing is renormalized, sorted or
    /// merged.
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch { left: points.len(), right: weights.len() });
        }
        if points.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        for &x in &points {
            if !x.is_finite() || !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidDistribution(format!("atom {x} outside [0, 1]")));
            }
        }
        for pair in points.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::InvalidDistribution(format!(
                    "atoms must be strictly increasing ({} then {})",
                    pair[0], pair[1]
                )));
            }
            if pair[1] - pair[0] < MIN_ATOM_GAP {
                return Err(Error::InvalidDistribution(format!(
                    "atoms {} and {} closer than {MIN_ATOM_GAP:e}",
                    pair[0], pair[1]
                )));
            }
        }
        for &w in &weights {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidDistribution(format!("weight {w} is not positive")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { points, weights })
    }

    /// Sorts, drops non-positive weights, merges exact duplicates and
    /// renormalizes before validating.
    pub fn from_unnormalized(points: &[f64], weights: &[f64]) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch { left: points.len(), right: weights.len() });
        }
        let mut atoms: Vec<(f64, f64)> =
            points.iter().zip(weights).filter(|(_, &w)| w > 0.0).map(|(&x, &w)| (x, w)).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some(last) if x == last.0 => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution("total weight is not positive".into()));
        }
        let (points, weights) = merged.into_iter().map(|(x, w)| (x, w / total)).unzip();
        Self::new(points, weights)
    }

    /// The point mass at `x`.
    pub fn point_mass(x: f64) -> Result<Self> {
        Self::new(vec![x], vec![1.0])
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    /// Index of the atom located exactly at `x` (within `MIN_ATOM_GAP / 2`).
    pub fn atom_index(&self, x: f64) -> Option<usize> {
        self.points.iter().position(|&p| (p - x).abs() < 0.5 * MIN_ATOM_GAP)
    }

    /// `max_k |w(x_k) - w(1 - x_k)|`; a missing mirror atom counts as weight 0.
    pub fn symmetry_defect(&self, tol: f64) -> f64 {
        self.atoms()
            .map(|(x, w)| {
                let mirror = self.atoms().find(|&(p, _)| (p - (1.0 - x)).abs() <= tol).map_or(0.0, |(_, v)| v);
                (w - mirror).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// An output law on `{0, ..., n}`. Log-probabilities are carried alongside
/// so that entries far below the `f64` range keep their exact log value.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPmf {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl OutputPmf {
    /// Wraps a user-supplied probability vector of length `n + 1`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution("output pmf needs at least 2 entries".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}, not 1")));
        }
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Ok(Self { probs, log_probs })
    }

    fn from_logs(log_probs: Vec<f64>) -> Self {
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Self { probs, log_probs }
    }

    /// Number of trials of the channel this law lives on.
    pub fn n(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Output entropy `H(Y)`.
    pub fn entropy(&self) -> f64 {
        self.probs.iter().zip(&self.log_probs).filter(|(p, _)| **p > 0.0).map(|(p, l)| -p * l).sum()
    }
}

pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    let s: f64 = values.into_iter().map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// The output law `P_Y(y) = sum_k w_k P(y|x_k)`, accumulated per output
/// with log-sum-exp over the atoms.
pub fn induce_output(dist: &DiscreteInput, spec: ChannelSpec) -> OutputPmf {
    let table = LogPmfTable::new(spec);
    induce_output_with(dist, &table)
}

pub(crate) fn induce_output_with(dist: &DiscreteInput, table: &LogPmfTable) -> OutputPmf {
    let outputs = table.n() + 1;
    let rows: Vec<Vec<f64>> = dist
        .atoms()
        .map(|(x, w)| {
            let lw = w.ln();
            let mut row = table.log_row(x);
            row.iter_mut().for_each(|v| *v += lw);
            row
        })
        .collect();
    let logs = (0..outputs).map(|y| log_sum_exp(rows.iter().map(|r| r[y]))).collect();
    OutputPmf::from_logs(logs)
}

/// Relative entropy `D(p || q)` in nats; `+inf` when `p` charges a zero of `q`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { left: p.len(), right: q.len() });
    }
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += a * (a / b).ln();
    }
    Ok(total)
}

/// Information density `i(x; P_Y) = D(P(.|x) || P_Y)` from log values.
pub(crate) fn info_density_logs(log_row: &[f64], log_out: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&lp, &lq) in log_row.iter().zip(log_out) {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        if lq == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        total += lp.exp() * (lp - lq);
    }
    total
}

/// Information density `i(x; P_Y)`.
pub fn info_density(x: f64, out: &OutputPmf, spec: ChannelSpec) -> Result<f64> {
    check_unit(x)?;
    if out.probs.len() != spec.outputs() {
        return Err(Error::LengthMismatch { left: out.probs.len(), right: spec.outputs() });
    }
    let table = LogPmfTable::new(spec);
    Ok(info_density_logs(&table.log_row(x), &out.log_probs))
}

/// `I(X; Y) = sum_k w_k i(x_k; P_Y)`.
pub fn mutual_information(dist: &DiscreteInput, spec: ChannelSpec) -> f64 {
    let table = LogPmfTable::new(spec);
    let out = induce_output_with(dist, &table);
    mutual_information_with(dist, &table, &out)
}

pub(crate) fn mutual_information_with(dist: &DiscreteInput, table: &LogPmfTable, out: &OutputPmf) -> f64 {
    dist.atoms().map(|(x, w)| w * info_density_logs(&table.log_row(x), out.log_probs())).sum()
}

/// `log E[X^a (1-X)^b]` over the atoms, with `0^0 = 1`.
pub fn log_moment(dist: &DiscreteInput, a: usize, b: usize) -> f64 {
    let terms = dist.atoms().map(|(x, w)| {
        let mut v = w.ln();
        if a > 0 {
            v += a as f64 * x.ln();
        }
        if b > 0 {
            v += b as f64 * (-x).ln_1p();
        }
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    });
    log_sum_exp(terms.collect::<Vec<_>>())
}

/// Conditional mean `E[X | Y = y] = E[X^(y+1)(1-X)^(n-y)] / E[X^y (1-X)^(n-y)]`.
pub fn posterior_mean(dist: &DiscreteInput, spec: ChannelSpec, y: usize) -> Result<f64> {
    let n = spec.n();
    if y > n {
        return Err(Error::OutputOutOfRange { y: y as u64, n: n as u64 });
    }
    let den = log_moment(dist, y, n - y);
    if den == f64::NEG_INFINITY {
        return Err(Error::UndefinedPosterior { y: y as u64 });
    }
    let num = log_moment(dist, y + 1, n - y);
    Ok((num - den).exp().min(1.0))
}

/// Determinant of the channel matrix `A[i][k] = P(i|x_k)` for `n + 1` sorted
/// distinct points, as `(sign, log|det|)`. A sign of `0` flags a zero or
/// non-finite pivot.
pub fn channel_matrix_logdet(spec: ChannelSpec, support: &[f64]) -> Result<(i8, f64)> {
    let size = spec.outputs();
    if support.len() != size {
        return Err(Error::LengthMismatch { left: support.len(), right: size });
    }
    for &x in support {
        check_unit(x)?;
    }
    if support.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidDistribution("support must be strictly increasing".into()));
    }
    let table = LogPmfTable::new(spec);
    let columns: Vec<Vec<f64>> = support.iter().map(|&x| table.row(x)).collect();
    let matrix = DMatrix::from_fn(size, size, |i, k| columns[k][i]);
    let lu = matrix.lu();
    let mut sign: f64 = lu.p().determinant();
    let mut log_abs = 0.0;
    for i in 0..size {
        let pivot = lu.u()[(i, i)];
        if pivot == 0.0 || !pivot.is_finite() {
            return Ok((0, f64::NEG_INFINITY));
        }
        sign *= pivot.signum();
        log_abs += pivot.abs().ln();
    }
    Ok((if sign > 0.0 { 1 } else { -1 }, log_abs))
}
