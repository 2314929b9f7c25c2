//! Capacity solver. A coarse Blahut–Arimoto pass on an arcsine-spaced grid
//! locates the bumps of the information density; the atoms found there are
//! then moved to local maxima of `i(x; P_Y)`, polished by Newton's method on
//! the optimality conditions
//!
//! * `i(x_k; P_Y) = C` on every atom,
//! * `i'(x_k; P_Y) = 0` on every interior atom,
//! * `sum_k w_k = 1`,
//!
//! and certified on a fine grid: `max_x i(x; P_Y) - C_hat <= kkt_tol`.
//! Grid maxima that exceed the current capacity estimate are inserted as new
//! atoms until the certificate holds.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{
    induce_output_with, info_density_logs, log_sum_exp, mutual_information_with, DiscreteInput, OutputPmf,
};
use crate::error::{Error, Result};
use crate::kernel::{ChannelSpec, LogPmfTable};

/// Largest trial count the solver accepts.
pub const MAX_TRIALS: usize = 4096;

/// Certification grid size used with the default configuration.
pub const DEFAULT_CERT_POINTS: usize = 10 * 2049 + 1;

/// Closest an interior atom may come to an endpoint.
const EDGE: f64 = 1e-12;
/// Coarse-stage duality gap and iteration budget.
const COARSE_GAP: f64 = 1e-3;
const COARSE_MAX_ITERS: usize = 3000;
/// Minimum basin mass for a coarse bump to become an atom.
const COARSE_MASS: f64 = 1e-7;
/// Iteration cap for BA on the current support.
const SUPPORT_BA_ITERS: usize = 500;
/// Cap for standalone `blahut_arimoto` calls.
const BA_MAX_ITERS: usize = 1_000_000;
/// Weight given to a newly inserted atom before renormalization.
const ESCAPE_WEIGHT: f64 = 1e-3;
const MAX_ESCAPES: usize = 8;
/// Newton residual target.
const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITERS: usize = 80;
/// Joint ascent of the mutual information before the Newton polish: step
/// cap, damping retries per step, and the stationarity target.
const ASCENT_MAX_ITERS: usize = 500;
const ASCENT_DAMPING_TRIES: usize = 40;
const ASCENT_TOL: f64 = 1e-10;
/// Light atoms tried for removal when the joint polish fails.
const DROP_TRIES: usize = 4;

/// Solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Coarse BA grid size; odd so that `1/2` is a grid point.
    pub grid_size: usize,
    /// Duality-gap target for BA on the current support.
    pub ba_tol: f64,
    /// Certified slack target.
    pub kkt_tol: f64,
    /// Atoms closer than this are merged.
    pub merge_radius: f64,
    /// Atoms lighter than this are dropped.
    pub prune_weight: f64,
    pub max_outer_iters: usize,
    /// Average the input with its mirror image `x -> 1 - x` every iteration.
    pub symmetrize: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid_size: 2049,
            ba_tol: 1e-10,
            kkt_tol: 1e-8,
            merge_radius: 1e-4,
            prune_weight: 1e-12,
            max_outer_iters: 200,
            symmetrize: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 3 || self.grid_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("grid_size must be odd and >= 3 (got {})", self.grid_size)));
        }
        for (name, v) in [
            ("ba_tol", self.ba_tol),
            ("kkt_tol", self.kkt_tol),
            ("merge_radius", self.merge_radius),
            ("prune_weight", self.prune_weight),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive (got {v})")));
            }
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig("max_outer_iters must be positive".into()));
        }
        Ok(())
    }

    /// Size of the uniform certification grid, `10 * grid_size + 1`.
    pub fn certification_points(&self) -> usize {
        10 * self.grid_size + 1
    }
}

/// Result of a Blahut–Arimoto run on a fixed set of points.
#[derive(Debug, Clone)]
pub struct BaOutcome {
    pub weights: Vec<f64>,
    /// `sum_k w_k D_k`, a lower bound on the capacity restricted to the points.
    pub capacity_low: f64,
    /// `max_k D_k`, an upper bound on the capacity.
    pub capacity_high: f64,
    /// Information density at each point for the final output law.
    pub densities: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Channel rows for a fixed point set, stored as probabilities.
struct BaRows {
    outputs: usize,
    probs: Vec<f64>,
    neg_entropy: Vec<f64>,
}

impl BaRows {
    fn new(table: &LogPmfTable, points: &[f64]) -> Self {
        let outputs = table.n() + 1;
        let mut probs = vec![0.0; points.len() * outputs];
        let mut neg_entropy = vec![0.0; points.len()];
        let mut log_row = vec![0.0; outputs];
        for (k, &x) in points.iter().enumerate() {
            table.log_row_into(x, &mut log_row);
            let row = &mut probs[k * outputs..(k + 1) * outputs];
            let mut ne = 0.0;
            for (p, &lp) in row.iter_mut().zip(&log_row) {
                // Subnormal entries are negligible and slow down every pass.
                let e = lp.exp();
                *p = if e >= f64::MIN_POSITIVE { e } else { 0.0 };
                if *p > 0.0 {
                    ne += *p * lp;
                }
            }
            neg_entropy[k] = ne;
        }
        Self { outputs, probs, neg_entropy }
    }

    fn len(&self) -> usize {
        self.neg_entropy.len()
    }

    fn densities(&self, weights: &[f64], q: &mut [f64], log_q: &mut [f64], d: &mut [f64]) {
        let m = self.outputs;
        q.iter_mut().for_each(|v| *v = 0.0);
        for (k, &w) in weights.iter().enumerate().filter(|(_, w)| **w > 0.0) {
            for (qy, &p) in q.iter_mut().zip(&self.probs[k * m..(k + 1) * m]) {
                *qy += w * p;
            }
        }
        for (l, &v) in log_q.iter_mut().zip(q.iter()) {
            *l = v.ln();
        }
        for (k, dk) in d.iter_mut().enumerate() {
            let mut cross = 0.0;
            for (&p, &l) in self.probs[k * m..(k + 1) * m].iter().zip(log_q.iter()) {
                if p > 0.0 {
                    cross += p * l;
                }
            }
            *dk = self.neg_entropy[k] - cross;
        }
    }

    fn run(&self, mut weights: Vec<f64>, tol: f64, max_iters: usize) -> BaOutcome {
        let mut q = vec![0.0; self.outputs];
        let mut log_q = vec![0.0; self.outputs];
        let mut d = vec![0.0; self.len()];
        let mut iterations = 0;
        loop {
            self.densities(&weights, &mut q, &mut log_q, &mut d);
            let low: f64 = weights.iter().zip(&d).map(|(w, v)| w * v).sum();
            let high = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let converged = high - low <= tol;
            if converged || iterations >= max_iters {
                return BaOutcome {
                    weights,
                    capacity_low: low,
                    capacity_high: high,
                    densities: d,
                    iterations,
                    converged,
                };
            }
            let mut total = 0.0;
            for (w, &v) in weights.iter_mut().zip(&d) {
                *w *= (v - high).exp();
                if *w < f64::MIN_POSITIVE {
                    *w = 0.0;
                }
                total += *w;
            }
            weights.iter_mut().for_each(|w| *w /= total);
            iterations += 1;
        }
    }
}

/// Blahut–Arimoto on a fixed point set, stopped once
/// `capacity_high - capacity_low <= tol`. Non-convergence within the
/// iteration cap is reported through `converged`.
pub fn blahut_arimoto(spec: ChannelSpec, points: &[f64], tol: f64) -> Result<BaOutcome> {
    if points.len() < 2 {
        return Err(Error::InvalidConfig("BA needs at least 2 points".into()));
    }
    if points.first() != Some(&0.0) || points.last() != Some(&1.0) {
        return Err(Error::InvalidConfig("BA points must include 0 and 1".into()));
    }
    if points.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidConfig("BA points must be strictly increasing".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive (got {tol})")));
    }
    let rows = BaRows::new(&LogPmfTable::new(spec), points);
    let m = points.len();
    Ok(rows.run(vec![1.0 / m as f64; m], tol, BA_MAX_ITERS))
}

/// `sin^2(pi j / (2(N-1)))`, mirrored exactly about `1/2`.
fn arcsine_grid(size: usize) -> Vec<f64> {
    let last = size - 1;
    let mut grid = vec![0.0; size];
    for j in 0..=last / 2 {
        let s = (std::f64::consts::FRAC_PI_2 * j as f64 / last as f64).sin();
        grid[j] = s * s;
    }
    if last.is_multiple_of(2) {
        grid[last / 2] = 0.5;
    }
    for j in last / 2 + 1..=last {
        grid[j] = 1.0 - grid[last - j];
    }
    grid
}

/// Information density for a fixed output law, with derivatives.
pub(crate) struct Landscape<'a> {
    table: &'a LogPmfTable,
    log_out: Vec<f64>,
}

impl<'a> Landscape<'a> {
    fn new(table: &'a LogPmfTable, out: &OutputPmf) -> Self {
        Self { table, log_out: out.log_probs().to_vec() }
    }

    fn value(&self, x: f64) -> f64 {
        info_density_logs(&self.table.log_row(x), &self.log_out)
    }

    /// `(i, i', i'')` at an interior point.
    fn derivs(&self, x: f64) -> (f64, f64, f64) {
        let n = self.table.n() as f64;
        let (a, b) = (1.0 / x, 1.0 / (1.0 - x));
        let scale = a * b;
        let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for (y, (lp, lq)) in self.table.log_row(x).into_iter().zip(&self.log_out).enumerate() {
            let p = lp.exp();
            if p == 0.0 {
                continue;
            }
            let diff = lp - lq;
            let yf = y as f64;
            let s = (yf - n * x) * scale;
            let ds = -yf * a * a - (n - yf) * b * b;
            v += p * diff;
            d1 += p * s * diff;
            d2 += p * ((s * s + ds) * diff + s * s);
        }
        (v, d1, d2)
    }

    /// Local maxima of `i` reached from `x0` by following the sign of `i'`.
    /// A point within `radius` of a local minimum climbs both ways.
    fn local_maxima_from(&self, x0: f64, radius: f64) -> Vec<f64> {
        let x0 = x0.clamp(EDGE, 1.0 - EDGE);
        let (_, g, h) = self.derivs(x0);
        if h > 0.0 && g.abs() <= h * radius {
            return [-1.0, 1.0].into_iter().filter_map(|dir| self.climb(x0, dir)).collect();
        }
        if g == 0.0 {
            return vec![x0];
        }
        self.climb(x0, g.signum()).into_iter().collect()
    }

    /// Walks from `x0` in direction `dir` until `i'` turns against the
    /// walk after having pointed along it, then locates that maximum.
    /// `None` if the walk reaches an endpoint first.
    fn climb(&self, x0: f64, dir: f64) -> Option<f64> {
        let (lo_lim, hi_lim) = (EDGE, 1.0 - EDGE);
        let g0 = self.derivs(x0).1;
        let mut ascent = (g0 * dir > 0.0).then_some(x0);
        let mut step = (1e-4 * x0.min(1.0 - x0)).max(1e-9);
        loop {
            let cand = (x0 + dir * step).clamp(lo_lim, hi_lim);
            let g = self.derivs(cand).1;
            if g == 0.0 && ascent.is_some() {
                return Some(cand);
            }
            if g * dir > 0.0 {
                ascent = Some(cand);
            } else if let Some(inner) = ascent {
                let (mut pos, mut neg) = if dir > 0.0 { (inner, cand) } else { (cand, inner) };
                return Some(self.safeguarded_root(&mut pos, &mut neg));
            }
            if cand == lo_lim || cand == hi_lim {
                return None;
            }
            step *= 2.0;
        }
    }

    /// Interior local maxima of sampled values `values[j] = i(xs[j])`, each
    /// refined by Newton inside its grid bracket when that improves it.
    fn grid_maxima(&self, xs: &[f64], values: &[f64]) -> Vec<(usize, f64, f64)> {
        let mut maxima = Vec::new();
        for j in 1..xs.len() - 1 {
            let v = values[j];
            if !(v > values[j - 1] && v >= values[j + 1]) {
                continue;
            }
            let (mut pos, mut neg) = (xs[j - 1], xs[j + 1]);
            let mut best = (xs[j], v);
            if self.derivs(pos).1 > 0.0 && self.derivs(neg).1 < 0.0 {
                let x = self.safeguarded_root(&mut pos, &mut neg);
                let value = self.value(x);
                if value > v {
                    best = (x, value);
                }
            }
            maxima.push((j, best.0, best.1));
        }
        maxima
    }

    /// Newton on `i'` inside the bracket, falling back to bisection.
    fn safeguarded_root(&self, pos: &mut f64, neg: &mut f64) -> f64 {
        let mut x = 0.5 * (*pos + *neg);
        let mut last_dx = (*neg - *pos).abs();
        for _ in 0..200 {
            let (_, g, h) = self.derivs(x);
            if g == 0.0 {
                return x;
            }
            if g > 0.0 {
                *pos = x;
            } else {
                *neg = x;
            }
            let width = (*neg - *pos).abs();
            if width <= 4.0 * f64::EPSILON * x.max(1e-300) {
                return x;
            }
            let newton = x - g / h;
            let (lo, hi) = (pos.min(*neg), pos.max(*neg));
            let next = if h < 0.0 && newton > lo && newton < hi && (newton - x).abs() < 0.5 * last_dx {
                newton
            } else {
                0.5 * (lo + hi)
            };
            last_dx = (next - x).abs();
            if last_dx <= 2.0 * f64::EPSILON * x {
                return next;
            }
            x = next;
        }
        x
    }
}

/// Merges atoms closer than `radius` into their weighted centroid; a cluster
/// that contains an endpoint stays at that endpoint.
fn merge_atoms(mut atoms: Vec<(f64, f64)>, radius: f64) -> Vec<(f64, f64)> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut clusters: Vec<Vec<(f64, f64)>> = Vec::new();
    for atom in atoms {
        match clusters.last_mut() {
            Some(c) if atom.0 - c.last().unwrap().0 < radius => c.push(atom),
            _ => clusters.push(vec![atom]),
        }
    }
    clusters
        .into_iter()
        .map(|c| {
            let w: f64 = c.iter().map(|a| a.1).sum();
            let x = if c.iter().any(|a| a.0 == 0.0) {
                0.0
            } else if c.iter().any(|a| a.0 == 1.0) {
                1.0
            } else {
                c.iter().map(|a| a.0 * a.1).sum::<f64>() / w
            };
            (x, w)
        })
        .collect()
}

/// Averages the atoms with their mirror images, then makes positions and
/// weights exactly symmetric when the merged result pairs up.
fn symmetrize_atoms(atoms: &[(f64, f64)], radius: f64) -> Vec<(f64, f64)> {
    let doubled: Vec<(f64, f64)> = atoms.iter().flat_map(|&(x, w)| [(x, 0.5 * w), (1.0 - x, 0.5 * w)]).collect();
    let mut merged = merge_atoms(doubled, radius);
    let m = merged.len();
    let paired = (0..m).all(|k| (merged[k].0 - (1.0 - merged[m - 1 - k].0)).abs() < radius);
    if paired {
        for k in 0..m / 2 {
            let w = 0.5 * (merged[k].1 + merged[m - 1 - k].1);
            merged[k].1 = w;
            merged[m - 1 - k].1 = w;
            merged[m - 1 - k].0 = 1.0 - merged[k].0;
        }
        if m % 2 == 1 {
            merged[m / 2].0 = 0.5;
        }
    }
    merged
}

fn to_input(atoms: &[(f64, f64)]) -> Result<DiscreteInput> {
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let (p, w): (Vec<f64>, Vec<f64>) = atoms.iter().map(|&(x, w)| (x, w / total)).unzip();
    DiscreteInput::new(p, w)
}

fn with_endpoints(mut atoms: Vec<(f64, f64)>, seed_weight: f64) -> Vec<(f64, f64)> {
    if !atoms.iter().any(|a| a.0 == 0.0) {
        atoms.push((0.0, seed_weight));
    }
    if !atoms.iter().any(|a| a.0 == 1.0) {
        atoms.push((1.0, seed_weight));
    }
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    atoms
}

/// Moves every interior atom to the local maximum of `i(.; P_Y)` it drifts
/// to (`P_Y` induced by `coarse`, held fixed), keeps endpoints pinned, merges
/// atoms within `merge_radius` and optionally symmetrizes. An atom sitting at
/// a local minimum is split between the maxima on either side; atoms with no
/// interior maximum ahead of them stay in place.
pub fn refine_support(spec: ChannelSpec, coarse: &DiscreteInput, config: &SolverConfig) -> Result<DiscreteInput> {
    config.validate()?;
    let table = LogPmfTable::new(spec);
    refine_with(&table, coarse, config)
}

fn refine_with(table: &LogPmfTable, coarse: &DiscreteInput, config: &SolverConfig) -> Result<DiscreteInput> {
    let out = induce_output_with(coarse, table);
    let land = Landscape::new(table, &out);
    let mut moved: Vec<(f64, f64)> = Vec::with_capacity(coarse.len());
    for (x, w) in coarse.atoms() {
        if x == 0.0 || x == 1.0 {
            moved.push((x, w));
            continue;
        }
        match land.local_maxima_from(x, config.merge_radius).as_slice() {
            [] => moved.push((x, w)),
            targets => {
                let share = w / targets.len() as f64;
                moved.extend(targets.iter().map(|&t| (t, share)));
            }
        }
    }
    let mut atoms = merge_atoms(moved, config.merge_radius);
    if config.symmetrize {
        atoms = symmetrize_atoms(&atoms, config.merge_radius);
    }
    to_input(&with_endpoints(atoms, config.prune_weight))
}

enum Polish {
    Converged,
    Stalled,
    /// The full Newton step wants this atom's weight to go negative.
    NegativeWeight(usize),
}

/// Newton's method on the optimality system in the unknowns
/// `(w_0..w_{m-1}, interior positions, C)`, or on the weights and `C` alone
/// when `free_positions` is false. Endpoints stay pinned.
fn newton_polish(table: &LogPmfTable, atoms: &mut [(f64, f64)], free_positions: bool) -> Polish {
    let m = atoms.len();
    let interior: Vec<usize> =
        if free_positions { (0..m).filter(|&k| atoms[k].0 > 0.0 && atoms[k].0 < 1.0).collect() } else { Vec::new() };
    let size = m + interior.len() + 1;
    let mut cap = match to_input(atoms) {
        Ok(dist) => {
            let out = induce_output_with(&dist, table);
            mutual_information_with(&dist, table, &out)
        }
        Err(_) => return Polish::Stalled,
    };
    let mut state = NewtonState::evaluate(table, atoms, &interior, cap);
    for _ in 0..NEWTON_MAX_ITERS {
        let norm = state.residual_norm();
        if !norm.is_finite() {
            return Polish::Stalled;
        }
        if norm <= NEWTON_TOL {
            return Polish::Converged;
        }
        let jac = state.jacobian(atoms, &interior, size);
        let rhs = -DVector::from_vec(state.residual.clone());
        let Some(step) = jac.lu().solve(&rhs) else {
            return Polish::Stalled;
        };
        let negative = (0..m)
            .filter(|&k| atoms[k].1 + step[k] <= 0.0)
            .min_by(|&a, &b| (atoms[a].1 + step[a]).total_cmp(&(atoms[b].1 + step[b])));
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            if let Some(trial) = stepped(atoms, &interior, &step, alpha) {
                let trial_cap = cap + alpha * step[size - 1];
                let next = NewtonState::evaluate(table, &trial, &interior, trial_cap);
                let next_norm = next.residual_norm();
                if next_norm.is_finite() && (next_norm < (1.0 - 1e-4 * alpha) * norm || next_norm <= NEWTON_TOL) {
                    atoms.copy_from_slice(&trial);
                    cap = trial_cap;
                    state = next;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            if norm <= 1e3 * NEWTON_TOL {
                return Polish::Converged;
            }
            return negative.map_or(Polish::Stalled, Polish::NegativeWeight);
        }
    }
    if state.residual_norm() <= 1e3 * NEWTON_TOL {
        Polish::Converged
    } else {
        Polish::Stalled
    }
}

/// Applies `alpha * step`, rejecting non-positive weights and positions that
/// leave `(0, 1)` or cross a neighbour.
fn stepped(atoms: &[(f64, f64)], interior: &[usize], step: &DVector<f64>, alpha: f64) -> Option<Vec<(f64, f64)>> {
    let m = atoms.len();
    let mut next = atoms.to_vec();
    for k in 0..m {
        let w = atoms[k].1 + alpha * step[k];
        if !(w > 0.0) {
            return None;
        }
        next[k].1 = w;
    }
    for (j, &k) in interior.iter().enumerate() {
        next[k].0 = atoms[k].0 + alpha * step[m + j];
    }
    for k in 1..m {
        if !(next[k].0 - next[k - 1].0 >= 1e-10) {
            return None;
        }
    }
    if interior.iter().any(|&k| !(next[k].0 > EDGE && next[k].0 < 1.0 - EDGE)) {
        return None;
    }
    Some(next)
}

struct NewtonState {
    residual: Vec<f64>,
    /// Per atom: `P(.|x_k)`, `P(.|x_k) / P_Y`, score `d/dx log P(.|x_k)`.
    probs: Vec<Vec<f64>>,
    ratios: Vec<Vec<f64>>,
    scores: Vec<Vec<f64>>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl NewtonState {
    fn evaluate(table: &LogPmfTable, atoms: &[(f64, f64)], interior: &[usize], cap: f64) -> Self {
        let n = table.n();
        let m = atoms.len();
        let logs: Vec<Vec<f64>> = atoms.iter().map(|a| table.log_row(a.0)).collect();
        let log_q: Vec<f64> = (0..=n)
            .map(|y| log_sum_exp(atoms.iter().zip(&logs).map(|(a, r)| a.1.ln() + r[y]).collect::<Vec<_>>()))
            .collect();
        let mut residual = Vec::with_capacity(2 * m);
        let mut probs = Vec::with_capacity(m);
        let mut ratios = Vec::with_capacity(m);
        let mut scores = Vec::with_capacity(m);
        let (mut d1, mut d2) = (vec![0.0; m], vec![0.0; m]);
        for (k, (&(x, _), lr)) in atoms.iter().zip(&logs).enumerate() {
            let pk: Vec<f64> = lr.iter().map(|v| v.exp()).collect();
            let rk: Vec<f64> = lr.iter().zip(&log_q).map(|(a, b)| (a - b).exp()).collect();
            let interior_atom = x > 0.0 && x < 1.0;
            let sk: Vec<f64> = if interior_atom {
                let scale = 1.0 / (x * (1.0 - x));
                (0..=n).map(|y| (y as f64 - n as f64 * x) * scale).collect()
            } else {
                vec![0.0; n + 1]
            };
            let mut value = 0.0;
            for y in 0..=n {
                if pk[y] > 0.0 {
                    let diff = lr[y] - log_q[y];
                    value += pk[y] * diff;
                    if interior_atom {
                        let ds = -(y as f64) / (x * x) - (n - y) as f64 / ((1.0 - x) * (1.0 - x));
                        d1[k] += pk[y] * sk[y] * diff;
                        d2[k] += pk[y] * ((sk[y] * sk[y] + ds) * diff + sk[y] * sk[y]);
                    }
                }
            }
            residual.push(value - cap);
            probs.push(pk);
            ratios.push(rk);
            scores.push(sk);
        }
        for &k in interior {
            residual.push(d1[k]);
        }
        residual.push(atoms.iter().map(|a| a.1).sum::<f64>() - 1.0);
        Self { residual, probs, ratios, scores, d1, d2 }
    }

    fn residual_norm(&self) -> f64 {
        self.residual.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    fn jacobian(&self, atoms: &[(f64, f64)], interior: &[usize], size: usize) -> DMatrix<f64> {
        let m = atoms.len();
        let outputs = self.probs[0].len();
        let dot = |a: &[f64], b: &[f64], c: Option<&[f64]>, d: Option<&[f64]>| -> f64 {
            (0..outputs).map(|y| a[y] * b[y] * c.map_or(1.0, |c| c[y]) * d.map_or(1.0, |d| d[y])).sum()
        };
        let mut jac = DMatrix::zeros(size, size);
        let pos_col = |j: usize| m + j;
        for k in 0..m {
            for j in 0..m {
                jac[(k, j)] = -dot(&self.probs[k], &self.ratios[j], None, None);
            }
            for (jj, &j) in interior.iter().enumerate() {
                let mut v = -atoms[j].1 * dot(&self.probs[k], &self.ratios[j], Some(&self.scores[j]), None);
                if j == k {
                    v += self.d1[k];
                }
                jac[(k, pos_col(jj))] = v;
            }
            jac[(k, size - 1)] = -1.0;
        }
        for (kk, &k) in interior.iter().enumerate() {
            let row = m + kk;
            for j in 0..m {
                jac[(row, j)] = -dot(&self.probs[k], &self.ratios[j], Some(&self.scores[k]), None);
            }
            for (jj, &j) in interior.iter().enumerate() {
                let mut v =
                    -atoms[j].1 * dot(&self.probs[k], &self.ratios[j], Some(&self.scores[k]), Some(&self.scores[j]));
                if j == k {
                    v += self.d2[k];
                }
                jac[(row, pos_col(jj))] = v;
            }
        }
        for j in 0..m {
            jac[(size - 1, j)] = 1.0;
        }
        jac
    }
}

/// Pass/fail checks derived from the optimality structure of the channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralFlags {
    pub endpoints_in_support: bool,
    /// `max(|C + log P_Y(0)|, |C + log P_Y(n)|)`.
    pub endpoint_identity_defect: f64,
    pub endpoint_identity_ok: bool,
    /// Atoms in `(0, 1/n]` and in `[1 - 1/n, 1)`.
    pub atoms_near_zero: usize,
    pub atoms_near_one: usize,
    pub edge_atoms_ok: bool,
    pub symmetry_defect: f64,
    pub symmetric_ok: bool,
    pub equality_defect: f64,
    pub kkt_equality_ok: bool,
    pub kkt_inequality_ok: bool,
    /// Clustered points where `|i(x) - C| <= tol`.
    pub active_set: Vec<f64>,
    pub active_set_size_ok: bool,
    pub max_weight: f64,
    pub probability_cap_ok: bool,
    pub support_size: usize,
    pub cardinality_lower: f64,
    pub cardinality_upper: usize,
    pub cardinality_ok: bool,
}

impl StructuralFlags {
    pub fn all_pass(&self) -> bool {
        self.endpoints_in_support
            && self.endpoint_identity_ok
            && self.edge_atoms_ok
            && self.symmetric_ok
            && self.kkt_equality_ok
            && self.kkt_inequality_ok
            && self.active_set_size_ok
            && self.probability_cap_ok
            && self.cardinality_ok
    }
}

/// Optimality certificate of an input law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktSummary {
    pub capacity_nats: f64,
    /// `max_x i(x; P_Y) - C_hat` over the certification set.
    pub kkt_slack: f64,
    /// `max_k |i(x_k; P_Y) - C_hat|`.
    pub equality_defect: f64,
    pub active_set: Vec<f64>,
    pub certification_points: usize,
    pub flags: StructuralFlags,
}

struct GridMax {
    index: usize,
    x: f64,
    value: f64,
}

struct Certificate {
    summary: KktSummary,
    output: OutputPmf,
    grid_values: Vec<f64>,
    maxima: Vec<GridMax>,
}

fn certify(dist: &DiscreteInput, table: &LogPmfTable, points: usize, tol: f64) -> Certificate {
    let n = table.n();
    let output = induce_output_with(dist, table);
    let cap = mutual_information_with(dist, table, &output);
    let land = Landscape::new(table, &output);
    let last = (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|j| if j + 1 == points { 1.0 } else { j as f64 / last }).collect();
    let grid_values: Vec<f64> = xs.par_iter().map(|&x| land.value(x)).collect();

    let maxima: Vec<GridMax> =
        land.grid_maxima(&xs, &grid_values).into_iter().map(|(index, x, value)| GridMax { index, x, value }).collect();

    let atom_values: Vec<f64> = dist.points().iter().map(|&x| land.value(x)).collect();
    let mut set: Vec<(f64, f64)> = xs.iter().copied().zip(grid_values.iter().copied()).collect();
    set.extend(dist.points().iter().copied().zip(atom_values.iter().copied()));
    set.extend(maxima.iter().map(|g| (g.x, g.value)));
    set.sort_by(|a, b| a.0.total_cmp(&b.0));

    let slack = set.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max) - cap;
    let equality_defect = atom_values.iter().map(|v| (v - cap).abs()).fold(0.0, f64::max);

    let mut active_set = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for &(x, v) in &set {
        if (v - cap).abs() <= tol {
            if best.is_none_or(|b| v > b.1) {
                best = Some((x, v));
            }
        } else if let Some(b) = best.take() {
            active_set.push(b.0);
        }
    }
    if let Some(b) = best {
        active_set.push(b.0);
    }
    active_set.dedup();

    let flags = structural_flags(dist, &output, n, cap, slack, equality_defect, &active_set, tol);
    Certificate {
        summary: KktSummary {
            capacity_nats: cap,
            kkt_slack: slack,
            equality_defect,
            active_set,
            certification_points: points,
            flags,
        },
        output,
        grid_values,
        maxima,
    }
}

#[allow(clippy::too_many_arguments)]
fn structural_flags(
    dist: &DiscreteInput,
    output: &OutputPmf,
    n: usize,
    cap: f64,
    slack: f64,
    equality_defect: f64,
    active_set: &[f64],
    tol: f64,
) -> StructuralFlags {
    let log_out = output.log_probs();
    let endpoint_identity_defect = (cap + log_out[0]).abs().max((cap + log_out[n]).abs());
    let edge = 1.0 / n as f64;
    let atoms_near_zero = dist.points().iter().filter(|&&x| x > 0.0 && x <= edge).count();
    let atoms_near_one = dist.points().iter().filter(|&&x| x >= 1.0 - edge && x < 1.0).count();
    let symmetry_defect = dist.symmetry_defect(1e-9);
    let max_weight = dist.weights().iter().copied().fold(0.0, f64::max);
    let support_size = dist.len();
    let cardinality_lower = cap.exp();
    let cardinality_upper = 2 + n / 2;
    StructuralFlags {
        endpoints_in_support: dist.points().first() == Some(&0.0) && dist.points().last() == Some(&1.0),
        endpoint_identity_defect,
        endpoint_identity_ok: endpoint_identity_defect <= 1e-8,
        atoms_near_zero,
        atoms_near_one,
        edge_atoms_ok: atoms_near_zero <= 1 && atoms_near_one <= 1,
        symmetry_defect,
        symmetric_ok: symmetry_defect <= 1e-9,
        equality_defect,
        kkt_equality_ok: equality_defect <= tol,
        kkt_inequality_ok: slack <= tol,
        active_set: active_set.to_vec(),
        active_set_size_ok: active_set.len() <= n + 1,
        max_weight,
        probability_cap_ok: max_weight <= (-cap).exp() + 1e-9,
        support_size,
        cardinality_lower,
        cardinality_upper,
        cardinality_ok: support_size as f64 >= (cardinality_lower - 1e-9).ceil() && support_size <= cardinality_upper,
    }
}

/// Certifies an arbitrary input law on a uniform grid of `points` points
/// (plus its atoms and the refined grid maxima) at tolerance `tol`.
pub fn kkt_check(dist: &DiscreteInput, spec: ChannelSpec, points: usize, tol: f64) -> Result<KktSummary> {
    if points < 3 {
        return Err(Error::InvalidConfig(format!("certification grid needs >= 3 points (got {points})")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive (got {tol})")));
    }
    Ok(certify(dist, &LogPmfTable::new(spec), points, tol).summary)
}

/// Re-certifies a solver report on a grid of `points` points at the default
/// tolerance.
pub fn kkt_verify(report: &SolveReport, spec: ChannelSpec, points: usize) -> Result<KktSummary> {
    kkt_check(&report.input, spec, points, SolverConfig::default().kkt_tol)
}

/// Solver output.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub n: usize,
    pub input: DiscreteInput,
    pub output: OutputPmf,
    pub capacity_nats: f64,
    pub kkt_slack: f64,
    pub equality_defect: f64,
    pub support_size: usize,
    pub active_set_estimate: Vec<f64>,
    pub flags: StructuralFlags,
    /// Outer iterations performed.
    pub iterations: usize,
    pub converged: bool,
}

impl SolveReport {
    fn from_certificate(n: usize, input: DiscreteInput, cert: Certificate, iterations: usize, converged: bool) -> Self {
        let s = cert.summary;
        Self {
            n,
            support_size: input.len(),
            input,
            output: cert.output,
            capacity_nats: s.capacity_nats,
            kkt_slack: s.kkt_slack,
            equality_defect: s.equality_defect,
            active_set_estimate: s.active_set,
            flags: s.flags,
            iterations,
            converged,
        }
    }
}

/// Atoms of a coarse BA solution: one per bump of the information density
/// (basins split at its local minima) carrying enough mass, plus endpoints.
fn coarse_atoms(grid: &[f64], outcome: &BaOutcome) -> Vec<(f64, f64)> {
    let d = &outcome.densities;
    let w = &outcome.weights;
    let len = grid.len();
    let mut atoms = Vec::new();
    let mut start = 0;
    while start < len {
        let mut end = start;
        // Climb to the local maximum, then descend to the next local minimum.
        while end + 1 < len && d[end + 1] >= d[end] {
            end += 1;
        }
        while end + 1 < len && d[end + 1] < d[end] {
            end += 1;
        }
        let stop = if end + 1 == len { len } else { end };
        let stop = stop.max(start + 1);
        let mass: f64 = w[start..stop].iter().sum();
        let peak = (start..stop).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        if mass >= COARSE_MASS || start == 0 || stop == len {
            let covers_zero = start == 0;
            let covers_one = stop == len;
            let x = grid[peak];
            if (covers_zero && x != 0.0) || (covers_one && x != 1.0) {
                let end_x = if covers_zero { 0.0 } else { 1.0 };
                let end_w = if covers_zero { w[0] } else { w[len - 1] };
                atoms.push((end_x, end_w.max(COARSE_MASS)));
                atoms.push((x, (mass - end_w).max(COARSE_MASS)));
            } else {
                atoms.push((x, mass.max(COARSE_MASS)));
            }
        }
        start = stop;
    }
    atoms
}

/// Capacity and capacity-achieving input of the `n`-trial channel.
pub fn solve_capacity(spec: ChannelSpec, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let n = spec.n();
    if n > MAX_TRIALS {
        return Err(Error::TooManyTrials { n: n as u64, max: MAX_TRIALS as u64 });
    }
    let table = LogPmfTable::new(spec);
    let points = config.certification_points();
    if n == 1 {
        let input = DiscreteInput::new(vec![0.0, 1.0], vec![0.5, 0.5])?;
        let cert = certify(&input, &table, points, config.kkt_tol);
        return Ok(SolveReport::from_certificate(n, input, cert, 0, true));
    }

    let grid = arcsine_grid(config.grid_size);
    let rows = BaRows::new(&table, &grid);
    let coarse = rows.run(vec![1.0 / grid.len() as f64; grid.len()], COARSE_GAP.max(config.ba_tol), COARSE_MAX_ITERS);
    let mut atoms = merge_atoms(coarse_atoms(&grid, &coarse), config.merge_radius);
    if config.symmetrize {
        atoms = symmetrize_atoms(&atoms, config.merge_radius);
    }
    let mut dist = to_input(&with_endpoints(atoms, config.prune_weight))?;

    let mut best: Option<(f64, DiscreteInput, usize)> = None;
    for iteration in 1..=config.max_outer_iters {
        dist = support_step(&table, &dist, config)?;
        let cert = certify(&dist, &table, points, config.kkt_tol);
        let s = &cert.summary;
        if s.kkt_slack <= config.kkt_tol && s.equality_defect <= config.kkt_tol {
            return Ok(SolveReport::from_certificate(n, dist, cert, iteration, true));
        }
        let score = s.kkt_slack.max(s.equality_defect);
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, dist.clone(), iteration));
        }
        dist = insert_escapes(&dist, &cert, config)?;
    }
    let (_, input, _) = best.expect("at least one outer iteration");
    let cert = certify(&input, &table, points, config.kkt_tol);
    Ok(SolveReport::from_certificate(n, input, cert, config.max_outer_iters, false))
}

/// BA on the current support followed by pruning of light atoms.
fn ba_weights(table: &LogPmfTable, atoms: &[(f64, f64)], config: &SolverConfig) -> Vec<(f64, f64)> {
    let points: Vec<f64> = atoms.iter().map(|a| a.0).collect();
    let rows = BaRows::new(table, &points);
    let ba = rows.run(atoms.iter().map(|a| a.1).collect(), config.ba_tol, SUPPORT_BA_ITERS);
    points.into_iter().zip(ba.weights).filter(|&(x, w)| w >= config.prune_weight || x == 0.0 || x == 1.0).collect()
}

fn drop_atom(atoms: &mut Vec<(f64, f64)>, k: usize, config: &SolverConfig) {
    let x = atoms[k].0;
    atoms.retain(|a| a.0 != x && !(config.symmetrize && (a.0 - (1.0 - x)).abs() < config.merge_radius));
}

/// Solves the equality conditions for the weights with positions held fixed.
/// An interior atom that would need a negative weight is removed.
fn fit_weights(table: &LogPmfTable, mut atoms: Vec<(f64, f64)>, config: &SolverConfig) -> Vec<(f64, f64)> {
    loop {
        let mut trial = atoms.clone();
        match newton_polish(table, &mut trial, false) {
            Polish::Converged => return trial,
            Polish::NegativeWeight(k) if atoms[k].0 > 0.0 && atoms[k].0 < 1.0 => {
                drop_atom(&mut atoms, k, config);
                atoms = ba_weights(table, &atoms, config);
            }
            _ => return atoms,
        }
    }
}

/// Joint Newton polish, accepted only if atoms stay more than
/// `merge_radius` apart and the mutual information does not drop. Coalescing
/// atoms satisfy the optimality equations trivially and must be rejected.
fn polish_jointly(table: &LogPmfTable, atoms: &[(f64, f64)], config: &SolverConfig) -> Option<Vec<(f64, f64)>> {
    let mut trial = atoms.to_vec();
    if !matches!(newton_polish(table, &mut trial, true), Polish::Converged) {
        return None;
    }
    let separated = trial.windows(2).all(|p| p[1].0 - p[0].0 > config.merge_radius);
    let gained = information(table, &trial) >= information(table, atoms) - 1e-12;
    let out = induce_output_with(&to_input(&trial).ok()?, table);
    let land = Landscape::new(table, &out);
    let maxima = trial.iter().filter(|a| a.0 > 0.0 && a.0 < 1.0).all(|a| land.derivs(a.0).2 < 0.0);
    (separated && gained && maxima).then_some(trial)
}

/// Joint polish after removing one of the lightest interior atoms (with its
/// mirror). The optimum on the smaller support has the larger mutual
/// information, so a removal is kept only if the information does not drop.
fn polish_after_drop(table: &LogPmfTable, atoms: &[(f64, f64)], config: &SolverConfig) -> Option<Vec<(f64, f64)>> {
    let base = information(table, atoms);
    let mut order: Vec<usize> = (0..atoms.len())
        .filter(|&k| atoms[k].0 > 0.0 && atoms[k].0 < 1.0 && (!config.symmetrize || atoms[k].0 <= 0.5))
        .collect();
    order.sort_by(|&a, &b| atoms[a].1.total_cmp(&atoms[b].1));
    for &k in order.iter().take(DROP_TRIES) {
        let mut trial = atoms.to_vec();
        drop_atom(&mut trial, k, config);
        let trial = fit_weights(table, ba_weights(table, &trial, config), config);
        if let Some(polished) = polish_jointly(table, &trial, config) {
            if information(table, &polished) >= base - 1e-12 {
                return Some(polished);
            }
        }
    }
    None
}

fn information(table: &LogPmfTable, atoms: &[(f64, f64)]) -> f64 {
    match to_input(atoms) {
        Ok(dist) => {
            let out = induce_output_with(&dist, table);
            mutual_information_with(&dist, table, &out)
        }
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Gradient and Hessian of the mutual information in the variables
/// `(w_0..w_m, x_k for interior k)`, from a state evaluated with `cap = 0`.
fn ascent_model(st: &NewtonState, atoms: &[(f64, f64)], interior: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let m = atoms.len();
    let size = m + interior.len();
    let outputs = st.probs[0].len();
    let dot = |a: &[f64], b: &[f64], c: Option<&[f64]>, d: Option<&[f64]>| -> f64 {
        (0..outputs).map(|y| a[y] * b[y] * c.map_or(1.0, |c| c[y]) * d.map_or(1.0, |d| d[y])).sum()
    };
    let mut grad = DVector::zeros(size);
    let mut hess = DMatrix::zeros(size, size);
    for j in 0..m {
        grad[j] = st.residual[j];
        for i in 0..m {
            hess[(j, i)] = -dot(&st.probs[j], &st.ratios[i], None, None);
        }
    }
    for (a, &j) in interior.iter().enumerate() {
        let wj = atoms[j].1;
        grad[m + a] = wj * st.d1[j];
        for i in 0..m {
            let v =
                -wj * dot(&st.probs[j], &st.ratios[i], Some(&st.scores[j]), None) + if i == j { st.d1[j] } else { 0.0 };
            hess[(m + a, i)] = v;
            hess[(i, m + a)] = v;
        }
        for (b, &i) in interior.iter().enumerate() {
            let mut v = -wj * atoms[i].1 * dot(&st.probs[j], &st.ratios[i], Some(&st.scores[j]), Some(&st.scores[i]));
            if i == j {
                v += wj * st.d2[j];
            }
            hess[(m + a, m + b)] = v;
        }
    }
    (grad, hess)
}

/// Atoms after a step `t * d`; interior atoms whose weight vanishes are
/// dropped, endpoints keep at least `prune_weight`, and atoms closer than
/// `merge_radius` merge.
fn ascent_trial(
    atoms: &[(f64, f64)],
    interior: &[usize],
    d: &DVector<f64>,
    t: f64,
    config: &SolverConfig,
) -> Vec<(f64, f64)> {
    let m = atoms.len();
    let mut next: Vec<(f64, f64)> = atoms.iter().enumerate().map(|(k, a)| (a.0, (a.1 + t * d[k]).max(0.0))).collect();
    for (a, &k) in interior.iter().enumerate() {
        next[k].0 = (next[k].0 + t * d[m + a]).clamp(EDGE, 1.0 - EDGE);
    }
    let mut next: Vec<(f64, f64)> = next
        .into_iter()
        .filter_map(|(x, w)| {
            if x == 0.0 || x == 1.0 {
                Some((x, w.max(config.prune_weight)))
            } else {
                (w > config.prune_weight).then_some((x, w))
            }
        })
        .collect();
    next.sort_by(|a, b| a.0.total_cmp(&b.0));
    let next = merge_atoms(next, config.merge_radius);
    let total: f64 = next.iter().map(|a| a.1).sum();
    next.into_iter().map(|(x, w)| (x, w / total)).collect()
}

/// Levenberg–Marquardt ascent of the mutual information over all weights
/// and interior positions. Every accepted step increases the information;
/// the support can only shrink (vanishing weights, merging atoms).
fn ascend_jointly(table: &LogPmfTable, atoms: &[(f64, f64)], config: &SolverConfig) -> Vec<(f64, f64)> {
    let mut atoms = atoms.to_vec();
    let mut value = information(table, &atoms);
    let mut mu = 0.0f64;
    for _ in 0..ASCENT_MAX_ITERS {
        let m = atoms.len();
        let interior: Vec<usize> = (0..m).filter(|&k| atoms[k].0 > 0.0 && atoms[k].0 < 1.0).collect();
        let size = m + interior.len();
        let st = NewtonState::evaluate(table, &atoms, &interior, 0.0);
        let spread = st.residual[..m].iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - st.residual[..m].iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let slope = interior.iter().map(|&k| st.d1[k].abs()).fold(0.0, f64::max);
        if spread <= ASCENT_TOL && slope <= ASCENT_TOL {
            break;
        }
        let (grad, hess) = ascent_model(&st, &atoms, &interior);
        let scale = hess.diagonal().amax().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        for _ in 0..ASCENT_DAMPING_TRIES {
            let mut kkt = DMatrix::zeros(size + 1, size + 1);
            kkt.view_mut((0, 0), (size, size)).copy_from(&hess);
            for i in 0..size {
                kkt[(i, i)] -= mu * scale;
            }
            for k in 0..m {
                kkt[(k, size)] = 1.0;
                kkt[(size, k)] = 1.0;
            }
            let mut rhs = DVector::zeros(size + 1);
            rhs.rows_mut(0, size).copy_from(&(-&grad));
            let step = kkt.lu().solve(&rhs).map(|v| v.rows(0, size).into_owned());
            let Some(d) = step.filter(|d| grad.dot(d) > 0.0) else {
                mu = if mu == 0.0 { 1e-8 } else { mu * 10.0 };
                continue;
            };
            let mut t = 1.0f64;
            for k in 0..m {
                if d[k] < 0.0 {
                    t = t.min(atoms[k].1 / -d[k]);
                }
            }
            for (a, &k) in interior.iter().enumerate() {
                let (x, dx) = (atoms[k].0, d[m + a]);
                if dx > 0.0 {
                    t = t.min(0.5 * (1.0 - x) / dx);
                } else if dx < 0.0 {
                    t = t.min(0.5 * x / -dx);
                }
            }
            let trial = ascent_trial(&atoms, &interior, &d, t, config);
            let v = information(table, &trial);
            if v > value {
                atoms = trial;
                value = v;
                accepted = true;
                mu = if mu < 1e-10 { 0.0 } else { mu / 3.0 };
                break;
            }
            mu = if mu == 0.0 { 1e-8 } else { mu * 10.0 };
        }
        if !accepted {
            break;
        }
    }
    atoms
}

/// Optimizes weights and positions for a fixed number of atoms. The joint
/// Newton polish is tried first; if it fails, the mutual information is
/// ascended jointly in weights and positions and the polish is retried.
fn support_step(table: &LogPmfTable, dist: &DiscreteInput, config: &SolverConfig) -> Result<DiscreteInput> {
    let mut atoms = fit_weights(table, ba_weights(table, &dist.atoms().collect::<Vec<_>>(), config), config);
    if let Some(polished) = polish_jointly(table, &atoms, config) {
        atoms = polished;
    } else {
        let ascended = ascend_jointly(table, &atoms, config);
        atoms = polish_jointly(table, &ascended, config)
            .or_else(|| polish_after_drop(table, &ascended, config))
            .unwrap_or(ascended);
    }
    let mut atoms = merge_atoms(atoms, config.merge_radius);
    if config.symmetrize {
        atoms = symmetrize_atoms(&atoms, config.merge_radius);
    }
    to_input(&with_endpoints(atoms, config.prune_weight))
}

/// Adds up to `MAX_ESCAPES` grid maxima whose density exceeds the capacity
/// estimate by more than `kkt_tol` and that no current atom climbs to.
fn insert_escapes(dist: &DiscreteInput, cert: &Certificate, config: &SolverConfig) -> Result<DiscreteInput> {
    let values = &cert.grid_values;
    let last = values.len() - 1;
    let climb = |mut j: usize| loop {
        let left = j > 0 && values[j - 1] > values[j];
        let right = j < last && values[j + 1] > values[j];
        match (left, right) {
            (false, false) => return j,
            (true, false) => j -= 1,
            (false, true) => j += 1,
            (true, true) => j = if values[j - 1] >= values[j + 1] { j - 1 } else { j + 1 },
        }
    };
    let owned: Vec<usize> = dist.points().iter().map(|&x| climb((x * last as f64).round() as usize)).collect();
    let cap = cert.summary.capacity_nats;
    let mut candidates: Vec<&GridMax> =
        cert.maxima.iter().filter(|g| g.value - cap > config.kkt_tol).filter(|g| !owned.contains(&g.index)).collect();
    candidates.sort_by(|a, b| b.value.total_cmp(&a.value));
    let mut atoms: Vec<(f64, f64)> = dist.atoms().collect();
    for g in candidates.into_iter().take(MAX_ESCAPES) {
        atoms.push((g.x, ESCAPE_WEIGHT));
        if config.symmetrize {
            atoms.push((1.0 - g.x, ESCAPE_WEIGHT));
        }
    }
    let mut atoms = merge_atoms(atoms, config.merge_radius);
    if config.symmetrize {
        atoms = symmetrize_atoms(&atoms, config.merge_radius);
    }
    to_input(&atoms)
}
