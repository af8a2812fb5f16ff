//! Finite metric symbol spaces, transition kernels, and the distances
//! between probability vectors on them.

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fit::geometric_fit;
use crate::linalg::Mat;
use crate::rng::stream_rng;
use crate::transport::solve_transport;

/// Row sums and measure totals must match 1 within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Kernels whose second eigenvalue modulus reaches `1 - ERGODIC_MARGIN` are rejected.
pub const ERGODIC_MARGIN: f64 = 1e-10;
/// Largest symbol space handled by the exact transport solver.
pub const MAX_TRANSPORT_SIZE: usize = 512;

/// A finite metric space of symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSpace {
    labels: Vec<String>,
    dist: Vec<Vec<f64>>,
}

impl SymbolSpace {
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::invalid("space.labels", "symbol space is empty"));
        }
        let mut seen = HashSet::new();
        for (i, l) in labels.iter().enumerate() {
            if !seen.insert(l.as_str()) {
                return Err(Error::invalid(format!("space.labels[{i}]"), format!("duplicate label `{l}`")));
            }
        }
        if dist.len() != n {
            return Err(Error::invalid("space.dist", format!("expected {n} rows, found {}", dist.len())));
        }
        for (i, row) in dist.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!("space.dist[{i}]"), format!("expected {n} entries")));
            }
            for (j, &d) in row.iter().enumerate() {
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::invalid(format!("space.dist[{i}][{j}]"), "distance must be finite and nonnegative"));
                }
            }
            if row[i] != 0.0 {
                return Err(Error::invalid(format!("space.dist[{i}][{i}]"), "self-distance must be 0"));
            }
        }
        for i in 0..n {
            for j in 0..i {
                if dist[i][j] != dist[j][i] {
                    return Err(Error::invalid(format!("space.dist[{i}][{j}]"), "distance matrix is not symmetric"));
                }
                if dist[i][j] == 0.0 {
                    return Err(Error::invalid(format!("space.dist[{i}][{j}]"), "distinct symbols at distance 0"));
                }
            }
        }
        let space = SymbolSpace { labels, dist };
        space.check_triangle()?;
        Ok(space)
    }

    /// `n` symbols labelled `0..n` with the discrete metric.
    pub fn discrete(n: usize) -> Self {
        let labels = (0..n).map(|i| i.to_string()).collect();
        let dist = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        SymbolSpace { labels, dist }
    }

    /// Points on the real line with `|x - y|` distances.
    pub fn on_line(points: &[f64]) -> Result<Self> {
        let labels = (0..points.len()).map(|i| i.to_string()).collect();
        let dist = points
            .iter()
            .map(|x| points.iter().map(|y| (x - y).abs()).collect())
            .collect();
        Self::new(labels, dist)
    }

    fn check_triangle(&self) -> Result<()> {
        let n = self.len();
        let check = |i: usize, j: usize, k: usize| -> Result<()> {
            if self.dist[i][k] > self.dist[i][j] + self.dist[j][k] + 1e-12 {
                return Err(Error::invalid(
                    format!("space.dist[{i}][{k}]"),
                    format!("triangle inequality fails through symbol {j}"),
                ));
            }
            Ok(())
        };
        if n <= 64 {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        check(i, j, k)?;
                    }
                }
            }
        } else {
            let mut rng = stream_rng(0x7472_6961_6e67_6c65, 0);
            for _ in 0..200_000 {
                check(rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n))?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn distances(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Same space with distances divided by the diameter.
    pub fn normalized(&self) -> Self {
        let d = self.diameter();
        if d == 0.0 {
            return self.clone();
        }
        SymbolSpace {
            labels: self.labels.clone(),
            dist: self.dist.iter().map(|r| r.iter().map(|v| v / d).collect()).collect(),
        }
    }
}

/// Index set a [`Measure`] lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Carrier {
    /// Σ
    Sigma { symbols: usize },
    /// Σ × grid, indexed `symbol * grid + g`.
    SigmaP { symbols: usize, grid: usize },
    /// Σ × Σ × grid, indexed `(next * symbols + current) * grid + g`.
    SigmaSigmaP { symbols: usize, grid: usize },
}

impl Carrier {
    pub fn len(&self) -> usize {
        match *self {
            Carrier::Sigma { symbols } => symbols,
            Carrier::SigmaP { symbols, grid } => symbols * grid,
            Carrier::SigmaSigmaP { symbols, grid } => symbols * symbols * grid,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A probability vector on a declared carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    carrier: Carrier,
    weights: Vec<f64>,
}

impl Measure {
    pub fn new(carrier: Carrier, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != carrier.len() {
            return Err(Error::DimensionMismatch(format!(
                "measure has {} weights, carrier has {}",
                weights.len(),
                carrier.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(format!("weights[{i}]"), "weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::invalid("weights", format!("weights sum to {total}, not 1")));
        }
        Ok(Measure { carrier, weights })
    }

    /// Normalizes a nonnegative vector and wraps it.
    pub(crate) fn from_unnormalized(carrier: Carrier, mut weights: Vec<f64>) -> Result<Self> {
        for w in weights.iter_mut() {
            if *w < 0.0 && *w > -1e-13 {
                *w = 0.0;
            }
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("weights", "measure has no mass"));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Measure::new(carrier, weights)
    }

    pub fn dirac(symbols: usize, x: usize) -> Self {
        let mut w = vec![0.0; symbols];
        w[x] = 1.0;
        Measure { carrier: Carrier::Sigma { symbols }, weights: w }
    }

    pub fn uniform(carrier: Carrier) -> Self {
        let n = carrier.len();
        Measure { carrier, weights: vec![1.0 / n as f64; n] }
    }

    pub fn carrier(&self) -> Carrier {
        self.carrier
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}

/// Total-variation distance `½ Σ |p_i - q_i|`.
pub fn tv_distance(p: &Measure, q: &Measure) -> Result<f64> {
    if p.carrier != q.carrier {
        return Err(Error::DimensionMismatch(format!("carriers {:?} and {:?} differ", p.carrier, q.carrier)));
    }
    Ok(0.5 * p.weights.iter().zip(&q.weights).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Exact W₁ with both Kantorovich–Rubinstein certificates.
#[derive(Debug, Clone)]
pub struct W1Solution {
    /// Optimal transport cost (coupling infimum).
    pub value: f64,
    pub coupling: Vec<Vec<f64>>,
    /// A 1-Lipschitz potential attaining the dual supremum.
    pub potential: Vec<f64>,
    /// `Σ potential · (p - q)`.
    pub dual_value: f64,
}

pub fn wasserstein1_solution(p: &Measure, q: &Measure, space: &SymbolSpace) -> Result<W1Solution> {
    let n = space.len();
    if n > MAX_TRANSPORT_SIZE {
        return Err(Error::TransportTooLarge(n));
    }
    let expected = Carrier::Sigma { symbols: n };
    if p.carrier != expected || q.carrier != expected {
        return Err(Error::DimensionMismatch("W1 requires measures on the symbol space".into()));
    }
    let plan = solve_transport(&p.weights, &q.weights, &space.dist);
    // c-transform of the sink potential: 1-Lipschitz because the cost is a metric.
    let potential: Vec<f64> = (0..n)
        .map(|x| {
            (0..n)
                .map(|j| space.dist[x][j] - plan.sink_potential[j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let dual_value = (0..n).map(|x| potential[x] * (p.weights[x] - q.weights[x])).sum();
    Ok(W1Solution { value: plan.cost, coupling: plan.coupling, potential, dual_value })
}

/// Wasserstein-1 distance between two measures on `space`.
pub fn wasserstein1(p: &Measure, q: &Measure, space: &SymbolSpace) -> Result<f64> {
    Ok(wasserstein1_solution(p, q, space)?.value)
}

/// A row-stochastic transition matrix on a symbol space.
#[derive(Debug, Clone)]
pub struct Kernel {
    space: Arc<SymbolSpace>,
    rows: Vec<Vec<f64>>,
    cdf: Vec<Vec<f64>>,
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && *self.space == *other.space
    }
}

impl Kernel {
    pub fn new(space: Arc<SymbolSpace>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = space.len();
        if rows.len() != n {
            return Err(Error::invalid("kernel.rows", format!("expected {n} rows, found {}", rows.len())));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!("kernel.rows[{i}]"), format!("expected {n} entries, found {}", row.len())));
            }
            if let Some(j) = row.iter().position(|p| !(p.is_finite() && (0.0..=1.0).contains(p))) {
                return Err(Error::invalid(format!("kernel.rows[{i}][{j}]"), "transition probability outside [0, 1]"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!("kernel.rows[{i}]"), format!("row sums to {s}, not 1")));
            }
        }
        let cdf = rows
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Kernel { space, rows, cdf })
    }

    pub fn from_matrix(space: Arc<SymbolSpace>, p: &Mat) -> Result<Self> {
        Self::new(space, crate::linalg::to_rows(p))
    }

    pub fn identity(space: Arc<SymbolSpace>) -> Self {
        let n = space.len();
        let rows = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self::new(space, rows).expect("identity kernel is stochastic")
    }

    /// Every row equal to `mu`.
    pub fn iid(space: Arc<SymbolSpace>, mu: &[f64]) -> Result<Self> {
        let rows = vec![mu.to_vec(); space.len()];
        Self::new(space, rows)
    }

    pub fn uniform(space: Arc<SymbolSpace>) -> Self {
        let n = space.len();
        Self::iid(space, &vec![1.0 / n as f64; n]).expect("uniform kernel is stochastic")
    }

    pub fn space(&self) -> &Arc<SymbolSpace> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    /// Successors of `x` with positive probability.
    pub fn support(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows[x].iter().copied().enumerate().filter(|(_, p)| *p > 0.0)
    }

    pub fn row_measure(&self, x: usize) -> Measure {
        Measure { carrier: Carrier::Sigma { symbols: self.len() }, weights: self.rows[x].clone() }
    }

    pub fn matrix(&self) -> Mat {
        let n = self.len();
        Mat::from_fn(n, n, |i, j| self.rows[i][j])
    }

    /// Inverse-CDF step from `x` driven by a uniform draw `u ∈ [0, 1)`.
    #[inline]
    pub fn step(&self, x: usize, u: f64) -> usize {
        let cdf = &self.cdf[x];
        let total = *cdf.last().expect("nonempty row");
        let target = u * total;
        let mut lo = 0;
        let mut hi = cdf.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if cdf[mid] > target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        // Never land on a zero-probability symbol through rounding.
        while self.rows[x][lo] == 0.0 && lo > 0 {
            lo -= 1;
        }
        lo
    }

    /// One-step composition: rows of `self` followed by `next`.
    pub fn compose(&self, next: &Kernel) -> Result<Kernel> {
        if *self.space != *next.space {
            return Err(Error::DimensionMismatch("kernels live on different symbol spaces".into()));
        }
        let prod = self.matrix() * next.matrix();
        if !crate::linalg::is_finite(&prod) {
            return Err(Error::Overflow("kernel product is not finite".into()));
        }
        let n = self.len();
        let rows = (0..n)
            .map(|i| {
                let r: Vec<f64> = (0..n).map(|j| prod[(i, j)].clamp(0.0, 1.0)).collect();
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect();
        Kernel::new(self.space.clone(), rows)
    }

    /// Modulus of the second-largest eigenvalue of the transition matrix.
    pub fn lambda2_mod(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let eig: Vec<Complex<f64>> = self.matrix().complex_eigenvalues().iter().copied().collect();
        let mut moduli: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        moduli[1]
    }
}

/// n-step kernel `Kⁿ`.
pub fn kernel_iterate(k: &Kernel, n: usize) -> Result<Kernel> {
    if n == 0 {
        return Err(Error::invalid("n", "kernel iterate requires n >= 1"));
    }
    let mut result: Option<Kernel> = None;
    let mut base = k.clone();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => r.compose(&base)?,
            });
        }
        e >>= 1;
        if e > 0 {
            base = base.compose(&base)?;
        }
    }
    Ok(result.expect("n >= 1"))
}

fn stationary_residual(p: &[Vec<f64>], mu: &[f64]) -> (Vec<f64>, f64) {
    let n = mu.len();
    let mut next = vec![0.0; n];
    for (x, row) in p.iter().enumerate() {
        let w = mu[x];
        if w == 0.0 {
            continue;
        }
        for (y, pxy) in row.iter().enumerate() {
            next[y] += w * pxy;
        }
    }
    let s: f64 = next.iter().sum();
    next.iter_mut().for_each(|v| *v /= s);
    let res = next.iter().zip(mu).map(|(a, b)| (a - b).abs()).sum();
    (next, res)
}

/// Dominant left eigenvector by a direct solve of `μ(P - I) = 0, Σμ = 1`.
fn stationary_by_solve(k: &Kernel) -> Option<Vec<f64>> {
    let n = k.len();
    let p = k.matrix();
    let mut a = p.transpose() - Mat::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b)?;
    let mut mu: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = mu.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return None;
    }
    mu.iter_mut().for_each(|v| *v /= s);
    Some(mu)
}

const POWER_MAX_ITERS: usize = 1_000_000;
const STALL_WINDOW: usize = 1000;

/// Stationary distribution `μ` with `‖μP - μ‖₁ ≤ tol`.
///
/// Power iteration from the uniform vector; falls back to a direct solve of
/// the left eigenproblem when the residual stops halving over a window of
/// 1000 iterations.
pub fn stationary_distribution(k: &Kernel, tol: f64) -> Result<Measure> {
    let lambda2_mod = k.lambda2_mod();
    if lambda2_mod >= 1.0 - ERGODIC_MARGIN {
        return Err(Error::NonErgodicKernel { lambda2_mod });
    }
    let n = k.len();
    let carrier = Carrier::Sigma { symbols: n };
    let mut mu = vec![1.0 / n as f64; n];
    let mut window_start_res = f64::INFINITY;
    let mut res = f64::INFINITY;
    for it in 0..POWER_MAX_ITERS {
        let (next, r) = stationary_residual(&k.rows, &mu);
        res = r;
        if res <= tol {
            return Measure::from_unnormalized(carrier, mu);
        }
        mu = next;
        if it % STALL_WINDOW == 0 {
            if res > 0.5 * window_start_res {
                break;
            }
            window_start_res = res;
        }
    }
    let mut mu = stationary_by_solve(k).ok_or(Error::NoConvergence { iterations: POWER_MAX_ITERS, residual: res })?;
    for _ in 0..8 {
        let (next, r) = stationary_residual(&k.rows, &mu);
        if r <= tol {
            return Measure::from_unnormalized(carrier, mu);
        }
        mu = next;
        res = r;
    }
    Err(Error::NoConvergence { iterations: POWER_MAX_ITERS, residual: res })
}

/// Largest row-wise Wasserstein-1 distance between two kernels.
pub fn kernel_distance(k: &Kernel, l: &Kernel) -> Result<f64> {
    if *k.space != *l.space {
        return Err(Error::DimensionMismatch("kernels live on different symbol spaces".into()));
    }
    let mut worst: f64 = 0.0;
    for x in 0..k.len() {
        if k.rows[x] == l.rows[x] {
            continue;
        }
        worst = worst.max(wasserstein1(&k.row_measure(x), &l.row_measure(x), &k.space)?);
    }
    Ok(worst)
}

/// Geometric-ergodicity diagnostics of a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicityReport {
    /// Fitted rate σ̂ of `sup_x ‖Kⁿ_x - μ‖_TV`; 0 for one-step mixing.
    pub sigma_hat: f64,
    /// Envelope constant: `sup_x ‖Kⁿ_x - μ‖_TV ≤ C_hat σ̂ⁿ` on the fitted range.
    pub c_hat: f64,
    /// First n with residual ≤ 1e-3.
    pub n_star: Option<usize>,
    pub lambda2_mod: f64,
    /// Residual is already below the fit floor at n = 1.
    pub one_step_mixing: bool,
    /// `sup_x ‖Kⁿ_x - μ‖_TV` for n = 1, 2, ….
    pub residuals: Vec<f64>,
    /// Number of residuals used by the fit.
    pub fit_points: usize,
}

/// Residuals below this value are excluded from the rate fit.
pub const RESIDUAL_FLOOR: f64 = 1e-13;

pub fn ergodicity_report(k: &Kernel, n_max: usize) -> Result<ErgodicityReport> {
    if n_max < 10 {
        return Err(Error::invalid("n_max", "ergodicity report needs n_max >= 10"));
    }
    let lambda2_mod = k.lambda2_mod();
    if lambda2_mod >= 1.0 - ERGODIC_MARGIN {
        return Err(Error::NonErgodicKernel { lambda2_mod });
    }
    let mu = stationary_by_solve(k).ok_or(Error::NonErgodicKernel { lambda2_mod })?;
    let p = k.matrix();
    let mut pn = p.clone();
    let n = k.len();
    let mut residuals = Vec::new();
    for step in 1..=n_max {
        if step > 1 {
            pn = &pn * &p;
            if !crate::linalg::is_finite(&pn) {
                return Err(Error::Overflow("kernel power is not finite".into()));
            }
        }
        let r = (0..n)
            .map(|x| 0.5 * (0..n).map(|y| (pn[(x, y)] - mu[y]).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        residuals.push(r);
        if r <= 0.1 * RESIDUAL_FLOOR {
            break;
        }
    }
    let n_star = residuals.iter().position(|r| *r <= 1e-3).map(|i| i + 1);
    let first = residuals[0];
    let last = *residuals.last().expect("at least one step");
    if first > RESIDUAL_FLOOR && last > 0.1 * first {
        return Err(Error::NonErgodicKernel { lambda2_mod });
    }
    if first <= RESIDUAL_FLOOR {
        return Ok(ErgodicityReport {
            sigma_hat: 0.0,
            c_hat: first,
            n_star,
            lambda2_mod,
            one_step_mixing: true,
            residuals,
            fit_points: 0,
        });
    }
    let steps: Vec<f64> = (1..=residuals.len()).map(|i| i as f64).collect();
    let above = residuals.iter().filter(|r| **r > RESIDUAL_FLOOR).count();
    let fit = if above >= 2 {
        geometric_fit(&steps, &residuals, RESIDUAL_FLOOR)
    } else {
        // A single point above the floor: bound the rate by the drop to the floor.
        geometric_fit(&steps[..2], &[first, RESIDUAL_FLOOR], 0.0)
    }
    .ok_or_else(|| Error::FitFailure("ergodicity residuals".into()))?;
    Ok(ErgodicityReport {
        sigma_hat: fit.rate,
        c_hat: fit.envelope,
        n_star,
        lambda2_mod,
        one_step_mixing: false,
        residuals,
        fit_points: fit.points,
    })
}

/// Samples `(ω₀, …, ω_n)` with `ω₀ = start` from the trajectory-0 stream of `seed`.
pub fn sample_chain(k: &Kernel, start: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = stream_rng(seed, 0);
    sample_chain_with(k, start, n, &mut rng)
}

pub fn sample_chain_with<R: Rng + ?Sized>(k: &Kernel, start: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("n", "path length must be at least 1"));
    }
    if start >= k.len() {
        return Err(Error::invalid("start", "start symbol out of range"));
    }
    let mut path = Vec::with_capacity(n + 1);
    let mut x = start;
    path.push(x);
    for _ in 0..n {
        x = k.step(x, rng.random::<f64>());
        path.push(x);
    }
    Ok(path)
}
