//! Fiber maps over pairs of symbols and the Markov cocycles they form.
//!
//! Matrices are indexed `(to, from)`: `A(ω₁, ω₀)` maps the fiber over `ω₀`
//! to the fiber over `ω₁`, and products read right to left along the path.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::symbol_space::{
    ergodicity_report, kernel_distance, stationary_distribution, ErgodicityReport, Kernel, Measure, SymbolSpace,
};

pub use crate::linalg::singular_values;

/// Relative determinant floor for membership in GL_m.
pub const INVERTIBILITY_FLOOR: f64 = 1e-12;

/// A matrix `A(to, from)` for every ordered pair of symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberMap {
    space: Arc<SymbolSpace>,
    m: usize,
    mats: Vec<Mat>,
}

fn check_matrix(path: impl Fn() -> String, mat: &Mat, m: usize) -> Result<()> {
    if mat.nrows() != m || mat.ncols() != m {
        return Err(Error::invalid(path(), format!("expected a {m}x{m} matrix")));
    }
    if !linalg::is_finite(mat) {
        return Err(Error::invalid(path(), "matrix has non-finite entries"));
    }
    let norm = linalg::op_norm(mat);
    let det = mat.determinant().abs();
    if norm == 0.0 || det < INVERTIBILITY_FLOOR * norm.powi(m as i32) {
        return Err(Error::invalid(path(), format!("matrix is not invertible (|det| = {det:e})")));
    }
    Ok(())
}

impl FiberMap {
    /// `mats[to * n + from]` holds `A(to, from)`.
    pub fn new(space: Arc<SymbolSpace>, m: usize, mats: Vec<Mat>) -> Result<Self> {
        let n = space.len();
        if m == 0 {
            return Err(Error::invalid("fiber.m", "fiber dimension must be positive"));
        }
        if mats.len() != n * n {
            return Err(Error::invalid("fiber.matrices", format!("expected {} matrices, found {}", n * n, mats.len())));
        }
        for (idx, mat) in mats.iter().enumerate() {
            let (to, from) = (idx / n, idx % n);
            check_matrix(|| format!("fiber.matrices[\"{to},{from}\"]"), mat, m)?;
        }
        Ok(FiberMap { space, m, mats })
    }

    pub fn from_fn(space: Arc<SymbolSpace>, m: usize, mut f: impl FnMut(usize, usize) -> Mat) -> Result<Self> {
        let n = space.len();
        let mats = (0..n * n).map(|idx| f(idx / n, idx % n)).collect();
        Self::new(space, m, mats)
    }

    /// The same matrix on every edge.
    pub fn constant(space: Arc<SymbolSpace>, mat: Mat) -> Result<Self> {
        let m = mat.nrows();
        Self::from_fn(space, m, |_, _| mat.clone())
    }

    pub fn space(&self) -> &Arc<SymbolSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, to: usize, from: usize) -> &Mat {
        &self.mats[to * self.space.len() + from]
    }

    pub fn matrices(&self) -> &[Mat] {
        &self.mats
    }

    /// Largest operator norm over all edges.
    pub fn max_norm(&self) -> f64 {
        self.mats.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }
}

/// `Aⁿ(ω) = A(ω_n, ω_{n-1}) ⋯ A(ω₁, ω₀)` for `path = (ω₀, …, ω_n)`.
pub fn cocycle_product(a: &FiberMap, path: &[usize]) -> Result<Mat> {
    if path.len() < 2 {
        return Err(Error::invalid("path", "a cocycle product needs at least two symbols"));
    }
    let mut acc = a.get(path[1], path[0]).clone();
    for w in path.windows(2).skip(1) {
        acc = a.get(w[1], w[0]) * acc;
    }
    Ok(acc)
}

fn same_space(a: &SymbolSpace, b: &SymbolSpace) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch("objects live on different symbol spaces".into()));
    }
    Ok(())
}

/// `sup ‖A(to, from) − B(to, from)‖` over all edges.
pub fn fiber_distance(a: &FiberMap, b: &FiberMap) -> Result<f64> {
    same_space(&a.space, &b.space)?;
    if a.m != b.m {
        return Err(Error::DimensionMismatch(format!("fiber dimensions {} and {}", a.m, b.m)));
    }
    Ok(a.mats
        .iter()
        .zip(&b.mats)
        .map(|(x, y)| if x == y { 0.0 } else { linalg::op_norm(&(x - y)) })
        .fold(0.0, f64::max))
}

/// `k`-th exterior power, a fiber map of dimension `C(m, k)`.
pub fn exterior_power(a: &FiberMap, k: usize) -> Result<FiberMap> {
    if k == 0 || k > a.m {
        return Err(Error::invalid("k", format!("exterior degree must lie in 1..={}", a.m)));
    }
    let mats = a.mats.iter().map(|m| linalg::exterior_power_matrix(m, k)).collect();
    FiberMap::new(a.space.clone(), linalg::binomial(a.m, k), mats)
}

/// Largest ratio `‖A(x, y) − A(x′, y)‖ / dist(x, x′)` over the target argument.
pub fn lipschitz_constant(a: &FiberMap) -> f64 {
    let n = a.space.len();
    let mut worst: f64 = 0.0;
    for y in 0..n {
        for x in 0..n {
            for x2 in 0..x {
                let diff = linalg::op_norm(&(a.get(x, y) - a.get(x2, y)));
                worst = worst.max(diff / a.space.dist(x, x2));
            }
        }
    }
    worst
}

/// Horizon for the ergodicity check run when a pair is built.
pub const PAIR_ERGODICITY_HORIZON: usize = 5000;

/// A Markov cocycle `(A, K)` over a uniformly ergodic kernel.
#[derive(Debug, Clone)]
pub struct CocyclePair {
    fiber: FiberMap,
    kernel: Kernel,
    mu: Measure,
    ergodicity: ErgodicityReport,
}

impl CocyclePair {
    pub fn new(fiber: FiberMap, kernel: Kernel) -> Result<Self> {
        same_space(&fiber.space, kernel.space())?;
        let ergodicity = ergodicity_report(&kernel, PAIR_ERGODICITY_HORIZON)?;
        let mu = stationary_distribution(&kernel, 1e-12)?;
        Ok(CocyclePair { fiber, kernel, mu, ergodicity })
    }

    pub fn fiber(&self) -> &FiberMap {
        &self.fiber
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Stationary distribution of the base chain.
    pub fn mu(&self) -> &Measure {
        &self.mu
    }

    pub fn ergodicity(&self) -> &ErgodicityReport {
        &self.ergodicity
    }

    pub fn space(&self) -> &Arc<SymbolSpace> {
        self.kernel.space()
    }

    pub fn symbols(&self) -> usize {
        self.kernel.len()
    }

    pub fn dim(&self) -> usize {
        self.fiber.m
    }

    pub fn with_fiber(&self, fiber: FiberMap) -> Result<Self> {
        same_space(&fiber.space, self.kernel.space())?;
        Ok(CocyclePair { fiber, ..self.clone() })
    }

    pub fn with_kernel(&self, kernel: Kernel) -> Result<Self> {
        CocyclePair::new(self.fiber.clone(), kernel)
    }

    /// Stationary average of `log|det A|` under `μ ⊗ K`.
    pub fn mean_log_det(&self) -> f64 {
        let n = self.symbols();
        let mu = self.mu.weights();
        let mut acc = 0.0;
        for x in 0..n {
            for (y, p) in self.kernel.support(x) {
                acc += mu[x] * p * self.fiber.get(y, x).determinant().abs().ln();
            }
        }
        acc
    }
}

/// `max(d_∞(A, B), d_W1(K, L))`.
pub fn cocycle_distance(x: &CocyclePair, y: &CocyclePair) -> Result<f64> {
    let df = fiber_distance(&x.fiber, &y.fiber)?;
    let dk = kernel_distance(&x.kernel, &y.kernel)?;
    Ok(df.max(dk))
}
