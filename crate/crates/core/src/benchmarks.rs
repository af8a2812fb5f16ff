//! Reference cocycles with known or cross-checkable exponents.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::dmatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cocycle::{CocyclePair, FiberMap};
use crate::error::Result;
use crate::linalg::Mat;
use crate::rng::stream_rng;
use crate::symbol_space::{Kernel, SymbolSpace};

pub fn rotation(theta: f64) -> Mat {
    dmatrix![theta.cos(), -theta.sin(); theta.sin(), theta.cos()]
}

/// `R(θ) diag(λ, 1/λ) R(θ)ᵀ`: expands along angle `θ`.
pub fn rotated_hyperbolic(lambda: f64, theta: f64) -> Mat {
    let r = rotation(theta);
    &r * dmatrix![lambda, 0.0; 0.0, 1.0 / lambda] * r.transpose()
}

fn two_state_kernel(space: &Arc<SymbolSpace>) -> Result<Kernel> {
    Kernel::new(space.clone(), vec![vec![0.7, 0.3], vec![0.4, 0.6]])
}

/// The same matrix on every edge of a two-state chain.
pub fn constant(a: Mat) -> Result<CocyclePair> {
    let sp = Arc::new(SymbolSpace::discrete(2));
    CocyclePair::new(FiberMap::constant(sp.clone(), a)?, two_state_kernel(&sp)?)
}

/// Constant `diag(2, 1/2)`: `L₁ = log 2`, `L₂ = −log 2`.
pub fn diagonal_constant() -> Result<CocyclePair> {
    constant(dmatrix![2.0, 0.0; 0.0, 0.5])
}

/// Rotation by an angle that depends on the target symbol: `L₁ = L₂ = 0`.
pub fn rotation_cocycle() -> Result<CocyclePair> {
    let sp = Arc::new(SymbolSpace::discrete(2));
    let angles = [0.7, 2.0f64.sqrt()];
    let fiber = FiberMap::from_fn(sp.clone(), 2, |to, _| rotation(angles[to]))?;
    CocyclePair::new(fiber, two_state_kernel(&sp)?)
}

/// I.i.d. base with `A(·, ω₀) = diag(e^{a(ω₀)}, e^{b(ω₀)})`:
/// `L₁ = max(Σ μ_i a_i, Σ μ_i b_i)`.
pub fn iid_diagonal(mu: &[f64], a: &[f64], b: &[f64]) -> Result<CocyclePair> {
    let sp = Arc::new(SymbolSpace::discrete(mu.len()));
    let fiber = FiberMap::from_fn(sp.clone(), 2, |_, from| dmatrix![a[from].exp(), 0.0; 0.0, b[from].exp()])?;
    CocyclePair::new(fiber, Kernel::iid(sp, mu)?)
}

/// The shipped diagonal i.i.d. example and its closed-form exponent.
pub fn iid_diagonal_default() -> Result<(CocyclePair, f64)> {
    let mu = [0.5, 0.3, 0.2];
    let a = [0.4, -0.2, 0.1];
    let b = [-0.3, 0.5, 0.2];
    let ea: f64 = mu.iter().zip(&a).map(|(m, x)| m * x).sum();
    let eb: f64 = mu.iter().zip(&b).map(|(m, x)| m * x).sum();
    Ok((iid_diagonal(&mu, &a, &b)?, ea.max(eb)))
}

/// Constant `[[e^a, 1], [0, e^b]]`: `ê₁` is invariant with exponent `a`.
pub fn triangular(a: f64, b: f64) -> Result<CocyclePair> {
    constant(dmatrix![a.exp(), 1.0; 0.0, b.exp()])
}

/// Two symbols whose matrices expand along different directions.
pub fn hyperbolic_two_symbol() -> Result<CocyclePair> {
    let sp = Arc::new(SymbolSpace::discrete(2));
    let angles = [0.0, PI / 3.0];
    let fiber = FiberMap::from_fn(sp.clone(), 2, |to, _| rotated_hyperbolic(2.0, angles[to]))?;
    CocyclePair::new(fiber, two_state_kernel(&sp)?)
}

/// Seeded ergodic kernel with all entries positive.
pub fn random_kernel(space: Arc<SymbolSpace>, seed: u64) -> Result<Kernel> {
    let n = space.len();
    let mut rng = stream_rng(seed, 0);
    let rows = (0..n)
        .map(|_| {
            let r: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3) + 1e-2).collect();
            let s: f64 = r.iter().sum();
            r.into_iter().map(|v| v / s).collect()
        })
        .collect();
    Kernel::new(space, rows)
}

/// Seeded Gaussian fiber map normalized to unit determinant modulus.
pub fn random_fiber(space: Arc<SymbolSpace>, m: usize, seed: u64) -> Result<FiberMap> {
    let mut rng = stream_rng(seed, 1);
    FiberMap::from_fn(space, m, |_, _| {
        let a = Mat::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let d = a.determinant().abs().powf(1.0 / m as f64);
        a / d
    })
}

pub fn random_pair(symbols: usize, m: usize, seed: u64) -> Result<CocyclePair> {
    let sp = Arc::new(SymbolSpace::discrete(symbols));
    CocyclePair::new(random_fiber(sp.clone(), m, seed)?, random_kernel(sp, seed)?)
}

/// Planar benchmarks used for the Furstenberg-formula cross-check.
pub fn planar_benchmarks() -> Result<Vec<(&'static str, CocyclePair)>> {
    let sp3 = Arc::new(SymbolSpace::discrete(3));
    let shear = {
        let fiber = FiberMap::from_fn(sp3.clone(), 2, |to, _| match to {
            0 => dmatrix![1.0, 1.0; 0.0, 1.0],
            1 => dmatrix![1.0, 0.0; 1.0, 1.0],
            _ => rotated_hyperbolic(1.5, 1.0),
        })?;
        let k = Kernel::new(sp3.clone(), vec![vec![0.2, 0.5, 0.3], vec![0.4, 0.2, 0.4], vec![0.3, 0.3, 0.4]])?;
        CocyclePair::new(fiber, k)?
    };
    let fan = {
        let sp4 = Arc::new(SymbolSpace::on_line(&[0.0, 1.0, 2.0, 3.0])?);
        let fiber = FiberMap::from_fn(sp4.clone(), 2, |to, from| {
            rotated_hyperbolic(1.8 + 0.1 * from as f64, PI * to as f64 / 5.0)
        })?;
        let k = Kernel::new(
            sp4,
            vec![
                vec![0.1, 0.4, 0.3, 0.2],
                vec![0.3, 0.1, 0.3, 0.3],
                vec![0.25, 0.25, 0.25, 0.25],
                vec![0.4, 0.3, 0.2, 0.1],
            ],
        )?;
        CocyclePair::new(fiber, k)?
    };
    Ok(vec![
        ("hyperbolic-two-symbol", hyperbolic_two_symbol()?),
        ("shear-three-symbol", shear),
        ("fan-four-symbol", fan),
        ("random-four-symbol", random_pair(4, 2, 7)?),
        ("random-five-symbol", random_pair(5, 2, 23)?),
    ])
}
