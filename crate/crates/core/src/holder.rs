//! Hölder seminorms on the grid, the average Hölder constant `k_α`, the
//! computable Hölder exponent, and empirical continuity scans of `L₁`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cocycle::{cocycle_distance, fiber_distance, CocyclePair, FiberMap};
use crate::error::{Error, Result};
use crate::fit::{linear_fit, mean_and_std_err};
use crate::linalg::{self, Mat};
use crate::lyapunov::{check_quasi_irreducible_m2, le_gap_check, trajectory_statistics, GapCheck, INVARIANCE_TOL};
use crate::markov_operator::{HolderObservable, Observable};
use crate::projective::{delta, ProjectiveGrid};
use crate::rng::{derive_seed, stream_rng};
use crate::symbol_space::{kernel_distance, kernel_iterate, wasserstein1, Kernel};

/// Largest number of paths enumerated exactly.
pub const PATH_LIMIT: f64 = 1e6;
/// Grid pairs scanned exactly by [`v_alpha`] before subsampling.
pub const PAIR_LIMIT: usize = 10_000_000;
const SUBSAMPLE_SEED: u64 = 0x7661_6c70_6861;

/// Grid Hölder seminorm with a flag for deterministic pair subsampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VAlpha {
    pub value: f64,
    pub subsampled: bool,
}

/// `v_α` of a function stored in blocks of `grid.len()` values; pairs are
/// only compared within a block (same symbols).
pub fn v_alpha_values(values: &[f64], grid: &ProjectiveGrid, alpha: f64) -> VAlpha {
    let big_n = grid.len();
    let blocks = values.len() / big_n;
    let pairs_per_block = big_n * (big_n - 1) / 2;
    let subsampled = blocks * pairs_per_block > PAIR_LIMIT;
    let ratio = |f: &[f64], i: usize, j: usize| {
        let d = grid.delta(i, j);
        if d > 0.0 {
            (f[i] - f[j]).abs() / if alpha == 1.0 { d } else { d.powf(alpha) }
        } else {
            0.0
        }
    };
    let value = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let f = &values[b * big_n..(b + 1) * big_n];
            let mut worst: f64 = 0.0;
            if subsampled {
                let mut rng = stream_rng(SUBSAMPLE_SEED, b as u64);
                for _ in 0..PAIR_LIMIT / blocks {
                    let i = rng.random_range(0..big_n);
                    let j = rng.random_range(0..big_n);
                    if i != j {
                        worst = worst.max(ratio(f, i, j));
                    }
                }
            } else {
                for i in 0..big_n {
                    for j in 0..i {
                        worst = worst.max(ratio(f, i, j));
                    }
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    VAlpha { value, subsampled }
}

pub fn v_alpha(phi: &Observable, grid: &ProjectiveGrid, alpha: f64) -> Result<f64> {
    Ok(v_alpha_report(phi, grid, alpha)?.value)
}

pub fn v_alpha_report(phi: &Observable, grid: &ProjectiveGrid, alpha: f64) -> Result<VAlpha> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("alpha", "exponent must lie in (0, 1]"));
    }
    if !phi.values().len().is_multiple_of(grid.len()) {
        return Err(Error::DimensionMismatch("observable does not match the grid".into()));
    }
    Ok(v_alpha_values(phi.values(), grid, alpha))
}

/// How n-step path expectations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptions {
    /// Enumerate exactly while the number of positive-probability paths is at most this.
    pub limit: f64,
    pub monte_carlo: bool,
    pub samples: usize,
    pub seed: u64,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions { limit: PATH_LIMIT, monte_carlo: true, samples: 20_000, seed: 0x006b_5f61_6c70_6861 }
    }
}

/// Weighted n-step paths from one start symbol with their matrix products.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub m: usize,
    pub weights: Vec<f64>,
    pub last: Vec<usize>,
    /// Row-major `m × m` product `Aⁿ(ω)` per path.
    pub products: Vec<f64>,
    pub exact: bool,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn product(&self, i: usize) -> Mat {
        let s = self.m * self.m;
        Mat::from_row_slice(self.m, self.m, &self.products[i * s..(i + 1) * s])
    }
}

/// Number of positive-probability paths of length `n` from `w0`.
pub fn count_paths(k: &Kernel, w0: usize, n: usize) -> f64 {
    let mut counts = vec![0.0; k.len()];
    counts[w0] = 1.0;
    for _ in 0..n {
        let mut next = vec![0.0; k.len()];
        for (x, c) in counts.iter().enumerate() {
            if *c > 0.0 {
                for (y, _) in k.support(x) {
                    next[y] += c;
                }
            }
        }
        counts = next;
    }
    counts.iter().sum()
}

fn push_product(out: &mut Vec<f64>, a: &Mat, prev: &[f64], m: usize) {
    for i in 0..m {
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..m {
                s += a[(i, l)] * prev[l * m + j];
            }
            out.push(s);
        }
    }
}

/// All n-step paths from `w0` (or a seeded Monte Carlo sample when there are
/// too many) with their probabilities and products.
pub fn path_sample(pair: &CocyclePair, w0: usize, n: usize, opts: &PathOptions) -> Result<PathSample> {
    if n == 0 {
        return Err(Error::invalid("n", "path length must be at least 1"));
    }
    let k = pair.kernel();
    let fiber = pair.fiber();
    let m = pair.dim();
    let count = count_paths(k, w0, n);
    let mut identity = vec![0.0; m * m];
    for i in 0..m {
        identity[i * m + i] = 1.0;
    }
    if count <= opts.limit {
        let mut level_w = vec![1.0];
        let mut level_last = vec![w0];
        let mut level_p = identity;
        for _ in 0..n {
            let mut w = Vec::new();
            let mut last = Vec::new();
            let mut prods = Vec::new();
            for (idx, (&pw, &x)) in level_w.iter().zip(&level_last).enumerate() {
                let prev = &level_p[idx * m * m..(idx + 1) * m * m];
                for (y, p) in k.support(x) {
                    w.push(pw * p);
                    last.push(y);
                    push_product(&mut prods, fiber.get(y, x), prev, m);
                }
            }
            level_w = w;
            level_last = last;
            level_p = prods;
        }
        return Ok(PathSample { m, weights: level_w, last: level_last, products: level_p, exact: true });
    }
    if !opts.monte_carlo {
        return Err(Error::PathExplosion { paths: count });
    }
    let s = opts.samples.max(2);
    let seed = derive_seed(opts.seed, (w0 as u64) << 32 | n as u64);
    let per: Vec<(usize, Vec<f64>)> = (0..s)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut x = w0;
            let mut prod = identity.clone();
            for _ in 0..n {
                let y = k.step(x, rng.random::<f64>());
                let mut next = Vec::with_capacity(m * m);
                push_product(&mut next, fiber.get(y, x), &prod, m);
                prod = next;
                x = y;
            }
            (x, prod)
        })
        .collect();
    let mut last = Vec::with_capacity(s);
    let mut products = Vec::with_capacity(s * m * m);
    for (x, p) in per {
        last.push(x);
        products.extend(p);
    }
    Ok(PathSample { m, weights: vec![1.0 / s as f64; s], last, products, exact: false })
}

/// For one product `P`: `log s₁s₂(P)` and `log ‖P v_g‖` over the grid.
fn log_terms(p: &Mat, grid: &ProjectiveGrid) -> (f64, Vec<f64>) {
    let m = p.nrows();
    let ls = if m == 2 {
        p.determinant().abs().ln()
    } else {
        let s = linalg::singular_values(p);
        s[0].ln() + s[1].ln()
    };
    let mut img = vec![0.0; m];
    let ln = (0..grid.len())
        .map(|g| {
            linalg::mat_vec_into(p, grid.point(g), &mut img);
            linalg::norm(&img).ln()
        })
        .collect();
    (ls, ln)
}

/// Estimate of `k_α(Aⁿ, Kⁿ)` or of its singular-value bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KAlphaEstimate {
    pub value: f64,
    /// Monte Carlo standard error at the maximizer (0 when exact).
    pub std_err: f64,
    pub exact: bool,
    /// `(ω₀, i, j)` attaining the sup (`i = j` for the bound).
    pub argmax: (usize, usize, usize),
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("alpha", "exponent must lie in (0, 1]"));
    }
    Ok(())
}

fn check_grid(pair: &CocyclePair, grid: &ProjectiveGrid) -> Result<()> {
    if pair.dim() != grid.dim() {
        return Err(Error::DimensionMismatch("grid and fiber dimensions differ".into()));
    }
    Ok(())
}

const GRAM_BLOCK: usize = 256;

/// `G_ij = Σ_leaf w · r_leaf(i, j)` and the matching second moments, where
/// `r(i, j) = (δ(Âp_i, Âq_j) / δ(p_i, p_j))^α`.
fn pair_moments(sample: &PathSample, grid: &ProjectiveGrid, alpha: f64) -> (Mat, Mat) {
    let big_n = grid.len();
    let m = sample.m;
    let mut g = Mat::zeros(big_n, big_n);
    let mut h = Mat::zeros(big_n, big_n);
    if m == 2 {
        // δ(Mp, Mq)/δ(p, q) = |det M| / (‖Mp‖‖Mq‖) for unit p, q: the ratio factorizes.
        for start in (0..sample.len()).step_by(GRAM_BLOCK) {
            let end = (start + GRAM_BLOCK).min(sample.len());
            let mut a = Mat::zeros(end - start, big_n);
            let mut a2 = Mat::zeros(end - start, big_n);
            for (r, leaf) in (start..end).enumerate() {
                let (ls, ln) = log_terms(&sample.product(leaf), grid);
                let sw = sample.weights[leaf].sqrt();
                for (c, l) in ln.iter().enumerate() {
                    let f = (alpha * (0.5 * ls - l)).exp();
                    a[(r, c)] = sw * f;
                    a2[(r, c)] = sw * f * f;
                }
            }
            g += a.transpose() * &a;
            if !sample.exact {
                h += a2.transpose() * &a2;
            }
        }
    } else {
        for leaf in 0..sample.len() {
            let p = sample.product(leaf);
            let w = sample.weights[leaf];
            let imgs: Vec<Vec<f64>> = (0..big_n)
                .map(|i| {
                    let mut v = vec![0.0; m];
                    linalg::mat_vec_into(&p, grid.point(i), &mut v);
                    v
                })
                .collect();
            for i in 0..big_n {
                for j in 0..i {
                    let r = (delta(&imgs[i], &imgs[j]) / grid.delta(i, j)).powf(alpha);
                    g[(i, j)] += w * r;
                    h[(i, j)] += w * r * r;
                }
            }
        }
        for i in 0..big_n {
            for j in 0..i {
                g[(j, i)] = g[(i, j)];
                h[(j, i)] = h[(i, j)];
            }
        }
    }
    (g, h)
}

fn mc_std_err(mean: f64, second: f64, samples: usize) -> f64 {
    ((second - mean * mean).max(0.0) / (samples as f64 - 1.0)).sqrt()
}

/// `k_α(Aⁿ, Kⁿ) = sup_{ω₀, p̂ ≠ q̂} E_{ω₀}[(δ(Âⁿp̂, Âⁿq̂)/δ(p̂, q̂))^α]` over grid pairs,
/// using exact matrix actions (no grid projection).
pub fn k_alpha_direct(
    pair: &CocyclePair,
    grid: &ProjectiveGrid,
    alpha: f64,
    n: usize,
    opts: &PathOptions,
) -> Result<KAlphaEstimate> {
    check_alpha(alpha)?;
    check_grid(pair, grid)?;
    let per_symbol: Vec<KAlphaEstimate> = (0..pair.symbols())
        .map(|w0| -> Result<KAlphaEstimate> {
            let sample = path_sample(pair, w0, n, opts)?;
            let (g, h) = pair_moments(&sample, grid, alpha);
            let mut best = KAlphaEstimate { value: f64::NEG_INFINITY, std_err: 0.0, exact: sample.exact, argmax: (w0, 0, 0) };
            for i in 0..grid.len() {
                for j in 0..i {
                    if g[(i, j)] > best.value {
                        best.value = g[(i, j)];
                        best.argmax = (w0, j, i);
                        if !sample.exact {
                            best.std_err = mc_std_err(g[(i, j)], h[(i, j)], sample.len());
                        }
                    }
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    Ok(pick_max(per_symbol))
}

fn pick_max(v: Vec<KAlphaEstimate>) -> KAlphaEstimate {
    let exact = v.iter().all(|e| e.exact);
    let mut best = v.into_iter().fold(None::<KAlphaEstimate>, |acc, e| match acc {
        Some(a) if a.value >= e.value => Some(a),
        _ => Some(e),
    });
    let b = best.as_mut().expect("at least one symbol");
    b.exact = exact;
    *b
}

/// `sup_{ω₀, p̂} E_{ω₀}[(s₁s₂(Aⁿ) / ‖Aⁿp‖²)^α]` over grid points.
pub fn k_alpha_sv_bound(
    pair: &CocyclePair,
    grid: &ProjectiveGrid,
    alpha: f64,
    n: usize,
    opts: &PathOptions,
) -> Result<KAlphaEstimate> {
    check_alpha(alpha)?;
    check_grid(pair, grid)?;
    let per_symbol: Vec<KAlphaEstimate> = (0..pair.symbols())
        .map(|w0| -> Result<KAlphaEstimate> {
            let sample = path_sample(pair, w0, n, opts)?;
            let mut first = vec![0.0; grid.len()];
            let mut second = vec![0.0; grid.len()];
            for leaf in 0..sample.len() {
                let (ls, ln) = log_terms(&sample.product(leaf), grid);
                let w = sample.weights[leaf];
                for (g, l) in ln.iter().enumerate() {
                    let r = (alpha * (ls - 2.0 * l)).exp();
                    first[g] += w * r;
                    second[g] += w * r * r;
                }
            }
            let (gbest, &value) = first
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("nonempty grid");
            let std_err = if sample.exact { 0.0 } else { mc_std_err(value, second[gbest], sample.len()) };
            Ok(KAlphaEstimate { value, std_err, exact: sample.exact, argmax: (w0, gbest, gbest) })
        })
        .collect::<Result<_>>()?;
    Ok(pick_max(per_symbol))
}

/// Settings for [`compute_holder_exponent`].
#[derive(Debug, Clone)]
pub struct HolderOptions {
    pub n_max: usize,
    /// Trajectory length and count for the gap and exponent checks.
    pub le_steps: usize,
    pub le_trajectories: usize,
    pub seed: u64,
    pub paths: PathOptions,
    /// Trial exponent for the first evaluation of the moment constant.
    pub alpha0: f64,
}

impl Default for HolderOptions {
    fn default() -> Self {
        HolderOptions {
            n_max: 12,
            le_steps: 20_000,
            le_trajectories: 32,
            seed: 1,
            paths: PathOptions::default(),
            alpha0: 0.5,
        }
    }
}

/// Output of [`compute_holder_exponent`].
#[derive(Debug, Clone, PartialEq)]
pub struct HolderParams {
    pub alpha: f64,
    pub n_star: usize,
    /// `C = sup E[Y² e^{α|Y|}]` at `α*`, `Y = log(s₁s₂(Aⁿ)/‖Aⁿv‖²)`.
    pub c_moment: f64,
    /// `k_α(A^{n*}, K^{n*})` at `α*`.
    pub k_alpha_value: f64,
    pub k_alpha_std_err: f64,
    pub certified: bool,
    /// `sup E log(s₁s₂/‖Aⁿv‖²)` at `n*` (plus Monte Carlo margin).
    pub contraction_sup: f64,
    /// `1 − α* + C α*²/2`.
    pub moment_bound: f64,
    pub gap: GapCheck,
    /// Grid points skipped because they lie on invariant lines with exponent below `L₁`.
    pub excluded_points: usize,
    pub warnings: Vec<String>,
}

/// Per grid point: mean of `Y`, its standard error, and `E[Y² e^{α|Y|}]`.
struct LogRatioStats {
    mean: Vec<f64>,
    std_err: Vec<f64>,
    moment: Vec<f64>,
}

fn log_ratio_stats(sample: &PathSample, grid: &ProjectiveGrid, alpha: Option<f64>) -> LogRatioStats {
    let big_n = grid.len();
    let mut mean = vec![0.0; big_n];
    let mut sq = vec![0.0; big_n];
    let mut moment = vec![0.0; big_n];
    for leaf in 0..sample.len() {
        let (ls, ln) = log_terms(&sample.product(leaf), grid);
        let w = sample.weights[leaf];
        for (g, l) in ln.iter().enumerate() {
            let y = ls - 2.0 * l;
            mean[g] += w * y;
            sq[g] += w * y * y;
            if let Some(a) = alpha {
                moment[g] += w * y * y * (a * y.abs()).exp();
            }
        }
    }
    let std_err = if sample.exact {
        vec![0.0; big_n]
    } else {
        (0..big_n).map(|g| mc_std_err(mean[g], sq[g], sample.len())).collect()
    };
    LogRatioStats { mean, std_err, moment }
}

/// Finds the smallest `n* ≤ n_max` with `sup E_{ω₀} log[s₁s₂(Aⁿ)/‖Aⁿv‖²] ≤ −1`
/// (three standard errors of headroom under Monte Carlo), then the exponent
/// `α* = min(1, 1/C)` by a two-pass fixed point starting from `alpha0`, and
/// certifies with `k_α(A^{n*}, K^{n*}) < 1`.
///
/// For planar cocycles, grid points lying on an invariant line whose exponent
/// is below `L₁` (a repelling direction) are left out of the sup and counted
/// in `excluded_points`.
pub fn compute_holder_exponent(pair: &CocyclePair, grid: &ProjectiveGrid, opts: &HolderOptions) -> Result<HolderParams> {
    check_grid(pair, grid)?;
    let gap = le_gap_check(pair, opts.le_steps, opts.le_trajectories, opts.seed)?;
    if !gap.simple {
        return Err(Error::NotSimple { gap: gap.gap, std_err: gap.std_err });
    }
    let ns = pair.symbols();
    let big_n = grid.len();
    let mut excluded = vec![false; ns * big_n];
    let mut warnings = Vec::new();
    if pair.dim() == 2 {
        let rep = check_quasi_irreducible_m2(pair, opts.le_steps, opts.le_trajectories, opts.seed)?;
        let tol = (3.0 * rep.l1.std_err).max(1e-9);
        for w in rep.witnesses.iter().filter(|w| w.exponent < rep.l1.value - tol) {
            for (x, line) in w.lines.iter().enumerate() {
                let Some(line) = line else { continue };
                for g in 0..big_n {
                    if delta(line.rep(), grid.point(g)) <= INVARIANCE_TOL {
                        excluded[x * big_n + g] = true;
                    }
                }
            }
        }
        if !rep.quasi_irreducible {
            warnings.push("cocycle is not quasi-irreducible: an invariant line field has exponent below L1".into());
        }
    } else {
        warnings.push("quasi-irreducibility not checked for m > 2".into());
    }
    let excluded_points = excluded.iter().filter(|e| **e).count();
    if excluded_points > 0 {
        warnings.push(format!("{excluded_points} grid points on repelling invariant lines excluded from the contraction sup"));
    }

    let sup_over = |n: usize, alpha: Option<f64>| -> Result<(f64, f64, bool)> {
        let mut sup_mean = f64::NEG_INFINITY;
        let mut sup_moment: f64 = 0.0;
        let mut exact = true;
        for w0 in 0..ns {
            let sample = path_sample(pair, w0, n, &opts.paths)?;
            exact &= sample.exact;
            let st = log_ratio_stats(&sample, grid, alpha);
            for g in 0..big_n {
                if excluded[w0 * big_n + g] {
                    continue;
                }
                sup_mean = sup_mean.max(st.mean[g] + 3.0 * st.std_err[g]);
                sup_moment = sup_moment.max(st.moment[g]);
            }
        }
        Ok((sup_mean, sup_moment, exact))
    };

    let mut best = f64::INFINITY;
    let mut n_star = None;
    for n in 1..=opts.n_max {
        let (s, _, _) = sup_over(n, None)?;
        best = best.min(s);
        if s <= -1.0 {
            n_star = Some((n, s));
            break;
        }
    }
    let (n_star, contraction_sup) = n_star.ok_or(Error::GapNotReached { n_max: opts.n_max, best })?;
    let (_, c0, _) = sup_over(n_star, Some(opts.alpha0))?;
    let alpha1 = (1.0 / c0).min(1.0);
    let (_, c1, exact) = sup_over(n_star, Some(alpha1))?;
    let alpha = (1.0 / c1).min(1.0);
    if !exact {
        warnings.push("path expectations estimated by Monte Carlo".into());
    }
    let k = k_alpha_direct(pair, grid, alpha, n_star, &opts.paths)?;
    let certified = k.value + 3.0 * k.std_err < 1.0;
    if !certified {
        warnings.push(format!("k_alpha = {} is not below 1: no contraction certificate", k.value));
    }
    Ok(HolderParams {
        alpha,
        n_star,
        c_moment: c1,
        k_alpha_value: k.value,
        k_alpha_std_err: k.std_err,
        certified,
        contraction_sup,
        moment_bound: 1.0 - alpha + c1 * alpha * alpha / 2.0,
        gap,
        excluded_points,
        warnings,
    })
}

/// Outcome of [`contraction_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub k_alpha: f64,
    /// `v_α(Qⁿφ) / v_α(φ)` per trial.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub violations: usize,
    pub passed: bool,
    /// Grid covering radius: `v_α(Qⁿφ)` is a grid sup.
    pub resolution: f64,
}

/// `(Qⁿφ)(ω₀, v_g)` with exact matrix actions, for every grid point.
pub fn q_power_exact(pair: &CocyclePair, grid: &ProjectiveGrid, phi: &HolderObservable, n: usize, opts: &PathOptions) -> Result<Vec<f64>> {
    check_grid(pair, grid)?;
    let big_n = grid.len();
    let m = pair.dim();
    let mut out = vec![0.0; pair.symbols() * big_n];
    for w0 in 0..pair.symbols() {
        let sample = path_sample(pair, w0, n, opts)?;
        let vals: Vec<f64> = (0..big_n)
            .into_par_iter()
            .map(|g| {
                let mut img = vec![0.0; m];
                let mut s = 0.0;
                for leaf in 0..sample.len() {
                    let p = &sample.products[leaf * m * m..(leaf + 1) * m * m];
                    let v = grid.point(g);
                    for i in 0..m {
                        img[i] = (0..m).map(|j| p[i * m + j] * v[j]).sum();
                    }
                    s += sample.weights[leaf] * phi.eval(sample.last[leaf], &img);
                }
                s
            })
            .collect();
        out[w0 * big_n..(w0 + 1) * big_n].copy_from_slice(&vals);
    }
    Ok(out)
}

/// Checks `v_α(Qⁿφ) ≤ k_α(Aⁿ, Kⁿ) · v_α(φ) · (1 + 1e-6)` for seeded random
/// Hölder observables. `v_α(Qⁿφ)` is the grid sup of the exact `Qⁿφ`;
/// `v_α(φ)` is the analytic bound of the observable's seminorm.
pub fn contraction_check(
    pair: &CocyclePair,
    grid: &ProjectiveGrid,
    alpha: f64,
    n: usize,
    trials: usize,
    seed: u64,
    opts: &PathOptions,
) -> Result<ContractionReport> {
    let k = k_alpha_direct(pair, grid, alpha, n, opts)?;
    let obs_seed = derive_seed(seed, 0x636f_6e74);
    let ratios: Vec<f64> = (0..trials)
        .map(|t| -> Result<f64> {
            let phi = HolderObservable::random(pair.symbols(), pair.dim(), alpha, 3, obs_seed, t as u64);
            let qn = q_power_exact(pair, grid, &phi, n, opts)?;
            let v = v_alpha_values(&qn, grid, alpha).value;
            Ok(v / phi.seminorm_bound())
        })
        .collect::<Result<_>>()?;
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let violations = ratios.iter().filter(|r| **r > k.value * (1.0 + 1e-6)).count();
    Ok(ContractionReport {
        k_alpha: k.value,
        ratios,
        max_ratio,
        violations,
        passed: violations == 0,
        resolution: grid.resolution(),
    })
}

/// `sup_{x ≠ y} W₁(K_x, K_y) / dist(x, y)`.
pub fn kernel_lipschitz(k: &Kernel) -> Result<f64> {
    let sp = k.space();
    let mut worst: f64 = 0.0;
    for x in 0..k.len() {
        for y in 0..x {
            let w = wasserstein1(&k.row_measure(x), &k.row_measure(y), sp)?;
            worst = worst.max(w / sp.dist(x, y));
        }
    }
    Ok(worst)
}

/// Distance between the n-step systems and its growth relative to `n = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLipschitz {
    pub n: usize,
    pub d1: f64,
    /// `max(sup_paths ‖Bⁿ − Dⁿ‖, d_W1(Lⁿ, Tⁿ))`.
    pub dn: f64,
    /// Measured `dn / d1`.
    pub constant: f64,
    /// `n · max(1, M, κ)^{n−1}` with `M` the largest fiber norm and `κ` the
    /// larger kernel Lipschitz constant.
    pub bound: f64,
}

pub fn iteration_lipschitz(x: &CocyclePair, y: &CocyclePair, n: usize) -> Result<IterationLipschitz> {
    if n == 0 {
        return Err(Error::invalid("n", "iteration count must be at least 1"));
    }
    let d1 = cocycle_distance(x, y)?;
    let ns = x.symbols();
    let total = (ns as f64).powi(n as i32 + 1);
    if total > PATH_LIMIT {
        return Err(Error::PathExplosion { paths: total });
    }
    let mut dfib: f64 = 0.0;
    let mut path = vec![0usize; n + 1];
    for code in 0..total as usize {
        let mut c = code;
        for p in path.iter_mut() {
            *p = c % ns;
            c /= ns;
        }
        let a = crate::cocycle::cocycle_product(x.fiber(), &path)?;
        let b = crate::cocycle::cocycle_product(y.fiber(), &path)?;
        dfib = dfib.max(linalg::op_norm(&(a - b)));
    }
    let dker = kernel_distance(&kernel_iterate(x.kernel(), n)?, &kernel_iterate(y.kernel(), n)?)?;
    let dn = dfib.max(dker);
    let m = x.fiber().max_norm().max(y.fiber().max_norm());
    let kappa = kernel_lipschitz(x.kernel())?.max(kernel_lipschitz(y.kernel())?);
    let bound = n as f64 * m.max(kappa).max(1.0).powi(n as i32 - 1);
    Ok(IterationLipschitz { n, d1, dn, constant: if d1 > 0.0 { dn / d1 } else { 0.0 }, bound })
}

/// `‖Qⁿ_X f − Qⁿ_Y f‖_∞` over the grid for `n = 1..=n_max`, with exact path sums.
pub fn qn_stability(
    x: &CocyclePair,
    y: &CocyclePair,
    f: &HolderObservable,
    grid: &ProjectiveGrid,
    n_max: usize,
    opts: &PathOptions,
) -> Result<Vec<f64>> {
    let exact = PathOptions { monte_carlo: false, ..*opts };
    (1..=n_max)
        .map(|n| {
            let a = q_power_exact(x, grid, f, n, &exact)?;
            let b = q_power_exact(y, grid, f, n, &exact)?;
            Ok(a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationKind {
    Fiber,
    Kernel,
    Joint,
}

impl PerturbationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PerturbationKind::Fiber => "fiber",
            PerturbationKind::Kernel => "kernel",
            PerturbationKind::Joint => "joint",
        }
    }
}

/// Seeded fiber perturbation supported on the kernel's edges, scaled so that
/// `d_∞` equals `target`.
pub fn perturb_fiber<R: Rng>(pair: &CocyclePair, target: f64, rng: &mut R) -> Result<FiberMap> {
    let ns = pair.symbols();
    let m = pair.dim();
    let mut deltas: Vec<Option<Mat>> = vec![None; ns * ns];
    for from in 0..ns {
        for (to, _) in pair.kernel().support(from) {
            deltas[to * ns + from] = Some(Mat::from_fn(m, m, |_, _| rng.sample(StandardNormal)));
        }
    }
    let biggest = deltas.iter().flatten().map(linalg::op_norm).fold(0.0, f64::max);
    let scale = target / biggest;
    FiberMap::from_fn(pair.space().clone(), m, |to, from| {
        let a = pair.fiber().get(to, from);
        match &deltas[to * ns + from] {
            Some(e) => a + e * scale,
            None => a.clone(),
        }
    })
}

/// Mixes each row toward a seeded random stochastic row. `W₁` is affine
/// along the mixture, so the weight is solved exactly for `d_W1 = target`
/// (capped at full replacement).
pub fn perturb_kernel<R: Rng>(pair: &CocyclePair, target: f64, rng: &mut R) -> Result<Kernel> {
    let k = pair.kernel();
    let ns = k.len();
    let targets: Vec<Vec<f64>> = (0..ns)
        .map(|_| {
            let r: Vec<f64> = (0..ns).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = r.iter().sum();
            r.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for (x, r) in targets.iter().enumerate() {
        let rm = crate::symbol_space::Measure::new(k.row_measure(x).carrier(), r.clone())?;
        worst = worst.max(wasserstein1(&k.row_measure(x), &rm, k.space())?);
    }
    let w = if worst > 0.0 { (target / worst).min(1.0) } else { 0.0 };
    let rows = (0..ns)
        .map(|x| {
            let row: Vec<f64> = k.row(x).iter().zip(&targets[x]).map(|(a, b)| (1.0 - w) * a + w * b).collect();
            let s: f64 = row.iter().sum();
            row.into_iter().map(|v| v / s).collect()
        })
        .collect();
    Kernel::new(k.space().clone(), rows)
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub n_probes: usize,
    pub d_min: f64,
    pub d_max: f64,
    /// Trajectory length and count per probe.
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    /// Exponent used for the stationary-measure constant.
    pub alpha: f64,
    /// Whether the centre carries a contraction certificate.
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub probe_id: usize,
    pub kind: PerturbationKind,
    pub d_fiber: f64,
    pub d_kernel: f64,
    pub d_total: f64,
    pub l1_left: f64,
    pub l1_right: f64,
    pub dl1: f64,
    pub noise_floor: f64,
    pub included_in_fit: bool,
    /// `∫f dη` on both sides, by Birkhoff averages along the same paths.
    pub eta_left: f64,
    pub eta_right: f64,
    pub eta_noise: f64,
    pub eta_included: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    pub slope: f64,
    pub intercept: f64,
    pub fit_points: usize,
    /// Slope of `log |Δ∫f dη|` against `log d`, when enough probes clear the noise.
    pub eta_slope: Option<f64>,
    /// Smallest `C` with `|Δ∫f dη| ≤ C d^α v_α(f)` on every included probe.
    pub eta_constant: f64,
    pub eta_fit_points: usize,
    pub warnings: Vec<String>,
}

/// Perturbs `center` at log-spaced distances in `[d_min, d_max]` (kinds
/// cycling fiber, kernel, joint) and regresses `log |ΔL₁|` on `log d` over
/// the probes whose paired difference clears ten times its noise floor.
///
/// Both sides of every probe run on the same seeded base paths (common
/// random numbers), so the noise floor is the standard error of the
/// per-trajectory differences.
pub fn holder_scan(center: &CocyclePair, opts: &ScanOptions) -> Result<ScanResult> {
    if opts.n_probes == 0 || !(opts.d_min > 0.0 && opts.d_max > opts.d_min) {
        return Err(Error::invalid("holder.scan", "need probes and 0 < d_min < d_max"));
    }
    let mut warnings = Vec::new();
    if !opts.certified {
        warnings.push("scan centre carries no contraction certificate".into());
    }
    let f = HolderObservable::random(center.symbols(), center.dim(), opts.alpha, 3, derive_seed(opts.seed, 0x0065_7461), 0);
    let f_eval = |s: usize, v: &[f64]| f.eval(s, v);
    let left = trajectory_statistics(center, opts.n, opts.t, opts.seed, Some(&f_eval))?;
    let probe_seed = derive_seed(opts.seed, 0x0070_726f_6265);
    let ratio = opts.d_max / opts.d_min;
    let mut rows = Vec::with_capacity(opts.n_probes);
    for i in 0..opts.n_probes {
        let kind = match i % 3 {
            0 => PerturbationKind::Fiber,
            1 => PerturbationKind::Kernel,
            _ => PerturbationKind::Joint,
        };
        let target = opts.d_min * ratio.powf((i as f64 + 0.5) / opts.n_probes as f64);
        let mut rng = stream_rng(probe_seed, i as u64);
        let fiber = match kind {
            PerturbationKind::Kernel => center.fiber().clone(),
            _ => perturb_fiber(center, target, &mut rng)?,
        };
        let kernel = match kind {
            PerturbationKind::Fiber => center.kernel().clone(),
            _ => perturb_kernel(center, target, &mut rng)?,
        };
        let right_pair = CocyclePair::new(fiber, kernel)?;
        let d_fiber = fiber_distance(center.fiber(), right_pair.fiber())?;
        let d_kernel = kernel_distance(center.kernel(), right_pair.kernel())?;
        let d_total = d_fiber.max(d_kernel);
        let right = trajectory_statistics(&right_pair, opts.n, opts.t, opts.seed, Some(&f_eval))?;
        let diffs: Vec<f64> = right.iter().zip(&left).map(|(r, l)| r.growth - l.growth).collect();
        let (dl1, noise_floor) = mean_and_std_err(&diffs);
        let ediffs: Vec<f64> = right.iter().zip(&left).map(|(r, l)| r.birkhoff - l.birkhoff).collect();
        let (deta, eta_noise) = mean_and_std_err(&ediffs);
        let l1_left = left.iter().map(|s| s.growth).sum::<f64>() / opts.t as f64;
        let eta_left = left.iter().map(|s| s.birkhoff).sum::<f64>() / opts.t as f64;
        rows.push(ScanRow {
            probe_id: i,
            kind,
            d_fiber,
            d_kernel,
            d_total,
            l1_left,
            l1_right: l1_left + dl1,
            dl1,
            noise_floor,
            included_in_fit: d_total > 0.0 && dl1.abs() > 10.0 * noise_floor,
            eta_left,
            eta_right: eta_left + deta,
            eta_noise,
            eta_included: d_total > 0.0 && deta.abs() > 10.0 * eta_noise,
        });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.included_in_fit)
        .map(|r| (r.d_total.ln(), r.dl1.abs().ln()))
        .unzip();
    if x.len() < 3 {
        return Err(Error::InsufficientSignal(format!(
            "only {} of {} probes exceed ten times the noise floor",
            x.len(),
            rows.len()
        )));
    }
    let (slope, intercept) = linear_fit(&x, &y).ok_or_else(|| Error::FitFailure("scan regression".into()))?;
    let (ex, ey): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.eta_included)
        .map(|r| (r.d_total.ln(), (r.eta_right - r.eta_left).abs().ln()))
        .unzip();
    let eta_slope = if ex.len() >= 3 { linear_fit(&ex, &ey).map(|f| f.0) } else { None };
    let vf = f.seminorm_bound();
    let eta_constant = rows
        .iter()
        .filter(|r| r.eta_included)
        .map(|r| (r.eta_right - r.eta_left).abs() / (r.d_total.powf(opts.alpha) * vf))
        .fold(0.0, f64::max);
    Ok(ScanResult {
        fit_points: x.len(),
        rows,
        slope,
        intercept,
        eta_slope,
        eta_constant,
        eta_fit_points: ex.len(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projective::{make_grid, GridScheme};
    use crate::symbol_space::SymbolSpace;
    use nalgebra::dmatrix;
    use std::sync::Arc;

    fn constant_pair(a: Mat) -> CocyclePair {
        let sp = Arc::new(SymbolSpace::discrete(2));
        let k = Kernel::new(sp.clone(), vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        CocyclePair::new(FiberMap::constant(sp, a).unwrap(), k).unwrap()
    }

    #[test]
    fn scalar_cocycle_has_unit_k_alpha() {
        let g = make_grid(2, 36, GridScheme::UniformAngle).unwrap();
        let pair = constant_pair(Mat::identity(2, 2) * 3.0);
        for alpha in [0.3, 1.0] {
            let k = k_alpha_direct(&pair, &g, alpha, 2, &PathOptions::default()).unwrap();
            assert!((k.value - 1.0).abs() < 1e-12, "{}", k.value);
        }
    }

    #[test]
    fn diagonal_k_alpha_is_four() {
        let g = make_grid(2, 1440, GridScheme::UniformAngle).unwrap();
        let pair = constant_pair(dmatrix![2.0, 0.0; 0.0, 0.5]);
        let opts = PathOptions::default();
        let k = k_alpha_direct(&pair, &g, 1.0, 1, &opts).unwrap();
        assert!((k.value - 4.0).abs() < 0.05, "{}", k.value);
        let b = k_alpha_sv_bound(&pair, &g, 1.0, 1, &opts).unwrap();
        assert!((b.value - 4.0).abs() < 1e-12);
        assert!(b.value >= k.value);
    }

    #[test]
    fn v_alpha_of_distance_function() {
        let g = make_grid(2, 90, GridScheme::UniformAngle).unwrap();
        let alpha = 0.5;
        let phi = Observable::on_sigma_p(1, 90, |_, i| g.delta(i, 0).powf(alpha)).unwrap();
        let v = v_alpha(&phi, &g, alpha).unwrap();
        assert!(v <= 1.0 + 1e-12 && v > 0.99, "{v}");
        let twice = Observable::on_sigma_p(1, 90, |_, i| -2.0 * g.delta(i, 0).powf(alpha)).unwrap();
        assert!((v_alpha(&twice, &g, alpha).unwrap() - 2.0 * v).abs() < 1e-12);
    }

    #[test]
    fn isometry_is_not_simple() {
        let g = make_grid(2, 36, GridScheme::UniformAngle).unwrap();
        let t = 0.3f64;
        let pair = constant_pair(dmatrix![t.cos(), -t.sin(); t.sin(), t.cos()]);
        let opts = HolderOptions { le_steps: 2000, le_trajectories: 4, ..Default::default() };
        assert!(matches!(compute_holder_exponent(&pair, &g, &opts), Err(Error::NotSimple { .. })));
    }

    #[test]
    fn diagonal_exponent_excludes_repelling_line() {
        let g = make_grid(2, 360, GridScheme::UniformAngle).unwrap();
        let pair = constant_pair(dmatrix![4.0, 0.0; 0.0, 0.25]);
        let opts = HolderOptions { le_steps: 2000, le_trajectories: 4, ..Default::default() };
        let p = compute_holder_exponent(&pair, &g, &opts).unwrap();
        assert_eq!(p.n_star, 4);
        assert_eq!(p.excluded_points, 2);
        assert!(!p.warnings.is_empty());
    }
}
