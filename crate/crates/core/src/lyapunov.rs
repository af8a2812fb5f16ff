//! Lyapunov exponents: trajectory and Furstenberg-formula estimators, the
//! full spectrum, the finite-scale directional profile, and the
//! quasi-irreducibility check for planar cocycles.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;

use crate::cocycle::{exterior_power, CocyclePair};
use crate::error::{Error, Result};
use crate::fit::mean_and_std_err;
use crate::linalg::{self, Mat};
use crate::markov_operator::{Observable, ProjectiveCocycle};
use crate::projective::{delta, ProjPoint, ProjectiveGrid};
use crate::rng::stream_rng;
use crate::symbol_space::Measure;

/// Steps between renormalizations of the running product.
pub const RENORM_EVERY: usize = 16;
/// Smallest trajectory length accepted by the trajectory estimators.
pub const MIN_STEPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Trajectory,
    Furstenberg,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Trajectory => "trajectory",
            Method::Furstenberg => "furstenberg",
        }
    }
}

/// A Lyapunov exponent estimate in nats per step.
#[derive(Debug, Clone, PartialEq)]
pub struct LEEstimate {
    pub value: f64,
    /// Sampling standard error, or the grid error budget for the
    /// Furstenberg estimator.
    pub std_err: f64,
    pub n_steps: usize,
    pub n_trajectories: usize,
    pub method: Method,
    /// Per-trajectory values (empty for the Furstenberg estimator).
    pub samples: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Fiber matrices flattened row-major, `m²` entries per edge `(to, from)`.
struct FlatFiber {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl FlatFiber {
    fn new(pair: &CocyclePair) -> Self {
        let n = pair.symbols();
        let m = pair.dim();
        let mut data = Vec::with_capacity(n * n * m * m);
        for to in 0..n {
            for from in 0..n {
                let a = pair.fiber().get(to, from);
                for i in 0..m {
                    for j in 0..m {
                        data.push(a[(i, j)]);
                    }
                }
            }
        }
        FlatFiber { n, m, data }
    }

    #[inline]
    fn mat(&self, to: usize, from: usize) -> &[f64] {
        let s = self.m * self.m;
        let k = (to * self.n + from) * s;
        &self.data[k..k + s]
    }
}

/// `out = a · b` for row-major `m × m` matrices (`b` may have `cols` columns).
#[inline]
fn mul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, cols: usize) {
    for i in 0..m {
        for j in 0..cols {
            let mut s = 0.0;
            for k in 0..m {
                s += a[i * m + k] * b[k * cols + j];
            }
            out[i * cols + j] = s;
        }
    }
}

fn cdf_of(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

#[inline]
fn sample_cdf(cdf: &[f64], weights: &[f64], u: f64) -> usize {
    let target = u * cdf[cdf.len() - 1];
    let mut i = cdf.partition_point(|c| *c <= target).min(cdf.len() - 1);
    while weights[i] == 0.0 && i > 0 {
        i -= 1;
    }
    i
}

/// Base-chain path generator shared by all trajectory estimators: the start
/// symbol is drawn from `μ` (or fixed), then each step consumes one uniform.
struct PathSampler<'a> {
    pair: &'a CocyclePair,
    mu_cdf: Vec<f64>,
}

impl<'a> PathSampler<'a> {
    fn new(pair: &'a CocyclePair) -> Self {
        PathSampler { pair, mu_cdf: cdf_of(pair.mu().weights()) }
    }

    fn start<R: Rng>(&self, rng: &mut R) -> usize {
        sample_cdf(&self.mu_cdf, self.pair.mu().weights(), rng.random::<f64>())
    }

    #[inline]
    fn next<R: Rng>(&self, x: usize, rng: &mut R) -> usize {
        self.pair.kernel().step(x, rng.random::<f64>())
    }
}

/// Observable evaluated along the projective chain `(ω_k, Âᵏ v₀)`.
pub type ChainObservable<'a> = &'a (dyn Fn(usize, &[f64]) -> f64 + Sync);

/// Output of one trajectory of [`trajectory_statistics`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    /// `(1/n) log ‖Aⁿ(ω)‖`.
    pub growth: f64,
    /// `(1/n) Σ_{k<n} f(ω_k, v̂_k)` when an observable was supplied.
    pub birkhoff: f64,
}

fn default_start_vector(m: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..m).map(|k| 1.0 / (k as f64 + 1.5)).collect();
    let n = linalg::norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

fn one_trajectory(
    flat: &FlatFiber,
    sampler: &PathSampler,
    n: usize,
    seed: u64,
    t: usize,
    observable: Option<ChainObservable>,
) -> Result<TrajectorySample> {
    let m = flat.m;
    let mut rng = stream_rng(seed, t as u64);
    let mut x = sampler.start(&mut rng);
    let mut prod = vec![0.0; m * m];
    for i in 0..m {
        prod[i * m + i] = 1.0;
    }
    let mut tmp = vec![0.0; m * m];
    let mut log_scale = 0.0f64;
    let mut v = default_start_vector(m);
    let mut vtmp = vec![0.0; m];
    let mut birk = 0.0;
    for step in 1..=n {
        if let Some(f) = observable {
            birk += f(x, &v);
        }
        let y = sampler.next(x, &mut rng);
        let a = flat.mat(y, x);
        mul_into(a, &prod, &mut tmp, m, m);
        std::mem::swap(&mut prod, &mut tmp);
        if observable.is_some() {
            mul_into(a, &v, &mut vtmp, m, 1);
            let nv = linalg::norm(&vtmp);
            for (o, i) in v.iter_mut().zip(&vtmp) {
                *o = i / nv;
            }
        }
        if step % RENORM_EVERY == 0 || step == n {
            let s = prod.iter().map(|p| p * p).sum::<f64>().sqrt();
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Overflow(format!("running product degenerated at step {step}")));
            }
            prod.iter_mut().for_each(|p| *p /= s);
            log_scale += s.ln();
        }
        x = y;
    }
    let p = Mat::from_row_slice(m, m, &prod);
    let growth = (log_scale + linalg::op_norm(&p).ln()) / n as f64;
    Ok(TrajectorySample { growth, birkhoff: birk / n as f64 })
}

/// Runs `t` seeded trajectories of length `n` in parallel; trajectory `i`
/// uses stream `i` of `seed`, so the result does not depend on threading.
pub fn trajectory_statistics(
    pair: &CocyclePair,
    n: usize,
    t: usize,
    seed: u64,
    observable: Option<ChainObservable>,
) -> Result<Vec<TrajectorySample>> {
    if n == 0 || t == 0 {
        return Err(Error::invalid("estimator", "need at least one step and one trajectory"));
    }
    let flat = FlatFiber::new(pair);
    let sampler = PathSampler::new(pair);
    (0..t)
        .into_par_iter()
        .map(|i| one_trajectory(&flat, &sampler, n, seed, i, observable))
        .collect()
}

fn check_steps(n: usize, t: usize) -> Result<()> {
    if n < MIN_STEPS {
        return Err(Error::invalid("estimator.n", format!("trajectory length must be at least {MIN_STEPS}")));
    }
    if t == 0 {
        return Err(Error::invalid("estimator.trajectories", "need at least one trajectory"));
    }
    Ok(())
}

/// `L₁` as the mean over `t` trajectories of `(1/n) log ‖Aⁿ(ω)‖`.
pub fn le_trajectory(pair: &CocyclePair, n: usize, t: usize, seed: u64) -> Result<LEEstimate> {
    check_steps(n, t)?;
    let samples: Vec<f64> = trajectory_statistics(pair, n, t, seed, None)?.into_iter().map(|s| s.growth).collect();
    let (value, std_err) = mean_and_std_err(&samples);
    Ok(LEEstimate {
        value,
        std_err,
        n_steps: n,
        n_trajectories: t,
        method: Method::Trajectory,
        samples,
        warnings: Vec::new(),
    })
}

/// `ψ(ω₁, ω₀, v̂) = log ‖A(ω₁, ω₀) v‖ / ‖v‖` on the grid.
pub fn psi_observable(pc: &ProjectiveCocycle) -> Result<Observable> {
    let grid = pc.grid();
    let m = grid.dim();
    let fiber = pc.pair().fiber();
    Observable::on_sigma_sigma_p(pc.symbols(), grid.len(), |w1, w0, g| {
        let mut out = vec![0.0; m];
        linalg::mat_vec_into(fiber.get(w1, w0), grid.point(g), &mut out);
        linalg::norm(&out).ln()
    })
}

/// Furstenberg's formula `L₁ = ∫ ψ dm` against a Q̄-stationary grid measure.
///
/// The error column carries the grid budget `v_α(ψ) · h^α`.
pub fn le_furstenberg(pc: &ProjectiveCocycle, m_stat: &Measure, alpha: f64, certified: bool) -> Result<LEEstimate> {
    if m_stat.carrier() != pc.sigma_sigma_p() {
        return Err(Error::DimensionMismatch("the Furstenberg formula needs a measure on Σ×Σ×ℙ".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("alpha", "exponent must lie in (0, 1]"));
    }
    let psi = psi_observable(pc)?;
    let value = m_stat.integrate(psi.values());
    let budget = crate::holder::v_alpha_values(psi.values(), pc.grid(), alpha).value * pc.grid().resolution().powf(alpha);
    let mut warnings = Vec::new();
    if !certified {
        warnings.push("stationary measure carries no uniqueness certificate".to_string());
    }
    Ok(LEEstimate {
        value,
        std_err: budget,
        n_steps: 0,
        n_trajectories: 0,
        method: Method::Furstenberg,
        samples: Vec::new(),
        warnings,
    })
}

/// Full Lyapunov spectrum with per-trajectory samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// `L₁ ≥ L₂ ≥ … ≥ L_m`.
    pub values: Vec<f64>,
    pub std_errs: Vec<f64>,
    /// `samples[k][t]`: exponent `k` on trajectory `t`.
    pub samples: Vec<Vec<f64>>,
    pub n_steps: usize,
    pub n_trajectories: usize,
}

impl Spectrum {
    /// Sum of the exponents with the standard error of the per-trajectory sums.
    pub fn sum(&self) -> (f64, f64) {
        let t = self.n_trajectories;
        let sums: Vec<f64> = (0..t).map(|i| self.samples.iter().map(|s| s[i]).sum()).collect();
        mean_and_std_err(&sums)
    }
}

/// Benettin's method: push an orthonormal frame along the path and
/// re-orthonormalize (modified Gram–Schmidt) after every step, accumulating
/// `log |R_kk|`.
pub fn le_spectrum(pair: &CocyclePair, n: usize, t: usize, seed: u64) -> Result<Spectrum> {
    check_steps(n, t)?;
    let flat = FlatFiber::new(pair);
    let sampler = PathSampler::new(pair);
    let m = flat.m;
    let per_traj: Vec<Vec<f64>> = (0..t)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut rng = stream_rng(seed, i as u64);
            let mut x = sampler.start(&mut rng);
            // frame stored row-major: column k is the k-th vector
            let mut q = vec![0.0; m * m];
            for k in 0..m {
                q[k * m + k] = 1.0;
            }
            let mut tmp = vec![0.0; m * m];
            let mut acc = vec![0.0; m];
            for _ in 0..n {
                let y = sampler.next(x, &mut rng);
                mul_into(flat.mat(y, x), &q, &mut tmp, m, m);
                for k in 0..m {
                    for j in 0..k {
                        let dot: f64 = (0..m).map(|r| tmp[r * m + k] * tmp[r * m + j]).sum();
                        for r in 0..m {
                            tmp[r * m + k] -= dot * tmp[r * m + j];
                        }
                    }
                    let nk = (0..m).map(|r| tmp[r * m + k] * tmp[r * m + k]).sum::<f64>().sqrt();
                    if !(nk.is_finite() && nk > 0.0) {
                        return Err(Error::Overflow("frame collapsed during orthonormalization".into()));
                    }
                    acc[k] += nk.ln();
                    for r in 0..m {
                        tmp[r * m + k] /= nk;
                    }
                }
                std::mem::swap(&mut q, &mut tmp);
                x = y;
            }
            Ok(acc.into_iter().map(|a| a / n as f64).collect())
        })
        .collect::<Result<_>>()?;
    let mut samples: Vec<Vec<f64>> = (0..m).map(|k| per_traj.iter().map(|s| s[k]).collect()).collect();
    let mut stats: Vec<(f64, f64)> = samples.iter().map(|s| mean_and_std_err(s)).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|a, b| stats[*b].0.total_cmp(&stats[*a].0));
    samples = order.iter().map(|&k| samples[k].clone()).collect();
    stats = order.iter().map(|&k| stats[k]).collect();
    Ok(Spectrum {
        values: stats.iter().map(|s| s.0).collect(),
        std_errs: stats.iter().map(|s| s.1).collect(),
        samples,
        n_steps: n,
        n_trajectories: t,
    })
}

/// `L₁(∧₂A, K)` on the same seeded paths as the other estimators.
pub fn le_exterior(pair: &CocyclePair, k: usize, n: usize, t: usize, seed: u64) -> Result<LEEstimate> {
    let wedge = pair.with_fiber(exterior_power(pair.fiber(), k)?)?;
    le_trajectory(&wedge, n, t, seed)
}

/// Gaps below this size are never declared simple.
pub const GAP_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GapCheck {
    pub l1: f64,
    pub l2: f64,
    pub gap: f64,
    /// Standard error of the per-trajectory gaps.
    pub std_err: f64,
    /// `gap > max(3·std_err, GAP_FLOOR)`.
    pub simple: bool,
    /// A nonzero gap that does not clear the noise threshold.
    pub borderline: bool,
}

pub fn gap_from_spectrum(spectrum: &Spectrum) -> Result<GapCheck> {
    if spectrum.values.len() < 2 {
        return Err(Error::UnsupportedDimension(spectrum.values.len()));
    }
    let gaps: Vec<f64> = spectrum.samples[0].iter().zip(&spectrum.samples[1]).map(|(a, b)| a - b).collect();
    let (gap, std_err) = mean_and_std_err(&gaps);
    let simple = gap > (3.0 * std_err).max(GAP_FLOOR);
    Ok(GapCheck {
        l1: spectrum.values[0],
        l2: spectrum.values[1],
        gap,
        std_err,
        simple,
        borderline: !simple && gap.abs() > 1e-12,
    })
}

pub fn le_gap_check(pair: &CocyclePair, n: usize, t: usize, seed: u64) -> Result<GapCheck> {
    gap_from_spectrum(&le_spectrum(pair, n, t, seed)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEntry {
    pub symbol: usize,
    pub direction: usize,
    pub value: f64,
    pub std_err: f64,
    pub cluster: usize,
}

/// Finite-scale exponents `(1/n) E_{ω₀} log ‖Aⁿ(ω) v‖` over a direction grid,
/// clustered into candidate filtration levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalProfile {
    pub n: usize,
    pub entries: Vec<ProfileEntry>,
    /// Cluster means, descending; cluster `k` has level `levels[k]`.
    pub levels: Vec<f64>,
    pub bandwidth: f64,
}

pub fn directional_profile(
    pair: &CocyclePair,
    grid: &ProjectiveGrid,
    n: usize,
    t: usize,
    seed: u64,
) -> Result<DirectionalProfile> {
    if pair.dim() != grid.dim() {
        return Err(Error::DimensionMismatch("grid and fiber dimensions differ".into()));
    }
    if n == 0 || t == 0 {
        return Err(Error::invalid("estimator", "need at least one step and one trajectory"));
    }
    let flat = FlatFiber::new(pair);
    let k = pair.kernel();
    let m = flat.m;
    let big_n = grid.len();
    let cells: Vec<(f64, f64)> = (0..pair.symbols() * big_n)
        .into_par_iter()
        .map(|cell| {
            let (w0, g) = (cell / big_n, cell % big_n);
            let vals: Vec<f64> = (0..t)
                .map(|i| {
                    // Common paths across directions: the stream depends on the trajectory only.
                    let mut rng = stream_rng(seed, i as u64);
                    let mut v = grid.point(g).to_vec();
                    let mut tmp = vec![0.0; m];
                    let mut log_scale = 0.0;
                    let mut x = w0;
                    for step in 1..=n {
                        let y = k.step(x, rng.random::<f64>());
                        mul_into(flat.mat(y, x), &v, &mut tmp, m, 1);
                        std::mem::swap(&mut v, &mut tmp);
                        if step % RENORM_EVERY == 0 || step == n {
                            let s = linalg::norm(&v);
                            v.iter_mut().for_each(|c| *c /= s);
                            log_scale += s.ln();
                        }
                        x = y;
                    }
                    log_scale / n as f64
                })
                .collect();
            mean_and_std_err(&vals)
        })
        .collect();
    let pooled = (cells.iter().map(|c| c.1 * c.1).sum::<f64>() / cells.len() as f64).sqrt();
    let bandwidth = (5.0 * pooled).max(10.0 / n as f64);
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|a, b| cells[*b].0.total_cmp(&cells[*a].0).then(a.cmp(b)));
    let mut cluster = vec![0usize; cells.len()];
    let mut levels: Vec<Vec<f64>> = vec![vec![cells[order[0]].0]];
    for w in order.windows(2) {
        if cells[w[0]].0 - cells[w[1]].0 > bandwidth {
            levels.push(Vec::new());
        }
        cluster[w[1]] = levels.len() - 1;
        levels.last_mut().expect("nonempty").push(cells[w[1]].0);
    }
    let entries = cells
        .iter()
        .enumerate()
        .map(|(i, c)| ProfileEntry { symbol: i / big_n, direction: i % big_n, value: c.0, std_err: c.1, cluster: cluster[i] })
        .collect();
    Ok(DirectionalProfile {
        n,
        entries,
        levels: levels.iter().map(|l| l.iter().sum::<f64>() / l.len() as f64).collect(),
        bandwidth,
    })
}

/// An invariant line field with its fiber exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct LineField {
    /// Line over each symbol; `None` off the recurrent class.
    pub lines: Vec<Option<ProjPoint>>,
    /// `Σ μ(x) K(x, y) log ‖A(y, x) v_x‖` with unit representatives.
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrreducibilityReport {
    /// No invariant line field exists.
    pub irreducible: bool,
    /// Every cycle of the support graph acts as a scalar, so every line
    /// field is invariant.
    pub every_field_invariant: bool,
    pub witnesses: Vec<LineField>,
    pub l1: LEEstimate,
    /// No invariant field has exponent below `L₁` (within tolerance).
    pub quasi_irreducible: bool,
}

/// Tolerance on δ for a candidate line to count as invariant under a cycle.
pub const INVARIANCE_TOL: f64 = 1e-9;

fn real_eigenlines(c: &Mat) -> Vec<Vec<f64>> {
    let (a, b, cc, d) = (c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]);
    let tr = a + d;
    let det = a * d - b * cc;
    let disc = tr * tr / 4.0 - det;
    let scale = c.norm().max(f64::MIN_POSITIVE);
    if disc < -1e-14 * scale * scale {
        return Vec::new();
    }
    let root = disc.max(0.0).sqrt();
    let mut lines = Vec::new();
    for lambda in [tr / 2.0 + root, tr / 2.0 - root] {
        // kernel of C − λI
        let r1 = [a - lambda, b];
        let r2 = [cc, d - lambda];
        let r = if linalg::norm(&r1) >= linalg::norm(&r2) { r1 } else { r2 };
        let v = if linalg::norm(&r) > 0.0 { vec![-r[1], r[0]] } else { vec![1.0, 0.0] };
        if lines.iter().all(|l: &Vec<f64>| delta(l, &v) > INVARIANCE_TOL) {
            lines.push(v);
        }
    }
    lines
}

fn is_scalar(c: &Mat) -> bool {
    let s = (c[(0, 0)] + c[(1, 1)]) / 2.0;
    let off = (c - Mat::identity(2, 2) * s).norm();
    off <= 1e-12 * c.norm()
}

/// Searches for a line field `V` with `Â(ω₁, ω₀) V(ω₀) = V(ω₁)` on every
/// edge of the recurrent support graph, and compares the exponent of any
/// field found with `L₁` (estimated with `n` steps and `t` trajectories).
pub fn check_quasi_irreducible_m2(pair: &CocyclePair, n: usize, t: usize, seed: u64) -> Result<IrreducibilityReport> {
    if pair.dim() != 2 {
        return Err(Error::UnsupportedDimension(pair.dim()));
    }
    let l1 = le_trajectory(pair, n, t, seed)?;
    let ns = pair.symbols();
    let mu = pair.mu().weights();
    let k = pair.kernel();
    let fiber = pair.fiber();
    let recurrent: Vec<bool> = mu.iter().map(|w| *w > 1e-12).collect();
    let base = recurrent.iter().position(|r| *r).expect("stationary measure has mass");
    // BFS tree: frame[x] = product of fiber matrices along the tree path base → x.
    let mut frame: Vec<Option<Mat>> = vec![None; ns];
    frame[base] = Some(Mat::identity(2, 2));
    let mut queue = VecDeque::from([base]);
    let mut tree_edge = vec![None; ns];
    while let Some(x) = queue.pop_front() {
        for (y, _) in k.support(x) {
            if recurrent[y] && frame[y].is_none() {
                let f = fiber.get(y, x) * frame[x].as_ref().expect("visited");
                frame[y] = Some(f);
                tree_edge[y] = Some(x);
                queue.push_back(y);
            }
        }
    }
    let mut cycles = Vec::new();
    for x in 0..ns {
        if !recurrent[x] {
            continue;
        }
        for (y, _) in k.support(x) {
            if !recurrent[y] || tree_edge[y] == Some(x) {
                continue;
            }
            let fx = frame[x].as_ref().expect("recurrent class is connected");
            let fy = frame[y].as_ref().expect("recurrent class is connected");
            let inv = fy.clone().try_inverse().ok_or_else(|| Error::Overflow("singular frame".into()))?;
            cycles.push(inv * fiber.get(y, x) * fx);
        }
    }
    let every_field_invariant = cycles.iter().all(is_scalar);
    let candidates: Vec<Vec<f64>> = if every_field_invariant {
        vec![vec![1.0, 0.0], vec![0.0, 1.0]]
    } else {
        let first = cycles.iter().find(|c| !is_scalar(c)).expect("a non-scalar cycle");
        real_eigenlines(first)
            .into_iter()
            .filter(|l| {
                cycles.iter().all(|c| {
                    let mut img = vec![0.0; 2];
                    linalg::mat_vec_into(c, l, &mut img);
                    delta(&img, l) <= INVARIANCE_TOL
                })
            })
            .collect()
    };
    let mut witnesses = Vec::new();
    for l in candidates {
        let mut lines = vec![None; ns];
        for x in 0..ns {
            if let Some(f) = &frame[x] {
                let mut v = vec![0.0; 2];
                linalg::mat_vec_into(f, &l, &mut v);
                lines[x] = Some(ProjPoint::new(v)?);
            }
        }
        let mut exponent = 0.0;
        for x in 0..ns {
            let Some(lx) = &lines[x] else { continue };
            for (y, p) in k.support(x) {
                let mut img = vec![0.0; 2];
                linalg::mat_vec_into(fiber.get(y, x), lx.rep(), &mut img);
                exponent += mu[x] * p * linalg::norm(&img).ln();
            }
        }
        witnesses.push(LineField { lines, exponent });
    }
    let tol = (3.0 * l1.std_err).max(1e-9);
    let quasi_irreducible = witnesses.iter().all(|w| w.exponent >= l1.value - tol);
    Ok(IrreducibilityReport {
        irreducible: witnesses.is_empty(),
        every_field_invariant,
        witnesses,
        l1,
        quasi_irreducible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::FiberMap;
    use crate::symbol_space::{Kernel, SymbolSpace};
    use nalgebra::dmatrix;
    use std::sync::Arc;

    fn constant_pair(a: Mat) -> CocyclePair {
        let sp = Arc::new(SymbolSpace::discrete(2));
        let k = Kernel::new(sp.clone(), vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        CocyclePair::new(FiberMap::constant(sp, a).unwrap(), k).unwrap()
    }

    #[test]
    fn identity_has_zero_exponent() {
        let e = le_trajectory(&constant_pair(Mat::identity(2, 2)), 2000, 4, 1).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.std_err, 0.0);
    }

    #[test]
    fn constant_diagonal_is_log_two() {
        let pair = constant_pair(dmatrix![2.0, 0.0; 0.0, 0.5]);
        let e = le_trajectory(&pair, 5000, 4, 3).unwrap();
        assert!((e.value - 2f64.ln()).abs() < 1e-9);
        let s = le_spectrum(&pair, 5000, 4, 3).unwrap();
        assert!((s.values[0] - 2f64.ln()).abs() < 1e-9);
        assert!((s.values[1] + 2f64.ln()).abs() < 1e-9);
        let gap = gap_from_spectrum(&s).unwrap();
        assert!(gap.simple);
    }

    #[test]
    fn short_runs_rejected() {
        assert!(le_trajectory(&constant_pair(Mat::identity(2, 2)), 10, 4, 1).is_err());
    }

    #[test]
    fn reproducible() {
        let pair = constant_pair(dmatrix![1.0, 1.0; 0.5, 2.0]);
        let a = le_trajectory(&pair, 1000, 8, 42).unwrap();
        let b = le_trajectory(&pair, 1000, 8, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn triangular_witness() {
        let pair = constant_pair(dmatrix![0.5, 1.0; 0.0, 2.0]);
        let rep = check_quasi_irreducible_m2(&pair, 2000, 8, 5).unwrap();
        assert!(!rep.irreducible);
        assert!(!rep.quasi_irreducible);
        let low = rep.witnesses.iter().map(|w| w.exponent).fold(f64::INFINITY, f64::min);
        assert!((low - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn identity_every_field_invariant() {
        let rep = check_quasi_irreducible_m2(&constant_pair(Mat::identity(2, 2)), 1000, 2, 5).unwrap();
        assert!(rep.every_field_invariant);
        assert!(!rep.irreducible);
        assert!(rep.quasi_irreducible);
    }
}
