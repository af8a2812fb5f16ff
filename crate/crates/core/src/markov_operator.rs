//! The projectivized Markov operators `Q` on Σ×ℙ and `Q̄` on Σ×Σ×ℙ,
//! discretized by nearest-grid projection of the pushed-forward line.

use rand::Rng;
use rayon::prelude::*;

use crate::cocycle::CocyclePair;
use crate::error::{Error, Result};
use crate::fit::geometric_fit;
use crate::projective::ProjectiveGrid;
use crate::rng::stream_rng;
use crate::symbol_space::{Carrier, Measure, STOCHASTIC_TOL};

/// Rows handled per rayon task when applying an operator.
const CHUNK: usize = 512;

/// Real values on a Σ×ℙ or Σ×Σ×ℙ grid carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    carrier: Carrier,
    values: Vec<f64>,
}

impl Observable {
    pub fn new(carrier: Carrier, values: Vec<f64>) -> Result<Self> {
        if matches!(carrier, Carrier::Sigma { .. }) {
            return Err(Error::DimensionMismatch("observables live on Σ×ℙ or Σ×Σ×ℙ".into()));
        }
        if values.len() != carrier.len() {
            return Err(Error::DimensionMismatch(format!(
                "observable has {} values, carrier has {}",
                values.len(),
                carrier.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "observable values must be finite"));
        }
        Ok(Observable { carrier, values })
    }

    /// `f(symbol, grid index)` on Σ×ℙ.
    pub fn on_sigma_p(symbols: usize, grid: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let values = (0..symbols * grid).map(|i| f(i / grid, i % grid)).collect();
        Self::new(Carrier::SigmaP { symbols, grid }, values)
    }

    /// `f(next, current, grid index)` on Σ×Σ×ℙ.
    pub fn on_sigma_sigma_p(symbols: usize, grid: usize, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let values = (0..symbols * symbols * grid)
            .map(|i| {
                let g = i % grid;
                let pair = i / grid;
                f(pair / symbols, pair % symbols, g)
            })
            .collect();
        Self::new(Carrier::SigmaSigmaP { symbols, grid }, values)
    }

    pub fn carrier(&self) -> Carrier {
        self.carrier
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Q,
    QBar,
}

#[derive(Debug, Clone)]
struct Csr {
    ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
}

impl Csr {
    fn rows(&self) -> usize {
        self.ptr.len() - 1
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            for (k, o) in chunk.iter_mut().enumerate() {
                let r = c * CHUNK + k;
                let mut s = 0.0;
                for e in self.ptr[r]..self.ptr[r + 1] {
                    s += self.val[e] * x[self.col[e] as usize];
                }
                *o = s;
            }
        });
        out
    }

    fn transpose(&self, ncols: usize) -> Csr {
        let mut counts = vec![0usize; ncols + 1];
        for &c in &self.col {
            counts[c as usize + 1] += 1;
        }
        for i in 0..ncols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut col = vec![0u32; self.col.len()];
        let mut val = vec![0.0; self.val.len()];
        for r in 0..self.rows() {
            for e in self.ptr[r]..self.ptr[r + 1] {
                let c = self.col[e] as usize;
                col[next[c]] = r as u32;
                val[next[c]] = self.val[e];
                next[c] += 1;
            }
        }
        Csr { ptr: counts, col, val }
    }
}

/// A sparse row-stochastic matrix over a grid carrier.
#[derive(Debug, Clone)]
pub struct DiscretizedOperator {
    kind: OperatorKind,
    carrier: Carrier,
    forward: Csr,
    adjoint: Csr,
    resolution: f64,
}

impl DiscretizedOperator {
    fn new(kind: OperatorKind, carrier: Carrier, forward: Csr, resolution: f64) -> Self {
        let adjoint = forward.transpose(carrier.len());
        DiscretizedOperator { kind, carrier, forward, adjoint, resolution }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn carrier(&self) -> Carrier {
        self.carrier
    }

    /// Covering radius of the underlying grid.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn nnz(&self) -> usize {
        self.forward.val.len()
    }

    /// `(Tf)(row) = Σ_col T[row, col] f(col)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.forward.apply(f)
    }

    /// `(T*ν)(col) = Σ_row ν(row) T[row, col]`.
    pub fn apply_adjoint(&self, nu: &[f64]) -> Vec<f64> {
        self.adjoint.apply(nu)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.forward.rows())
            .map(|r| self.forward.val[self.forward.ptr[r]..self.forward.ptr[r + 1]].iter().sum())
            .collect()
    }
}

/// A cocycle together with a grid and the table of projected pushforwards
/// `push[(to·n + from)·N + g] = nearest(Â(to, from) v_g)`.
#[derive(Debug, Clone)]
pub struct ProjectiveCocycle {
    pair: CocyclePair,
    grid: ProjectiveGrid,
    push: Vec<u32>,
}

impl ProjectiveCocycle {
    pub fn new(pair: &CocyclePair, grid: &ProjectiveGrid) -> Result<Self> {
        if pair.dim() != grid.dim() {
            return Err(Error::DimensionMismatch(format!(
                "fiber dimension {} but grid dimension {}",
                pair.dim(),
                grid.dim()
            )));
        }
        let n = pair.symbols();
        let big_n = grid.len();
        let m = grid.dim();
        let push: Vec<u32> = (0..n * n * big_n)
            .into_par_iter()
            .with_min_len(256)
            .map(|i| {
                let edge = i / big_n;
                let g = i % big_n;
                let a = pair.fiber().get(edge / n, edge % n);
                let mut img = vec![0.0; m];
                crate::linalg::mat_vec_into(a, grid.point(g), &mut img);
                grid.nearest(&img) as u32
            })
            .collect();
        Ok(ProjectiveCocycle { pair: pair.clone(), grid: grid.clone(), push })
    }

    pub fn pair(&self) -> &CocyclePair {
        &self.pair
    }

    pub fn grid(&self) -> &ProjectiveGrid {
        &self.grid
    }

    pub fn symbols(&self) -> usize {
        self.pair.symbols()
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn sigma_p(&self) -> Carrier {
        Carrier::SigmaP { symbols: self.symbols(), grid: self.grid_len() }
    }

    pub fn sigma_sigma_p(&self) -> Carrier {
        Carrier::SigmaSigmaP { symbols: self.symbols(), grid: self.grid_len() }
    }

    /// Grid index of `Â(to, from) v_g`.
    #[inline]
    pub fn push(&self, to: usize, from: usize, g: usize) -> usize {
        self.push[(to * self.symbols() + from) * self.grid_len() + g] as usize
    }

    fn expect(&self, obs: &Observable, carrier: Carrier) -> Result<()> {
        if obs.carrier != carrier {
            return Err(Error::DimensionMismatch(format!("expected carrier {:?}, found {:?}", carrier, obs.carrier)));
        }
        Ok(())
    }

    /// `(Qφ)(ω₀, v) = Σ K(ω₀, ω₁) φ(ω₁, Â(ω₁, ω₀) v)`.
    pub fn apply_q(&self, phi: &Observable) -> Result<Observable> {
        self.expect(phi, self.sigma_p())?;
        let (n, big_n) = (self.symbols(), self.grid_len());
        let k = self.pair.kernel();
        let values = (0..n * big_n)
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|i| {
                let (w0, g) = (i / big_n, i % big_n);
                let mut s = 0.0;
                for (w1, p) in k.support(w0) {
                    s += p * phi.values[w1 * big_n + self.push(w1, w0, g)];
                }
                s
            })
            .collect();
        Ok(Observable { carrier: phi.carrier, values })
    }

    /// `(Q̄ψ)(ω₁, ω₀, v) = Σ K(ω₁, ω₂) ψ(ω₂, ω₁, Â(ω₁, ω₀) v)`.
    pub fn apply_qbar(&self, psi: &Observable) -> Result<Observable> {
        self.expect(psi, self.sigma_sigma_p())?;
        let (n, big_n) = (self.symbols(), self.grid_len());
        let k = self.pair.kernel();
        let values = (0..n * n * big_n)
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|i| {
                let g = i % big_n;
                let (w1, w0) = ((i / big_n) / n, (i / big_n) % n);
                let h = self.push(w1, w0, g);
                let mut s = 0.0;
                for (w2, p) in k.support(w1) {
                    s += p * psi.values[(w2 * n + w1) * big_n + h];
                }
                s
            })
            .collect();
        Ok(Observable { carrier: psi.carrier, values })
    }

    /// `(Πψ)(ω₀, v) = Σ K(ω₀, ω₁) ψ(ω₁, ω₀, v)`.
    pub fn project_pi(&self, psi: &Observable) -> Result<Observable> {
        self.expect(psi, self.sigma_sigma_p())?;
        let (n, big_n) = (self.symbols(), self.grid_len());
        let k = self.pair.kernel();
        let values = (0..n * big_n)
            .map(|i| {
                let (w0, g) = (i / big_n, i % big_n);
                let mut s = 0.0;
                for (w1, p) in k.support(w0) {
                    s += p * psi.values[(w1 * n + w0) * big_n + g];
                }
                s
            })
            .collect();
        Ok(Observable { carrier: self.sigma_p(), values })
    }

    pub fn q_operator(&self) -> DiscretizedOperator {
        let (n, big_n) = (self.symbols(), self.grid_len());
        let k = self.pair.kernel();
        let mut ptr = vec![0];
        let mut col = Vec::new();
        let mut val = Vec::new();
        for w0 in 0..n {
            for g in 0..big_n {
                for (w1, p) in k.support(w0) {
                    col.push((w1 * big_n + self.push(w1, w0, g)) as u32);
                    val.push(p);
                }
                ptr.push(col.len());
            }
        }
        DiscretizedOperator::new(OperatorKind::Q, self.sigma_p(), Csr { ptr, col, val }, self.grid.resolution())
    }

    pub fn qbar_operator(&self) -> DiscretizedOperator {
        let (n, big_n) = (self.symbols(), self.grid_len());
        let k = self.pair.kernel();
        let mut ptr = vec![0];
        let mut col = Vec::new();
        let mut val = Vec::new();
        for w1 in 0..n {
            for w0 in 0..n {
                for g in 0..big_n {
                    let h = self.push(w1, w0, g);
                    for (w2, p) in k.support(w1) {
                        col.push(((w2 * n + w1) * big_n + h) as u32);
                        val.push(p);
                    }
                    ptr.push(col.len());
                }
            }
        }
        DiscretizedOperator::new(OperatorKind::QBar, self.sigma_sigma_p(), Csr { ptr, col, val }, self.grid.resolution())
    }
}

pub fn apply_q(pair: &CocyclePair, grid: &ProjectiveGrid, phi: &Observable) -> Result<Observable> {
    ProjectiveCocycle::new(pair, grid)?.apply_q(phi)
}

pub fn apply_qbar(pair: &CocyclePair, grid: &ProjectiveGrid, psi: &Observable) -> Result<Observable> {
    ProjectiveCocycle::new(pair, grid)?.apply_qbar(psi)
}

pub fn project_pi(pair: &CocyclePair, grid: &ProjectiveGrid, psi: &Observable) -> Result<Observable> {
    ProjectiveCocycle::new(pair, grid)?.project_pi(psi)
}

/// Evidence that the stationary measure is unique.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// `k_α(Aⁿ, Kⁿ) < 1` was verified.
    KAlpha { alpha: f64, n: usize, k_alpha: f64 },
    /// The user asserted uniqueness.
    Override,
    Absent,
}

impl Certificate {
    pub fn is_present(&self) -> bool {
        !matches!(self, Certificate::Absent)
    }
}

#[derive(Debug, Clone)]
pub struct StationaryResult {
    pub eta: Measure,
    /// `‖Q*η − η‖_TV` at termination.
    pub residual: f64,
    pub iterations: usize,
    /// Fitted geometric decay rate of the successive residuals.
    pub rate: Option<f64>,
    pub certificate: Certificate,
    pub warnings: Vec<String>,
}

/// Iteration cap for the adjoint power method.
pub const STATIONARY_MAX_ITERS: usize = 200_000;

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Q-stationary measure on Σ×ℙ by power iteration of the adjoint from the
/// uniform measure, stopping once the TV residual drops to `tol`.
pub fn stationary_measure_q(pc: &ProjectiveCocycle, tol: f64, certificate: Certificate) -> Result<StationaryResult> {
    let q = pc.q_operator();
    stationary_from_operator(&q, tol, certificate)
}

fn stationary_from_operator(q: &DiscretizedOperator, tol: f64, certificate: Certificate) -> Result<StationaryResult> {
    let len = q.carrier().len();
    let mut eta = vec![1.0 / len as f64; len];
    let mut residuals = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < STATIONARY_MAX_ITERS {
        let mut next = q.apply_adjoint(&eta);
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        residual = tv(&next, &eta);
        iterations += 1;
        residuals.push(residual);
        if residual <= tol {
            break;
        }
        eta = next;
    }
    if residual > tol {
        return Err(Error::NoConvergence { iterations, residual });
    }
    let steps: Vec<f64> = (1..=residuals.len()).map(|i| i as f64).collect();
    let rate = geometric_fit(&steps, &residuals, 1e-15).map(|f| f.rate);
    let mut warnings = Vec::new();
    if !certificate.is_present() {
        warnings.push("no uniqueness certificate: the stationary measure may depend on the starting measure".to_string());
    }
    Ok(StationaryResult {
        eta: Measure::from_unnormalized(q.carrier(), eta)?,
        residual,
        iterations,
        rate,
        certificate,
        warnings,
    })
}

/// `m = K ⋉ η` together with its verified Q̄-stationarity residual.
#[derive(Debug, Clone)]
pub struct LiftedMeasure {
    pub m: Measure,
    pub residual: f64,
}

/// `m(ω₁, ω₀, v) = K(ω₀, ω₁) η(ω₀, v)`.
pub fn lift_measure(pc: &ProjectiveCocycle, eta: &Measure) -> Result<LiftedMeasure> {
    if eta.carrier() != pc.sigma_p() {
        return Err(Error::DimensionMismatch("η must live on Σ×ℙ".into()));
    }
    let (n, big_n) = (pc.symbols(), pc.grid_len());
    let k = pc.pair.kernel();
    let e = eta.weights();
    let weights: Vec<f64> = (0..n * n * big_n)
        .map(|i| {
            let g = i % big_n;
            let (w1, w0) = ((i / big_n) / n, (i / big_n) % n);
            k.prob(w0, w1) * e[w0 * big_n + g]
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL * 10.0 {
        return Err(Error::invalid("eta", format!("lifted mass is {total}")));
    }
    let m = Measure::from_unnormalized(pc.sigma_sigma_p(), weights)?;
    let qbar = pc.qbar_operator();
    let image = qbar.apply_adjoint(m.weights());
    let residual = tv(&image, m.weights());
    Ok(LiftedMeasure { m, residual })
}

/// Q̄-stationary measure on Σ×Σ×ℙ by direct power iteration (used to
/// cross-check [`lift_measure`]).
pub fn stationary_measure_qbar(pc: &ProjectiveCocycle, tol: f64, certificate: Certificate) -> Result<StationaryResult> {
    stationary_from_operator(&pc.qbar_operator(), tol, certificate)
}

/// How random test observables are drawn in [`mixing_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservableFamily {
    /// `φ(ω, v) = c_ω + Σ_k b_{ω,k} δ(v, u_k)^α` with seeded coefficients.
    Holder { alpha: f64, terms: usize },
    /// `φ(ω, v) = f(ω)`: only the base coordinate matters.
    SigmaMarginal,
}

#[derive(Debug, Clone)]
pub struct MixingReport {
    /// Fitted σ̂ of `sup_φ ‖Qⁿφ − ∫φ dη‖_∞ / ‖φ‖_α`.
    pub sigma_hat: f64,
    /// Worst-case constant: envelope of the normalized residuals over `σ̂ⁿ`.
    pub c_hat: f64,
    /// Normalized residual envelope for n = 1, 2, ….
    pub residuals: Vec<f64>,
    pub fit_points: usize,
    pub trials: usize,
    pub resolution: f64,
}

/// `φ(ω, v̂) = c_ω + Σ_k b_{ω,k} δ(v̂, û_k)^α`, an explicit Hölder function
/// that can be evaluated off the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderObservable {
    pub alpha: f64,
    pub consts: Vec<f64>,
    /// `coeffs[ω][k]`
    pub coeffs: Vec<Vec<f64>>,
    pub centres: Vec<Vec<f64>>,
}

impl HolderObservable {
    /// Coefficients uniform on `[-1, 1]`, centres Gaussian, from stream `trial` of `seed`.
    pub fn random(symbols: usize, m: usize, alpha: f64, terms: usize, seed: u64, trial: u64) -> Self {
        let mut rng = stream_rng(seed, trial);
        let centres = (0..terms)
            .map(|_| (0..m).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect())
            .collect();
        let consts = (0..symbols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let coeffs = (0..symbols).map(|_| (0..terms).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        HolderObservable { alpha, consts, coeffs, centres }
    }

    pub fn eval(&self, symbol: usize, v: &[f64]) -> f64 {
        self.consts[symbol]
            + self.coeffs[symbol]
                .iter()
                .zip(&self.centres)
                .map(|(b, u)| b * crate::projective::delta(v, u).powf(self.alpha))
                .sum::<f64>()
    }

    /// Upper bound `max_ω Σ_k |b_{ω,k}|` on the continuum seminorm `v_α`,
    /// from `|δ(p,u)^α − δ(q,u)^α| ≤ δ(p,q)^α`.
    pub fn seminorm_bound(&self) -> f64 {
        self.coeffs.iter().map(|c| c.iter().map(|b| b.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn on_grid(&self, grid: &ProjectiveGrid) -> Result<Observable> {
        Observable::on_sigma_p(self.consts.len(), grid.len(), |s, g| self.eval(s, grid.point(g)))
    }
}

/// A seeded random observable together with `‖φ‖_α = ‖φ‖_∞ + v_α(φ)` (the
/// seminorm replaced by its analytic upper bound).
pub fn random_observable(
    symbols: usize,
    grid: &ProjectiveGrid,
    family: ObservableFamily,
    seed: u64,
    trial: u64,
) -> Result<(Observable, f64)> {
    match family {
        ObservableFamily::SigmaMarginal => {
            let mut rng = stream_rng(seed, trial);
            let f: Vec<f64> = (0..symbols).map(|_| rng.random_range(-1.0..1.0)).collect();
            let obs = Observable::on_sigma_p(symbols, grid.len(), |s, _| f[s])?;
            let norm = obs.sup_norm();
            Ok((obs, norm))
        }
        ObservableFamily::Holder { alpha, terms } => {
            let h = HolderObservable::random(symbols, grid.dim(), alpha, terms, seed, trial);
            let obs = h.on_grid(grid)?;
            let norm = obs.sup_norm() + h.seminorm_bound();
            Ok((obs, norm))
        }
    }
}

/// Strong-mixing rate of `Q` estimated over `trials` seeded observables.
pub fn mixing_rate(
    pc: &ProjectiveCocycle,
    eta: &Measure,
    trials: usize,
    seed: u64,
    family: ObservableFamily,
    n_max: usize,
    tol: f64,
) -> Result<MixingReport> {
    if trials == 0 {
        return Err(Error::invalid("trials", "need at least one trial"));
    }
    let q = pc.q_operator();
    let floor = RESIDUAL_FLOOR.max(100.0 * tol);
    let mut envelope = vec![0.0f64; n_max];
    for t in 0..trials {
        let (phi, norm) = random_observable(pc.symbols(), pc.grid(), family, seed, t as u64)?;
        let mean = eta.integrate(phi.values());
        let mut cur = phi.into_values();
        for slot in envelope.iter_mut() {
            cur = q.apply(&cur);
            let e = cur.iter().fold(0.0f64, |a, v| a.max((v - mean).abs())) / norm;
            *slot = slot.max(e);
        }
    }
    let above = envelope.iter().take_while(|e| **e > floor).count();
    let first = envelope[0];
    let last_above = if above > 0 { envelope[above - 1] } else { first };
    if above == envelope.len() && last_above > 0.1 * first {
        return Err(Error::FitFailure(format!(
            "mixing residual did not decay: {first:e} after one step, {last_above:e} after {n_max}"
        )));
    }
    let steps: Vec<f64> = (1..=n_max).map(|i| i as f64).collect();
    let fit = if above >= 4 {
        // Fit the tail of the decay, past the transient from faster modes.
        let start = above / 2;
        geometric_fit(&steps[start..above], &envelope[start..above], floor)
    } else if above >= 2 {
        geometric_fit(&steps[..above], &envelope[..above], floor)
    } else {
        None
    };
    let (sigma_hat, fit_points) = match fit {
        Some(f) => (f.rate, f.points),
        // Residual falls below the floor within one or two steps.
        None => ((floor / first.max(floor)).min(1.0), 0),
    };
    let c_hat = envelope
        .iter()
        .take(above.max(1))
        .enumerate()
        .map(|(i, e)| if sigma_hat > 0.0 { e / sigma_hat.powi(i as i32 + 1) } else { *e })
        .fold(0.0, f64::max);
    Ok(MixingReport {
        sigma_hat,
        c_hat,
        residuals: envelope,
        fit_points,
        trials,
        resolution: pc.grid().resolution(),
    })
}

/// Normalized residuals below this level are left out of the mixing fit.
pub const RESIDUAL_FLOOR: f64 = 1e-13;
