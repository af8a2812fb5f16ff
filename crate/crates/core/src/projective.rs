//! Projective space of lines in ℝᵐ, the sine-of-angle distance δ, and the
//! fixed grids that discretize it.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::rng::stream_rng;

/// Smallest image norm accepted by [`proj_act`].
pub const UNDERFLOW_FLOOR: f64 = 1e-300;
/// δ-values closer than this count as ties in [`ProjectiveGrid::nearest`].
pub const TIE_TOL: f64 = 1e-12;
const PROBE_SEED: u64 = 0x6772_6964_5f70_726f;
const PROBES: usize = 10_000;

/// A line in ℝᵐ, stored as a unit representative whose first nonzero
/// coordinate is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjPoint {
    rep: Vec<f64>,
}

fn canonicalize(v: &mut [f64]) -> Result<()> {
    let n = linalg::norm(v);
    if !(n >= UNDERFLOW_FLOOR) || !n.is_finite() {
        return Err(Error::NumericUnderflow(n));
    }
    let sign = match v.iter().find(|x| **x != 0.0) {
        Some(x) if *x < 0.0 => -1.0,
        _ => 1.0,
    };
    v.iter_mut().for_each(|x| *x *= sign / n);
    Ok(())
}

impl ProjPoint {
    pub fn new(mut v: Vec<f64>) -> Result<Self> {
        canonicalize(&mut v)?;
        Ok(ProjPoint { rep: v })
    }

    /// Line at angle `theta` in the plane.
    pub fn from_angle(theta: f64) -> Self {
        ProjPoint::new(vec![theta.cos(), theta.sin()]).expect("unit vector")
    }

    pub fn basis(m: usize, i: usize) -> Self {
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        ProjPoint { rep: v }
    }

    pub fn rep(&self) -> &[f64] {
        &self.rep
    }

    pub fn dim(&self) -> usize {
        self.rep.len()
    }
}

/// `δ(p̂, q̂) = ‖p ∧ q‖ / (‖p‖‖q‖)` for arbitrary nonzero representatives.
pub fn delta(p: &[f64], q: &[f64]) -> f64 {
    (linalg::wedge_norm(p, q) / (linalg::norm(p) * linalg::norm(q))).min(1.0)
}

/// δ for unit representatives.
#[inline]
pub fn delta_unit(p: &[f64], q: &[f64]) -> f64 {
    if p.len() == 2 {
        (p[0] * q[1] - p[1] * q[0]).abs().min(1.0)
    } else {
        linalg::wedge_norm(p, q).min(1.0)
    }
}

pub fn proj_delta(p: &ProjPoint, q: &ProjPoint) -> f64 {
    delta_unit(&p.rep, &q.rep)
}

/// The line through `M v`.
pub fn proj_act(m: &Mat, p: &ProjPoint) -> Result<ProjPoint> {
    let mut out = vec![0.0; p.rep.len()];
    linalg::mat_vec_into(m, &p.rep, &mut out);
    canonicalize(&mut out)?;
    Ok(ProjPoint { rep: out })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScheme {
    /// Lines at angles `kπ/N` (m = 2 only).
    UniformAngle,
    /// Area-uniform spiral on the upper hemisphere (m ≥ 3); for m > 3 a
    /// seeded Gaussian point cloud folded onto a hemisphere.
    FibonacciSphere,
}

/// A deterministic finite point cloud on ℙ(ℝᵐ).
#[derive(Debug, Clone)]
pub struct ProjectiveGrid {
    m: usize,
    scheme: GridScheme,
    /// Unit representatives, `m` coordinates per point.
    reps: Vec<f64>,
    resolution: f64,
    min_separation: f64,
}

impl ProjectiveGrid {
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.reps.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn scheme(&self) -> GridScheme {
        self.scheme
    }

    /// Covering radius estimated from seeded random probes.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Smallest δ between distinct grid points.
    pub fn min_separation(&self) -> f64 {
        self.min_separation
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.reps[i * self.m..(i + 1) * self.m]
    }

    pub fn proj_point(&self, i: usize) -> ProjPoint {
        ProjPoint { rep: self.point(i).to_vec() }
    }

    #[inline]
    pub fn delta(&self, i: usize, j: usize) -> f64 {
        delta_unit(self.point(i), self.point(j))
    }

    /// Index of the grid point nearest to the line through `v` (any nonzero
    /// representative); ties go to the lowest index.
    pub fn nearest(&self, v: &[f64]) -> usize {
        let n = self.len();
        let nv = linalg::norm(v);
        let unit: Vec<f64> = v.iter().map(|x| x / nv).collect();
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        // Candidates are visited in increasing index order, so a strict
        // improvement test keeps the lowest index among ties.
        let mut consider = |i: usize| {
            let d = delta_unit(&unit, self.point(i));
            if d < best_d - TIE_TOL {
                best = i;
                best_d = d;
            }
        };
        if self.scheme == GridScheme::UniformAngle {
            let mut theta = unit[1].atan2(unit[0]);
            if theta < 0.0 {
                theta += PI;
            }
            if theta >= PI {
                theta -= PI;
            }
            let k = (theta / (PI / n as f64)).floor() as isize;
            let mut cands: Vec<usize> = (-1..=2).map(|o| (k + o).rem_euclid(n as isize) as usize).collect();
            cands.sort_unstable();
            cands.dedup();
            for i in cands {
                consider(i);
            }
        } else {
            for i in 0..n {
                consider(i);
            }
        }
        best
    }
}

fn fibonacci_hemisphere(n: usize) -> Vec<f64> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut reps = Vec::with_capacity(3 * n);
    for i in 0..n {
        let z = 1.0 - (i as f64 + 0.5) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        let mut v = [r * phi.cos(), r * phi.sin(), z];
        canonicalize(&mut v).expect("unit vector");
        reps.extend_from_slice(&v);
    }
    reps
}

fn gaussian_hemisphere(m: usize, n: usize) -> Vec<f64> {
    let mut rng = stream_rng(PROBE_SEED ^ m as u64, 1);
    let mut reps = Vec::with_capacity(m * n);
    for _ in 0..n {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        canonicalize(&mut v).expect("nonzero Gaussian vector");
        reps.extend_from_slice(&v);
    }
    reps
}

/// Builds a deterministic grid of `n` lines in ℝᵐ.
pub fn make_grid(m: usize, n: usize, scheme: GridScheme) -> Result<ProjectiveGrid> {
    if n < 8 {
        return Err(Error::invalid("grid.n", "a projective grid needs at least 8 points"));
    }
    let reps = match (m, scheme) {
        (2, GridScheme::UniformAngle) => (0..n)
            .flat_map(|k| {
                let t = k as f64 * PI / n as f64;
                [t.cos(), t.sin()]
            })
            .collect(),
        (2, _) => return Err(Error::invalid("grid.scheme", "m = 2 requires the uniform-angle scheme")),
        (_, GridScheme::UniformAngle) => {
            return Err(Error::invalid("grid.scheme", "the uniform-angle scheme needs m = 2"))
        }
        (3, GridScheme::FibonacciSphere) => fibonacci_hemisphere(n),
        (m, GridScheme::FibonacciSphere) if m > 3 => gaussian_hemisphere(m, n),
        (m, _) => return Err(Error::UnsupportedDimension(m)),
    };
    let mut grid = ProjectiveGrid { m, scheme, reps, resolution: 0.0, min_separation: 0.0 };
    grid.min_separation = if m == 2 {
        (PI / n as f64).sin()
    } else {
        let mut s = f64::INFINITY;
        for i in 0..n {
            for j in 0..i {
                s = s.min(grid.delta(i, j));
            }
        }
        s
    };
    if !(grid.min_separation > 0.0) {
        return Err(Error::invalid("grid.n", "grid points are not distinct"));
    }
    let mut rng = stream_rng(PROBE_SEED, m as u64);
    let mut h: f64 = 0.0;
    let mut v = vec![0.0; m];
    for _ in 0..PROBES {
        v.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
        let i = grid.nearest(&v);
        h = h.max(delta(&v, grid.point(i)));
    }
    grid.resolution = h;
    Ok(grid)
}

pub fn nearest_grid(g: &ProjectiveGrid, p: &ProjPoint) -> usize {
    g.nearest(&p.rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn delta_examples() {
        let e1 = ProjPoint::basis(2, 0);
        let e2 = ProjPoint::basis(2, 1);
        let d = ProjPoint::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(proj_delta(&e1, &e1), 0.0);
        assert_eq!(proj_delta(&e1, &e2), 1.0);
        assert!((proj_delta(&e1, &d) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn act_examples() {
        let p = ProjPoint::new(vec![1.0, 1.0]).unwrap();
        let q = proj_act(&dmatrix![2.0, 0.0; 0.0, 0.5], &p).unwrap();
        let n = (4.25f64).sqrt();
        assert!((q.rep()[0] - 2.0 / n).abs() < 1e-15);
        assert!((q.rep()[1] - 0.5 / n).abs() < 1e-15);
        assert!(proj_delta(&proj_act(&Mat::identity(2, 2), &p).unwrap(), &p) < 1e-15);
        let r = proj_act(&dmatrix![-3.0, 1.0; 2.0, 5.0], &p).unwrap();
        let s = proj_act(&dmatrix![3.0, -1.0; -2.0, -5.0], &p).unwrap();
        assert!(proj_delta(&r, &s) < 1e-15);
        assert!(ProjPoint::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn grid_of_four_lines() {
        let g = make_grid(2, 8, GridScheme::UniformAngle).unwrap();
        assert_eq!(g.len(), 8);
        assert!((g.point(2)[0] - (PI / 4.0).cos()).abs() < 1e-15);
        assert!((g.min_separation() - (PI / 8.0).sin()).abs() < 1e-15);
        assert!(make_grid(2, 4, GridScheme::UniformAngle).is_err());
        assert!(make_grid(2, 16, GridScheme::FibonacciSphere).is_err());
    }

    #[test]
    fn midpoint_tie_goes_to_lower_index() {
        let n = 12;
        let g = make_grid(2, n, GridScheme::UniformAngle).unwrap();
        for k in 0..n - 1 {
            let t = (k as f64 + 0.5) * PI / n as f64;
            assert_eq!(g.nearest(&[t.cos(), t.sin()]), k);
        }
        // between the last line and the first one across θ = π
        let t = (n as f64 - 0.5) * PI / n as f64;
        assert_eq!(g.nearest(&[t.cos(), t.sin()]), 0);
    }

    #[test]
    fn fibonacci_covering() {
        let g = make_grid(3, 200, GridScheme::FibonacciSphere).unwrap();
        assert!(g.resolution() < 0.25, "h = {}", g.resolution());
        assert!(g.min_separation() > 0.0);
    }
}
