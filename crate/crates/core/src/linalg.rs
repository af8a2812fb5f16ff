//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values in descending order.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Builds an `rows × cols` matrix from row-major nested vectors.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Lexicographically ordered `k`-subsets of `0..m`.
pub fn k_subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// `k`-th exterior power (compound matrix of `k × k` minors) in the
/// lexicographic basis `e_I = e_{i_1} ∧ … ∧ e_{i_k}`.
pub fn exterior_power_matrix(m: &Mat, k: usize) -> Mat {
    let n = m.nrows();
    assert!(k >= 1 && k <= n, "exterior power degree out of range");
    if k == 1 {
        return m.clone();
    }
    let subsets = k_subsets(n, k);
    let dim = subsets.len();
    Mat::from_fn(dim, dim, |a, b| {
        let rows = &subsets[a];
        let cols = &subsets[b];
        Mat::from_fn(k, k, |i, j| m[(rows[i], cols[j])]).determinant()
    })
}

/// Norm of `p ∧ q` from the Plücker coordinates.
pub fn wedge_norm(p: &[f64], q: &[f64]) -> f64 {
    let m = p.len();
    let mut acc = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let w = p[i] * q[j] - p[j] * q[i];
            acc += w * w;
        }
    }
    acc.sqrt()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `out = m · v` for a square matrix stored in nalgebra layout.
#[inline]
pub fn mat_vec_into(m: &Mat, v: &[f64], out: &mut [f64]) {
    let d = m.nrows();
    for (i, o) in out.iter_mut().enumerate().take(d) {
        let mut s = 0.0;
        for (j, vj) in v.iter().enumerate().take(d) {
            s += m[(i, j)] * vj;
        }
        *o = s;
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
