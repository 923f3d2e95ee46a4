//! Dense matrices and a one-sided Jacobi SVD.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from rows; `None` if they are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    /// Matrix product; panics on mismatched shapes.
    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Keeps the first `k` columns.
    pub fn take_columns(&self, k: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, k);
        for r in 0..self.rows {
            for c in 0..k {
                out[(r, c)] = self[(r, c)];
            }
        }
        out
    }

    /// Permutes rows: row `i` of the result is row `order[i]` of `self`.
    pub fn select_rows(&self, order: &[usize]) -> Matrix {
        let rows: Vec<Vec<f64>> = order.iter().map(|&r| self.row(r).to_vec()).collect();
        let mut m = Matrix::from_rows(&rows).expect("rows have equal length");
        m.cols = self.cols;
        m
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn column_dot(&self, i: usize, j: usize) -> f64 {
        (0..self.rows).map(|r| self[(r, i)] * self[(r, j)]).sum()
    }

    fn rotate_columns(&mut self, i: usize, j: usize, c: f64, s: f64) {
        for r in 0..self.rows {
            let a = self[(r, i)];
            let b = self[(r, j)];
            self[(r, i)] = c * a - s * b;
            self[(r, j)] = s * a + c * b;
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows).ok_or_else(|| serde::de::Error::custom("ragged matrix rows"))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SvdError {
    #[error("rank {k} outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("Jacobi SVD did not converge within {cap} sweeps")]
    NonConvergence { cap: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// Truncated factorization `A ≈ U · diag(S) · Vᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// m×k, orthonormal columns.
    pub u: Matrix,
    /// Non-increasing, non-negative.
    pub s: Vec<f64>,
    /// n×k, orthonormal columns.
    pub v: Matrix,
}

impl Decomposition {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (c, s) in self.s.iter().enumerate() {
                us[(r, c)] *= s;
            }
        }
        us.mul(&self.v.transpose())
    }
}

/// Sweep limit for an m×n input.
pub fn sweep_cap(m: usize, n: usize) -> usize {
    let p = m.min(n);
    (10 * p * p).max(1)
}

/// Rank-`k` SVD of `a`, `1 ≤ k ≤ min(m, n)`.
///
/// The largest-magnitude entry of every left singular vector is made
/// positive, so the result is reproducible for a given input.
pub fn svd_truncate(a: &Matrix, k: usize) -> Result<Decomposition, SvdError> {
    let max = a.rows().min(a.cols());
    if k == 0 || k > max {
        return Err(SvdError::KOutOfRange { k, max });
    }
    if !a.is_finite() {
        return Err(SvdError::NonFinite);
    }
    let full = if a.rows() >= a.cols() {
        jacobi(a)?
    } else {
        let t = jacobi(&a.transpose())?;
        Decomposition { u: t.v, s: t.s, v: t.u }
    };
    let mut d = Decomposition {
        u: full.u.take_columns(k),
        s: full.s[..k].to_vec(),
        v: full.v.take_columns(k),
    };
    fix_signs(&mut d);
    Ok(d)
}

/// Thin SVD of a tall matrix (m ≥ n) by one-sided Jacobi rotations.
fn jacobi(a: &Matrix) -> Result<Decomposition, SvdError> {
    let (m, n) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut v = Matrix::identity(n);
    let cap = sweep_cap(m, n);
    let tol = f64::EPSILON * m as f64;
    // columns this small are numerically zero; rotating them only stirs noise
    let floor = (f64::EPSILON * a.frobenius()).powi(2);

    let mut converged = n < 2;
    for _ in 0..cap {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let alpha = w.column_dot(i, i);
                let beta = w.column_dot(j, j);
                let gamma = w.column_dot(i, j);
                if alpha <= floor || beta <= floor || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                w.rotate_columns(i, j, c, s);
                v.rotate_columns(i, j, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(SvdError::NonConvergence { cap });
    }

    let norms: Vec<f64> = (0..n).map(|c| w.column_dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let sigma_max = norms.iter().copied().fold(0.0, f64::max);
    let negligible = sigma_max * f64::EPSILON * m.max(n) as f64;

    let mut u = Matrix::zeros(m, n);
    let mut v_sorted = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s.push(sigma);
        for r in 0..n {
            v_sorted[(r, dst)] = v[(r, src)];
        }
        if sigma > negligible && sigma > 0.0 {
            for r in 0..m {
                u[(r, dst)] = w[(r, src)] / sigma;
            }
        } else {
            missing.push(dst);
        }
    }
    complete_basis(&mut u, &missing);
    Ok(Decomposition { u, s, v: v_sorted })
}

/// Fills the listed columns with unit vectors orthogonal to every other
/// filled column, picking at each step the standard basis vector with the
/// largest residual.
fn complete_basis(u: &mut Matrix, missing: &[usize]) {
    let m = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|c| !missing.contains(c)).collect();
    for &col in missing {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..m {
            let mut x = vec![0.0; m];
            x[e] = 1.0;
            // two passes of Gram-Schmidt for stability
            for _ in 0..2 {
                for &f in &filled {
                    let dot: f64 = (0..m).map(|r| u[(r, f)] * x[r]).sum();
                    for (r, xr) in x.iter_mut().enumerate() {
                        *xr -= dot * u[(r, f)];
                    }
                }
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, x));
            }
        }
        let (norm, x) = best.expect("matrix has at least one row");
        for (r, xr) in x.into_iter().enumerate() {
            u[(r, col)] = xr / norm;
        }
        filled.push(col);
    }
}

fn fix_signs(d: &mut Decomposition) {
    for c in 0..d.rank() {
        let mut lead = 0.0f64;
        for r in 0..d.u.rows() {
            let x = d.u[(r, c)];
            if x.abs() > lead.abs() {
                lead = x;
            }
        }
        if lead < 0.0 {
            for r in 0..d.u.rows() {
                d.u[(r, c)] = -d.u[(r, c)];
            }
            for r in 0..d.v.rows() {
                d.v[(r, c)] = -d.v[(r, c)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn orthonormality_error(q: &Matrix) -> f64 {
        q.transpose().mul(q).sub(&Matrix::identity(q.cols())).frobenius()
    }

    #[test]
    fn identity_and_diagonal() {
        let d = svd_truncate(&Matrix::identity(2), 2).unwrap();
        assert_eq!(d.s, [1.0, 1.0]);
        let d = svd_truncate(&m(&[&[2.0, 0.0], &[0.0, 3.0]]), 2).unwrap();
        assert!((d.s[0] - 3.0).abs() < 1e-15 && (d.s[1] - 2.0).abs() < 1e-15);
        assert!(d.reconstruct().sub(&m(&[&[2.0, 0.0], &[0.0, 3.0]])).frobenius() < 1e-14);
    }

    #[test]
    fn rank_one() {
        let a = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let d = svd_truncate(&a, 1).unwrap();
        assert!((d.s[0] - 2.0).abs() < 1e-14);
        assert!(d.reconstruct().sub(&a).frobenius() < 1e-14);
        assert!(d.u[(0, 0)] > 0.0);
    }

    #[test]
    fn wide_and_degenerate_inputs() {
        let a = m(&[&[1.0, 0.0, 2.0, 0.0]]);
        let d = svd_truncate(&a, 1).unwrap();
        assert!((d.s[0] - 5f64.sqrt()).abs() < 1e-14);
        assert_eq!(d.u[(0, 0)], 1.0);

        let z = Matrix::zeros(3, 2);
        let d = svd_truncate(&z, 2).unwrap();
        assert_eq!(d.s, [0.0, 0.0]);
        assert!(orthonormality_error(&d.u) < 1e-12);
        assert!(orthonormality_error(&d.v) < 1e-12);
    }

    #[test]
    fn k_range_checked() {
        let a = Matrix::identity(3);
        assert_eq!(svd_truncate(&a, 0), Err(SvdError::KOutOfRange { k: 0, max: 3 }));
        assert_eq!(svd_truncate(&a, 4), Err(SvdError::KOutOfRange { k: 4, max: 3 }));
        let mut bad = a.clone();
        bad[(0, 0)] = f64::NAN;
        assert_eq!(svd_truncate(&bad, 1), Err(SvdError::NonFinite));
    }

    #[test]
    fn matrix_serde_roundtrip() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[1.0,2.0],[3.0,4.0]]");
        assert_eq!(serde_json::from_str::<Matrix>(&s).unwrap(), a);
        assert!(serde_json::from_str::<Matrix>("[[1.0],[2.0,3.0]]").is_err());
    }

    fn arb_matrix() -> impl Strategy<Value = Matrix> {
        (1usize..=8, 1usize..=8).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::collection::vec(0.0f64..=1.0, c), r)
                .prop_map(|rows| Matrix::from_rows(&rows).unwrap())
        })
    }

    proptest! {
        #[test]
        fn factor_properties(a in arb_matrix()) {
            let k = a.rows().min(a.cols());
            let d = svd_truncate(&a, k).unwrap();
            prop_assert!(orthonormality_error(&d.u) <= 1e-8);
            prop_assert!(orthonormality_error(&d.v) <= 1e-8);
            prop_assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(d.s.iter().all(|&x| x >= 0.0));
            let norm = a.frobenius();
            prop_assert!(d.reconstruct().sub(&a).frobenius() <= 1e-8 * norm.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn deterministic(a in arb_matrix()) {
            let k = a.rows().min(a.cols());
            prop_assert_eq!(svd_truncate(&a, k).unwrap(), svd_truncate(&a, k).unwrap());
        }
    }
}
