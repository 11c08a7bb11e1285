//! Small dense complex linear algebra.
//!
//! Everything here is sized for Hamiltonians with a handful of levels. The
//! eigensolver is a cyclic complex Jacobi iteration, which is accurate for
//! graded matrices (tiny couplings next to large ones) and deterministic.
//!
//! Eigenvectors leave [`eig_hermitian`] in a fixed gauge: the largest
//! magnitude component of every column is real and positive, ties broken
//! by the lowest index. Inside a degenerate cluster the basis is fixed by
//! Gram-Schmidt on the projections of the standard basis vectors `e_0,
//! e_1, ...` onto the cluster, so the first cluster vector is the one that
//! carries the `e_0` weight. For a tripod this is exactly the dark state
//! that contains the initial level.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative tolerance on `max|A - A^H| / max|A|` accepted by the eigensolver.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Overlap magnitudes closer than this are treated as a tie during matching.
pub const MATCH_TIE_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 64;

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![C64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from real row slices. Panics if the rows are ragged.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        Self::from_fn(dim, |i, j| {
            assert_eq!(rows[i].len(), dim, "row {i} has wrong length");
            C64::new(rows[i][j], 0.0)
        })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<C64>]) -> Self {
        let dim = cols.len();
        Self::from_fn(dim, |i, j| cols[j][i])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[C64]) {
        for (i, x) in v.iter().enumerate() {
            self[(i, j)] = *x;
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, k: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|x| x * k).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mat_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// `max|A - A^H|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermiticity_defect() <= rel_tol * self.max_abs()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        ComplexMatrix::from_fn(n, |i, j| (0..n).map(|k| self[(i, k)] * rhs[(k, j)]).sum())
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// `<a|b>`, conjugate-linear in the first slot.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Phase-insensitive distance between unit vectors: `min_phi |a - e^{i phi} b|`.
pub fn aligned_distance(a: &[C64], b: &[C64]) -> f64 {
    let ov = inner(b, a);
    let ph = if ov.norm() > 0.0 { ov / ov.norm() } else { C64::new(1.0, 0.0) };
    a.iter().zip(b).map(|(x, y)| (x - ph * y).norm_sqr()).sum::<f64>().sqrt()
}

/// Multiplies `v` by the unit phase that makes its largest-magnitude
/// component real and positive. Components within `MATCH_TIE_TOL` of the
/// maximum count as tied and the lowest index wins.
pub fn fix_gauge(v: &mut [C64]) {
    let peak = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return;
    }
    let k = v
        .iter()
        .position(|x| x.norm() >= peak - MATCH_TIE_TOL * peak)
        .expect("peak component exists");
    let phase = v[k].conj() / v[k].norm();
    for x in v.iter_mut() {
        *x *= phase;
    }
    // exact zero imaginary part on the pivot
    v[k] = C64::new(v[k].norm(), 0.0);
}

/// Eigenvalues in ascending order with eigenvectors stored as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k)
    }

    /// `sum_k lambda_k v_k v_k^H`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.dim();
        ComplexMatrix::from_fn(n, |i, j| {
            (0..n)
                .map(|k| self.vectors[(i, k)] * self.vectors[(j, k)].conj() * self.values[k])
                .sum()
        })
    }

    /// Largest `|A v_k - lambda_k v_k| / max(1, |lambda_k|)`.
    pub fn max_residual(&self, a: &ComplexMatrix) -> f64 {
        (0..self.dim())
            .map(|k| {
                let v = self.vector(k);
                let av = a.mat_vec(&v);
                let r: Vec<C64> = av.iter().zip(&v).map(|(x, y)| x - y * self.values[k]).collect();
                norm(&r) / self.values[k].abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }

    /// Index ranges of eigenvalues whose consecutive gaps are below `tol`.
    pub fn clusters(&self, tol: f64) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..=self.dim() {
            if k == self.dim() || (self.values[k] - self.values[k - 1]).abs() >= tol {
                out.push(start..k);
                start = k;
            }
        }
        out
    }
}

/// Hermitian eigendecomposition with a deterministic gauge.
pub fn eig_hermitian(a: &ComplexMatrix) -> Result<EigenDecomposition> {
    let n = a.dim();
    if n < 2 {
        return Err(Error::DimensionTooSmall(n));
    }
    let scale = a.max_abs();
    let defect = a.hermiticity_defect();
    if defect > HERMITIAN_TOL * scale {
        return Err(Error::NonHermitianInput { defect, scale });
    }

    // symmetrize so rounding in the input cannot bias the rotations
    let mut m = ComplexMatrix::from_fn(n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5);
    let mut v = ComplexMatrix::identity(n);
    jacobi(&mut m, &mut v);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[(x, x)].re.total_cmp(&m[(y, y)].re).then(x.cmp(&y)));
    let values: Vec<f64> = order.iter().map(|&k| m[(k, k)].re).collect();
    let mut vectors = ComplexMatrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src);
        fix_gauge(&mut col);
        vectors.set_column(dst, &col);
    }

    let mut eig = EigenDecomposition { values, vectors };
    let tol = degeneracy_tol(scale);
    for cluster in eig.clusters(tol) {
        if cluster.len() > 1 {
            canonicalize_cluster(&mut eig, cluster);
        }
    }
    Ok(eig)
}

/// Gap below which two eigenvalues are considered one degenerate cluster.
pub fn degeneracy_tol(scale: f64) -> f64 {
    1e-9 * scale.max(1.0)
}

fn jacobi(m: &mut ComplexMatrix, v: &mut ComplexMatrix) {
    let n = m.dim();
    for sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)].norm())
            .sum();
        if off == 0.0 {
            return;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let g = 100.0 * r;
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    m[(p, q)] = C64::new(0.0, 0.0);
                    m[(q, p)] = C64::new(0.0, 0.0);
                    continue;
                }
                let theta = (aqq - app) / (2.0 * r);
                let t = if theta.abs() > 1e150 {
                    1.0 / (2.0 * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // G = diag(1, e^{-i phi}) * [[c, s], [-s, c]] on (p, q)
                let ph = apq.conj() / r;
                let g_pp = C64::new(c, 0.0);
                let g_pq = C64::new(s, 0.0);
                let g_qp = -ph * s;
                let g_qq = ph * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * g_pp + mkq * g_qp;
                    m[(k, q)] = mkp * g_pq + mkq * g_qq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = g_pp.conj() * mpk + g_qp.conj() * mqk;
                    m[(q, k)] = g_pq.conj() * mpk + g_qq.conj() * mqk;
                }
                m[(p, q)] = C64::new(0.0, 0.0);
                m[(q, p)] = C64::new(0.0, 0.0);
                m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = C64::new(m[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * g_pp + vkq * g_qp;
                    v[(k, q)] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }
}

fn canonicalize_cluster(eig: &mut EigenDecomposition, cluster: std::ops::Range<usize>) {
    let n = eig.dim();
    let basis: Vec<Vec<C64>> = cluster.clone().map(|k| eig.vector(k)).collect();
    let project = |e: usize| -> Vec<C64> {
        let mut w = vec![C64::new(0.0, 0.0); n];
        for b in &basis {
            let c = b[e].conj();
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi += bi * c;
            }
        }
        w
    };

    let mut chosen: Vec<Vec<C64>> = Vec::with_capacity(basis.len());
    for e in 0..n {
        if chosen.len() == basis.len() {
            break;
        }
        let mut w = project(e);
        let before = norm(&w);
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            for u in &chosen {
                let c = inner(u, &w);
                for (wi, ui) in w.iter_mut().zip(u) {
                    *wi -= ui * c;
                }
            }
        }
        let after = norm(&w);
        let accept = if chosen.is_empty() { after > 1e-200 } else { after > 1e-6 * before && after > 1e-200 };
        if accept {
            for x in w.iter_mut() {
                *x /= after;
            }
            fix_gauge(&mut w);
            chosen.push(w);
        }
    }
    if chosen.len() < basis.len() {
        // projections could not span the cluster; keep the solver's basis
        return;
    }
    for (k, col) in cluster.zip(chosen) {
        eig.vectors.set_column(k, &col);
    }
}

/// Rephases and reorders the columns of `cur` to follow `prev`.
///
/// Column `k` of the result is the column of `cur` with the largest overlap
/// with column `k` of `prev`, multiplied by the phase that makes that overlap
/// real and nonnegative.
pub fn gauge_continuity(prev: &EigenDecomposition, cur: &EigenDecomposition) -> Result<EigenDecomposition> {
    let n = prev.dim();
    assert_eq!(n, cur.dim(), "decompositions of different size");
    let cur_cols: Vec<Vec<C64>> = (0..n).map(|k| cur.vector(k)).collect();
    let mut taken = vec![false; n];
    let mut values = vec![0.0; n];
    let mut vectors = ComplexMatrix::zeros(n);

    for k in 0..n {
        let p = prev.vector(k);
        let overlaps: Vec<C64> = cur_cols.iter().map(|c| inner(&p, c)).collect();
        let mut best = 0;
        for j in 1..n {
            if overlaps[j].norm() > overlaps[best].norm() {
                best = j;
            }
        }
        let top = overlaps[best].norm();
        let tie = (0..n).any(|j| j != best && (overlaps[j].norm() - top).abs() <= MATCH_TIE_TOL);
        if top == 0.0 || tie || taken[best] {
            return Err(Error::AmbiguousMatching { column: k });
        }
        taken[best] = true;
        let phase = overlaps[best].conj() / top;
        let col: Vec<C64> = cur_cols[best].iter().map(|x| x * phase).collect();
        vectors.set_column(k, &col);
        values[k] = cur.values[best];
    }
    Ok(EigenDecomposition { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lambda3(op: f64, os: f64, delta: f64) -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[
            &[0.0, op / 2.0, 0.0],
            &[op / 2.0, delta, os / 2.0],
            &[0.0, os / 2.0, 0.0],
        ])
    }

    #[test]
    fn identity_2x2() {
        let e = eig_hermitian(&ComplexMatrix::identity(2)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        assert_eq!(e.vectors, ComplexMatrix::identity(2));
    }

    #[test]
    fn resonant_lambda_spectrum() {
        let e = eig_hermitian(&lambda3(0.0, 10.0, 0.0)).unwrap();
        for (got, want) in e.values.iter().zip([-5.0, 0.0, 5.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn detuned_lambda_spectrum() {
        // roots of -x (x^2 - 2x - 25/4): the detuning sits unhalved on the diagonal
        let r = 29f64.sqrt();
        let e = eig_hermitian(&lambda3(3.0, 4.0, 2.0)).unwrap();
        let want = [(2.0 - r) / 2.0, 0.0, (2.0 + r) / 2.0];
        for (got, want) in e.values.iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((e.values[0] + 1.69258).abs() < 1e-5);
        assert!((e.values[2] - 3.69258).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(eig_hermitian(&ComplexMatrix::identity(1)), Err(Error::DimensionTooSmall(1))));
        let mut a = ComplexMatrix::identity(3);
        a[(0, 1)] = C64::new(0.5, 0.0);
        assert!(matches!(eig_hermitian(&a), Err(Error::NonHermitianInput { .. })));
    }

    #[test]
    fn complex_entries() {
        let mut a = ComplexMatrix::zeros(3);
        a[(0, 1)] = C64::new(0.3, -1.2);
        a[(1, 0)] = a[(0, 1)].conj();
        a[(1, 2)] = C64::new(-0.7, 0.4);
        a[(2, 1)] = a[(1, 2)].conj();
        a[(0, 0)] = C64::new(0.25, 0.0);
        a[(2, 2)] = C64::new(-1.5, 0.0);
        let e = eig_hermitian(&a).unwrap();
        assert!(e.max_residual(&a) < 1e-12);
        assert!(e.reconstruct().sub(&a).frobenius() < 1e-12 * a.frobenius());
    }

    #[test]
    fn gauge_pivot_is_real_positive() {
        let e = eig_hermitian(&lambda3(3.0, 4.0, 2.0)).unwrap();
        for k in 0..3 {
            let v = e.vector(k);
            let peak = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
            let pivot = v.iter().find(|x| x.norm() >= peak - 1e-12).unwrap();
            assert!(pivot.im == 0.0 && pivot.re > 0.0);
        }
    }

    #[test]
    fn degenerate_cluster_starts_from_first_level() {
        // tripod with a twofold dark space
        let (p, s, q) = (1.0, 2.0, 0.5);
        let a = ComplexMatrix::from_real_rows(&[
            &[0.0, p / 2.0, 0.0, 0.0],
            &[p / 2.0, 0.3, s / 2.0, q / 2.0],
            &[0.0, s / 2.0, 0.0, 0.0],
            &[0.0, q / 2.0, 0.0, 0.0],
        ]);
        let e = eig_hermitian(&a).unwrap();
        assert!(e.values[1].abs() < 1e-12 && e.values[2].abs() < 1e-12);
        // second dark vector has no weight on level 0
        assert!(e.vector(2)[0].norm() < 1e-12);
        assert!(e.vector(1)[0].norm() > 0.1);
    }

    #[test]
    fn continuity_identity_and_sign_flip() {
        let e = eig_hermitian(&lambda3(3.0, 4.0, 2.0)).unwrap();
        let same = gauge_continuity(&e, &e).unwrap();
        assert!(same.vectors.sub(&e.vectors).max_abs() < 1e-15);

        let mut flipped = e.clone();
        let col: Vec<C64> = e.vector(1).iter().map(|x| -x).collect();
        flipped.vectors.set_column(1, &col);
        let fixed = gauge_continuity(&e, &flipped).unwrap();
        assert!(fixed.vectors.sub(&e.vectors).max_abs() < 1e-15);
    }

    #[test]
    fn continuity_reorders_by_overlap() {
        let e = eig_hermitian(&lambda3(3.0, 4.0, 2.0)).unwrap();
        let swapped = EigenDecomposition {
            values: vec![e.values[2], e.values[0], e.values[1]],
            vectors: ComplexMatrix::from_columns(&[e.vector(2), e.vector(0), e.vector(1)]),
        };
        let fixed = gauge_continuity(&e, &swapped).unwrap();
        assert_eq!(fixed.values, e.values);
    }

    #[test]
    fn continuity_reports_ties() {
        let e = eig_hermitian(&ComplexMatrix::identity(2)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let rotated = EigenDecomposition {
            values: vec![1.0, 1.0],
            vectors: ComplexMatrix::from_real_rows(&[&[h, -h], &[h, h]]),
        };
        assert!(matches!(gauge_continuity(&e, &rotated), Err(Error::AmbiguousMatching { column: 0 })));
    }
}
