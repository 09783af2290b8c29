//! Exact sparse matrices over the rationals.
//!
//! Ranks use fraction-free elimination on primitive integer rows; kernels and
//! solutions use a rational reduced row echelon form.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::scalar::{fmt_q, Q};

pub type SparseRow = Vec<(usize, Q)>;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Matrix {
    pub nrows: usize,
    pub ncols: usize,
    rows: Vec<SparseRow>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{}", self.nrows, self.ncols)?;
        for r in self.to_dense() {
            let s: Vec<String> = r.iter().map(fmt_q).collect();
            writeln!(f, "  [{}]", s.join(", "))?;
        }
        Ok(())
    }
}

fn axpy(a: &SparseRow, s: &Q, b: &SparseRow) -> SparseRow {
    // a + s*b
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j >= b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push(a[i].clone());
            i += 1;
        } else if i >= a.len() || b[j].0 < a[i].0 {
            out.push((b[j].0, s * &b[j].1));
            j += 1;
        } else {
            let v = &a[i].1 + s * &b[j].1;
            if !v.is_zero() {
                out.push((a[i].0, v));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Matrix {
        Matrix { nrows, ncols, rows: vec![Vec::new(); nrows] }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.rows[i].push((i, Q::one()));
        }
        m
    }

    pub fn from_dense(rows: &[Vec<Q>]) -> Matrix {
        let nrows = rows.len();
        let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
        Matrix::from_dense_shape(nrows, ncols, rows)
    }

    pub fn from_dense_shape(nrows: usize, ncols: usize, rows: &[Vec<Q>]) -> Matrix {
        let mut m = Matrix::zeros(nrows, ncols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), ncols, "ragged dense matrix");
            m.rows[i] = r.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(j, v)| (j, v.clone())).collect();
        }
        m
    }

    pub fn from_rows(ncols: usize, rows: Vec<SparseRow>) -> Matrix {
        let mut m = Matrix::zeros(0, ncols);
        for r in rows {
            m.push_row(r);
        }
        m
    }

    /// Appends a row given as (column, value) pairs in any order.
    pub fn push_row(&mut self, mut r: SparseRow) {
        r.sort_by_key(|e| e.0);
        let mut out: SparseRow = Vec::with_capacity(r.len());
        for (c, v) in r {
            assert!(c < self.ncols, "column out of range");
            if let Some(last) = out.last_mut() {
                if last.0 == c {
                    last.1 += v;
                    continue;
                }
            }
            out.push((c, v));
        }
        out.retain(|e| !e.1.is_zero());
        self.rows.push(out);
        self.nrows += 1;
    }

    pub fn row(&self, i: usize) -> &SparseRow {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Q {
        match self.rows[i].binary_search_by_key(&j, |e| e.0) {
            Ok(k) => self.rows[i][k].1.clone(),
            Err(_) => Q::zero(),
        }
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: &Q) {
        assert!(i < self.nrows && j < self.ncols);
        if v.is_zero() {
            return;
        }
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&j, |e| e.0) {
            Ok(k) => {
                row[k].1 += v;
                if row[k].1.is_zero() {
                    row.remove(k);
                }
            }
            Err(k) => row.insert(k, (j, v.clone())),
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: Q) {
        let cur = self.get(i, j);
        self.add_to(i, j, &(v - cur));
    }

    pub fn to_dense(&self) -> Vec<Vec<Q>> {
        let mut out = vec![vec![Q::zero(); self.ncols]; self.nrows];
        for (i, r) in self.rows.iter().enumerate() {
            for (j, v) in r {
                out[i][*j] = v.clone();
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(|r| r.is_empty())
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn transpose(&self) -> Matrix {
        let mut rows: Vec<SparseRow> = vec![Vec::new(); self.ncols];
        for (i, r) in self.rows.iter().enumerate() {
            for (j, v) in r {
                rows[*j].push((i, v.clone()));
            }
        }
        Matrix { nrows: self.ncols, ncols: self.nrows, rows }
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.ncols, other.nrows, "dimension mismatch in product");
        let mut out = Matrix::zeros(self.nrows, other.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            let mut acc: SparseRow = Vec::new();
            for (k, v) in r {
                acc = axpy(&acc, v, &other.rows[*k]);
            }
            out.rows[i] = acc;
        }
        out
    }

    pub fn apply(&self, v: &[Q]) -> Vec<Q> {
        assert_eq!(v.len(), self.ncols);
        self.rows
            .iter()
            .map(|r| r.iter().fold(Q::zero(), |acc, (j, x)| acc + x * &v[*j]))
            .collect()
    }

    pub fn plus(&self, other: &Matrix) -> Matrix {
        self.lin_comb(other, &Q::one())
    }

    pub fn minus(&self, other: &Matrix) -> Matrix {
        self.lin_comb(other, &-Q::one())
    }

    /// `self + s * other`.
    pub fn lin_comb(&self, other: &Matrix, s: &Q) -> Matrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "shape mismatch");
        let rows = self.rows.iter().zip(&other.rows).map(|(a, b)| axpy(a, s, b)).collect();
        Matrix { nrows: self.nrows, ncols: self.ncols, rows }
    }

    pub fn scale(&self, s: &Q) -> Matrix {
        if s.is_zero() {
            return Matrix::zeros(self.nrows, self.ncols);
        }
        let rows = self.rows.iter().map(|r| r.iter().map(|(j, v)| (*j, v * s)).collect()).collect();
        Matrix { nrows: self.nrows, ncols: self.ncols, rows }
    }

    pub fn neg(&self) -> Matrix {
        self.scale(&-Q::one())
    }

    /// Copies `block` into position (r0, c0), adding to existing entries.
    pub fn add_block(&mut self, r0: usize, c0: usize, block: &Matrix) {
        for (i, r) in block.rows.iter().enumerate() {
            for (j, v) in r {
                self.add_to(r0 + i, c0 + *j, v);
            }
        }
    }

    pub fn sub_matrix(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let mut pos = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            pos[c] = k;
        }
        let mut out = Matrix::zeros(rows.len(), cols.len());
        for (k, &r) in rows.iter().enumerate() {
            let mut row: SparseRow =
                self.rows[r].iter().filter(|(j, _)| pos[*j] != usize::MAX).map(|(j, v)| (pos[*j], v.clone())).collect();
            row.sort_by_key(|e| e.0);
            out.rows[k] = row;
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<Q> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    pub fn from_columns(nrows: usize, cols: &[Vec<Q>]) -> Matrix {
        let mut m = Matrix::zeros(nrows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), nrows);
            for (i, v) in c.iter().enumerate() {
                if !v.is_zero() {
                    m.rows[i].push((j, v.clone()));
                }
            }
        }
        m
    }

    pub fn rank(&self) -> usize {
        let mut ech = IntEchelon::new(self.ncols);
        for r in &self.rows {
            ech.insert(r);
        }
        ech.rank()
    }

    /// Reduced row echelon form with its pivot columns.
    pub fn rref(&self) -> (Vec<SparseRow>, Vec<usize>) {
        let mut piv: Vec<(usize, SparseRow)> = Vec::new();
        for r in &self.rows {
            let mut r = r.clone();
            // reduce against existing pivots
            for (c, p) in &piv {
                if let Ok(k) = r.binary_search_by_key(c, |e| e.0) {
                    let s = -r[k].1.clone();
                    r = axpy(&r, &s, p);
                }
            }
            if r.is_empty() {
                continue;
            }
            let (c, lead) = (r[0].0, r[0].1.clone());
            let inv = Q::one() / lead;
            let r: SparseRow = r.into_iter().map(|(j, v)| (j, v * &inv)).collect();
            for (_, p) in piv.iter_mut() {
                if let Ok(k) = p.binary_search_by_key(&c, |e| e.0) {
                    let s = -p[k].1.clone();
                    *p = axpy(p, &s, &r);
                }
            }
            piv.push((c, r));
        }
        piv.sort_by_key(|e| e.0);
        let cols = piv.iter().map(|e| e.0).collect();
        (piv.into_iter().map(|e| e.1).collect(), cols)
    }

    /// Basis of the right kernel, one vector per free column, in column order.
    pub fn kernel(&self) -> Vec<Vec<Q>> {
        let (rows, pivots) = self.rref();
        let mut is_piv = vec![false; self.ncols];
        for &c in &pivots {
            is_piv[c] = true;
        }
        let mut out = Vec::new();
        for free in (0..self.ncols).filter(|&c| !is_piv[c]) {
            let mut v = vec![Q::zero(); self.ncols];
            v[free] = Q::one();
            for (r, &pc) in rows.iter().zip(&pivots) {
                if let Ok(k) = r.binary_search_by_key(&free, |e| e.0) {
                    v[pc] = -r[k].1.clone();
                }
            }
            out.push(v);
        }
        out
    }

    /// Some solution of `self * x = b`, or `None` when inconsistent.
    pub fn solve(&self, b: &[Q]) -> Option<Vec<Q>> {
        assert_eq!(b.len(), self.nrows);
        let mut aug = Matrix::zeros(0, self.ncols + 1);
        for (i, r) in self.rows.iter().enumerate() {
            let mut row = r.clone();
            if !b[i].is_zero() {
                row.push((self.ncols, b[i].clone()));
            }
            aug.push_row(row);
        }
        let (rows, pivots) = aug.rref();
        if pivots.last() == Some(&self.ncols) {
            return None;
        }
        let mut x = vec![Q::zero(); self.ncols];
        for (r, &pc) in rows.iter().zip(&pivots) {
            if let Some((c, v)) = r.last() {
                if *c == self.ncols {
                    x[pc] = v.clone();
                }
            }
        }
        Some(x)
    }
}

/// Incremental fraction-free echelon form over the integers.  Rows are kept
/// primitive; reduction cross-multiplies instead of dividing.
#[derive(Clone, Debug)]
pub struct IntEchelon {
    ncols: usize,
    pivots: std::collections::BTreeMap<usize, Vec<(usize, BigInt)>>,
}

fn primitive(r: &SparseRow) -> Vec<(usize, BigInt)> {
    let mut den = BigInt::one();
    for (_, v) in r {
        den = den.lcm(v.denom());
    }
    let mut out: Vec<(usize, BigInt)> = r.iter().map(|(j, v)| (*j, v.numer() * (&den / v.denom()))).collect();
    normalize_int(&mut out);
    out
}

fn normalize_int(r: &mut [(usize, BigInt)]) {
    let mut g = BigInt::zero();
    for (_, v) in r.iter() {
        g = g.gcd(v);
    }
    if g.is_zero() || g.is_one() {
        return;
    }
    for (_, v) in r.iter_mut() {
        *v = &*v / &g;
    }
}

impl IntEchelon {
    pub fn new(ncols: usize) -> IntEchelon {
        IntEchelon { ncols, pivots: Default::default() }
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Inserts a row; returns true if it was independent of the rows so far.
    pub fn insert(&mut self, r: &SparseRow) -> bool {
        let mut r = primitive(r);
        loop {
            let Some((c, lead)) = r.first().cloned() else { return false };
            let Some(p) = self.pivots.get(&c) else {
                if lead.is_negative() {
                    for e in r.iter_mut() {
                        e.1 = -e.1.clone();
                    }
                }
                self.pivots.insert(c, r);
                return true;
            };
            let plead = p[0].1.clone();
            let g = plead.gcd(&lead);
            let a = &plead / &g;
            let b = &lead / &g;
            // a*r - b*p
            let mut out = Vec::with_capacity(r.len() + p.len());
            let (mut i, mut j) = (0, 0);
            while i < r.len() || j < p.len() {
                if j >= p.len() || (i < r.len() && r[i].0 < p[j].0) {
                    out.push((r[i].0, &a * &r[i].1));
                    i += 1;
                } else if i >= r.len() || p[j].0 < r[i].0 {
                    out.push((p[j].0, -(&b * &p[j].1)));
                    j += 1;
                } else {
                    let v = &a * &r[i].1 - &b * &p[j].1;
                    if !v.is_zero() {
                        out.push((r[i].0, v));
                    }
                    i += 1;
                    j += 1;
                }
            }
            normalize_int(&mut out);
            r = out;
        }
    }
}

pub fn vec_is_zero(v: &[Q]) -> bool {
    v.iter().all(|x| x.is_zero())
}

pub fn to_sparse(v: &[Q]) -> SparseRow {
    v.iter().enumerate().filter(|(_, x)| !x.is_zero()).map(|(j, x)| (j, x.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;

    fn m(rows: &[&[i64]]) -> Matrix {
        Matrix::from_dense(&rows.iter().map(|r| r.iter().map(|&x| q(x)).collect()).collect::<Vec<_>>())
    }

    #[test]
    fn rank_and_kernel() {
        let a = m(&[&[1, 2, 3], &[2, 4, 6], &[1, 0, 1]]);
        assert_eq!(a.rank(), 2);
        let k = a.kernel();
        assert_eq!(k.len(), 1);
        assert!(vec_is_zero(&a.apply(&k[0])));
    }

    #[test]
    fn solve_consistent_and_not() {
        let a = m(&[&[1, 1], &[2, 2]]);
        assert!(a.solve(&[q(1), q(2)]).is_some());
        assert!(a.solve(&[q(1), q(3)]).is_none());
    }

    #[test]
    fn product_and_transpose() {
        let a = m(&[&[1, 2], &[0, 1]]);
        let b = m(&[&[1, -2], &[0, 1]]);
        assert_eq!(a.mul(&b), Matrix::identity(2));
        assert_eq!(a.transpose().transpose(), a);
    }
}
