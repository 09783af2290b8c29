//! Truncated power series in one formal variable `t`, with coefficients in a
//! graded-commutative polynomial ring, and even supermatrices over them.
//! Used for the Berezinian and supertrace identities behind the Todd series.

use num_traits::{One, Zero};

use crate::poly::{Poly, Signature};
use crate::scalar::{q, Q};

/// Coefficients of `t^0 .. t^order`.
pub type Series = Vec<Poly>;

pub fn zero(order: usize) -> Series {
    vec![Poly::zero(); order + 1]
}

pub fn constant(sig: &Signature, c: Q, order: usize) -> Series {
    let mut s = zero(order);
    s[0] = sig.constant(c);
    s
}

pub fn add(a: &Series, b: &Series) -> Series {
    a.iter().zip(b).map(|(x, y)| x.plus(y)).collect()
}

pub fn sub(a: &Series, b: &Series) -> Series {
    a.iter().zip(b).map(|(x, y)| x.minus(y)).collect()
}

pub fn scale(a: &Series, c: &Q) -> Series {
    a.iter().map(|x| x.scale(c)).collect()
}

pub fn mul(sig: &Signature, a: &Series, b: &Series) -> Series {
    let order = a.len() - 1;
    let mut out = zero(order);
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(order + 1 - i) {
            if !y.is_zero() {
                out[i + j].add_assign(&sig.mul(x, y));
            }
        }
    }
    out
}

/// Inverse of an even ring element with nonzero constant term, by the
/// geometric series in its nilpotent part.
pub fn invert_element(sig: &Signature, p: &Poly) -> Option<Poly> {
    let c = p.constant_term();
    if c.is_zero() {
        return None;
    }
    let ci = Q::one() / &c;
    let nil = p.minus(&sig.constant(c)).scale(&ci);
    let mut inv = sig.one();
    let mut term = sig.one();
    for _ in 0..=sig.len() {
        term = sig.mul(&term, &nil).neg();
        if term.is_zero() {
            break;
        }
        inv.add_assign(&term);
    }
    let inv = inv.scale(&ci);
    (sig.mul(p, &inv) == sig.one()).then_some(inv)
}

/// Multiplicative inverse of a series with even coefficients.
pub fn inverse(sig: &Signature, a: &Series) -> Option<Series> {
    let order = a.len() - 1;
    let b0 = invert_element(sig, &a[0])?;
    let mut b = zero(order);
    b[0] = b0.clone();
    for n in 1..=order {
        let mut s = Poly::zero();
        for j in 1..=n {
            s.add_assign(&sig.mul(&a[j], &b[n - j]));
        }
        b[n] = sig.mul(&b0, &s).neg();
    }
    Some(b)
}

/// `exp(a)` for a series without constant term.
pub fn exp(sig: &Signature, a: &Series) -> Series {
    assert!(a[0].is_zero(), "exp needs a series without constant term");
    let order = a.len() - 1;
    let mut out = constant(sig, Q::one(), order);
    let mut power = out.clone();
    for n in 1..=order {
        power = scale(&mul(sig, &power, a), &(Q::one() / q(n as i64)));
        out = add(&out, &power);
    }
    out
}

pub type SeriesMatrix = Vec<Vec<Series>>;

fn mat_mul(sig: &Signature, a: &SeriesMatrix, b: &SeriesMatrix, order: usize) -> SeriesMatrix {
    let (n, m, l) = (a.len(), b.len(), b.first().map_or(0, |r| r.len()));
    (0..n)
        .map(|i| {
            (0..l)
                .map(|j| (0..m).fold(zero(order), |acc, k| add(&acc, &mul(sig, &a[i][k], &b[k][j]))))
                .collect()
        })
        .collect()
}

fn block(m: &SeriesMatrix, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> SeriesMatrix {
    rows.map(|i| m[i][cols.clone()].to_vec()).collect()
}

/// Determinant of a square matrix with even, hence commuting, entries.
pub fn determinant(sig: &Signature, m: &SeriesMatrix, order: usize) -> Series {
    let n = m.len();
    if n == 0 {
        return constant(sig, Q::one(), order);
    }
    // Laplace expansion along the first row
    let mut out = zero(order);
    for j in 0..n {
        if m[0][j].iter().all(|p| p.is_zero()) {
            continue;
        }
        let minor: SeriesMatrix =
            (1..n).map(|i| (0..n).filter(|&c| c != j).map(|c| m[i][c].clone()).collect()).collect();
        let term = mul(sig, &m[0][j], &determinant(sig, &minor, order));
        out = if j % 2 == 0 { add(&out, &term) } else { sub(&out, &term) };
    }
    out
}

/// Inverse of a square matrix with even entries, via the adjugate.
pub fn matrix_inverse(sig: &Signature, m: &SeriesMatrix, order: usize) -> Option<SeriesMatrix> {
    let n = m.len();
    let dinv = inverse(sig, &determinant(sig, m, order))?;
    let mut out = vec![vec![zero(order); n]; n];
    for i in 0..n {
        for j in 0..n {
            let minor: SeriesMatrix = (0..n)
                .filter(|&r| r != j)
                .map(|r| (0..n).filter(|&c| c != i).map(|c| m[r][c].clone()).collect())
                .collect();
            let cof = determinant(sig, &minor, order);
            let entry = mul(sig, &cof, &dinv);
            out[i][j] = if (i + j) % 2 == 0 { entry } else { scale(&entry, &-Q::one()) };
        }
    }
    Some(out)
}

/// `exp(t M)` for a matrix with ring entries.
pub fn matrix_exp(sig: &Signature, m: &[Vec<Poly>], order: usize) -> SeriesMatrix {
    let n = m.len();
    let mut out = vec![vec![zero(order); n]; n];
    let mut power: Vec<Vec<Poly>> = (0..n).map(|i| (0..n).map(|j| sig.constant(q(i64::from(i == j)))).collect()).collect();
    let mut fact = Q::one();
    for k in 0..=order {
        if k > 0 {
            fact *= q(k as i64);
            power = (0..n)
                .map(|i| (0..n).map(|j| (0..n).fold(Poly::zero(), |acc, l| acc.plus(&sig.mul(&power[i][l], &m[l][j])))).collect())
                .collect();
        }
        for i in 0..n {
            for j in 0..n {
                out[i][j][k] = power[i][j].scale(&(Q::one() / &fact));
            }
        }
    }
    out
}

/// `Σ_(i<even) M_ii - Σ_(i>=even) M_ii`.
pub fn supertrace(m: &[Vec<Poly>], even: usize) -> Poly {
    let mut s = Poly::zero();
    for (i, row) in m.iter().enumerate() {
        if i < even {
            s.add_assign(&row[i]);
        } else {
            s.sub_assign(&row[i]);
        }
    }
    s
}

/// `Ber(X) = det(A - B D^-1 C) / det(D)` for an even supermatrix whose
/// first `even` rows and columns form the block `A`.
pub fn berezinian(sig: &Signature, x: &SeriesMatrix, even: usize, order: usize) -> Option<Series> {
    let n = x.len();
    let a = block(x, 0..even, 0..even);
    let b = block(x, 0..even, even..n);
    let c = block(x, even..n, 0..even);
    let d = block(x, even..n, even..n);
    let dinv = matrix_inverse(sig, &d, order)?;
    let bdc = mat_mul(sig, &mat_mul(sig, &b, &dinv, order), &c, order);
    let schur: SeriesMatrix = (0..even).map(|i| (0..even).map(|j| sub(&a[i][j], &bdc[i][j])).collect()).collect();
    let den = inverse(sig, &determinant(sig, &d, order))?;
    Some(mul(sig, &determinant(sig, &schur, order), &den))
}
