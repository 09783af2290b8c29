//! Graded-commutative polynomials with exact rational coefficients.
//!
//! A [`Signature`] lists the generators with their bidegrees; the sign rule of
//! [`crate::signs`] decides which generators anticommute and which square to
//! zero.  Monomials are exponent vectors read in generator order, so the
//! normal form is canonical.

use std::collections::BTreeMap;
use std::fmt::Write;

use num_traits::{One, Zero};

use crate::scalar::{fmt_q, Q};
use crate::signs::odd_swap;

pub type Mono = Vec<u8>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    pub name: String,
    pub weight: i32,
    pub degree: i32,
}

impl Var {
    pub fn new(name: impl Into<String>, weight: i32, degree: i32) -> Var {
        Var { name: name.into(), weight, degree }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    vars: Vec<Var>,
    odd: Vec<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Hash, PartialOrd, Ord)]
pub struct Poly {
    pub terms: BTreeMap<Mono, Q>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnumError {
    #[error("degree component not finitely materializable")]
    Infinite,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }

    pub fn constant(c: Q, n: usize) -> Poly {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(vec![0; n], c);
        }
        p
    }

    pub fn monomial(m: Mono, c: Q) -> Poly {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, m: Mono, c: Q) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &Poly) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c.clone());
        }
    }

    pub fn sub_assign(&mut self, other: &Poly) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), -c.clone());
        }
    }

    pub fn add_scaled(&mut self, other: &Poly, s: &Q) {
        if s.is_zero() {
            return;
        }
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c * s);
        }
    }

    pub fn plus(&self, other: &Poly) -> Poly {
        let mut r = self.clone();
        r.add_assign(other);
        r
    }

    pub fn minus(&self, other: &Poly) -> Poly {
        let mut r = self.clone();
        r.sub_assign(other);
        r
    }

    pub fn neg(&self) -> Poly {
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect() }
    }

    pub fn scale(&self, s: &Q) -> Poly {
        if s.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect() }
    }

    pub fn signed(&self, neg: bool) -> Poly {
        if neg {
            self.neg()
        } else {
            self.clone()
        }
    }

    /// Coefficient of the constant monomial.
    pub fn constant_term(&self) -> Q {
        self.terms
            .iter()
            .find(|(m, _)| m.iter().all(|&e| e == 0))
            .map(|(_, c)| c.clone())
            .unwrap_or_else(Q::zero)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|m| m.iter().all(|&e| e == 0))
    }

    pub fn coeff(&self, m: &Mono) -> Q {
        self.terms.get(m).cloned().unwrap_or_else(Q::zero)
    }

    /// Keeps only the monomials accepted by `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&Mono) -> bool) -> Poly {
        Poly {
            terms: self.terms.iter().filter(|(m, _)| keep(m)).map(|(m, c)| (m.clone(), c.clone())).collect(),
        }
    }
}

impl Signature {
    pub fn new(vars: Vec<Var>) -> Signature {
        let odd = vars
            .iter()
            .map(|a| {
                vars.iter()
                    .map(|b| odd_swap(a.weight as i64, a.degree as i64, b.weight as i64, b.degree as i64))
                    .collect()
            })
            .collect();
        Signature { vars, odd }
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn nilpotent(&self, i: usize) -> bool {
        self.odd[i][i]
    }

    pub fn swap_odd(&self, i: usize, j: usize) -> bool {
        self.odd[i][j]
    }

    pub fn one(&self) -> Poly {
        Poly::constant(Q::one(), self.len())
    }

    pub fn constant(&self, c: Q) -> Poly {
        Poly::constant(c, self.len())
    }

    pub fn var(&self, i: usize) -> Poly {
        let mut m = vec![0; self.len()];
        m[i] = 1;
        Poly::monomial(m, Q::one())
    }

    pub fn unit_mono(&self) -> Mono {
        vec![0; self.len()]
    }

    pub fn mono_degree(&self, m: &Mono) -> i32 {
        m.iter().zip(&self.vars).map(|(&e, v)| e as i32 * v.degree).sum()
    }

    pub fn mono_weight(&self, m: &Mono) -> i32 {
        m.iter().zip(&self.vars).map(|(&e, v)| e as i32 * v.weight).sum()
    }

    /// Bidegree `(weight, degree)` if the polynomial is homogeneous and nonzero.
    pub fn bidegree(&self, p: &Poly) -> Option<(i32, i32)> {
        let mut out = None;
        for m in p.terms.keys() {
            let b = (self.mono_weight(m), self.mono_degree(m));
            match out {
                None => out = Some(b),
                Some(o) if o != b => return None,
                _ => {}
            }
        }
        out
    }

    pub fn degree_of(&self, p: &Poly) -> Option<i32> {
        self.bidegree(p).map(|b| b.1)
    }

    /// Splits a polynomial into homogeneous pieces keyed by bidegree.
    pub fn homogeneous_parts(&self, p: &Poly) -> BTreeMap<(i32, i32), Poly> {
        let mut out: BTreeMap<(i32, i32), Poly> = BTreeMap::new();
        for (m, c) in &p.terms {
            let b = (self.mono_weight(m), self.mono_degree(m));
            out.entry(b).or_default().add_term(m.clone(), c.clone());
        }
        out
    }

    /// Product of two monomials in normal form, with its sign.
    pub fn mono_mul(&self, a: &Mono, b: &Mono) -> Option<(Mono, bool)> {
        let n = self.len();
        let mut neg = false;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let e = a[i] as u32 + b[i] as u32;
            if e >= 2 && self.odd[i][i] {
                return None;
            }
            out.push(e as u8);
        }
        for j in 0..n {
            if b[j] == 0 {
                continue;
            }
            let mut cnt = 0u32;
            for i in (j + 1)..n {
                if a[i] != 0 && self.odd[i][j] {
                    cnt += a[i] as u32;
                }
            }
            if (cnt * b[j] as u32) % 2 == 1 {
                neg = !neg;
            }
        }
        Some((out, neg))
    }

    pub fn mul(&self, a: &Poly, b: &Poly) -> Poly {
        let mut r = Poly::zero();
        if a.is_zero() || b.is_zero() {
            return r;
        }
        for (ma, ca) in &a.terms {
            for (mb, cb) in &b.terms {
                if let Some((m, neg)) = self.mono_mul(ma, mb) {
                    let c = ca * cb;
                    r.add_term(m, if neg { -c } else { c });
                }
            }
        }
        r
    }

    pub fn mul_all(&self, fs: &[Poly]) -> Poly {
        let mut r = self.one();
        for f in fs {
            r = self.mul(&r, f);
        }
        r
    }

    pub fn pow(&self, a: &Poly, k: u32) -> Poly {
        let mut r = self.one();
        for _ in 0..k {
            r = self.mul(&r, a);
        }
        r
    }

    /// Left partial derivative by generator `v`.
    pub fn deriv(&self, v: usize, f: &Poly) -> Poly {
        let mut r = Poly::zero();
        for (m, c) in &f.terms {
            let e = m[v];
            if e == 0 {
                continue;
            }
            let mut cnt = 0u32;
            for i in 0..v {
                if m[i] != 0 && self.odd[v][i] {
                    cnt += m[i] as u32;
                }
            }
            let mut nm = m.clone();
            nm[v] -= 1;
            let mut coef = c * Q::from_integer(e.into());
            if cnt % 2 == 1 {
                coef = -coef;
            }
            r.add_term(nm, coef);
        }
        r
    }

    /// Applies the derivation with values `x[v]` on the generators.
    pub fn apply(&self, x: &[Poly], f: &Poly) -> Poly {
        let mut r = Poly::zero();
        for (v, xv) in x.iter().enumerate() {
            if xv.is_zero() {
                continue;
            }
            let d = self.deriv(v, f);
            if !d.is_zero() {
                r.add_assign(&self.mul(xv, &d));
            }
        }
        r
    }

    /// Algebra map sending generator `i` to `images[i]` (in `target`).
    /// Images must have the bidegree of their generator.
    pub fn subst(&self, p: &Poly, images: &[Poly], target: &Signature) -> Poly {
        let mut r = Poly::zero();
        let mut cache: BTreeMap<(usize, u8), Poly> = BTreeMap::new();
        for (m, c) in &p.terms {
            let mut t = target.constant(c.clone());
            for (i, &e) in m.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let pw = cache.entry((i, e)).or_insert_with(|| target.pow(&images[i], e as u32)).clone();
                t = target.mul(&t, &pw);
                if t.is_zero() {
                    break;
                }
            }
            r.add_assign(&t);
        }
        r
    }

    /// Re-indexes a polynomial into a larger signature, generator `i` going to `map[i]`.
    pub fn embed(&self, p: &Poly, map: &[usize], target: &Signature) -> Poly {
        let images: Vec<Poly> = map.iter().map(|&j| target.var(j)).collect();
        self.subst(p, &images, target)
    }

    /// Monomials of the given degree with per-generator exponent caps.
    /// Generators with `allowed[i] == false` are excluded.
    pub fn monomials_of_degree(
        &self,
        degree: i32,
        allowed: &[bool],
        caps: &[Option<u32>],
    ) -> Result<Vec<Mono>, EnumError> {
        let n = self.len();
        let mut pos_unbounded = false;
        let mut neg_unbounded = false;
        for i in 0..n {
            if !allowed[i] {
                continue;
            }
            let cap = if self.nilpotent(i) { Some(1) } else { caps[i] };
            if cap.is_none() {
                let d = self.vars[i].degree;
                if d == 0 {
                    return Err(EnumError::Infinite);
                }
                if d > 0 {
                    pos_unbounded = true;
                } else {
                    neg_unbounded = true;
                }
            }
        }
        if pos_unbounded && neg_unbounded {
            return Err(EnumError::Infinite);
        }
        let mut out = Vec::new();
        let mut cur = vec![0u8; n];
        // Bound on remaining reachable degree range from index i on.
        let mut lo = vec![0i64; n + 1];
        let mut hi = vec![0i64; n + 1];
        for i in (0..n).rev() {
            let (mut l, mut h) = (lo[i + 1], hi[i + 1]);
            if allowed[i] {
                let cap = if self.nilpotent(i) { Some(1) } else { caps[i] };
                let d = self.vars[i].degree as i64;
                match cap {
                    Some(c) => {
                        if d > 0 {
                            h += d * c as i64;
                        } else {
                            l += d * c as i64;
                        }
                    }
                    None => {
                        if d > 0 {
                            h = i64::MAX / 4;
                        } else {
                            l = i64::MIN / 4;
                        }
                    }
                }
            }
            lo[i] = l;
            hi[i] = h;
        }
        self.enum_rec(0, degree as i64, allowed, caps, &lo, &hi, &mut cur, &mut out);
        out.sort();
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn enum_rec(
        &self,
        i: usize,
        rem: i64,
        allowed: &[bool],
        caps: &[Option<u32>],
        lo: &[i64],
        hi: &[i64],
        cur: &mut Mono,
        out: &mut Vec<Mono>,
    ) {
        if rem < lo[i] || rem > hi[i] {
            return;
        }
        if i == self.len() {
            if rem == 0 {
                out.push(cur.clone());
            }
            return;
        }
        if !allowed[i] {
            self.enum_rec(i + 1, rem, allowed, caps, lo, hi, cur, out);
            return;
        }
        let d = self.vars[i].degree as i64;
        let cap = if self.nilpotent(i) { Some(1) } else { caps[i] };
        let maxe: i64 = match cap {
            Some(c) => c as i64,
            None => {
                if d == 0 {
                    0
                } else {
                    (rem / d).max(0)
                }
            }
        };
        for e in 0..=maxe.min(250) {
            cur[i] = e as u8;
            self.enum_rec(i + 1, rem - d * e, allowed, caps, lo, hi, cur, out);
        }
        cur[i] = 0;
    }

    /// Evaluates a polynomial whose monomials only involve even generators
    /// listed in `point` (missing generators must not occur).
    pub fn eval(&self, p: &Poly, point: &[Q]) -> Q {
        let mut acc = Q::zero();
        for (m, c) in &p.terms {
            let mut t = c.clone();
            for (i, &e) in m.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                assert!(i < point.len(), "evaluation at a generator without a value");
                for _ in 0..e {
                    t *= &point[i];
                }
            }
            acc += t;
        }
        acc
    }

    /// Substitutes rational values for the first `point.len()` generators,
    /// which must all be even.
    pub fn eval_prefix(&self, p: &Poly, point: &[Q]) -> Poly {
        let mut r = Poly::zero();
        for (m, c) in &p.terms {
            let mut t = c.clone();
            for (i, &e) in m.iter().enumerate().take(point.len()) {
                for _ in 0..e {
                    t *= &point[i];
                }
            }
            let mut nm = m.clone();
            for e in nm.iter_mut().take(point.len()) {
                *e = 0;
            }
            r.add_term(nm, t);
        }
        r
    }

    /// Evaluates the first `point.len()` (even) generators and drops them
    /// from the monomials, giving a polynomial in the remaining generators.
    pub fn restrict_prefix(&self, p: &Poly, point: &[Q]) -> Poly {
        let mut r = Poly::zero();
        for (m, c) in &self.eval_prefix(p, point).terms {
            r.add_term(m[point.len()..].to_vec(), c.clone());
        }
        r
    }

    pub fn fmt_mono(&self, m: &Mono) -> String {
        let mut s = String::new();
        for (i, &e) in m.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !s.is_empty() {
                s.push('*');
            }
            s.push_str(&self.vars[i].name);
            if e > 1 {
                let _ = write!(s, "^{}", e);
            }
        }
        if s.is_empty() {
            s.push('1');
        }
        s
    }

    pub fn parse_mono(&self, s: &str) -> Option<Mono> {
        let mut m = vec![0u8; self.len()];
        let s = s.trim();
        if s == "1" {
            return Some(m);
        }
        for factor in s.split('*') {
            let (name, e) = match factor.split_once('^') {
                Some((a, b)) => (a.trim(), b.trim().parse::<u8>().ok()?),
                None => (factor.trim(), 1),
            };
            let i = self.var_index(name)?;
            m[i] = m[i].checked_add(e)?;
        }
        for i in 0..self.len() {
            if m[i] >= 2 && self.nilpotent(i) {
                return None;
            }
        }
        Some(m)
    }

    pub fn fmt(&self, p: &Poly) -> String {
        if p.is_zero() {
            return "0".into();
        }
        let mut s = String::new();
        for (k, (m, c)) in p.terms.iter().enumerate() {
            if k > 0 {
                s.push_str(" + ");
            }
            let mono = self.fmt_mono(m);
            if mono == "1" {
                s.push_str(&fmt_q(c));
            } else if c.is_one() {
                s.push_str(&mono);
            } else {
                let _ = write!(s, "({})*{}", fmt_q(c), mono);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;

    fn sig() -> Signature {
        Signature::new(vec![
            Var::new("x", 0, 0),
            Var::new("a", 0, -1),
            Var::new("b", 0, -1),
            Var::new("c", 0, -2),
        ])
    }

    #[test]
    fn odd_generators_anticommute_and_square_to_zero() {
        let s = sig();
        let a = s.var(1);
        let b = s.var(2);
        let ab = s.mul(&a, &b);
        let ba = s.mul(&b, &a);
        assert_eq!(ab, ba.neg());
        assert!(s.mul(&a, &a).is_zero());
        let c = s.var(3);
        assert_eq!(s.mul(&a, &c), s.mul(&c, &a));
        assert!(!s.mul(&c, &c).is_zero());
    }

    #[test]
    fn derivative_signs() {
        let s = sig();
        let ab = s.mul(&s.var(1), &s.var(2));
        // d/db (a b) = -a
        assert_eq!(s.deriv(2, &ab), s.var(1).neg());
        assert_eq!(s.deriv(1, &ab), s.var(2));
        let x2 = s.pow(&s.var(0), 2);
        assert_eq!(s.deriv(0, &x2), s.var(0).scale(&q(2)));
    }

    #[test]
    fn enumeration_counts() {
        let s = sig();
        let allowed = [false, true, true, true];
        let caps = [None; 4];
        // degree -2: ab, c
        assert_eq!(s.monomials_of_degree(-2, &allowed, &caps).unwrap().len(), 2);
        // degree -4: c^2, abc
        assert_eq!(s.monomials_of_degree(-4, &allowed, &caps).unwrap().len(), 2);
        assert!(s.monomials_of_degree(0, &[true, true, true, true], &caps).is_err());
    }

    #[test]
    fn parse_format_monomials() {
        let s = sig();
        let m = s.parse_mono("x^2*c").unwrap();
        assert_eq!(s.fmt_mono(&m), "x^2*c");
        assert!(s.parse_mono("a^2").is_none());
    }
}
