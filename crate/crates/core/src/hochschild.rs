//! Poly-vector fields and poly-differential operators on a DG manifold, the
//! HKR map between them, Gerstenhaber operations and truncated windows of
//! Hochschild cohomology.
//!
//! A poly-vector field is a polynomial in the coordinates and in one extra
//! generator `∂x` per coordinate, of bidegree `(1, -deg x)`; the wedge product
//! is the product of that algebra.  A poly-differential operator is stored
//! slot by slot in normal order: a left function coefficient times, for each
//! slot, a monomial in the coordinate derivations.  Operations on operators
//! are defined by evaluation and read back by probing with coordinate
//! monomials, which also gives the projection to bounded order.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_traits::{One, Zero};

use crate::atiyah::ToddTruncation;
use crate::dgmod::{tuple_index, tuples, FreeModule};
use crate::graded::{GResult, GradedError};
use crate::ladder::IdentityCheck;
use crate::linalg::Matrix;
use crate::manifold::{koszul_twist, DgManifold};
use crate::poly::{Mono, Poly, Signature, Var};
use crate::scalar::{factorial, Q};
use crate::signs::{koszul, odd_swap, permutation_sign};
use crate::tensors::TensorSpaces;

/// Splits a function into pieces of one internal degree.
fn degree_parts(sig: &Signature, f: &Poly) -> Vec<(i32, Poly)> {
    let mut out: BTreeMap<i32, Poly> = BTreeMap::new();
    for (m, c) in &f.terms {
        out.entry(sig.mono_degree(m)).or_default().add_term(m.clone(), c.clone());
    }
    out.into_iter().collect()
}

/// All orderings of `0..k`.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut r = p.clone();
            r.insert(pos, k - 1);
            out.push(r);
        }
    }
    out
}

/// Exponent vectors over `caps` with total in `lo..=hi`.
fn exponent_vectors(caps: &[u32], lo: u32, hi: u32) -> Vec<Mono> {
    fn rec(caps: &[u32], i: usize, left: u32, cur: &mut Mono, out: &mut Vec<Mono>, lo: u32, hi: u32) {
        if i == caps.len() {
            let s: u32 = cur.iter().map(|&e| u32::from(e)).sum();
            if s >= lo {
                out.push(cur.clone());
            }
            return;
        }
        for e in 0..=caps[i].min(left) {
            cur[i] = e as u8;
            rec(caps, i + 1, left - e, cur, out, lo, hi);
        }
        cur[i] = 0;
    }
    let mut out = Vec::new();
    rec(caps, 0, hi, &mut vec![0; caps.len()], &mut out, lo, hi);
    out
}

/// Poly-vector fields on a DG manifold.
#[derive(Debug, Clone)]
pub struct PolyVectors {
    pub mfd: Arc<DgManifold>,
    pub sig: Signature,
    n: usize,
}

impl PolyVectors {
    pub fn new(mfd: Arc<DgManifold>) -> PolyVectors {
        let n = mfd.ngen();
        let mut vars: Vec<Var> = mfd.sig.vars().to_vec();
        for v in mfd.sig.vars() {
            vars.push(Var::new(format!("∂{}", v.name), 1, -v.degree));
        }
        PolyVectors { sig: Signature::new(vars), mfd, n }
    }

    pub fn ngen(&self) -> usize {
        self.n
    }

    pub fn function(&self, f: &Poly) -> Poly {
        let map: Vec<usize> = (0..self.n).collect();
        self.mfd.sig.embed(f, &map, &self.sig)
    }

    /// The coordinate vector field `∂v` as a poly-vector.
    pub fn partial(&self, v: usize) -> Poly {
        self.sig.var(self.n + v)
    }

    pub fn vector_field(&self, x: &[Poly]) -> Poly {
        let mut out = Poly::zero();
        for (v, xv) in x.iter().enumerate() {
            out.add_assign(&self.sig.mul(&self.function(xv), &self.partial(v)));
        }
        out
    }

    pub fn wedge(&self, a: &Poly, b: &Poly) -> Poly {
        self.sig.mul(a, b)
    }

    /// Splits a term into its coefficient and its monomial in the `∂v`.
    pub fn split_mono(&self, m: &Mono) -> (Mono, Mono) {
        (m[..self.n].to_vec(), m[self.n..].to_vec())
    }

    pub fn join_mono(&self, coef: &Mono, partials: &Mono) -> Mono {
        let mut m = coef.clone();
        m.extend_from_slice(partials);
        m
    }

    /// Pieces of fixed (arity, internal degree).
    pub fn parts(&self, a: &Poly) -> BTreeMap<(i32, i32), Poly> {
        self.sig.homogeneous_parts(a)
    }

    /// `A ∂/∂y` taken from the right.
    fn right_deriv(&self, y: usize, a: &Poly) -> Poly {
        let yv = &self.sig.vars()[y];
        let mut out = Poly::zero();
        for (m, c) in &a.terms {
            let t = Poly::monomial(m.clone(), c.clone());
            let left = self.sig.deriv(y, &t);
            if left.is_zero() {
                continue;
            }
            let w = self.sig.mono_weight(m) - yv.weight;
            let d = self.sig.mono_degree(m) - yv.degree;
            out.add_assign(&left.signed(odd_swap(w.into(), d.into(), yv.weight.into(), yv.degree.into())));
        }
        out
    }

    /// Schouten bracket, of bidegree `(-1, 0)`.
    pub fn bracket(&self, a: &Poly, b: &Poly) -> Poly {
        let mut out = Poly::zero();
        for ((wa, da), pa) in self.parts(a) {
            for ((wb, db), pb) in self.parts(b) {
                let neg = odd_swap((wa - 1).into(), da.into(), (wb - 1).into(), db.into());
                for v in 0..self.n {
                    let t = self.n + v;
                    let x = self.sig.mul(&self.right_deriv(t, &pa), &self.sig.deriv(v, &pb));
                    let y = self.sig.mul(&self.right_deriv(t, &pb), &self.sig.deriv(v, &pa));
                    out.add_assign(&x);
                    out.add_assign(&y.signed(!neg));
                }
            }
        }
        out
    }

    /// The homological vector field as a poly-vector.
    pub fn q(&self) -> Poly {
        self.vector_field(&self.mfd.q)
    }

    pub fn lie_q(&self, a: &Poly) -> Poly {
        self.bracket(&self.q(), a)
    }

    /// Monomial basis of the poly-vectors of arity `p` and degree `d`.
    /// Needs a point base.
    pub fn cell(&self, p: usize, d: i32) -> GResult<Vec<Mono>> {
        let caps: Vec<u32> =
            (0..self.n).map(|v| if self.sig.nilpotent(self.n + v) { 1 } else { p as u32 }).collect();
        let mut out = Vec::new();
        for pm in exponent_vectors(&caps, p as u32, p as u32) {
            let pd: i32 = pm.iter().enumerate().map(|(v, &e)| i32::from(e) * self.mfd.partial_degree(v)).sum();
            for cm in self.mfd.monomials(d - pd)?.monos.iter() {
                out.push(self.join_mono(cm, &pm));
            }
        }
        out.sort();
        Ok(out)
    }

    /// Matrix of `L_Q` from the cell `(p, d)` to `(p, d + 1)`.
    pub fn lie_q_matrix(&self, p: usize, d: i32) -> GResult<Matrix> {
        let src = self.cell(p, d)?;
        let tgt = self.cell(p, d + 1)?;
        let index: HashMap<&Mono, usize> = tgt.iter().enumerate().map(|(i, m)| (m, i)).collect();
        let mut mat = Matrix::zeros(tgt.len(), src.len());
        for (j, m) in src.iter().enumerate() {
            let img = self.lie_q(&Poly::monomial(m.clone(), Q::one()));
            for (tm, c) in &img.terms {
                let i = *index.get(tm).ok_or_else(|| GradedError::Shape(format!("L_Q left the cell ({p}, {})", d + 1)))?;
                mat.add_to(i, j, c);
            }
        }
        Ok(mat)
    }

    pub fn fmt(&self, a: &Poly) -> String {
        self.sig.fmt(a)
    }
}

/// A poly-differential operator: `coef · P_1 ⊗ … ⊗ P_p` summed over terms,
/// each `P_s` a monomial in coordinate derivations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiffOp {
    pub arity: usize,
    pub terms: BTreeMap<Vec<Mono>, Poly>,
}

impl DiffOp {
    pub fn zero(arity: usize) -> DiffOp {
        DiffOp { arity, terms: BTreeMap::new() }
    }

    pub fn function(f: &Poly) -> DiffOp {
        let mut d = DiffOp::zero(0);
        d.add(vec![], f);
        d
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&mut self, slots: Vec<Mono>, c: &Poly) {
        let e = self.terms.entry(slots).or_default();
        e.add_assign(c);
        if e.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    pub fn plus(&self, other: &DiffOp) -> DiffOp {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add(k.clone(), c);
        }
        out
    }

    pub fn minus(&self, other: &DiffOp) -> DiffOp {
        self.plus(&other.scale(&-Q::one()))
    }

    pub fn scale(&self, s: &Q) -> DiffOp {
        let mut out = DiffOp::zero(self.arity);
        if !s.is_zero() {
            out.terms = self.terms.iter().map(|(k, c)| (k.clone(), c.scale(s))).collect();
        }
        out
    }

    /// Largest slot order among the terms.
    pub fn order(&self) -> u32 {
        self.terms.keys().flatten().map(|m| m.iter().map(|&e| u32::from(e)).sum()).max().unwrap_or(0)
    }
}

/// Poly-differential operators on a DG manifold, with slot order at most `order`.
#[derive(Debug, Clone)]
pub struct Operators {
    pub mfd: Arc<DgManifold>,
    /// Coordinate derivations; generator `v` is `∂v`, of degree `-deg v`.
    pub dsig: Signature,
    pub order: u32,
}

/// Result of an operation whose output was projected to bounded order.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncated {
    pub op: DiffOp,
    pub discarded: bool,
}

impl Operators {
    pub fn new(mfd: Arc<DgManifold>, order: u32) -> Operators {
        let vars = mfd.sig.vars().iter().map(|v| Var::new(format!("∂{}", v.name), 0, -v.degree)).collect();
        Operators { dsig: Signature::new(vars), mfd, order }
    }

    fn sig(&self) -> &Signature {
        &self.mfd.sig
    }

    /// Internal degree of each term; `None` for the zero operator or mixed degrees.
    pub fn degree(&self, op: &DiffOp) -> Option<i32> {
        let mut out = None;
        for (slots, c) in &op.terms {
            let s: i32 = slots.iter().map(|m| self.dsig.mono_degree(m)).sum();
            for m in c.terms.keys() {
                let d = self.sig().mono_degree(m) + s;
                if out.is_some_and(|o| o != d) {
                    return None;
                }
                out = Some(d);
            }
        }
        out
    }

    /// Splits an operator by internal degree.
    pub fn degree_split(&self, op: &DiffOp) -> BTreeMap<i32, DiffOp> {
        let mut out: BTreeMap<i32, DiffOp> = BTreeMap::new();
        for (slots, c) in &op.terms {
            let s: i32 = slots.iter().map(|m| self.dsig.mono_degree(m)).sum();
            for (d, part) in degree_parts(self.sig(), c) {
                out.entry(d + s).or_insert_with(|| DiffOp::zero(op.arity)).add(slots.clone(), &part);
            }
        }
        out
    }

    /// Slot monomials of order `1..=bound`.
    pub fn slot_monomials(&self, bound: u32) -> Vec<Mono> {
        let caps: Vec<u32> = (0..self.dsig.len()).map(|v| if self.dsig.nilpotent(v) { 1 } else { bound }).collect();
        let mut out = exponent_vectors(&caps, 1, bound);
        out.sort_by_key(|m| (m.iter().map(|&e| u32::from(e)).sum::<u32>(), m.clone()));
        out
    }

    /// `∂^α f`, with the lowest-index derivation applied last.
    pub fn apply_slot(&self, alpha: &Mono, f: &Poly) -> Poly {
        let mut g = f.clone();
        for v in (0..alpha.len()).rev() {
            for _ in 0..alpha[v] {
                g = self.sig().deriv(v, &g);
            }
        }
        g
    }

    /// `D(f_1, …, f_p)`; derivations pass earlier arguments with the Koszul sign.
    pub fn eval(&self, op: &DiffOp, fs: &[Poly]) -> Poly {
        assert_eq!(fs.len(), op.arity, "wrong number of arguments");
        let parts: Vec<Vec<(i32, Poly)>> = fs.iter().map(|f| degree_parts(self.sig(), f)).collect();
        let mut out = Poly::zero();
        let mut choice = vec![0usize; fs.len()];
        if parts.iter().any(|p| p.is_empty()) {
            return out;
        }
        loop {
            let args: Vec<&(i32, Poly)> = choice.iter().enumerate().map(|(i, &c)| &parts[i][c]).collect();
            for (slots, c) in &op.terms {
                let mut neg = false;
                let mut prod = c.clone();
                let mut before = 0i64;
                for (s, (d, f)) in args.iter().enumerate() {
                    let ps = self.dsig.mono_degree(&slots[s]);
                    neg ^= koszul(ps.into(), before);
                    before += i64::from(*d);
                    prod = self.sig().mul(&prod, &self.apply_slot(&slots[s], f));
                    if prod.is_zero() {
                        break;
                    }
                }
                out.add_assign(&prod.signed(neg));
            }
            // next combination of homogeneous parts
            let mut i = 0;
            loop {
                if i == choice.len() {
                    return out;
                }
                choice[i] += 1;
                if choice[i] < parts[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }

    /// Reads back the normal form of a normalized multilinear operator from its
    /// values on coordinate monomials, keeping slot orders up to `bound`.
    pub fn extract(&self, arity: usize, bound: u32, f: &dyn Fn(&[Poly]) -> Poly) -> DiffOp {
        if arity == 0 {
            return DiffOp::function(&f(&[]));
        }
        let monos = self.slot_monomials(bound);
        let mut probes: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..arity {
            probes = probes.into_iter().flat_map(|p| (0..monos.len()).map(move |i| [p.clone(), vec![i]].concat())).collect();
        }
        let total = |p: &Vec<usize>| p.iter().map(|&i| monos[i].iter().map(|&e| u32::from(e)).sum::<u32>()).sum::<u32>();
        probes.sort_by_key(|p| (total(p), p.clone()));
        let mut op = DiffOp::zero(arity);
        for p in probes {
            let slots: Vec<Mono> = p.iter().map(|&i| monos[i].clone()).collect();
            let inputs: Vec<Poly> = slots.iter().map(|m| Poly::monomial(m.clone(), Q::one())).collect();
            let r = f(&inputs).minus(&self.eval(&op, &inputs));
            if r.is_zero() {
                continue;
            }
            let mut unit = DiffOp::zero(arity);
            unit.add(slots.clone(), &self.sig().one());
            let u = self.eval(&unit, &inputs).constant_term();
            op.add(slots, &r.scale(&(Q::one() / u)));
        }
        op
    }

    /// Projects to slot order `self.order`, recording whether anything was dropped.
    pub fn truncate(&self, full: DiffOp) -> Truncated {
        let mut op = DiffOp::zero(full.arity);
        let mut discarded = false;
        for (slots, c) in full.terms {
            if slots.iter().all(|m| m.iter().map(|&e| u32::from(e)).sum::<u32>() <= self.order) {
                op.terms.insert(slots, c);
            } else {
                discarded = true;
            }
        }
        Truncated { op, discarded }
    }

    fn homogeneous_apply(&self, op: &DiffOp, arity: usize, mut g: impl FnMut(&DiffOp, i32) -> DiffOp) -> DiffOp {
        let mut out = DiffOp::zero(arity);
        for (d, part) in self.degree_split(op) {
            out = out.plus(&g(&part, d));
        }
        out
    }

    /// Hochschild differential, from arity `p` to `p + 1`.  The standard bar
    /// formula is multiplied by `(-1)^|D|` so that it anticommutes with
    /// `[[Q, -]]`.
    pub fn hochschild(&self, op: &DiffOp) -> DiffOp {
        let p = op.arity;
        self.homogeneous_apply(op, p + 1, |d_op, deg| {
            let f = |fs: &[Poly]| -> Poly {
                let sig = self.sig();
                let degs: Vec<i32> = fs.iter().map(|f| sig.degree_of(f).unwrap_or(0)).collect();
                let mut out = Poly::zero();
                let first = sig.mul(&fs[0], &self.eval(d_op, &fs[1..]));
                out.add_assign(&first.signed(koszul(deg.into(), degs[0].into())));
                for i in 1..=p {
                    let mut args: Vec<Poly> = fs[..i - 1].to_vec();
                    args.push(sig.mul(&fs[i - 1], &fs[i]));
                    args.extend_from_slice(&fs[i + 1..]);
                    out.add_assign(&self.eval(d_op, &args).signed(i % 2 == 1));
                }
                let last = sig.mul(&self.eval(d_op, &fs[..p]), &fs[p]);
                out.add_assign(&last.signed(p % 2 == 0));
                out.signed(deg.rem_euclid(2) == 1)
            };
            self.extract(p + 1, d_op.order(), &f)
        })
    }

    /// `[[Q, D]] = Q ∘ D - (-1)^|D| Σ D(…, Q f_s, …)`.
    pub fn q_differential(&self, op: &DiffOp) -> DiffOp {
        let p = op.arity;
        self.homogeneous_apply(op, p, |d_op, deg| {
            let f = |fs: &[Poly]| -> Poly {
                let sig = self.sig();
                let mut out = self.mfd.q_apply(&self.eval(d_op, fs));
                let mut before = 0i64;
                for s in 0..p {
                    let mut args = fs.to_vec();
                    args[s] = self.mfd.q_apply(&fs[s]);
                    let neg = !koszul(deg.into(), 1) ^ koszul(before, 1);
                    out.add_assign(&self.eval(d_op, &args).signed(neg));
                    before += i64::from(sig.degree_of(&fs[s]).unwrap_or(0));
                }
                out
            };
            self.extract(p, d_op.order(), &f)
        })
    }

    /// `(D ∪ E)(f…, g…) = (-1)^(|E| Σ|f|) D(f…) E(g…)`.
    pub fn cup(&self, a: &DiffOp, b: &DiffOp) -> DiffOp {
        let (p, r) = (a.arity, b.arity);
        self.homogeneous_apply(b, p + r, |b_op, eb| {
            let f = |fs: &[Poly]| -> Poly {
                let sig = self.sig();
                let before: i64 = fs[..p].iter().map(|f| i64::from(sig.degree_of(f).unwrap_or(0))).sum();
                let x = sig.mul(&self.eval(a, &fs[..p]), &self.eval(b_op, &fs[p..]));
                x.signed(koszul(eb.into(), before))
            };
            self.extract(p + r, a.order().max(b_op.order()), &f)
        })
    }

    /// Gerstenhaber composition `D ∘ E = Σ_i ± D(…, E(f_i, …), …)`, with the
    /// sign `(-1)^((r-1)(i-1) + |E| Σ_(j<i) |f_j|)` for `E` of arity `r`.
    /// Slot orders add up; nothing is truncated.
    pub fn compose_full(&self, a: &DiffOp, b: &DiffOp) -> DiffOp {
        let (p, r) = (a.arity, b.arity);
        if p == 0 {
            return DiffOp::zero((p + r).saturating_sub(1));
        }
        let n = p + r - 1;
        self.homogeneous_apply(b, n, |b_op, eb| {
            let f = |fs: &[Poly]| -> Poly {
                let sig = self.sig();
                let mut out = Poly::zero();
                let mut before = 0i64;
                for i in 0..p {
                    let mut args: Vec<Poly> = fs[..i].to_vec();
                    args.push(self.eval(b_op, &fs[i..i + r]));
                    args.extend_from_slice(&fs[i + r..]);
                    let neg = koszul((r as i64) - 1, i as i64) ^ koszul(eb.into(), before);
                    out.add_assign(&self.eval(a, &args).signed(neg));
                    if i < fs.len() {
                        before += i64::from(sig.degree_of(&fs[i]).unwrap_or(0));
                    }
                }
                out
            };
            self.extract(n, a.order() + b_op.order(), &f)
        })
    }

    pub fn compose(&self, a: &DiffOp, b: &DiffOp) -> Truncated {
        self.truncate(self.compose_full(a, b))
    }

    /// `[[D, E]] = D ∘ E - (-1)^((p-1)(r-1) + |D||E|) E ∘ D`, truncated after
    /// the two compositions are combined.
    pub fn bracket(&self, a: &DiffOp, b: &DiffOp) -> Truncated {
        let mut op = DiffOp::zero((a.arity + b.arity).saturating_sub(1));
        for (da, pa) in self.degree_split(a) {
            for (db, pb) in self.degree_split(b) {
                let x = self.compose_full(&pa, &pb);
                let y = self.compose_full(&pb, &pa);
                let neg = koszul(a.arity as i64 - 1, b.arity as i64 - 1) ^ koszul(da.into(), db.into());
                op = op.plus(&x);
                op = if neg { op.plus(&y) } else { op.minus(&y) };
            }
        }
        self.truncate(op)
    }

    /// `Q` as a 1-cochain.
    pub fn q(&self) -> DiffOp {
        self.vector_field(&self.mfd.q)
    }

    pub fn vector_field(&self, x: &[Poly]) -> DiffOp {
        let mut op = DiffOp::zero(1);
        for (v, xv) in x.iter().enumerate() {
            let mut m = vec![0u8; self.dsig.len()];
            m[v] = 1;
            op.add(vec![m], xv);
        }
        op
    }

    /// `hkr(X_1 ∧ … ∧ X_k) = (1/k!) Σ_σ κ(σ) X_σ(1) ⊗ … ⊗ X_σ(k)`.
    pub fn hkr(&self, tp: &PolyVectors, a: &Poly) -> BTreeMap<usize, DiffOp> {
        let mut out: BTreeMap<usize, DiffOp> = BTreeMap::new();
        for (m, c) in &a.terms {
            let (cm, pm) = tp.split_mono(m);
            let coef = Poly::monomial(cm, c.clone());
            let word: Vec<usize> = pm.iter().enumerate().flat_map(|(v, &e)| std::iter::repeat(v).take(e as usize)).collect();
            let k = word.len();
            let degs: Vec<i64> = word.iter().map(|&v| i64::from(self.mfd.partial_degree(v))).collect();
            let inv = Q::one() / factorial(k as u32);
            let entry = out.entry(k).or_insert_with(|| DiffOp::zero(k));
            for perm in permutations(k) {
                let neg = permutation_sign(&degs, &perm, true);
                let slots: Vec<Mono> = perm
                    .iter()
                    .map(|&i| {
                        let mut s = vec![0u8; self.dsig.len()];
                        s[word[i]] = 1;
                        s
                    })
                    .collect();
                entry.add(slots, &coef.scale(&inv).signed(neg));
            }
        }
        out.retain(|_, d| !d.is_zero());
        out
    }

    pub fn fmt(&self, op: &DiffOp) -> String {
        if op.is_zero() {
            return "0".into();
        }
        let mut parts = Vec::new();
        for (slots, c) in &op.terms {
            let s: Vec<String> = slots.iter().map(|m| self.dsig.fmt_mono(m)).collect();
            parts.push(format!("({})·{}", self.sig().fmt(c), s.join("⊗")));
        }
        parts.join(" + ")
    }
}

/// Basis element of a cell of operators: coefficient monomial and slot monomials.
pub type OpBasisItem = (Mono, Vec<Mono>);

impl Operators {
    /// Monomial basis of the normalized `p`-cochains of internal degree `d`.
    /// Needs a point base.
    pub fn cell(&self, p: usize, d: i32) -> GResult<Vec<OpBasisItem>> {
        let monos = self.slot_monomials(self.order);
        let degs: Vec<i32> = monos.iter().map(|m| self.dsig.mono_degree(m)).collect();
        let mut out = Vec::new();
        let mut tuples: Vec<(Vec<usize>, i32)> = vec![(vec![], 0)];
        for _ in 0..p {
            let mut next = Vec::new();
            for (t, s) in tuples {
                for (i, &dg) in degs.iter().enumerate() {
                    next.push(([t.clone(), vec![i]].concat(), s + dg));
                }
            }
            tuples = next;
        }
        for (t, s) in tuples {
            // coefficients have degree <= 0
            if d - s > 0 {
                continue;
            }
            let slots: Vec<Mono> = t.iter().map(|&i| monos[i].clone()).collect();
            for cm in self.mfd.monomials(d - s)?.monos.iter() {
                out.push((cm.clone(), slots.clone()));
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn basis_op(&self, item: &OpBasisItem) -> DiffOp {
        let mut op = DiffOp::zero(item.1.len());
        op.add(item.1.clone(), &Poly::monomial(item.0.clone(), Q::one()));
        op
    }

    /// Matrix of `f` between two cells.
    pub fn cell_matrix(
        &self,
        src: &[OpBasisItem],
        tgt: &[OpBasisItem],
        f: &(dyn Fn(&DiffOp) -> DiffOp + Sync),
    ) -> GResult<Matrix> {
        let index: HashMap<&OpBasisItem, usize> = tgt.iter().enumerate().map(|(i, m)| (m, i)).collect();
        let mut mat = Matrix::zeros(tgt.len(), src.len());
        for (j, item) in src.iter().enumerate() {
            let img = f(&self.basis_op(item));
            for (slots, c) in img.terms {
                for (m, v) in c.terms {
                    let key = (m, slots.clone());
                    let i = *index.get(&key).ok_or_else(|| GradedError::Shape("image leaves the target cell".into()))?;
                    mat.add_to(i, j, &v);
                }
            }
        }
        Ok(mat)
    }
}

/// Truncation bounds and total-degree window of a Hochschild computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowParams {
    pub arity: usize,
    pub order: u32,
    pub window: (i32, i32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    /// Same rank with both truncation bounds raised by one.
    Stable(usize),
    Inconclusive { rank: usize, next: usize },
}

impl CellStatus {
    pub fn stable(&self) -> Option<usize> {
        match self {
            CellStatus::Stable(r) => Some(*r),
            CellStatus::Inconclusive { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeReport {
    pub degree: i32,
    pub hh: CellStatus,
    pub tpoly: CellStatus,
    /// `(arity, internal degree, dimension)` of the operator cells in this total degree.
    pub cells: Vec<(usize, i32, usize)>,
    /// Whether the two sides agree, when both are stable.
    pub matches: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HochschildWindow {
    pub params: WindowParams,
    pub degrees: Vec<DegreeReport>,
}

impl HochschildWindow {
    pub fn stable_degrees(&self) -> impl Iterator<Item = &DegreeReport> {
        self.degrees.iter().filter(|r| r.hh.stable().is_some())
    }
}

/// Ranks of the truncated total complex `⊕_(p <= P) D^p` in each total degree of
/// the window, with differential `d_H + [[Q, -]]`.  Arities above `P` form a
/// subcomplex, so the truncation is the quotient by it.
fn operator_ranks(ops: &Operators, arity: usize, window: (i32, i32)) -> GResult<(Vec<usize>, Vec<Vec<(usize, i32, usize)>>)> {
    let cells = |n: i32| -> GResult<Vec<Vec<OpBasisItem>>> { (0..=arity).map(|p| ops.cell(p, n - p as i32)).collect() };
    // rank of the total differential out of degree n
    let diff_rank = |n: i32| -> GResult<usize> {
        let src = cells(n)?;
        let tgt = cells(n + 1)?;
        let offs = |c: &[Vec<OpBasisItem>]| c.iter().scan(0, |acc, b| { let o = *acc; *acc += b.len(); Some(o) }).collect::<Vec<_>>();
        let (so, to) = (offs(&src), offs(&tgt));
        let rows: usize = tgt.iter().map(Vec::len).sum();
        let cols: usize = src.iter().map(Vec::len).sum();
        let mut total = Matrix::zeros(rows, cols);
        for p in 0..=arity {
            if src[p].is_empty() {
                continue;
            }
            let q = ops.cell_matrix(&src[p], &tgt[p], &|d| ops.q_differential(d))?;
            total.add_block(to[p], so[p], &q);
            if p < arity {
                let h = ops.cell_matrix(&src[p], &tgt[p + 1], &|d| ops.hochschild(d))?;
                total.add_block(to[p + 1], so[p], &h);
            }
        }
        Ok(total.rank())
    };
    let (lo, hi) = window;
    let degrees: Vec<i32> = (lo - 1..=hi).collect();
    let ranks: Vec<GResult<usize>> = std::thread::scope(|s| {
        let handles: Vec<_> = degrees.iter().map(|&n| s.spawn(move || diff_rank(n))).collect();
        handles.into_iter().map(|h| h.join().expect("rank worker panicked")).collect()
    });
    let ranks: Vec<usize> = ranks.into_iter().collect::<GResult<_>>()?;
    let mut out = Vec::new();
    let mut shapes = Vec::new();
    for (k, n) in (lo..=hi).enumerate() {
        let c = cells(n)?;
        let dim: usize = c.iter().map(Vec::len).sum();
        out.push(dim - ranks[k + 1] - ranks[k]);
        shapes.push(c.iter().enumerate().map(|(p, b)| (p, n - p as i32, b.len())).collect());
    }
    Ok((out, shapes))
}

fn tpoly_ranks(tp: &PolyVectors, arity: usize, window: (i32, i32)) -> GResult<Vec<usize>> {
    let mut out = Vec::new();
    for n in window.0..=window.1 {
        let mut r = 0;
        for p in 0..=arity {
            let d = n - p as i32;
            let dim = tp.cell(p, d)?.len();
            r += dim - tp.lie_q_matrix(p, d)?.rank() - tp.lie_q_matrix(p, d - 1)?.rank();
        }
        out.push(r);
    }
    Ok(out)
}

fn status(rank: usize, next: usize) -> CellStatus {
    if rank == next {
        CellStatus::Stable(rank)
    } else {
        CellStatus::Inconclusive { rank, next }
    }
}

/// Hochschild cohomology on a window of total degrees, computed with arity
/// at most `P` and slot order at most `R`, and again with both raised by one;
/// degrees where the two disagree are reported as inconclusive.  The
/// poly-vector side is computed on the same window for comparison.
pub fn windowed_hh(mfd: Arc<DgManifold>, params: WindowParams) -> GResult<HochschildWindow> {
    if !mfd.is_point() {
        return Err(GradedError::Shape("Hochschild windows need a point base".into()));
    }
    let (lo, hi) = params.window;
    if lo > hi {
        return Ok(HochschildWindow { params, degrees: vec![] });
    }
    let tp = PolyVectors::new(mfd.clone());
    let (hh, shapes) = operator_ranks(&Operators::new(mfd.clone(), params.order), params.arity, params.window)?;
    let (hh_next, _) = operator_ranks(&Operators::new(mfd.clone(), params.order + 1), params.arity + 1, params.window)?;
    let tv = tpoly_ranks(&tp, params.arity, params.window)?;
    let tv_next = tpoly_ranks(&tp, params.arity + 1, params.window)?;
    let degrees = (lo..=hi)
        .enumerate()
        .map(|(k, n)| {
            let (h, t) = (status(hh[k], hh_next[k]), status(tv[k], tv_next[k]));
            let matches = match (h.stable(), t.stable()) {
                (Some(a), Some(b)) => Some(a == b),
                _ => None,
            };
            DegreeReport { degree: n, hh: h, tpoly: t, cells: shapes[k].clone(), matches }
        })
        .collect();
    Ok(HochschildWindow { params, degrees })
}

/// An invertible change of coordinates between two DG manifolds over a point:
/// `pullback[w]` is the source function pulled back from target coordinate
/// `w`, and `inverse[v]` the target function pulled back from source
/// coordinate `v`.
#[derive(Debug, Clone)]
pub struct CoordinateIso {
    pub source: Arc<DgManifold>,
    pub target: Arc<DgManifold>,
    pub pullback: Vec<Poly>,
    pub inverse: Vec<Poly>,
}

impl CoordinateIso {
    /// Checks that the two maps are inverse and intertwine the homological
    /// vector fields.
    pub fn new(source: Arc<DgManifold>, target: Arc<DgManifold>, pullback: Vec<Poly>, inverse: Vec<Poly>) -> Result<CoordinateIso, String> {
        if pullback.len() != target.ngen() || inverse.len() != source.ngen() {
            return Err("coordinate counts do not match".into());
        }
        let iso = CoordinateIso { source, target, pullback, inverse };
        for v in 0..iso.source.ngen() {
            if iso.pull(&iso.inverse[v]) != iso.source.sig.var(v) {
                return Err(format!("maps are not inverse on source coordinate {v}"));
            }
        }
        for w in 0..iso.target.ngen() {
            if iso.push_function(&iso.pullback[w]) != iso.target.sig.var(w) {
                return Err(format!("maps are not inverse on target coordinate {w}"));
            }
            if iso.pull(&iso.target.q[w]) != iso.source.q_apply(&iso.pullback[w]) {
                return Err(format!("homological vector fields differ on target coordinate {w}"));
            }
        }
        Ok(iso)
    }

    pub fn pull(&self, g: &Poly) -> Poly {
        self.target.sig.subst(g, &self.pullback, &self.source.sig)
    }

    pub fn push_function(&self, f: &Poly) -> Poly {
        self.source.sig.subst(f, &self.inverse, &self.target.sig)
    }

    /// `(Ψ_* D)(g…) = (Ψ^*)^-1 D(Ψ^* g…)`.
    pub fn push_operator(&self, src: &Operators, tgt: &Operators, op: &DiffOp) -> DiffOp {
        let f = |gs: &[Poly]| {
            let pulled: Vec<Poly> = gs.iter().map(|g| self.pull(g)).collect();
            self.push_function(&src.eval(op, &pulled))
        };
        tgt.extract(op.arity, op.order(), &f)
    }

    /// Pushes a poly-vector forward, factor by factor.
    pub fn push_poly_vector(&self, src: &PolyVectors, tgt: &PolyVectors, a: &Poly) -> Poly {
        let partials: Vec<Poly> = (0..src.ngen())
            .map(|v| {
                let x: Vec<Poly> = (0..tgt.ngen())
                    .map(|w| self.push_function(&self.source.sig.deriv(v, &self.pullback[w])))
                    .collect();
                tgt.vector_field(&x)
            })
            .collect();
        let mut out = Poly::zero();
        for (m, c) in &a.terms {
            let (cm, pm) = src.split_mono(m);
            let mut t = tgt.function(&self.push_function(&Poly::monomial(cm, c.clone())));
            for (v, &e) in pm.iter().enumerate() {
                for _ in 0..e {
                    t = tgt.wedge(&t, &partials[v]);
                }
            }
            out.add_assign(&t);
        }
        out
    }
}

/// Interior product of a form on a poly-vector: the form is fed the leading
/// factors of each ordered choice of `k` wedge factors, the rest stay.
/// `form` lives in the `(0, k)` tensors of `spaces` and has internal degree `degree`.
pub fn contract(tp: &PolyVectors, spaces: &TensorSpaces, form: &[Poly], k: usize, degree: i32, a: &Poly) -> Poly {
    if k == 0 {
        return tp.wedge(&tp.function(&form[0]), a);
    }
    let sig = &tp.mfd.sig;
    let vdeg = &spaces.vectors.degrees;
    let n = vdeg.len();
    let framed: Vec<Vec<Poly>> = (0..tp.ngen()).map(|v| spaces.frame.to_frame(&tp.mfd.partial(v))).collect();
    let mut out = Poly::zero();
    for (m, c) in &a.terms {
        let (cm, pm) = tp.split_mono(m);
        let coef = Poly::monomial(cm, c.clone());
        let word: Vec<usize> = pm.iter().enumerate().flat_map(|(v, &e)| std::iter::repeat(v).take(e as usize)).collect();
        if word.len() < k {
            continue;
        }
        let degs: Vec<i64> = word.iter().map(|&v| i64::from(tp.mfd.partial_degree(v))).collect();
        for chosen in choose(word.len(), k) {
            let rest: Vec<usize> = (0..word.len()).filter(|i| !chosen.contains(i)).collect();
            let perm: Vec<usize> = chosen.iter().chain(&rest).copied().collect();
            let neg = permutation_sign(&degs, &perm, true) ^ koszul(degree.into(), sig.degree_of(&coef).unwrap_or(0).into());
            // ω(∂_chosen) in frame components
            let mut value = Poly::zero();
            for idx in tuples(n, k) {
                let w = &form[tuple_index(n, &idx)];
                if w.is_zero() {
                    continue;
                }
                let mut shift = -idx.iter().map(|&i| vdeg[i]).sum::<i32>();
                let mut t = w.clone();
                for (j, &i) in idx.iter().enumerate() {
                    let y = &framed[word[chosen[j]]][i];
                    t = sig.mul(&t, &koszul_twist(sig, y, shift));
                    shift += vdeg[i];
                }
                value.add_assign(&t);
            }
            let mut t = tp.function(&sig.mul(&coef, &value));
            for &i in &rest {
                t = tp.wedge(&t, &tp.partial(word[i]));
            }
            out.add_assign(&t.signed(neg));
        }
    }
    out
}

/// Increasing `k`-subsets of `0..n`.
fn choose(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = choose(n - 1, k);
    for mut c in choose(n - 1, k - 1) {
        c.push(n - 1);
        out.push(c);
    }
    out
}

/// Contraction by `Td^(1/2)`, summed over form degrees.
pub fn todd_contraction(tp: &PolyVectors, spaces: &TensorSpaces, td: &ToddTruncation, a: &Poly) -> Poly {
    let mut out = Poly::zero();
    for (k, w) in td.sqrt_components.iter().enumerate() {
        if k > 0 && FreeModule::is_zero(w) {
            continue;
        }
        out.add_assign(&contract(tp, spaces, w, k, k as i32, a));
    }
    out
}

/// Both sides of a coordinate isomorphism with their Todd truncations, for
/// the contraction square.
pub struct ToddSides<'a> {
    pub source: (&'a TensorSpaces, &'a ToddTruncation),
    pub target: (&'a TensorSpaces, &'a ToddTruncation),
}

/// Cochain-level checks of the squares relating poly-vectors and operators on
/// the two sides of `iso`, over all basis poly-vectors of arity at most
/// `arity` and internal degree in `degrees`: `hkr` and `L_Q` commute with the
/// pushforward, and so does contraction by `Td^(1/2)` when `todd` is given.
pub fn hkr_diagram(
    iso: &CoordinateIso,
    order: u32,
    arity: usize,
    degrees: (i32, i32),
    todd: Option<&ToddSides>,
) -> GResult<Vec<IdentityCheck>> {
    let (tm, tn) = (PolyVectors::new(iso.source.clone()), PolyVectors::new(iso.target.clone()));
    let (om, on) = (Operators::new(iso.source.clone(), order), Operators::new(iso.target.clone(), order));
    let mut hkr_bad = None;
    let mut lie_bad = None;
    let mut td_bad = None;
    for p in 0..=arity {
        for d in degrees.0..=degrees.1 {
            for m in tm.cell(p, d)? {
                let a = Poly::monomial(m, Q::one());
                let pa = iso.push_poly_vector(&tm, &tn, &a);
                let left = on.hkr(&tn, &pa).remove(&p).unwrap_or_else(|| DiffOp::zero(p));
                let h = om.hkr(&tm, &a).remove(&p).unwrap_or_else(|| DiffOp::zero(p));
                let right = iso.push_operator(&om, &on, &h);
                if hkr_bad.is_none() && left != right {
                    hkr_bad = Some(format!("on {}", tm.fmt(&a)));
                }
                if lie_bad.is_none() && tn.lie_q(&pa) != iso.push_poly_vector(&tm, &tn, &tm.lie_q(&a)) {
                    lie_bad = Some(format!("on {}", tm.fmt(&a)));
                }
                if let Some(t) = todd {
                    let left = todd_contraction(&tn, t.target.0, t.target.1, &pa);
                    let right = iso.push_poly_vector(&tm, &tn, &todd_contraction(&tm, t.source.0, t.source.1, &a));
                    if td_bad.is_none() && left != right {
                        td_bad = Some(format!("on {}", tm.fmt(&a)));
                    }
                }
            }
        }
    }
    let mut checks = vec![
        IdentityCheck::of("hkr commutes with the pushforward", hkr_bad),
        IdentityCheck::of("L_Q commutes with the pushforward", lie_bad),
    ];
    if todd.is_some() {
        checks.push(IdentityCheck::of("contraction by Td^(1/2) commutes with the pushforward", td_bad));
    }
    Ok(checks)
}

/// `d_H ∘ hkr = 0` and `hkr ∘ L_Q = [[Q,-]] ∘ hkr` on every basis
/// poly-vector of arity `<= arity` and internal degree in `degrees`.
/// Also returns how many basis elements were checked.
pub fn hkr_properties(
    mfd: &Arc<DgManifold>,
    order: u32,
    arity: usize,
    degrees: (i32, i32),
) -> GResult<(Vec<IdentityCheck>, usize)> {
    let tp = PolyVectors::new(mfd.clone());
    let ops = Operators::new(mfd.clone(), order);
    let (mut cocycle_bad, mut lie_bad) = (None, None);
    let mut count = 0;
    for p in 0..=arity {
        for d in degrees.0..=degrees.1 {
            for m in tp.cell(p, d)? {
                let a = Poly::monomial(m, Q::one());
                let h = ops.hkr(&tp, &a).remove(&p).unwrap_or_else(|| DiffOp::zero(p));
                if cocycle_bad.is_none() && !ops.hochschild(&h).is_zero() {
                    cocycle_bad = Some(format!("on {}", tp.fmt(&a)));
                }
                let lq = ops.hkr(&tp, &tp.lie_q(&a)).remove(&p).unwrap_or_else(|| DiffOp::zero(p));
                if lie_bad.is_none() && ops.q_differential(&h) != lq {
                    lie_bad = Some(format!("on {}", tp.fmt(&a)));
                }
                count += 1;
            }
        }
    }
    let checks = vec![
        IdentityCheck::of("d_H ∘ hkr = 0", cocycle_bad),
        IdentityCheck::of("hkr ∘ L_Q = [[Q,-]] ∘ hkr", lie_bad),
    ];
    Ok((checks, count))
}
