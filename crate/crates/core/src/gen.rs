//! Seeded generators of valid test instances.
//!
//! Valid bundles are built as gauge transforms `G ∘ Q0 ∘ G^-1` of a simple
//! homological vector field `Q0` (constant linear part squaring to zero,
//! curvature in its kernel, optionally a bracket into the top degree), so
//! `Q^2 = 0` holds by construction.

use std::sync::Arc;

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::atiyah::AffineConnection;
use crate::graded::GradedSpace;
use crate::hochschild::PolyVectors;
use crate::linalg::Matrix;
use crate::linfty::{lift, Base, CurvedBundle, LinftyMorphism, Taylor};
use crate::manifold::DgManifold;
use crate::poly::{Poly, Signature};
use crate::scalar::{q, qf, Q};

pub struct Gen {
    pub rng: ChaCha8Rng,
}

/// Shape of a generated bundle.
#[derive(Clone, Debug)]
pub struct BundleShape {
    pub base: Base,
    /// Fibre dimension in degrees `1..=b`.
    pub dims: Vec<usize>,
    /// Allow nonzero curvature.
    pub curved: bool,
    /// Prefix for fibre labels.
    pub prefix: String,
}

impl Gen {
    pub fn new(seed: u64) -> Gen {
        Gen { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn small(&mut self) -> Q {
        let n: i64 = *[-2, -1, 1, 2, 3].choose(&mut self.rng).unwrap();
        let d: i64 = *[1, 1, 1, 2].choose(&mut self.rng).unwrap();
        qf(n, d)
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    /// Random polynomial of total degree `<= deg` on `m` even generators,
    /// padded to `n` generators.
    pub fn base_poly(&mut self, m: usize, deg: u32, n: usize) -> Poly {
        let mut p = Poly::zero();
        let mut mono = vec![0u8; n];
        self.base_poly_rec(m, deg, 0, &mut mono, &mut p);
        if p.is_zero() {
            p.add_term(vec![0u8; n], self.small());
        }
        p
    }

    fn base_poly_rec(&mut self, m: usize, left: u32, i: usize, mono: &mut Vec<u8>, out: &mut Poly) {
        if i == m {
            if self.coin(0.5) {
                let c = self.small();
                out.add_term(mono.clone(), c);
            }
            return;
        }
        for e in 0..=left {
            mono[i] = e as u8;
            self.base_poly_rec(m, left - e, i + 1, mono, out);
        }
        mono[i] = 0;
    }

    /// Random function of the given degree on a manifold, base exponents at
    /// most 1, each monomial kept with probability `density`.
    pub fn function(&mut self, mfd: &DgManifold, degree: i32, density: f64) -> Poly {
        let n = mfd.ngen();
        let allowed = vec![true; n];
        let caps: Vec<Option<u32>> = (0..n).map(|v| (v < mfd.nbase).then_some(1)).collect();
        let monos = if degree > 0 { Vec::new() } else { mfd.sig.monomials_of_degree(degree, &allowed, &caps).unwrap_or_default() };
        let mut p = Poly::zero();
        for m in monos {
            if self.coin(density) {
                p.add_term(m, self.small());
            }
        }
        p
    }

    /// Random poly-vector of arity `p` and degree `d` on a point base.
    pub fn poly_vector(&mut self, tp: &PolyVectors, p: usize, d: i32, density: f64) -> Poly {
        let mut out = Poly::zero();
        for m in tp.cell(p, d).unwrap_or_default() {
            if self.coin(density) {
                out.add_term(m, self.small());
            }
        }
        out
    }

    /// Random degree-0 affine connection on coordinate derivations.
    pub fn affine_connection(&mut self, mfd: &DgManifold, density: f64) -> AffineConnection {
        let n = mfd.ngen();
        AffineConnection::tabulate(n, |u, v| {
            (0..n)
                .map(|w| {
                    let d = mfd.partial_degree(u) + mfd.partial_degree(v) - mfd.partial_degree(w);
                    self.function(mfd, d, density)
                })
                .collect()
        })
    }

    pub fn matrix(&mut self, rows: usize, cols: usize, density: f64) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if self.coin(density) {
                    let v = self.small();
                    m.set(i, j, v);
                }
            }
        }
        m
    }

    /// Random square-zero maps `d_k : V_k -> V_(k+1)` for `k = 0..len-1`.
    pub fn square_zero(&mut self, dims: &[usize]) -> Vec<Matrix> {
        let mut out: Vec<Matrix> = Vec::new();
        for k in 0..dims.len().saturating_sub(1) {
            let (src, tgt) = (dims[k], dims[k + 1]);
            let m = match out.last() {
                None => self.matrix(tgt, src, 0.6),
                Some(prev) => {
                    // rows annihilating the image of the previous map
                    let left = prev.transpose().kernel();
                    let mut m = Matrix::zeros(tgt, src);
                    for i in 0..tgt {
                        for v in &left {
                            if self.coin(0.6) {
                                let c = self.small();
                                for (j, x) in v.iter().enumerate() {
                                    if !x.is_zero() {
                                        m.add_to(i, j, &(x * &c));
                                    }
                                }
                            }
                        }
                    }
                    m
                }
            };
            out.push(m);
        }
        out
    }

    /// Random invertible matrix, as a product of unit triangular factors
    /// with a permutation.
    pub fn invertible(&mut self, n: usize) -> Matrix {
        let mut lo = Matrix::identity(n);
        let mut up = Matrix::identity(n);
        for i in 0..n {
            for j in 0..i {
                if self.coin(0.5) {
                    let v = self.small();
                    lo.set(i, j, v);
                }
                if self.coin(0.5) {
                    let v = self.small();
                    up.set(j, i, v);
                }
            }
            if self.coin(0.3) {
                up.set(i, i, q(-1));
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut self.rng);
        let mut p = Matrix::zeros(n, n);
        for (i, &j) in perm.iter().enumerate() {
            p.set(i, j, q(1));
        }
        p.mul(&lo).mul(&up)
    }

    /// Exact sequence `0 -> V_0 -> ... -> V_len -> 0` built as a sum of
    /// identity cones, conjugated by random invertible matrices.
    pub fn exact_sequence(&mut self, len: usize, max_dim: usize) -> (Vec<usize>, Vec<Matrix>) {
        // piece a_i sits in positions i and i+1
        let mut pieces = vec![0usize; len];
        for i in 0..len {
            let used = if i == 0 { 0 } else { pieces[i - 1] };
            let room = max_dim.saturating_sub(used).max(1);
            pieces[i] = self.rng.gen_range(1..=room.min(3));
        }
        let dims: Vec<usize> =
            (0..=len).map(|i| if i == 0 { 0 } else { pieces[i - 1] } + if i < len { pieces[i] } else { 0 }).collect();
        let conj: Vec<Matrix> = dims.iter().map(|&n| self.invertible(n)).collect();
        let mut maps = Vec::new();
        for i in 0..len {
            // V_i = A_(i-1) ⊕ A_i, V_(i+1) = A_i ⊕ A_(i+1); map projects onto A_i then includes
            let prev = if i == 0 { 0 } else { pieces[i - 1] };
            let mut m = Matrix::zeros(dims[i + 1], dims[i]);
            for r in 0..pieces[i] {
                m.set(r, prev + r, q(1));
            }
            let inv = inverse(&conj[i]);
            maps.push(conj[i + 1].mul(&m).mul(&inv));
        }
        (dims, maps)
    }

    /// Random valid bundle of the given shape.
    pub fn bundle(&mut self, shape: &BundleShape) -> CurvedBundle {
        let b = shape.dims.len();
        let mut items = Vec::new();
        for (k, &n) in shape.dims.iter().enumerate() {
            for i in 0..n {
                items.push(((k + 1) as i32, format!("{}{}_{}", shape.prefix, k + 1, i)));
            }
        }
        let fibre = GradedSpace::new(items);
        let degs: Vec<i32> = fibre.basis().iter().map(|g| g.0).collect();
        let m = shape.base.dim();
        let r = degs.len();
        let by_deg = |k: i32| -> Vec<usize> { (0..r).filter(|&a| degs[a] == k).collect() };

        let mut lambda: Vec<Taylor> = vec![Taylor::new(), Taylor::new()];
        let dims_full: Vec<usize> = (1..=b as i32).map(|k| by_deg(k).len()).collect();
        let use_bracket = b >= 3 && self.coin(0.4);
        let ds = if use_bracket && !shape.curved { vec![Matrix::zeros(0, 0); b.saturating_sub(1)] } else { self.square_zero(&dims_full) };
        let sig = crate::linfty::base_signature(m);
        for (k, d) in ds.iter().enumerate() {
            let (src, tgt) = (by_deg(k as i32 + 1), by_deg(k as i32 + 2));
            for (j, &a) in src.iter().enumerate() {
                for (i, &t) in tgt.iter().enumerate() {
                    if d.nrows > i && d.ncols > j && !d.get(i, j).is_zero() {
                        lambda[1].entry(vec![a]).or_default().insert(t, sig.constant(d.get(i, j)));
                    }
                }
            }
        }
        if shape.curved && !by_deg(1).is_empty() {
            let ker: Vec<Vec<Q>> = match ds.first() {
                Some(d) if d.nrows > 0 => d.kernel(),
                _ => (0..by_deg(1).len())
                    .map(|i| {
                        let mut v = vec![Q::zero(); by_deg(1).len()];
                        v[i] = q(1);
                        v
                    })
                    .collect(),
            };
            let src = by_deg(1);
            for v in ker {
                let c = if m == 0 { sig.constant(self.small()) } else { self.base_poly(m, 2, m) };
                for (i, x) in v.iter().enumerate() {
                    if !x.is_zero() {
                        let e = lambda[0].entry(vec![]).or_default().entry(src[i]).or_default();
                        e.add_assign(&c.scale(x));
                    }
                }
            }
        }
        if use_bracket && !shape.curved {
            // λ_2 into the top degree: valid when λ_0 = λ_1 = 0
            lambda.push(Taylor::new());
            let top = by_deg(b as i32);
            for a in 0..r {
                for c in a..r {
                    if degs[a] + degs[c] + 1 != b as i32 || (a == c && degs[a] % 2 == 1) {
                        continue;
                    }
                    for &t in &top {
                        if self.coin(0.5) {
                            let p = if m == 0 { sig.constant(self.small()) } else { self.base_poly(m, 1, m) };
                            lambda[2].entry(vec![a, c]).or_default().insert(t, p);
                        }
                    }
                }
            }
        }
        let plain = CurvedBundle::new(shape.base.clone(), fibre.clone(), lambda).expect("generated shape");
        let mfd = plain.manifold();
        let gauge = self.gauge(&mfd.sig, m, &vec![true; r], &vec![true; r]);
        let q = conjugate(&mfd.sig, m, &mfd.q, &gauge);
        CurvedBundle::from_q(shape.base.clone(), fibre, &q[m..]).expect("gauge transform")
    }

    /// Gauge images `ξ_b ↦ ξ_b + (words of length >= 2)` for fibre generators
    /// with `moves[b]`, using only generators with `inputs[a]` in the words.
    pub fn gauge(&mut self, sig: &Signature, m: usize, moves: &[bool], inputs: &[bool]) -> Vec<Poly> {
        let n = sig.len();
        let mut out: Vec<Poly> = (0..n).map(|i| sig.var(i)).collect();
        let mut allowed = vec![false; n];
        for (a, &ok) in inputs.iter().enumerate() {
            allowed[m + a] = ok;
        }
        let caps = vec![None; n];
        for (bidx, &mv) in moves.iter().enumerate() {
            if !mv {
                continue;
            }
            let v = m + bidx;
            let deg = sig.vars()[v].degree;
            let words = sig.monomials_of_degree(deg, &allowed, &caps).expect("finite words");
            for w in words {
                let len: u32 = w[m..].iter().map(|&e| e as u32).sum();
                if len < 2 || !self.coin(0.5) {
                    continue;
                }
                let c = if m == 0 { sig.constant(self.small()) } else { lift(&self.base_poly(m, 1, m), n - m) };
                let wp = Poly::monomial(w, q(1));
                out[v].add_assign(&sig.mul(&c, &wp));
            }
        }
        out
    }

    /// Random acyclic linear fibration: the source fibre is the target fibre
    /// plus contractible pairs, twisted by a gauge fixing the target
    /// coordinates; the morphism is the projection.
    pub fn acyclic_fibration(&mut self, target_shape: &BundleShape, pairs: &[usize]) -> LinftyMorphism {
        let target = self.bundle(target_shape);
        let base = target_shape.base.clone();
        let m = base.dim();
        let mut items = target.generators();
        for (k, &n) in pairs.iter().enumerate() {
            for i in 0..n {
                items.push(((k + 1) as i32, format!("c{}_{}", k + 1, i)));
                items.push(((k + 2) as i32, format!("d{}_{}", k + 2, i)));
            }
        }
        let fibre = GradedSpace::new(items);
        let gens = fibre.basis();
        let r = gens.len();
        let tgens = target.generators();
        let tpos: Vec<usize> = tgens.iter().map(|g| gens.iter().position(|h| h == g).unwrap()).collect();
        let sig_src = CurvedBundle::new(base.clone(), fibre.clone(), vec![]).unwrap().coord_sig();
        // Q0: target structure on its coordinates, identity pairs on the rest
        let tm = target.manifold();
        let mut images: Vec<Poly> = (0..m).map(|i| sig_src.var(i)).collect();
        images.extend(tpos.iter().map(|&p| sig_src.var(m + p)));
        let mut q0 = vec![Poly::zero(); m + r];
        for (t, &p) in tpos.iter().enumerate() {
            q0[m + p] = tm.sig.subst(&tm.q[m + t], &images, &sig_src);
        }
        for (k, &n) in pairs.iter().enumerate() {
            for i in 0..n {
                let lo = gens.iter().position(|g| g.1 == format!("c{}_{}", k + 1, i)).unwrap();
                let hi = gens.iter().position(|g| g.1 == format!("d{}_{}", k + 2, i)).unwrap();
                // λ_1(c) = d, i.e. Q(ξ_d) = (-1)^k ξ_c with k = deg c
                let sgn = if (k + 1) % 2 == 1 { q(-1) } else { q(1) };
                q0[m + hi] = sig_src.var(m + lo).scale(&sgn);
            }
        }
        let mut moves = vec![true; r];
        for &p in &tpos {
            moves[p] = false;
        }
        let gauge = self.gauge(&sig_src, m, &moves, &vec![true; r]);
        let q = conjugate(&sig_src, m, &q0, &gauge);
        let source = CurvedBundle::from_q(base, fibre, &q[m..]).expect("gauge transform");
        let bsig = source.base_sig();
        let mut lin = Taylor::new();
        for (t, &p) in tpos.iter().enumerate() {
            lin.entry(vec![p]).or_default().insert(t, bsig.one());
        }
        let base_map = (0..m).map(|i| bsig.var(i)).collect();
        LinftyMorphism::new(Arc::new(source), Arc::new(target), base_map, vec![Taylor::new(), lin]).expect("projection")
    }

    /// Perturbs one coefficient of a bundle in a degree-compatible slot.
    pub fn mutate(&mut self, b: &CurvedBundle) -> CurvedBundle {
        let degs = b.fibre_degrees();
        let r = degs.len();
        let m = b.base.dim();
        let top = b.amplitude();
        let mut slots: Vec<(usize, Vec<usize>, usize)> = Vec::new();
        for t in 0..r {
            if degs[t] == 1 {
                slots.push((0, vec![], t));
            }
        }
        for n in 1..(top.max(1) as usize) {
            let mut idx = Vec::new();
            multi_indices(&degs, n, 0, &mut idx, &mut |i: &[usize]| {
                let s: i32 = i.iter().map(|&a| degs[a]).sum();
                for t in 0..r {
                    if degs[t] == s + 1 {
                        slots.push((n, i.to_vec(), t));
                    }
                }
            });
        }
        let mut out = b.clone();
        if slots.is_empty() {
            return out;
        }
        let (n, idx, t) = slots.choose(&mut self.rng).unwrap().clone();
        while out.lambda.len() <= n {
            out.lambda.push(Taylor::new());
        }
        let c = if m == 0 { crate::linfty::base_signature(0).constant(self.small()) } else { self.base_poly(m, 1, m) };
        let e = out.lambda[n].entry(idx).or_default().entry(t).or_default();
        e.add_assign(&c);
        out.lambda[n].retain(|_, img| {
            img.retain(|_, p| !p.is_zero());
            !img.is_empty()
        });
        out
    }
}

/// Enumerates sorted multi-indices of length `n` (odd entries not repeated).
pub fn multi_indices(degs: &[i32], n: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if cur.len() == n {
        f(cur);
        return;
    }
    for a in start..degs.len() {
        if cur.last() == Some(&a) && degs[a] % 2 != 0 {
            continue;
        }
        cur.push(a);
        multi_indices(degs, n, a, cur, f);
        cur.pop();
    }
}

/// Inverse of an algebra automorphism fixing the base coordinates and
/// perturbing fibre coordinates by longer words.
pub fn gauge_inverse(sig: &Signature, m: usize, gauge: &[Poly]) -> Vec<Poly> {
    let n = sig.len();
    let mut inv: Vec<Poly> = (0..n).map(|i| sig.var(i)).collect();
    for _ in 0..=n + 1 {
        let next: Vec<Poly> = (0..n)
            .map(|v| {
                if v < m {
                    return sig.var(v);
                }
                let extra = gauge[v].minus(&sig.var(v));
                sig.var(v).minus(&sig.subst(&extra, &inv, sig))
            })
            .collect();
        if next == inv {
            break;
        }
        inv = next;
    }
    inv
}

/// Values on generators of `G ∘ Q ∘ G^-1`.
pub fn conjugate(sig: &Signature, m: usize, q: &[Poly], gauge: &[Poly]) -> Vec<Poly> {
    let inv = gauge_inverse(sig, m, gauge);
    (0..sig.len()).map(|v| sig.subst(&sig.apply(q, &inv[v]), gauge, sig)).collect()
}

/// Exact inverse of a square invertible matrix.
pub fn inverse(a: &Matrix) -> Matrix {
    let n = a.nrows;
    let cols: Vec<Vec<Q>> = (0..n)
        .map(|j| {
            let mut e = vec![Q::zero(); n];
            e[j] = q(1);
            a.solve(&e).expect("invertible matrix")
        })
        .collect();
    Matrix::from_columns(n, &cols)
}
