//! Free DG modules over the function algebra of a DG manifold.
//!
//! A module is presented by a homogeneous frame `f_k` and the values
//! `D(f_k) = Σ_l n_lk f_l`, extended by `D(c f) = Q(c) f + (-1)^|c| c D(f)`.
//! Elements are coefficient vectors on the frame.  Over a point base every
//! degree is finite dimensional and the module is a `Complex`.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use num_traits::{One, Zero};

use crate::graded::{ChainMap, Complex, GResult, GradedError};
use crate::linalg::Matrix;
use crate::manifold::{koszul_twist, DgManifold};
use crate::poly::{Mono, Poly};
use crate::scalar::Q;

pub type Element = Vec<Poly>;

/// Outcome of solving `D x = y`.
#[derive(Debug, Clone, PartialEq)]
pub enum Preimage {
    Found(Element),
    /// No solution among `searched` candidates: the rank of `D` on them is
    /// smaller than the rank with `y` adjoined.
    Obstructed { searched: usize, rank: usize, augmented_rank: usize },
}

/// Basis of one degree: pairs (frame index, function monomial).
#[derive(Debug, Clone)]
pub struct ModBasis {
    pub items: Vec<(usize, Mono)>,
    pub index: HashMap<(usize, Mono), usize>,
}

impl ModBasis {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug)]
pub struct FreeModule {
    pub mfd: Arc<DgManifold>,
    pub labels: Vec<String>,
    pub degrees: Vec<i32>,
    /// `diff[k]` holds the coefficients of `D(f_k)`.
    pub diff: Vec<BTreeMap<usize, Poly>>,
    bases: Mutex<HashMap<i32, Arc<ModBasis>>>,
    mats: Mutex<HashMap<i32, Matrix>>,
}

impl FreeModule {
    pub fn new(
        mfd: Arc<DgManifold>,
        labels: Vec<String>,
        degrees: Vec<i32>,
        diff: Vec<BTreeMap<usize, Poly>>,
    ) -> FreeModule {
        assert_eq!(labels.len(), degrees.len());
        assert_eq!(labels.len(), diff.len());
        let diff = diff
            .into_iter()
            .map(|mut m| {
                m.retain(|_, p| !p.is_zero());
                m
            })
            .collect();
        FreeModule { mfd, labels, degrees, diff, bases: Mutex::new(HashMap::new()), mats: Mutex::new(HashMap::new()) }
    }

    /// The function algebra itself, as a rank-one module.
    pub fn functions(mfd: Arc<DgManifold>) -> FreeModule {
        FreeModule::new(mfd, vec!["1".into()], vec![0], vec![BTreeMap::new()])
    }

    pub fn rank(&self) -> usize {
        self.labels.len()
    }

    pub fn zero_element(&self) -> Element {
        vec![Poly::zero(); self.rank()]
    }

    pub fn unit(&self, k: usize) -> Element {
        let mut e = self.zero_element();
        e[k] = self.mfd.sig.one();
        e
    }

    pub fn is_zero(x: &Element) -> bool {
        x.iter().all(|p| p.is_zero())
    }

    pub fn add(x: &Element, y: &Element) -> Element {
        x.iter().zip(y).map(|(a, b)| a.plus(b)).collect()
    }

    pub fn sub(x: &Element, y: &Element) -> Element {
        x.iter().zip(y).map(|(a, b)| a.minus(b)).collect()
    }

    /// `c · x`.
    pub fn mul(&self, c: &Poly, x: &Element) -> Element {
        x.iter().map(|p| self.mfd.sig.mul(c, p)).collect()
    }

    /// `D` on an arbitrary element.
    pub fn apply(&self, x: &Element) -> Element {
        let sig = &self.mfd.sig;
        let mut out = self.zero_element();
        for (k, c) in x.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            out[k].add_assign(&self.mfd.q_apply(c));
            if self.diff[k].is_empty() {
                continue;
            }
            let tc = koszul_twist(sig, c, 1);
            for (&l, n) in &self.diff[k] {
                out[l].add_assign(&sig.mul(&tc, n));
            }
        }
        out
    }

    /// First frame element with `D(D f_k) != 0`.
    pub fn square_zero_failure(&self) -> Option<usize> {
        (0..self.rank()).find(|&k| !FreeModule::is_zero(&self.apply(&self.apply(&self.unit(k)))))
    }

    /// First frame element whose `D` has the wrong degree.
    pub fn degree_failure(&self) -> Option<usize> {
        let sig = &self.mfd.sig;
        (0..self.rank()).find(|&k| {
            self.diff[k].iter().any(|(&l, p)| {
                p.terms.keys().any(|m| sig.mono_degree(m) + self.degrees[l] != self.degrees[k] + 1)
            })
        })
    }

    pub fn basis(&self, t: i32) -> GResult<Arc<ModBasis>> {
        if let Some(b) = self.bases.lock().unwrap().get(&t) {
            return Ok(b.clone());
        }
        let mut items = Vec::new();
        for (k, &d) in self.degrees.iter().enumerate() {
            for m in &self.mfd.monomials(t - d)?.monos {
                items.push((k, m.clone()));
            }
        }
        let index = items.iter().enumerate().map(|(i, it)| (it.clone(), i)).collect();
        let b = Arc::new(ModBasis { items, index });
        self.bases.lock().unwrap().insert(t, b.clone());
        Ok(b)
    }

    /// Coordinates of a homogeneous element of degree `t`.
    pub fn to_vector(&self, t: i32, x: &Element) -> GResult<Vec<Q>> {
        let b = self.basis(t)?;
        let mut v = vec![Q::zero(); b.len()];
        for (k, p) in x.iter().enumerate() {
            for (m, c) in &p.terms {
                match b.index.get(&(k, m.clone())) {
                    Some(&i) => v[i] += c,
                    None => return Err(GradedError::Shape(format!("element is not homogeneous of degree {t}"))),
                }
            }
        }
        Ok(v)
    }

    pub fn from_vector(&self, t: i32, v: &[Q]) -> GResult<Element> {
        let b = self.basis(t)?;
        let mut x = self.zero_element();
        for (i, c) in v.iter().enumerate() {
            if !c.is_zero() {
                let (k, m) = &b.items[i];
                x[*k].add_term(m.clone(), c.clone());
            }
        }
        Ok(x)
    }

    pub fn basis_element(&self, t: i32, i: usize) -> GResult<Element> {
        let b = self.basis(t)?;
        let (k, m) = &b.items[i];
        let mut x = self.zero_element();
        x[*k] = Poly::monomial(m.clone(), Q::one());
        Ok(x)
    }

    /// Matrix of a degree-`s` operator from degree `t` of `self` to degree
    /// `t + s` of `target`.
    pub fn matrix_of(
        &self,
        target: &FreeModule,
        t: i32,
        s: i32,
        op: &dyn Fn(&Element) -> Element,
    ) -> GResult<Matrix> {
        let src = self.basis(t)?;
        let tgt = target.basis(t + s)?;
        let mut m = Matrix::zeros(tgt.len(), src.len());
        for j in 0..src.len() {
            let img = op(&self.basis_element(t, j)?);
            for (k, p) in img.iter().enumerate() {
                for (mono, c) in &p.terms {
                    match tgt.index.get(&(k, mono.clone())) {
                        Some(&i) => m.add_to(i, j, c),
                        None => return Err(GradedError::Shape("operator image has the wrong degree".into())),
                    }
                }
            }
        }
        Ok(m)
    }

    /// Degree-`t` elements spanning the search space of `preimage`: every
    /// monomial over a point, monomials with base exponents at most `base_cap`
    /// otherwise.
    fn search_basis(&self, t: i32, base_cap: u32) -> GResult<Vec<(usize, Mono)>> {
        if self.mfd.is_point() {
            return Ok(self.basis(t)?.items.clone());
        }
        let sig = &self.mfd.sig;
        let n = sig.len();
        let allowed = vec![true; n];
        let caps: Vec<Option<u32>> = (0..n).map(|v| (v < self.mfd.nbase).then_some(base_cap)).collect();
        let mut items = Vec::new();
        for (k, &d) in self.degrees.iter().enumerate() {
            if t - d > 0 {
                continue;
            }
            let monos = sig
                .monomials_of_degree(t - d, &allowed, &caps)
                .map_err(|_| GradedError::NotMaterializable(t - d))?;
            items.extend(monos.into_iter().map(|m| (k, m)));
        }
        Ok(items)
    }

    /// Solves `D x = y` for `x` of degree `t`.  Over a base with coordinates
    /// the search is limited to base exponents at most `base_cap`, so a
    /// negative answer there only covers that range.
    pub fn preimage(&self, t: i32, y: &Element, base_cap: u32) -> GResult<Preimage> {
        let items = self.search_basis(t, base_cap)?;
        let mut rows: HashMap<(usize, Mono), usize> = HashMap::new();
        let mut entries: Vec<Vec<(usize, Q)>> = Vec::new();
        let row_of = |key: (usize, Mono), rows: &mut HashMap<(usize, Mono), usize>| {
            let n = rows.len();
            *rows.entry(key).or_insert(n)
        };
        for (k, m) in &items {
            let mut x = self.zero_element();
            x[*k] = Poly::monomial(m.clone(), Q::one());
            let mut col = Vec::new();
            for (l, p) in self.apply(&x).iter().enumerate() {
                for (mono, c) in &p.terms {
                    col.push((row_of((l, mono.clone()), &mut rows), c.clone()));
                }
            }
            entries.push(col);
        }
        let mut rhs = Vec::new();
        for (l, p) in y.iter().enumerate() {
            for (mono, c) in &p.terms {
                rhs.push((row_of((l, mono.clone()), &mut rows), c.clone()));
            }
        }
        let mut mat = Matrix::zeros(rows.len(), items.len());
        for (j, col) in entries.iter().enumerate() {
            for (i, c) in col {
                mat.add_to(*i, j, c);
            }
        }
        let mut v = vec![Q::zero(); rows.len()];
        for (i, c) in rhs {
            v[i] += c;
        }
        if let Some(sol) = mat.solve(&v) {
            if mat.apply(&sol) == v {
                let mut x = self.zero_element();
                for (j, c) in sol.into_iter().enumerate() {
                    if !c.is_zero() {
                        let (k, m) = &items[j];
                        x[*k].add_term(m.clone(), c);
                    }
                }
                return Ok(Preimage::Found(x));
            }
        }
        let col = items.len();
        let mut aug = Matrix::zeros(rows.len(), col + 1);
        aug.add_block(0, 0, &mat);
        for (i, c) in v.iter().enumerate() {
            if !c.is_zero() {
                aug.set(i, col, c.clone());
            }
        }
        Ok(Preimage::Obstructed { searched: col, rank: mat.rank(), augmented_rank: aug.rank() })
    }

    /// Restriction to the fibre over a base point; `fibre` must be
    /// `self.mfd.fibre_at(point)`.
    pub fn fibre_at(&self, fibre: Arc<DgManifold>, point: &[Q]) -> FreeModule {
        let sig = &self.mfd.sig;
        let diff = self
            .diff
            .iter()
            .map(|m| m.iter().map(|(&l, p)| (l, sig.restrict_prefix(p, point))).collect())
            .collect();
        FreeModule::new(fibre, self.labels.clone(), self.degrees.clone(), diff)
    }

    /// Submodule spanned by constant combinations of the frame (columns of
    /// `cols`), checking that `D` preserves it.
    pub fn submodule(
        self: &Arc<Self>,
        cols: &[Vec<Q>],
        labels: Vec<String>,
    ) -> Result<(FreeModule, Matrix), String> {
        let n = self.rank();
        let r = cols.len();
        let incl = Matrix::from_columns(n, cols);
        let mut degrees = Vec::new();
        for (s, c) in cols.iter().enumerate() {
            let degs: Vec<i32> = c.iter().enumerate().filter(|(_, x)| !x.is_zero()).map(|(k, _)| self.degrees[k]).collect();
            match degs.first() {
                Some(&d) if degs.iter().all(|&e| e == d) => degrees.push(d),
                _ => return Err(format!("column {s} is zero or inhomogeneous")),
            }
        }
        // left inverse from a set of pivot rows
        let (_, pivots) = incl.transpose().rref();
        if pivots.len() != r {
            return Err("columns are linearly dependent".into());
        }
        let square = incl.sub_matrix(&pivots, &(0..r).collect::<Vec<_>>());
        let inv = crate::gen::inverse(&square);
        let sig = &self.mfd.sig;
        let mut diff = Vec::new();
        for (s, c) in cols.iter().enumerate() {
            let mut x = self.zero_element();
            for (k, v) in c.iter().enumerate() {
                if !v.is_zero() {
                    x[k] = sig.constant(v.clone());
                }
            }
            let dx = self.apply(&x);
            let mut coeffs: BTreeMap<usize, Poly> = BTreeMap::new();
            for a in 0..r {
                let mut p = Poly::zero();
                for (i, &row) in pivots.iter().enumerate() {
                    let w = inv.get(a, i);
                    if !w.is_zero() {
                        p.add_scaled(&dx[row], &w);
                    }
                }
                coeffs.insert(a, p);
            }
            // membership: incl * coeffs == dx
            for k in 0..n {
                let mut p = Poly::zero();
                for (a, ca) in &coeffs {
                    let w = incl.get(k, *a);
                    if !w.is_zero() {
                        p.add_scaled(ca, &w);
                    }
                }
                if p != dx[k] {
                    return Err(format!("D({}) leaves the submodule in component {}", labels[s], self.labels[k]));
                }
            }
            diff.push(coeffs);
        }
        Ok((FreeModule::new(self.mfd.clone(), labels, degrees, diff), incl))
    }
}

impl Complex for FreeModule {
    fn dim(&self, t: i32) -> GResult<usize> {
        Ok(self.basis(t)?.len())
    }

    fn diff(&self, t: i32) -> GResult<Matrix> {
        if let Some(m) = self.mats.lock().unwrap().get(&t) {
            return Ok(m.clone());
        }
        let m = self.matrix_of(self, t, 1, &|x| self.apply(x))?;
        self.mats.lock().unwrap().insert(t, m.clone());
        Ok(m)
    }
}

/// Module map given by images of the source frame.  Function-linear
/// (`F(c x) = (-1)^(s|c|) c F(x)`) unless `ring_map` is set, in which case
/// it is semilinear along that algebra map: `F(c x) = (-1)^(s|c|) Ψ^*(c) F(x)`.
#[derive(Debug, Clone)]
pub struct ModuleMap {
    pub source: Arc<FreeModule>,
    pub target: Arc<FreeModule>,
    pub degree: i32,
    pub ring_map: Option<Vec<Poly>>,
    pub images: Vec<Element>,
}

impl ModuleMap {
    pub fn new(
        source: Arc<FreeModule>,
        target: Arc<FreeModule>,
        degree: i32,
        ring_map: Option<Vec<Poly>>,
        images: Vec<Element>,
    ) -> ModuleMap {
        assert_eq!(images.len(), source.rank());
        ModuleMap { source, target, degree, ring_map, images }
    }

    pub fn identity(m: Arc<FreeModule>) -> ModuleMap {
        let images = (0..m.rank()).map(|k| m.unit(k)).collect();
        ModuleMap::new(m.clone(), m, 0, None, images)
    }

    pub fn apply(&self, x: &Element) -> Element {
        let tsig = &self.target.mfd.sig;
        let mut out = self.target.zero_element();
        for (k, c) in x.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let c = match &self.ring_map {
                None => c.clone(),
                Some(imgs) => self.source.mfd.sig.subst(c, imgs, tsig),
            };
            let c = koszul_twist(tsig, &c, self.degree);
            for (l, p) in self.images[k].iter().enumerate() {
                if !p.is_zero() {
                    out[l].add_assign(&tsig.mul(&c, p));
                }
            }
        }
        out
    }

    /// First frame element where `D F - (-1)^s F D` fails to vanish.
    pub fn chain_failure(&self) -> Option<(usize, Element)> {
        for k in 0..self.source.rank() {
            let e = self.source.unit(k);
            let a = self.target.apply(&self.apply(&e));
            let mut b = self.apply(&self.source.apply(&e));
            if self.degree.rem_euclid(2) == 1 {
                b = b.iter().map(|p| p.neg()).collect();
            }
            let d = FreeModule::sub(&a, &b);
            if !FreeModule::is_zero(&d) {
                return Some((k, d));
            }
        }
        None
    }

    pub fn compose(&self, other: &ModuleMap) -> ModuleMap {
        // self ∘ other; the ring map of the composite is the composite ring map
        let ring_map = match (&other.ring_map, &self.ring_map) {
            (None, None) => None,
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(b.clone()),
            (Some(a), Some(b)) => {
                let mid = &other.target.mfd.sig;
                Some(a.iter().map(|p| mid.subst(p, b, &self.target.mfd.sig)).collect())
            }
        };
        let images = other.images.iter().map(|x| self.apply(x)).collect();
        ModuleMap::new(other.source.clone(), self.target.clone(), self.degree + other.degree, ring_map, images)
    }

    pub fn matrix_at(&self, t: i32) -> GResult<Matrix> {
        self.source.matrix_of(&self.target, t, self.degree, &|x| self.apply(x))
    }
}

impl ChainMap for ModuleMap {
    fn at(&self, t: i32) -> GResult<Matrix> {
        self.matrix_at(t)
    }
}

/// Multi-indices of length `len` over `0..n`, lexicographic.
pub fn tuples(n: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::new();
        for t in &out {
            for i in 0..n {
                let mut u = t.clone();
                u.push(i);
                next.push(u);
            }
        }
        out = next;
    }
    out
}

/// Index of a tuple in `tuples(n, len)`.
pub fn tuple_index(n: usize, t: &[usize]) -> usize {
    t.iter().fold(0, |acc, &i| acc * n + i)
}

pub fn tensor_label(outs: &[&str], ins: &[&str]) -> String {
    format!("{}|{}", outs.join("*"), ins.join("*"))
}

/// `Hom(I_1 ⊗ ... ⊗ I_q, O_1 ⊗ ... ⊗ O_p)` over a common manifold, framed by
/// `E_(o,i)` with `E_(o,i)(f_i') = δ_(i,i') f_o`.  The differential is
/// `(L F)(X..) = D(F(X..)) - Σ_s (-1)^(|F| + Σ_(l<s)|X_l|) F(.., D X_s, ..)`.
/// Inputs move past coefficients with `E(g Y, ..) = (-1)^(|E||g|) g E(Y, ..)`.
pub fn tensor_module(outs: &[Arc<FreeModule>], ins: &[Arc<FreeModule>]) -> FreeModule {
    let mfd = outs.first().or(ins.first()).expect("at least one factor").mfd.clone();
    let sig = &mfd.sig;
    let out_idx = product_indices(outs);
    let in_idx = product_indices(ins);
    let ni = in_idx.len();
    let pos = |o: usize, i: usize| o * ni + i;
    let mut labels = Vec::new();
    let mut degrees = Vec::new();
    for o in &out_idx {
        for i in &in_idx {
            let ol: Vec<&str> = o.iter().enumerate().map(|(s, &k)| outs[s].labels[k].as_str()).collect();
            let il: Vec<&str> = i.iter().enumerate().map(|(s, &k)| ins[s].labels[k].as_str()).collect();
            labels.push(tensor_label(&ol, &il));
            let d: i32 = o.iter().enumerate().map(|(s, &k)| outs[s].degrees[k]).sum::<i32>()
                - i.iter().enumerate().map(|(s, &k)| ins[s].degrees[k]).sum::<i32>();
            degrees.push(d);
        }
    }
    let out_pos: HashMap<Vec<usize>, usize> = out_idx.iter().enumerate().map(|(a, v)| (v.clone(), a)).collect();
    let in_pos: HashMap<Vec<usize>, usize> = in_idx.iter().enumerate().map(|(a, v)| (v.clone(), a)).collect();
    let mut diff = vec![BTreeMap::new(); labels.len()];
    for (oa, o) in out_idx.iter().enumerate() {
        for (ia, i) in in_idx.iter().enumerate() {
            let me = pos(oa, ia);
            let e_deg = degrees[me];
            let entry: &mut BTreeMap<usize, Poly> = &mut diff[me];
            let mut prefix = 0i32;
            for (s, &k) in o.iter().enumerate() {
                for (&l, n) in &outs[s].diff[k] {
                    let mut o2 = o.clone();
                    o2[s] = l;
                    let mut c = koszul_twist(sig, n, prefix);
                    if prefix.rem_euclid(2) == 1 {
                        c = c.neg();
                    }
                    entry.entry(pos(out_pos[&o2], ia)).or_default().add_assign(&c);
                }
                prefix += outs[s].degrees[k];
            }
            let mut prefix = 0i32;
            for (s, &k) in i.iter().enumerate() {
                let m = &ins[s];
                for j in 0..m.rank() {
                    if let Some(n) = m.diff[j].get(&k) {
                        let x = e_deg + prefix;
                        let mut c = koszul_twist(sig, n, x);
                        if x.rem_euclid(2) == 0 {
                            c = c.neg();
                        }
                        let mut i2 = i.clone();
                        i2[s] = j;
                        entry.entry(pos(oa, in_pos[&i2])).or_default().add_assign(&c);
                    }
                }
                prefix += m.degrees[k];
            }
        }
    }
    FreeModule::new(mfd, labels, degrees, diff)
}

fn product_indices(factors: &[Arc<FreeModule>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for f in factors {
        let mut next = Vec::new();
        for t in &out {
            for k in 0..f.rank() {
                let mut u = t.clone();
                u.push(k);
                next.push(u);
            }
        }
        out = next;
    }
    out
}

/// Positions of the `E_(o,i)` frame in `tensor_module(outs, ins)`.
pub fn tensor_position(outs: &[Arc<FreeModule>], ins: &[Arc<FreeModule>], o: &[usize], i: &[usize]) -> usize {
    let flat = |fs: &[Arc<FreeModule>], t: &[usize]| t.iter().zip(fs).fold(0, |acc, (&k, f)| acc * f.rank() + k);
    let ni: usize = ins.iter().map(|f| f.rank()).product();
    flat(outs, o) * ni + flat(ins, i)
}
