//! Bundles of positively graded curved L-infinity[1] algebras and their
//! morphisms.
//!
//! A bundle is stored by its Taylor coefficients: `lambda[n]` maps a sorted
//! multi-index `I` of fibre generators (odd ones never repeated) to the image
//! `λ_n(e_I)` as a map target-index -> base polynomial.  The homological
//! vector field on the coordinate algebra is
//!
//! ```text
//! Q(x_i) = 0
//! Q(ξ_b) = Σ_I 1/I! · ε(I) · (-1)^(Σ_{a∈I} k_a) · ξ^I · λ(e_I)^b
//! ```
//!
//! where `ξ^I` is the normal-form monomial, `I!` the product of multiplicity
//! factorials and `ε(I) = (-1)^(Σ_j k_(a_j) Σ_(i<j) k_(a_i))` the sign of
//! moving each `ξ` to the left of the `e`s.  In particular `λ_1 = [1]` from
//! degree 1 to degree 2 gives `Q(ξ_2) = -ξ_1`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_traits::{One, Zero};

use crate::graded::{cohomology_window, Cone, GradedError, GradedMap, GradedSpace, FiniteComplex};
use crate::linalg::Matrix;
use crate::manifold::DgManifold;
use crate::poly::{Mono, Poly, Signature, Var};
use crate::scalar::{factorial, fmt_q, Q};

/// Sorted multi-index -> (target index -> coefficient).
pub type Taylor = BTreeMap<Vec<usize>, BTreeMap<usize, Poly>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Base {
    Point,
    Affine(usize),
}

impl Base {
    pub fn dim(&self) -> usize {
        match self {
            Base::Point => 0,
            Base::Affine(m) => *m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BundleError {
    #[error("malformed data: {0}")]
    Shape(String),
    #[error("not a classical point: {0}")]
    NotClassical(String),
    #[error("invalid structure: relation {relation} fails at {entry}")]
    Relation { relation: String, entry: String },
    #[error("correspondence: {0}")]
    Correspondence(String),
    #[error(transparent)]
    Graded(#[from] GradedError),
}

pub type BResult<T> = Result<T, BundleError>;

pub fn base_var_name(i: usize) -> String {
    format!("x{}", i + 1)
}

pub fn fibre_var_name(label: &str) -> String {
    format!("xi_{label}")
}

pub fn base_signature(m: usize) -> Signature {
    Signature::new((0..m).map(|i| Var::new(base_var_name(i), 0, 0)).collect())
}

/// Pads base monomials with zero exponents for `extra` further generators.
pub fn lift(p: &Poly, extra: usize) -> Poly {
    Poly {
        terms: p
            .terms
            .iter()
            .map(|(m, c)| {
                let mut nm = m.clone();
                nm.extend(std::iter::repeat(0).take(extra));
                (nm, c.clone())
            })
            .collect(),
    }
}

/// Product of multiplicity factorials of a sorted multi-index.
pub fn multi_factorial(idx: &[usize]) -> Q {
    let mut r = Q::one();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && idx[j] == idx[i] {
            j += 1;
        }
        r *= factorial((j - i) as u32);
        i = j;
    }
    r
}

/// Sign of moving `ξ_(a_1) ... ξ_(a_n)` to the left of `e_(a_1) ... e_(a_n)`.
pub fn interleave_sign(idx: &[usize], degs: &[i32]) -> bool {
    let mut acc = 0i64;
    let mut prefix = 0i64;
    for &a in idx {
        let k = degs[a] as i64;
        acc += k * prefix;
        prefix += k;
    }
    acc.rem_euclid(2) == 1
}

/// Normal-form fibre monomial for a sorted multi-index (base part zero).
fn fibre_mono(idx: &[usize], nbase: usize, nfib: usize) -> Mono {
    let mut m = vec![0u8; nbase + nfib];
    for &a in idx {
        m[nbase + a] += 1;
    }
    m
}

/// Reads a monomial's fibre part back as a sorted multi-index.
fn mono_index(m: &Mono, nbase: usize) -> Vec<usize> {
    let mut idx = Vec::new();
    for (a, &e) in m[nbase..].iter().enumerate() {
        for _ in 0..e {
            idx.push(a);
        }
    }
    idx
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CurvedBundle {
    pub base: Base,
    pub fibre: GradedSpace,
    pub lambda: Vec<Taylor>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationCheck {
    pub name: String,
    pub inputs: usize,
    pub passed: bool,
    /// First failing entry: target generator, fibre monomial, coefficient.
    pub offending: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub bookkeeping: Vec<String>,
    pub relations: Vec<RelationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.bookkeeping.is_empty() && self.relations.iter().all(|r| r.passed)
    }

    pub fn failing(&self) -> Vec<&RelationCheck> {
        self.relations.iter().filter(|r| !r.passed).collect()
    }
}

pub fn relation_name(inputs: usize) -> String {
    match inputs {
        0 => "λ₁(λ₀)=0".to_string(),
        1 => "λ₂(λ₀,x)+λ₁²(x)=0".to_string(),
        n => format!("Σλλ=0 on {n} inputs"),
    }
}

pub fn morphism_relation_name(inputs: usize) -> String {
    match inputs {
        0 => "φ₁(λ₀)=μ₀".to_string(),
        1 => "φ₂(λ₀,x)+φ₁(λ₁(x))=μ₁(φ₁(x))".to_string(),
        n => format!("morphism relation on {n} inputs"),
    }
}

impl CurvedBundle {
    /// Checks index shapes; degree bookkeeping is left to `validate`.
    pub fn new(base: Base, fibre: GradedSpace, lambda: Vec<Taylor>) -> BResult<CurvedBundle> {
        let b = CurvedBundle { base, fibre, lambda };
        let degs = b.fibre_degrees();
        if let Some(d) = degs.iter().find(|&&d| d < 1) {
            return Err(BundleError::Shape(format!("fibre has a generator in degree {d} < 1")));
        }
        for (n, tab) in b.lambda.iter().enumerate() {
            for (idx, img) in tab {
                check_index(idx, n, &degs)?;
                if let Some(t) = img.keys().find(|&&t| t >= degs.len()) {
                    return Err(BundleError::Shape(format!("target index {t} out of range")));
                }
                for p in img.values() {
                    check_base_poly(p, b.base.dim())?;
                }
            }
        }
        Ok(b)
    }

    pub fn amplitude(&self) -> i32 {
        self.fibre.degrees().last().copied().unwrap_or(0)
    }

    pub fn rank(&self) -> usize {
        self.fibre.total_dim()
    }

    /// Fibre generators in canonical order (degree, label).
    pub fn generators(&self) -> Vec<(i32, String)> {
        self.fibre.basis()
    }

    pub fn fibre_degrees(&self) -> Vec<i32> {
        self.generators().iter().map(|g| g.0).collect()
    }

    pub fn base_sig(&self) -> Signature {
        base_signature(self.base.dim())
    }

    pub fn coord_sig(&self) -> Signature {
        let mut vars: Vec<Var> = (0..self.base.dim()).map(|i| Var::new(base_var_name(i), 0, 0)).collect();
        for (d, l) in self.generators() {
            vars.push(Var::new(fibre_var_name(&l), 0, -d));
        }
        Signature::new(vars)
    }

    pub fn lambda_entry(&self, n: usize, idx: &[usize], target: usize) -> Poly {
        self.lambda
            .get(n)
            .and_then(|t| t.get(idx))
            .and_then(|m| m.get(&target))
            .cloned()
            .unwrap_or_default()
    }

    /// `Q(ξ_b)` for each fibre generator.
    pub fn q_fibre(&self) -> Vec<Poly> {
        let degs = self.fibre_degrees();
        let (m, r) = (self.base.dim(), degs.len());
        let mut out = vec![Poly::zero(); r];
        for tab in &self.lambda {
            for (idx, img) in tab {
                let ksum: i64 = idx.iter().map(|&a| degs[a] as i64).sum();
                let neg = interleave_sign(idx, &degs) ^ (ksum.rem_euclid(2) == 1);
                let mut c = Q::one() / multi_factorial(idx);
                if neg {
                    c = -c;
                }
                let mono = fibre_mono(idx, m, r);
                for (&t, p) in img {
                    for (bm, bc) in &p.terms {
                        let mut full = mono.clone();
                        for (i, &e) in bm.iter().enumerate() {
                            full[i] += e;
                        }
                        out[t].add_term(full, bc * &c);
                    }
                }
            }
        }
        out
    }

    pub fn manifold(&self) -> DgManifold {
        let sig = self.coord_sig();
        let m = self.base.dim();
        let mut q = vec![Poly::zero(); m];
        q.extend(self.q_fibre());
        DgManifold::new(sig, m, q)
    }

    /// Reads Taylor coefficients back from the values of `Q` on the fibre
    /// generators (inverse of `q_fibre`).
    pub fn from_q(base: Base, fibre: GradedSpace, q_fibre: &[Poly]) -> BResult<CurvedBundle> {
        let degs: Vec<i32> = fibre.basis().iter().map(|g| g.0).collect();
        let m = base.dim();
        let mut lambda: Vec<Taylor> = Vec::new();
        for (t, p) in q_fibre.iter().enumerate() {
            for (mono, c) in &p.terms {
                let idx = mono_index(mono, m);
                let ksum: i64 = idx.iter().map(|&a| degs[a] as i64).sum();
                let neg = interleave_sign(&idx, &degs) ^ (ksum.rem_euclid(2) == 1);
                let mut v = c * multi_factorial(&idx);
                if neg {
                    v = -v;
                }
                let n = idx.len();
                while lambda.len() <= n {
                    lambda.push(Taylor::new());
                }
                let bm: Mono = mono[..m].to_vec();
                lambda[n].entry(idx).or_default().entry(t).or_default().add_term(bm, v);
            }
        }
        for tab in lambda.iter_mut() {
            for img in tab.values_mut() {
                img.retain(|_, p| !p.is_zero());
            }
            tab.retain(|_, img| !img.is_empty());
        }
        CurvedBundle::new(base, fibre, lambda)
    }

    /// Degree bookkeeping and every relation of `λ∘λ = 0`.
    pub fn validate(&self) -> ValidationReport {
        let degs = self.fibre_degrees();
        let labels: Vec<String> = self.generators().into_iter().map(|g| g.1).collect();
        let mut bookkeeping = Vec::new();
        let b = self.amplitude();
        for (n, tab) in self.lambda.iter().enumerate() {
            for (idx, img) in tab {
                let src: i32 = idx.iter().map(|&a| degs[a]).sum();
                for (&t, p) in img {
                    if p.is_zero() {
                        continue;
                    }
                    if degs[t] != src + 1 {
                        bookkeeping.push(format!(
                            "λ{n}({}) has a component on {} of degree {} instead of {}",
                            fmt_index(idx, &labels),
                            labels[t],
                            degs[t],
                            src + 1
                        ));
                    }
                }
                if n as i32 >= b.max(1) && img.values().any(|p| !p.is_zero()) {
                    bookkeeping.push(format!("λ{n} must vanish for n ≥ {}", b.max(1)));
                }
            }
        }
        let mut relations = Vec::new();
        if bookkeeping.is_empty() {
            let mfd = self.manifold();
            let sq = mfd.q_squared();
            let m = self.base.dim();
            let mut fails: BTreeMap<usize, String> = BTreeMap::new();
            for (t, p) in sq.iter().enumerate().skip(m) {
                for (mono, c) in &p.terms {
                    let n = mono_index(mono, m).len();
                    fails.entry(n).or_insert_with(|| {
                        format!("Q²({}) coefficient of {} is {}", mfd.sig.vars()[t].name, mfd.sig.fmt_mono(mono), fmt_q(c))
                    });
                }
            }
            let top = (b - 2).max(-1);
            let maxn = fails.keys().last().map(|&n| n as i32).unwrap_or(-1).max(top);
            for n in 0..=maxn {
                let n = n as usize;
                let off = fails.get(&n).cloned();
                relations.push(RelationCheck { name: relation_name(n), inputs: n, passed: off.is_none(), offending: off });
            }
        }
        ValidationReport { bookkeeping, relations }
    }

    pub fn check(&self) -> BResult<()> {
        let r = self.validate();
        if let Some(e) = r.bookkeeping.first() {
            return Err(BundleError::Shape(e.clone()));
        }
        if let Some(f) = r.failing().first() {
            return Err(BundleError::Relation { relation: f.name.clone(), entry: f.offending.clone().unwrap_or_default() });
        }
        Ok(())
    }

    /// `λ_0` evaluated at a base point.
    pub fn curvature_at(&self, p: &[Q]) -> BResult<Vec<Q>> {
        self.check_point(p)?;
        let sig = self.base_sig();
        Ok((0..self.rank()).map(|t| sig.eval(&self.lambda_entry(0, &[], t), p)).collect())
    }

    fn check_point(&self, p: &[Q]) -> BResult<()> {
        if p.len() != self.base.dim() {
            return Err(BundleError::Shape(format!("point has {} coordinates, base has {}", p.len(), self.base.dim())));
        }
        Ok(())
    }

    pub fn is_classical(&self, p: &[Q]) -> BResult<bool> {
        Ok(self.curvature_at(p)?.iter().all(|c| c.is_zero()))
    }

    /// Linear part `λ_1` at a base point, as a matrix target × source.
    pub fn linear_part_at(&self, p: &[Q]) -> Matrix {
        let sig = self.base_sig();
        let r = self.rank();
        let mut mat = Matrix::zeros(r, r);
        if let Some(tab) = self.lambda.get(1) {
            for (idx, img) in tab {
                for (&t, poly) in img {
                    mat.add_to(t, idx[0], &sig.eval(poly, p));
                }
            }
        }
        mat
    }

    /// Tangent complex `T_p M -> L^1 -> ... -> L^b` at a classical point.
    pub fn tangent_complex_at(&self, p: &[Q]) -> BResult<FiniteComplex> {
        let curv = self.curvature_at(p)?;
        if curv.iter().any(|c| !c.is_zero()) {
            let v: Vec<String> = curv.iter().map(fmt_q).collect();
            return Err(BundleError::NotClassical(format!("λ₀ = ({})", v.join(", "))));
        }
        let m = self.base.dim();
        let gens = self.generators();
        let mut items: Vec<(i32, String)> = (0..m).map(|i| (0, base_var_name(i))).collect();
        items.extend(gens.iter().cloned());
        let space = GradedSpace::new(items);
        let sig = self.base_sig();
        let lin = self.linear_part_at(p);
        let mut blocks: BTreeMap<i32, Matrix> = BTreeMap::new();
        let pos = |d: i32, l: &str| space.index_of(d, l).expect("label present");
        if m > 0 && space.dim(1) > 0 {
            let mut jac = Matrix::zeros(space.dim(1), m);
            for (t, (d, l)) in gens.iter().enumerate() {
                if *d != 1 {
                    continue;
                }
                let f = self.lambda_entry(0, &[], t);
                for i in 0..m {
                    let v = sig.eval(&sig.deriv(i, &f), p);
                    jac.add_to(pos(1, l), pos(0, &base_var_name(i)), &v);
                }
            }
            blocks.insert(0, jac);
        }
        for k in space.degrees() {
            if k < 1 || space.dim(k + 1) == 0 {
                continue;
            }
            let mut blk = Matrix::zeros(space.dim(k + 1), space.dim(k));
            for (s, (ds, ls)) in gens.iter().enumerate() {
                if *ds != k {
                    continue;
                }
                for (t, (dt, lt)) in gens.iter().enumerate() {
                    if *dt == k + 1 {
                        blk.add_to(pos(k + 1, lt), pos(k, ls), &lin.get(t, s));
                    }
                }
            }
            blocks.insert(k, blk);
        }
        let d = GradedMap::from_blocks(&space, &space, 1, blocks)?;
        let c = FiniteComplex::new(space, d)?;
        if let Some(t) = crate::graded::square_zero_failure(&c, c.window().0, c.window().1)? {
            return Err(BundleError::Relation { relation: "d²=0 on the tangent complex".into(), entry: format!("degree {t}") });
        }
        Ok(c)
    }
}

fn fmt_index(idx: &[usize], labels: &[String]) -> String {
    idx.iter().map(|&a| labels[a].as_str()).collect::<Vec<_>>().join(",")
}

fn check_index(idx: &[usize], n: usize, degs: &[i32]) -> BResult<()> {
    if idx.len() != n {
        return Err(BundleError::Shape(format!("coefficient of arity {n} has an index of length {}", idx.len())));
    }
    if idx.windows(2).any(|w| w[0] > w[1]) {
        return Err(BundleError::Shape("multi-index not sorted".into()));
    }
    if let Some(&a) = idx.iter().find(|&&a| a >= degs.len()) {
        return Err(BundleError::Shape(format!("input index {a} out of range")));
    }
    if idx.windows(2).any(|w| w[0] == w[1] && degs[w[0]].rem_euclid(2) == 1) {
        return Err(BundleError::Shape("odd generator repeated in a symmetric index".into()));
    }
    Ok(())
}

fn check_base_poly(p: &Poly, m: usize) -> BResult<()> {
    if p.terms.keys().any(|mono| mono.len() != m) {
        return Err(BundleError::Shape("coefficient is not a base polynomial".into()));
    }
    Ok(())
}

/// Morphism `(f, φ)` between bundles.  `phi[n]` has the same layout as
/// `lambda[n]`, with targets indexing the target fibre; `phi[0]` is unused.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinftyMorphism {
    pub source: Arc<CurvedBundle>,
    pub target: Arc<CurvedBundle>,
    pub base_map: Vec<Poly>,
    pub phi: Vec<Taylor>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub fibration: bool,
    pub linear: bool,
    pub weak_equivalence: bool,
    pub failures: Vec<String>,
    /// Base points at which the fibration ranks were certified.
    pub certified_points: Vec<Vec<Q>>,
    pub scope: String,
}

/// Deterministic sample set for rank certification over affine bases:
/// five points with coordinates `((7j + 3i + 1) mod 11 - 5) / (j + 1)`.
pub fn sample_points(m: usize) -> Vec<Vec<Q>> {
    (0..5i64)
        .map(|j| (0..m as i64).map(|i| Q::new(((7 * j + 3 * i + 1) % 11 - 5).into(), (j + 1).into())).collect())
        .collect()
}

impl LinftyMorphism {
    pub fn new(
        source: Arc<CurvedBundle>,
        target: Arc<CurvedBundle>,
        base_map: Vec<Poly>,
        phi: Vec<Taylor>,
    ) -> BResult<LinftyMorphism> {
        if base_map.len() != target.base.dim() {
            return Err(BundleError::Shape(format!(
                "base map has {} components, target base has dimension {}",
                base_map.len(),
                target.base.dim()
            )));
        }
        for p in &base_map {
            check_base_poly(p, source.base.dim())?;
        }
        let sd = source.fibre_degrees();
        let td = target.fibre_degrees();
        for (n, tab) in phi.iter().enumerate() {
            if n == 0 && !tab.is_empty() {
                return Err(BundleError::Shape("φ has no arity-0 component".into()));
            }
            for (idx, img) in tab {
                check_index(idx, n, &sd)?;
                let deg: i32 = idx.iter().map(|&a| sd[a]).sum();
                for (&t, p) in img {
                    if t >= td.len() {
                        return Err(BundleError::Shape(format!("target index {t} out of range")));
                    }
                    check_base_poly(p, source.base.dim())?;
                    if !p.is_zero() && td[t] != deg {
                        return Err(BundleError::Shape(format!("φ{n} entry is not of degree 0")));
                    }
                }
            }
        }
        Ok(LinftyMorphism { source, target, base_map, phi })
    }

    pub fn identity(b: Arc<CurvedBundle>) -> LinftyMorphism {
        let m = b.base.dim();
        let sig = b.base_sig();
        let base_map = (0..m).map(|i| sig.var(i)).collect();
        let mut lin = Taylor::new();
        for a in 0..b.rank() {
            lin.entry(vec![a]).or_default().insert(a, sig.one());
        }
        LinftyMorphism { source: b.clone(), target: b, base_map, phi: vec![Taylor::new(), lin] }
    }

    pub fn phi_entry(&self, n: usize, idx: &[usize], target: usize) -> Poly {
        self.phi.get(n).and_then(|t| t.get(idx)).and_then(|m| m.get(&target)).cloned().unwrap_or_default()
    }

    pub fn is_linear(&self) -> bool {
        self.phi.iter().skip(2).all(|t| t.values().all(|img| img.values().all(|p| p.is_zero())))
    }

    /// Images of the target coordinates under the pullback of functions.
    pub fn pullback_images(&self) -> Vec<Poly> {
        let src = &self.source;
        let degs = src.fibre_degrees();
        let (m, r) = (src.base.dim(), degs.len());
        let mut out: Vec<Poly> = self.base_map.iter().map(|p| lift(p, r)).collect();
        let mut fib = vec![Poly::zero(); self.target.rank()];
        for tab in &self.phi {
            for (idx, img) in tab {
                let mut c = Q::one() / multi_factorial(idx);
                if interleave_sign(idx, &degs) {
                    c = -c;
                }
                let mono = fibre_mono(idx, m, r);
                for (&t, p) in img {
                    for (bm, bc) in &p.terms {
                        let mut full = mono.clone();
                        for (i, &e) in bm.iter().enumerate() {
                            full[i] += e;
                        }
                        fib[t].add_term(full, bc * &c);
                    }
                }
            }
        }
        out.extend(fib);
        out
    }

    /// Relations `Q Ψ^* = Ψ^* R` on the target fibre coordinates, grouped by
    /// the number of source inputs.
    pub fn compatibility(&self) -> Vec<RelationCheck> {
        let sm = self.source.manifold();
        let tm = self.target.manifold();
        let imgs = self.pullback_images();
        let m = self.source.base.dim();
        let mut fails: BTreeMap<usize, String> = BTreeMap::new();
        for t in tm.nbase..tm.ngen() {
            let lhs = sm.q_apply(&imgs[t]);
            let rhs = tm.sig.subst(&tm.q[t], &imgs, &sm.sig);
            let diff = lhs.minus(&rhs);
            for (mono, c) in &diff.terms {
                let n = mono_index(mono, m).len();
                fails.entry(n).or_insert_with(|| {
                    format!("{}: coefficient of {} is {}", tm.sig.vars()[t].name, sm.sig.fmt_mono(mono), fmt_q(c))
                });
            }
        }
        let top = self.target.amplitude() - 1;
        let maxn = fails.keys().last().map(|&n| n as i32).unwrap_or(-1).max(top);
        (0..=maxn)
            .map(|n| {
                let n = n as usize;
                let off = fails.get(&n).cloned();
                RelationCheck { name: morphism_relation_name(n), inputs: n, passed: off.is_none(), offending: off }
            })
            .collect()
    }

    pub fn check(&self) -> BResult<()> {
        if let Some(f) = self.compatibility().into_iter().find(|r| !r.passed) {
            return Err(BundleError::Relation { relation: f.name, entry: f.offending.unwrap_or_default() });
        }
        Ok(())
    }

    pub fn base_image(&self, p: &[Q]) -> Vec<Q> {
        let sig = self.source.base_sig();
        self.base_map.iter().map(|f| sig.eval(f, p)).collect()
    }

    /// Jacobian of `f` at `p`, rows indexed by target coordinates.
    pub fn jacobian_at(&self, p: &[Q]) -> Matrix {
        let sig = self.source.base_sig();
        let m = self.source.base.dim();
        let mut jac = Matrix::zeros(self.base_map.len(), m);
        for (j, f) in self.base_map.iter().enumerate() {
            for i in 0..m {
                jac.add_to(j, i, &sig.eval(&sig.deriv(i, f), p));
            }
        }
        jac
    }

    /// `φ_1` at `p`, rows indexed by target fibre generators.
    pub fn linear_part_at(&self, p: &[Q]) -> Matrix {
        let sig = self.source.base_sig();
        let mut mat = Matrix::zeros(self.target.rank(), self.source.rank());
        if let Some(tab) = self.phi.get(1) {
            for (idx, img) in tab {
                for (&t, poly) in img {
                    mat.add_to(t, idx[0], &sig.eval(poly, p));
                }
            }
        }
        mat
    }

    /// Degrees `k` of the target fibre where `φ_1` fails to be onto at `p`.
    pub fn non_surjective_degrees(&self, p: &[Q]) -> Vec<i32> {
        let lin = self.linear_part_at(p);
        let sd = self.source.fibre_degrees();
        let td = self.target.fibre_degrees();
        let mut out = Vec::new();
        for k in self.target.fibre.degrees() {
            let rows: Vec<usize> = (0..td.len()).filter(|&t| td[t] == k).collect();
            let cols: Vec<usize> = (0..sd.len()).filter(|&s| sd[s] == k).collect();
            if lin.sub_matrix(&rows, &cols).rank() < rows.len() {
                out.push(k);
            }
        }
        out
    }

    /// Chain map of tangent complexes at a classical point `p`, as matrices
    /// per degree in the canonical bases.
    pub fn tangent_map_at(&self, p: &[Q], src: &FiniteComplex, tgt: &FiniteComplex) -> BTreeMap<i32, Matrix> {
        let mut out = BTreeMap::new();
        let jac = self.jacobian_at(p);
        let lin = self.linear_part_at(p);
        let (sm, tm) = (self.source.base.dim(), self.target.base.dim());
        let mut d0 = Matrix::zeros(tgt.space.dim(0), src.space.dim(0));
        for j in 0..tm {
            for i in 0..sm {
                let r = tgt.space.index_of(0, &base_var_name(j)).unwrap();
                let c = src.space.index_of(0, &base_var_name(i)).unwrap();
                d0.add_to(r, c, &jac.get(j, i));
            }
        }
        out.insert(0, d0);
        let sg = self.source.generators();
        let tg = self.target.generators();
        let mut degs: BTreeSet<i32> = self.source.fibre.degrees().into_iter().collect();
        degs.extend(self.target.fibre.degrees());
        for k in degs {
            let mut blk = Matrix::zeros(tgt.space.dim(k), src.space.dim(k));
            for (s, (ds, ls)) in sg.iter().enumerate() {
                for (t, (dt, lt)) in tg.iter().enumerate() {
                    if *ds == k && *dt == k {
                        let r = tgt.space.index_of(k, lt).unwrap();
                        let c = src.space.index_of(k, ls).unwrap();
                        blk.add_to(r, c, &lin.get(t, s));
                    }
                }
            }
            out.insert(k, blk);
        }
        out
    }

    /// Fibration / linearity / weak-equivalence report relative to the
    /// supplied classical loci and their pairing `(source index, target index)`.
    pub fn classify(
        &self,
        loci_source: &[Vec<Q>],
        loci_target: &[Vec<Q>],
        pairing: &[(usize, usize)],
    ) -> BResult<Classification> {
        self.source.check()?;
        self.target.check()?;
        self.check()?;
        for p in loci_source {
            if !self.source.is_classical(p)? {
                return Err(BundleError::NotClassical(format!("source point {}", fmt_point(p))));
            }
        }
        for p in loci_target {
            if !self.target.is_classical(p)? {
                return Err(BundleError::NotClassical(format!("target point {}", fmt_point(p))));
            }
        }
        let (mut seen_s, mut seen_t) = (BTreeSet::new(), BTreeSet::new());
        for &(i, j) in pairing {
            if i >= loci_source.len() || j >= loci_target.len() {
                return Err(BundleError::Correspondence(format!("pair ({i}, {j}) out of range")));
            }
            if !seen_s.insert(i) || !seen_t.insert(j) {
                return Err(BundleError::Correspondence(format!("pair ({i}, {j}) repeats a point")));
            }
        }
        if seen_s.len() != loci_source.len() || seen_t.len() != loci_target.len() {
            return Err(BundleError::Correspondence("pairing is not a bijection of the supplied loci".into()));
        }

        let mut failures = Vec::new();
        let mut points: Vec<Vec<Q>> = loci_source.to_vec();
        if let Base::Affine(m) = self.source.base {
            points.extend(sample_points(m));
        } else if points.is_empty() {
            points.push(Vec::new());
        }
        let mut fibration = true;
        let tdim = self.target.base.dim();
        for p in &points {
            if self.jacobian_at(p).rank() < tdim {
                fibration = false;
                failures.push(format!("f is a submersion: Jacobian rank deficient at {}", fmt_point(p)));
            }
            for k in self.non_surjective_degrees(p) {
                fibration = false;
                failures.push(format!("φ₁ degreewise surjective: fails in degree {k} at {}", fmt_point(p)));
            }
        }
        let linear = self.is_linear();
        if !linear {
            failures.push("linear: some φₙ with n ≥ 2 is nonzero".into());
        }

        let mut weq = true;
        for &(i, j) in pairing {
            let (p, pt) = (&loci_source[i], &loci_target[j]);
            if &self.base_image(p) != pt {
                return Err(BundleError::Correspondence(format!(
                    "f sends {} to {}, not to its partner {}",
                    fmt_point(p),
                    fmt_point(&self.base_image(p)),
                    fmt_point(pt)
                )));
            }
            let src = self.source.tangent_complex_at(p)?;
            let tgt = self.target.tangent_complex_at(pt)?;
            let lo = -2;
            let hi = self.source.amplitude().max(self.target.amplitude()) + 1;
            let blocks = self.tangent_map_at(p, &src, &tgt);
            let (srcr, tgtr) = (&src, &tgt);
            let f = |t: i32| -> Result<Matrix, GradedError> {
                Ok(blocks.get(&t).cloned().unwrap_or_else(|| Matrix::zeros(tgtr.space.dim(t), srcr.space.dim(t))))
            };
            let cone = Cone::checked(&src, &tgt, &f, lo, hi)?;
            let bad: Vec<i32> = cohomology_window(&cone, lo, hi)?.into_iter().filter(|x| x.1 != 0).map(|x| x.0).collect();
            if !bad.is_empty() {
                weq = false;
                failures.push(format!(
                    "tangent complexes quasi-isomorphic: cone has cohomology in degrees {bad:?} at {}",
                    fmt_point(p)
                ));
            }
        }
        let scope = match self.source.base {
            Base::Point => "point base; weak equivalence relative to the supplied classical loci".to_string(),
            Base::Affine(_) => format!(
                "ranks certified at {} supplied points and {} sample points; weak equivalence relative to the supplied classical loci",
                loci_source.len(),
                points.len() - loci_source.len()
            ),
        };
        Ok(Classification { fibration, linear, weak_equivalence: weq, failures, certified_points: points, scope })
    }
}

pub fn fmt_point(p: &[Q]) -> String {
    format!("({})", p.iter().map(fmt_q).collect::<Vec<_>>().join(", "))
}
