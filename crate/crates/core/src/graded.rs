//! Finite graded spaces, block maps, cochain complexes and their cohomology.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::linalg::{IntEchelon, Matrix};
use crate::scalar::Q;
use crate::signs::koszul;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GradedError {
    #[error("degree component not finitely materializable (degree {0})")]
    NotMaterializable(i32),
    #[error("not a chain map at degree {0}")]
    NotChainMap(i32),
    #[error("not exact at position {position} (rank defect {defect})")]
    NotExact { position: usize, defect: i64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type GResult<T> = Result<T, GradedError>;

/// Finite graded vector space with named bases; labels are kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Default, Hash)]
pub struct GradedSpace {
    support: BTreeMap<i32, Vec<String>>,
}

impl GradedSpace {
    pub fn new(items: impl IntoIterator<Item = (i32, String)>) -> GradedSpace {
        let mut support: BTreeMap<i32, Vec<String>> = BTreeMap::new();
        for (d, l) in items {
            support.entry(d).or_default().push(l);
        }
        for v in support.values_mut() {
            v.sort();
            let n = v.len();
            v.dedup();
            assert_eq!(n, v.len(), "duplicate basis label");
        }
        GradedSpace { support }
    }

    /// Space with the given dimensions and generated labels `e<deg>_<i>`.
    pub fn from_dims(dims: &[(i32, usize)]) -> GradedSpace {
        let mut items = Vec::new();
        for &(d, n) in dims {
            let w = n.to_string().len();
            for i in 0..n {
                items.push((d, format!("e{}_{:0w$}", d, i, w = w)));
            }
        }
        GradedSpace::new(items)
    }

    pub fn dim(&self, d: i32) -> usize {
        self.support.get(&d).map(|v| v.len()).unwrap_or(0)
    }

    pub fn total_dim(&self) -> usize {
        self.support.values().map(|v| v.len()).sum()
    }

    pub fn degrees(&self) -> Vec<i32> {
        self.support.keys().copied().collect()
    }

    pub fn labels(&self, d: i32) -> &[String] {
        self.support.get(&d).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn index_of(&self, d: i32, label: &str) -> Option<usize> {
        self.support.get(&d)?.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dual(&self) -> GradedSpace {
        GradedSpace::new(self.support.iter().flat_map(|(d, v)| v.iter().map(move |l| (-d, format!("{}^", l)))))
    }

    /// `V[k]`, whose degree-d part is the degree-(d+k) part of `V`.
    pub fn shift(&self, k: i32) -> GradedSpace {
        GradedSpace { support: self.support.iter().map(|(d, v)| (d - k, v.clone())).collect() }
    }

    pub fn tensor(&self, other: &GradedSpace) -> GradedSpace {
        let mut items = Vec::new();
        for (da, la) in &self.support {
            for (db, lb) in &other.support {
                for a in la {
                    for b in lb {
                        items.push((da + db, format!("{}|{}", a, b)));
                    }
                }
            }
        }
        GradedSpace::new(items)
    }

    pub fn direct_sum(&self, other: &GradedSpace) -> GradedSpace {
        let mut items = Vec::new();
        for (d, v) in &self.support {
            items.extend(v.iter().map(|l| (*d, format!("0.{}", l))));
        }
        for (d, v) in &other.support {
            items.extend(v.iter().map(|l| (*d, format!("1.{}", l))));
        }
        GradedSpace::new(items)
    }

    /// All basis elements in canonical order as (degree, label).
    pub fn basis(&self) -> Vec<(i32, String)> {
        self.support.iter().flat_map(|(d, v)| v.iter().map(move |l| (*d, l.clone()))).collect()
    }

    /// The n-th graded symmetric power; odd elements appear at most once.
    pub fn sym_power(&self, n: usize) -> GradedSpace {
        let basis = self.basis();
        let mut items = Vec::new();
        let mut cur: Vec<usize> = Vec::new();
        fn rec(
            basis: &[(i32, String)],
            start: usize,
            left: usize,
            cur: &mut Vec<usize>,
            items: &mut Vec<(i32, String)>,
        ) {
            if left == 0 {
                let d = cur.iter().map(|&i| basis[i].0).sum();
                let l: Vec<&str> = cur.iter().map(|&i| basis[i].1.as_str()).collect();
                items.push((d, l.join(".")));
                return;
            }
            for i in start..basis.len() {
                let odd = basis[i].0.rem_euclid(2) == 1;
                cur.push(i);
                rec(basis, if odd { i + 1 } else { i }, left - 1, cur, items);
                cur.pop();
            }
        }
        rec(&basis, 0, n, &mut cur, &mut items);
        GradedSpace::new(items)
    }
}

/// Degree-homogeneous linear map given by one matrix per source degree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradedMap {
    pub source: GradedSpace,
    pub target: GradedSpace,
    pub shift: i32,
    blocks: BTreeMap<i32, Matrix>,
}

impl GradedMap {
    pub fn zero(source: &GradedSpace, target: &GradedSpace, shift: i32) -> GradedMap {
        GradedMap { source: source.clone(), target: target.clone(), shift, blocks: BTreeMap::new() }
    }

    pub fn identity(space: &GradedSpace) -> GradedMap {
        let blocks = space.support.iter().map(|(d, v)| (*d, Matrix::identity(v.len()))).collect();
        GradedMap { source: space.clone(), target: space.clone(), shift: 0, blocks }
    }

    pub fn from_blocks(
        source: &GradedSpace,
        target: &GradedSpace,
        shift: i32,
        blocks: BTreeMap<i32, Matrix>,
    ) -> GResult<GradedMap> {
        let mut out = GradedMap::zero(source, target, shift);
        for (k, m) in blocks {
            let (r, c) = (target.dim(k + shift), source.dim(k));
            if (m.nrows, m.ncols) != (r, c) {
                return Err(GradedError::Shape(format!(
                    "block at degree {} is {}x{}, expected {}x{}",
                    k, m.nrows, m.ncols, r, c
                )));
            }
            if r > 0 && c > 0 {
                out.blocks.insert(k, m);
            }
        }
        Ok(out)
    }

    /// Block from source degree `k`; a zero matrix of the right shape if absent.
    pub fn block(&self, k: i32) -> Matrix {
        self.blocks
            .get(&k)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(self.target.dim(k + self.shift), self.source.dim(k)))
    }

    pub fn blocks(&self) -> &BTreeMap<i32, Matrix> {
        &self.blocks
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.values().all(|m| m.is_zero())
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &GradedMap) -> GResult<GradedMap> {
        if other.target != self.source {
            return Err(GradedError::Shape("composition of non-matching maps".into()));
        }
        let mut blocks = BTreeMap::new();
        for k in other.source.degrees() {
            let m = self.block(k + other.shift).mul(&other.block(k));
            blocks.insert(k, m);
        }
        GradedMap::from_blocks(&other.source, &self.target, self.shift + other.shift, blocks)
    }

    pub fn lin_comb(&self, other: &GradedMap, s: &Q) -> GResult<GradedMap> {
        if self.source != other.source || self.target != other.target || self.shift != other.shift {
            return Err(GradedError::Shape("sum of maps with different shapes".into()));
        }
        let mut blocks = BTreeMap::new();
        for k in self.source.degrees() {
            blocks.insert(k, self.block(k).lin_comb(&other.block(k), s));
        }
        GradedMap::from_blocks(&self.source, &self.target, self.shift, blocks)
    }

    pub fn plus(&self, other: &GradedMap) -> GResult<GradedMap> {
        self.lin_comb(other, &Q::one())
    }

    pub fn minus(&self, other: &GradedMap) -> GResult<GradedMap> {
        self.lin_comb(other, &-Q::one())
    }

    pub fn scale(&self, s: &Q) -> GradedMap {
        let mut out = self.clone();
        for m in out.blocks.values_mut() {
            *m = m.scale(s);
        }
        out
    }

    pub fn equals(&self, other: &GradedMap) -> bool {
        self.minus(other).map(|m| m.is_zero()).unwrap_or(false)
    }

    /// Dual map with `f^(b)(a) = (-1)^(|f||b|) b(f a)`.
    pub fn dual(&self) -> GradedMap {
        let src = self.target.dual();
        let tgt = self.source.dual();
        let mut blocks = BTreeMap::new();
        for (k, m) in &self.blocks {
            // source degree k of f  <->  target degree -k of the dual, from degree -(k+s)
            let beta_deg = -(k + self.shift);
            let t = m.transpose();
            let t = if koszul(self.shift as i64, beta_deg as i64) { t.neg() } else { t };
            blocks.insert(beta_deg, t);
        }
        GradedMap::from_blocks(&src, &tgt, self.shift, blocks).expect("dual blocks have dual shapes")
    }

    /// `f ⊗ g` with `(f⊗g)(a⊗b) = (-1)^(|g||a|) f(a)⊗g(b)`.
    pub fn tensor(&self, g: &GradedMap) -> GradedMap {
        let src = self.source.tensor(&g.source);
        let tgt = self.target.tensor(&g.target);
        let mut blocks: BTreeMap<i32, Matrix> = BTreeMap::new();
        for (da, la) in &self.source.support {
            for (db, lb) in &g.source.support {
                let fa = self.block(*da);
                let gb = g.block(*db);
                let sign = if koszul(g.shift as i64, *da as i64) { -Q::one() } else { Q::one() };
                let d = da + db;
                let entry =
                    blocks.entry(d).or_insert_with(|| Matrix::zeros(tgt.dim(d + self.shift + g.shift), src.dim(d)));
                for (ia, a) in la.iter().enumerate() {
                    for (ib, b) in lb.iter().enumerate() {
                        let col = src.index_of(d, &format!("{}|{}", a, b)).unwrap();
                        let ta = self.target.labels(da + self.shift);
                        let tb = g.target.labels(db + g.shift);
                        for (ja, ta_l) in ta.iter().enumerate() {
                            let x = fa.get(ja, ia);
                            if x.is_zero() {
                                continue;
                            }
                            for (jb, tb_l) in tb.iter().enumerate() {
                                let y = gb.get(jb, ib);
                                if y.is_zero() {
                                    continue;
                                }
                                let row = tgt
                                    .index_of(d + self.shift + g.shift, &format!("{}|{}", ta_l, tb_l))
                                    .unwrap();
                                entry.add_to(row, col, &(&x * &y * &sign));
                            }
                        }
                    }
                }
            }
        }
        GradedMap::from_blocks(&src, &tgt, self.shift + g.shift, blocks).expect("tensor blocks")
    }

    /// The symmetry `a⊗b ↦ (-1)^(|a||b|) b⊗a`.
    pub fn swap(a: &GradedSpace, b: &GradedSpace) -> GradedMap {
        let src = a.tensor(b);
        let tgt = b.tensor(a);
        let mut blocks: BTreeMap<i32, Matrix> = BTreeMap::new();
        for (da, la) in &a.support {
            for (db, lb) in &b.support {
                let d = da + db;
                let m = blocks.entry(d).or_insert_with(|| Matrix::zeros(tgt.dim(d), src.dim(d)));
                for x in la {
                    for y in lb {
                        let c = src.index_of(d, &format!("{}|{}", x, y)).unwrap();
                        let r = tgt.index_of(d, &format!("{}|{}", y, x)).unwrap();
                        let s = if koszul(*da as i64, *db as i64) { -Q::one() } else { Q::one() };
                        m.add_to(r, c, &s);
                    }
                }
            }
        }
        GradedMap::from_blocks(&src, &tgt, 0, blocks).expect("swap blocks")
    }

    /// Canonical map `V -> V^^`, evaluation `v ↦ (b ↦ b(v))`.
    pub fn double_dual(space: &GradedSpace) -> GradedMap {
        let dd = space.dual().dual();
        let mut blocks = BTreeMap::new();
        for d in space.degrees() {
            let mut m = Matrix::zeros(dd.dim(d), space.dim(d));
            for (i, l) in space.labels(d).iter().enumerate() {
                let r = dd.index_of(d, &format!("{}^^", l)).unwrap();
                m.set(r, i, Q::one());
            }
            blocks.insert(d, m);
        }
        GradedMap::from_blocks(space, &dd, 0, blocks).expect("double dual blocks")
    }
}

/// A cochain complex presented one degree at a time.
pub trait Complex: Sync {
    fn dim(&self, t: i32) -> GResult<usize>;
    /// The differential `C^t -> C^(t+1)`.
    fn diff(&self, t: i32) -> GResult<Matrix>;
}

/// Degree components of a chain map between two complexes.
pub trait ChainMap: Sync {
    fn at(&self, t: i32) -> GResult<Matrix>;
}

impl<F> ChainMap for F
where
    F: Fn(i32) -> GResult<Matrix> + Sync,
{
    fn at(&self, t: i32) -> GResult<Matrix> {
        self(t)
    }
}

/// Complex with finite support and an explicit differential.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteComplex {
    pub space: GradedSpace,
    pub differential: GradedMap,
}

impl FiniteComplex {
    pub fn new(space: GradedSpace, differential: GradedMap) -> GResult<FiniteComplex> {
        if differential.shift != 1 || differential.source != space || differential.target != space {
            return Err(GradedError::Shape("differential must be a degree +1 endomorphism".into()));
        }
        Ok(FiniteComplex { space, differential })
    }

    pub fn zero_differential(space: GradedSpace) -> FiniteComplex {
        let d = GradedMap::zero(&space, &space, 1);
        FiniteComplex { space, differential: d }
    }

    pub fn window(&self) -> (i32, i32) {
        let degs = self.space.degrees();
        match (degs.first(), degs.last()) {
            (Some(a), Some(b)) => (*a - 1, *b + 1),
            _ => (0, 0),
        }
    }

    pub fn dual(&self) -> FiniteComplex {
        // Hom convention d(b) = -(-1)^|b| b∘d; the dual map already carries (-1)^|b|
        let space = self.space.dual();
        let d = self.differential.dual().scale(&-Q::one());
        FiniteComplex { space, differential: d }
    }

    /// `C[k]` with differential `(-1)^k d`.
    pub fn shift(&self, k: i32) -> FiniteComplex {
        let space = self.space.shift(k);
        let s = if k.rem_euclid(2) == 1 { -Q::one() } else { Q::one() };
        let blocks = self.differential.blocks().iter().map(|(d, m)| (d - k, m.scale(&s))).collect();
        let d = GradedMap::from_blocks(&space, &space, 1, blocks).expect("shift differential");
        FiniteComplex { space, differential: d }
    }

    /// `C ⊗ D` with `d(a⊗b) = da⊗b + (-1)^|a| a⊗db`.
    pub fn tensor(&self, other: &FiniteComplex) -> FiniteComplex {
        let a = self.differential.tensor(&GradedMap::identity(&other.space));
        let b = GradedMap::identity(&self.space).tensor(&other.differential);
        let d = a.plus(&b).expect("tensor differential shapes");
        FiniteComplex { space: self.space.tensor(&other.space), differential: d }
    }
}

impl Complex for FiniteComplex {
    fn dim(&self, t: i32) -> GResult<usize> {
        Ok(self.space.dim(t))
    }

    fn diff(&self, t: i32) -> GResult<Matrix> {
        Ok(self.differential.block(t))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cohomology {
    pub degree: i32,
    pub dim: usize,
    pub representatives: Vec<Vec<Q>>,
}

pub fn cohomology_at(c: &dyn Complex, t: i32) -> GResult<Cohomology> {
    let n = c.dim(t)?;
    let d_out = c.diff(t)?;
    let d_in = c.diff(t - 1)?;
    if d_out.ncols != n || d_in.nrows != n {
        return Err(GradedError::Shape(format!("differential shapes disagree at degree {}", t)));
    }
    let kernel = d_out.kernel();
    let mut ech = IntEchelon::new(n);
    let dt = d_in.transpose();
    for i in 0..dt.nrows {
        ech.insert(dt.row(i));
    }
    let mut reps = Vec::new();
    for v in kernel {
        if ech.insert(&crate::linalg::to_sparse(&v)) {
            reps.push(v);
        }
    }
    Ok(Cohomology { degree: t, dim: reps.len(), representatives: reps })
}

/// Only the dimension of `H^t`, by ranks.
pub fn cohomology_dim(c: &dyn Complex, t: i32) -> GResult<usize> {
    let n = c.dim(t)?;
    let r_out = c.diff(t)?.rank();
    let r_in = c.diff(t - 1)?.rank();
    Ok(n - r_out - r_in)
}

pub fn cohomology_window(c: &dyn Complex, lo: i32, hi: i32) -> GResult<Vec<(i32, usize)>> {
    (lo..=hi).map(|t| cohomology_dim(c, t).map(|d| (t, d))).collect()
}

/// First degree in the window where `d∘d` fails, if any.
pub fn square_zero_failure(c: &dyn Complex, lo: i32, hi: i32) -> GResult<Option<i32>> {
    for t in lo..=hi {
        let a = c.diff(t)?;
        let b = c.diff(t + 1)?;
        if a.nrows != b.ncols {
            return Err(GradedError::Shape(format!("differentials do not compose at degree {}", t)));
        }
        if !b.mul(&a).is_zero() {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// First degree in the window where `f∘d = d∘f` fails, if any.
pub fn chain_map_failure(
    src: &dyn Complex,
    tgt: &dyn Complex,
    f: &dyn ChainMap,
    lo: i32,
    hi: i32,
) -> GResult<Option<i32>> {
    for t in lo..=hi {
        let lhs = f.at(t + 1)?.mul(&src.diff(t)?);
        let rhs = tgt.diff(t)?.mul(&f.at(t)?);
        if lhs != rhs {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// Cone of a chain map: degree t is `C^(t+1) ⊕ D^t` with
/// `d(c, e) = (-d c, f c + d e)`.
pub struct Cone<'a> {
    pub source: &'a dyn Complex,
    pub target: &'a dyn Complex,
    pub map: &'a dyn ChainMap,
}

impl<'a> Cone<'a> {
    /// Builds the cone after checking the chain-map identity on `[lo, hi]`.
    pub fn checked(
        source: &'a dyn Complex,
        target: &'a dyn Complex,
        map: &'a dyn ChainMap,
        lo: i32,
        hi: i32,
    ) -> GResult<Cone<'a>> {
        if let Some(t) = chain_map_failure(source, target, map, lo, hi)? {
            return Err(GradedError::NotChainMap(t));
        }
        Ok(Cone { source, target, map })
    }
}

impl Complex for Cone<'_> {
    fn dim(&self, t: i32) -> GResult<usize> {
        Ok(self.source.dim(t + 1)? + self.target.dim(t)?)
    }

    fn diff(&self, t: i32) -> GResult<Matrix> {
        let (c1, d0) = (self.source.dim(t + 1)?, self.target.dim(t)?);
        let (c2, d1) = (self.source.dim(t + 2)?, self.target.dim(t + 1)?);
        let mut m = Matrix::zeros(c2 + d1, c1 + d0);
        m.add_block(0, 0, &self.source.diff(t + 1)?.neg());
        m.add_block(c2, 0, &self.map.at(t + 1)?);
        m.add_block(c2, c1, &self.target.diff(t)?);
        Ok(m)
    }
}

/// Maps `δ_i : V_i -> V_(i+1)` and `η_i : V_(i+1) -> V_i` of a finite exact
/// sequence, normalized so that `η_i η_(i+1) = 0`, `η_0 δ_0 = id` and
/// `δ_i η_i + η_(i+1) δ_(i+1) = id`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contraction {
    pub dims: Vec<usize>,
    pub deltas: Vec<Matrix>,
    pub etas: Vec<Matrix>,
}

/// Checks exactness of `0 -> V_0 -> ... -> V_b -> 0`.
pub fn check_exact(dims: &[usize], maps: &[Matrix]) -> GResult<()> {
    if dims.len() != maps.len() + 1 {
        return Err(GradedError::Shape("need one more space than maps".into()));
    }
    for (i, m) in maps.iter().enumerate() {
        if (m.nrows, m.ncols) != (dims[i + 1], dims[i]) {
            return Err(GradedError::Shape(format!("map {} has the wrong shape", i)));
        }
    }
    let ranks: Vec<usize> = maps.iter().map(|m| m.rank()).collect();
    for (pos, &n) in dims.iter().enumerate() {
        let r_out = if pos < maps.len() { ranks[pos] } else { 0 };
        let r_in = if pos > 0 { ranks[pos - 1] } else { 0 };
        let composes = pos == 0 || pos >= maps.len() || maps[pos].mul(&maps[pos - 1]).is_zero();
        let defect = n as i64 - r_out as i64 - r_in as i64;
        if defect != 0 || !composes {
            return Err(GradedError::NotExact { position: pos, defect });
        }
    }
    Ok(())
}

/// Splits an exact sequence by downward induction: `η_(b-1)` splits the last
/// surjection and `η_r = η̃_r ∘ (id - η_(r+1) δ_(r+1))`, where `η̃_r` is the
/// pivot-canonical right inverse of `δ_r` onto its image.
pub fn build_contraction(dims: &[usize], maps: &[Matrix]) -> GResult<Contraction> {
    check_exact(dims, maps)?;
    let b = maps.len();
    let mut etas: Vec<Matrix> = vec![Matrix::zeros(0, 0); b];
    for r in (0..b).rev() {
        let n_next = dims[r + 1];
        let proj = if r + 1 < b {
            Matrix::identity(n_next).minus(&etas[r + 1].mul(&maps[r + 1]))
        } else {
            Matrix::identity(n_next)
        };
        let mut cols = Vec::with_capacity(n_next);
        for j in 0..n_next {
            let y = proj.column(j);
            let x = maps[r].solve(&y).ok_or(GradedError::NotExact { position: r + 1, defect: 0 })?;
            cols.push(x);
        }
        etas[r] = Matrix::from_columns(dims[r], &cols);
    }
    Ok(Contraction { dims: dims.to_vec(), deltas: maps.to_vec(), etas })
}

impl Contraction {
    /// Names of the identities that fail; empty when all hold.
    pub fn failures(&self) -> Vec<String> {
        let b = self.deltas.len();
        let mut out = Vec::new();
        for i in 0..b.saturating_sub(1) {
            if !self.etas[i].mul(&self.etas[i + 1]).is_zero() {
                out.push(format!("eta_{} eta_{} = 0", i, i + 1));
            }
        }
        if b > 0 && self.etas[0].mul(&self.deltas[0]) != Matrix::identity(self.dims[0]) {
            out.push("eta_0 delta_0 = id".into());
        }
        for i in 0..b {
            let mut s = self.deltas[i].mul(&self.etas[i]);
            if i + 1 < b {
                s = s.plus(&self.etas[i + 1].mul(&self.deltas[i + 1]));
            }
            if s != Matrix::identity(self.dims[i + 1]) {
                out.push(format!("delta_{i} eta_{i} + eta_{} delta_{} = id", i + 1, i + 1));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;

    fn dense(rows: &[&[i64]]) -> Matrix {
        Matrix::from_dense(&rows.iter().map(|r| r.iter().map(|&x| q(x)).collect()).collect::<Vec<_>>())
    }

    #[test]
    fn cohomology_of_small_complexes() {
        let v = GradedSpace::from_dims(&[(1, 2), (2, 1)]);
        let mut blocks = BTreeMap::new();
        blocks.insert(1, dense(&[&[1, 0]]));
        let d = GradedMap::from_blocks(&v, &v, 1, blocks).unwrap();
        let c = FiniteComplex::new(v, d).unwrap();
        assert_eq!(cohomology_dim(&c, 1).unwrap(), 1);
        assert_eq!(cohomology_dim(&c, 2).unwrap(), 0);
        let h = cohomology_at(&c, 1).unwrap();
        assert_eq!(h.representatives, vec![vec![q(0), q(1)]]);
    }

    #[test]
    fn identity_cone_is_acyclic() {
        let v = GradedSpace::from_dims(&[(0, 1), (1, 2), (2, 1)]);
        let c = FiniteComplex::zero_differential(v.clone());
        let id = |t: i32| Ok(Matrix::identity(v.dim(t)));
        let cone = Cone::checked(&c, &c, &id, -2, 3).unwrap();
        for t in -3..=3 {
            assert_eq!(cohomology_dim(&cone, t).unwrap(), 0);
        }
    }

    #[test]
    fn contraction_of_short_sequence() {
        let maps = vec![dense(&[&[1], &[0]]), dense(&[&[0, 1]])];
        let c = build_contraction(&[1, 2, 1], &maps).unwrap();
        assert!(c.failures().is_empty(), "{:?}", c.failures());
    }

    #[test]
    fn non_exact_sequence_rejected() {
        let maps = vec![dense(&[&[1], &[0]]), dense(&[&[0, 0]])];
        assert!(matches!(build_contraction(&[1, 2, 1], &maps), Err(GradedError::NotExact { .. })));
    }

    #[test]
    fn symmetric_squares_follow_koszul_rule() {
        let odd = GradedSpace::new(vec![(1, "a".to_string())]);
        assert!(odd.sym_power(2).is_zero());
        let even = GradedSpace::new(vec![(2, "a".to_string())]);
        let s = even.sym_power(2);
        assert_eq!(s.dim(4), 1);
        assert_eq!(s.total_dim(), 1);
    }

    #[test]
    fn swap_of_odd_lines_is_minus_one() {
        let a = GradedSpace::new(vec![(1, "a".to_string())]);
        let b = GradedSpace::new(vec![(1, "b".to_string())]);
        let s = GradedMap::swap(&a, &b);
        assert_eq!(s.block(2).get(0, 0), q(-1));
    }
}
