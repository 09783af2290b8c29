//! Splitting ladder for the kernel complex of an acyclic linear fibration.
//!
//! The input is a free DG module over a point whose frame sits in degrees
//! `0..=b`; `K^i` is the span of the degree-`i` frame elements.  Functions
//! live in non-positive degrees, so `D` maps `K^j` into `K^j ⊕ K^(j+1) ⊕ ...`
//! and the `K^j -> K^(j+1)` block is constant.  Minus that block is `δ_j`.
//! A contraction `(δ, η)` of the exact sequence `0 -> K^0 -> ... -> K^b -> 0`
//! then produces modules `E(b) ⊇ ... ⊇ E(1)`, and conjugating `E(n)` by the
//! ladder automorphism splits off the cone `F(n)` over `κ^n = ker δ_n`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_traits::{One, Zero};

use crate::dgmod::{Element, FreeModule, ModuleMap};
use crate::graded::{build_contraction, cohomology_window, Contraction};
use crate::linalg::Matrix;
use crate::linfty::{fmt_point, BResult, Base, BundleError};
use crate::manifold::koszul_twist;
use crate::poly::Poly;
use crate::scalar::Q;
use crate::tensors::{kernel_module, MorphismTensors};

/// One verified identity of a ladder certificate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdentityCheck {
    pub name: String,
    pub passed: bool,
    /// First offending entry when the identity fails.
    pub detail: String,
}

impl IdentityCheck {
    /// Passed exactly when there is no failure detail.
    pub fn of(name: impl Into<String>, failure: Option<String>) -> IdentityCheck {
        IdentityCheck { name: name.into(), passed: failure.is_none(), detail: failure.unwrap_or_default() }
    }
}

fn outcome(name: impl Into<String>, failure: Option<String>) -> IdentityCheck {
    IdentityCheck { name: name.into(), passed: failure.is_none(), detail: failure.unwrap_or_default() }
}

/// The kernel complex with its frame sorted by degree.
#[derive(Debug)]
pub struct LadderInput {
    pub module: Arc<FreeModule>,
    pub top: usize,
    /// `K^i` occupies frame indices `starts[i]..starts[i + 1]`.
    pub starts: Vec<usize>,
}

impl LadderInput {
    pub fn new(module: &FreeModule) -> BResult<LadderInput> {
        if !module.mfd.is_point() {
            return Err(BundleError::Shape("ladders are built over a point; restrict to a fibre first".into()));
        }
        if let Some(k) = module.degree_failure() {
            return Err(BundleError::Shape(format!("D({}) is not homogeneous of degree 1", module.labels[k])));
        }
        if let Some(k) = (0..module.rank()).find(|&k| module.degrees[k] < 0) {
            return Err(BundleError::Shape(format!("frame element {} has negative degree", module.labels[k])));
        }
        let top = module.degrees.iter().copied().max().unwrap_or(0) as usize;
        let mut order: Vec<usize> = (0..module.rank()).collect();
        order.sort_by_key(|&k| module.degrees[k]);
        let mut pos = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            pos[old] = new;
        }
        let labels = order.iter().map(|&k| module.labels[k].clone()).collect();
        let degrees = order.iter().map(|&k| module.degrees[k]).collect();
        let diff = order
            .iter()
            .map(|&k| module.diff[k].iter().map(|(&l, p)| (pos[l], p.clone())).collect())
            .collect();
        let sorted = FreeModule::new(module.mfd.clone(), labels, degrees, diff);
        let starts = (0..=top + 1).map(|i| module.degrees.iter().filter(|&&d| (d as usize) < i).count()).collect();
        Ok(LadderInput { module: Arc::new(sorted), top, starts })
    }

    pub fn dim(&self, i: usize) -> usize {
        self.starts[i + 1] - self.starts[i]
    }

    /// Component of `x` in `K^i`.
    pub fn component(&self, i: usize, x: &Element) -> Vec<Poly> {
        x[self.starts[i]..self.starts[i + 1]].to_vec()
    }

    /// Element with component `y` in `K^i` and zero elsewhere.
    pub fn place(&self, i: usize, y: &[Poly]) -> Element {
        let mut x = self.module.zero_element();
        x[self.starts[i]..self.starts[i + 1]].clone_from_slice(y);
        x
    }

    /// `d̄_ij` applied to an element of `K^j`.
    pub fn dbar(&self, i: usize, x: &Element) -> Vec<Poly> {
        self.component(i, &self.module.apply(x))
    }

    /// The constant block `K^i -> K^(i+1)` of the frame differential.
    fn linear_block(&self, i: usize) -> BResult<Matrix> {
        let mut m = Matrix::zeros(self.dim(i + 1), self.dim(i));
        for j in 0..self.dim(i) {
            let k = self.starts[i] + j;
            for (&l, p) in &self.module.diff[k] {
                if l < self.starts[i + 1] || l >= self.starts[i + 2] {
                    continue;
                }
                if !p.is_constant() {
                    return Err(BundleError::Shape(format!("block K^{i} -> K^{} is not constant", i + 1)));
                }
                m.set(l - self.starts[i + 1], j, p.constant_term());
            }
        }
        Ok(m)
    }
}

/// The cone `Γ(SL^∨ ⊗ (κ^n[1] ⊕ κ^n))` with differential `[[Q, 0], [ĩd, Q]]`.
#[derive(Debug)]
pub struct AcyclicFactor {
    pub n: usize,
    pub module: Arc<FreeModule>,
    /// Frame of the factor inside `E(n)`: the columns `η_(n-1)(κ^n)`
    /// followed by `κ^n`.
    pub frame: Matrix,
    pub cohomology: Vec<(i32, usize)>,
}

impl AcyclicFactor {
    pub fn is_acyclic(&self) -> bool {
        self.cohomology.iter().all(|&(_, h)| h == 0)
    }
}

#[derive(Debug)]
pub struct LadderStage {
    pub n: usize,
    /// `E(n)` with differential `D(n)`.
    pub module: Arc<FreeModule>,
    /// Frame of `E(n)` as constant columns in the input frame.
    pub frame: Matrix,
    pub ladder_automorphism: ModuleMap,
    pub inverse: ModuleMap,
    pub factor: AcyclicFactor,
    pub checks: Vec<IdentityCheck>,
}

#[derive(Debug)]
pub struct Ladder {
    pub input: LadderInput,
    pub contraction: Contraction,
    /// Columns spanning `κ^n = ker δ_n` inside `K^n`, `n = 0..=b`.
    pub kappa: Vec<Matrix>,
    pub stages: Vec<LadderStage>,
    pub window: (i32, i32),
    pub checks: Vec<IdentityCheck>,
}

impl Ladder {
    /// Standard window `[-2b-4, b+4]`.
    pub fn standard_window(b: usize) -> (i32, i32) {
        let b = b as i32;
        (-2 * b - 4, b + 4)
    }

    pub fn build(input: LadderInput) -> BResult<Ladder> {
        let window = Ladder::standard_window(input.top);
        Ladder::build_on(input, window)
    }

    pub fn build_on(input: LadderInput, window: (i32, i32)) -> BResult<Ladder> {
        let b = input.top;
        let deltas = (0..b).map(|i| input.linear_block(i).map(|m| m.neg())).collect::<BResult<Vec<_>>>()?;
        let dims: Vec<usize> = (0..=b).map(|i| input.dim(i)).collect();
        let contraction = build_contraction(&dims, &deltas)?;
        let kappa: Vec<Matrix> = (0..=b)
            .map(|n| if n == b { Matrix::identity(dims[b]) } else { Matrix::from_columns(dims[n], &deltas[n].kernel()) })
            .collect();
        let mut ladder = Ladder { input, contraction, kappa, stages: Vec::new(), window, checks: Vec::new() };
        for n in 1..=b {
            let stage = ladder.stage(n)?;
            ladder.stages.push(stage);
        }
        let failures = ladder.contraction.failures();
        ladder.checks.push(outcome("contraction identities", failures.first().cloned()));
        let h = cohomology_window(ladder.input.module.as_ref(), window.0, window.1)?;
        ladder.checks.push(outcome(
            format!("kernel complex acyclic on [{}, {}]", window.0, window.1),
            h.iter().find(|x| x.1 != 0).map(|(t, d)| format!("H^{t} has dimension {d}")),
        ));
        Ok(ladder)
    }

    /// Ladder of the kernel complex of `Ψ_*`, restricted to the fibre over
    /// `point` when the base is affine.
    pub fn from_morphism(mt: &MorphismTensors, point: &[Q]) -> BResult<Ladder> {
        let (kernel, _) = kernel_module(mt)?;
        let source = &mt.morphism.source;
        let module = match source.base {
            Base::Point => kernel,
            Base::Affine(_) => {
                if !source.is_classical(point)? {
                    return Err(BundleError::NotClassical(fmt_point(point)));
                }
                let fibre = Arc::new(kernel.mfd.fibre_at(point).map_err(BundleError::Shape)?);
                kernel.fibre_at(fibre, point)
            }
        };
        let window = Ladder::standard_window(source.amplitude().max(0) as usize);
        Ladder::build_on(LadderInput::new(&module)?, window)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().chain(self.stages.iter().flat_map(|s| &s.checks)).all(|c| c.passed)
    }

    /// Every check of the ladder and its stages, in order.
    pub fn all_checks(&self) -> Vec<&IdentityCheck> {
        self.stages.iter().flat_map(|s| &s.checks).chain(&self.checks).collect()
    }

    fn sig_twist(&self, p: &Poly) -> Poly {
        koszul_twist(&self.input.module.mfd.sig, p, 1)
    }

    /// Applies a constant matrix of odd degree to polynomial coordinates.
    fn odd_apply(&self, m: &Matrix, y: &[Poly]) -> Vec<Poly> {
        let twisted: Vec<Poly> = y.iter().map(|p| self.sig_twist(p)).collect();
        (0..m.nrows)
            .map(|a| {
                let mut p = Poly::zero();
                for (l, c) in m.row(a) {
                    p.add_scaled(&twisted[*l], c);
                }
                p
            })
            .collect()
    }

    /// `η_i` on coordinates in `K^(i+1)`.
    pub fn eta(&self, i: usize, y: &[Poly]) -> Vec<Poly> {
        self.odd_apply(&self.contraction.etas[i], y)
    }

    /// `δ_i` on coordinates in `K^i`.
    pub fn delta(&self, i: usize, y: &[Poly]) -> Vec<Poly> {
        self.odd_apply(&self.contraction.deltas[i], y)
    }

    fn unit_in_input(&self, k: usize) -> Element {
        self.input.module.unit(k)
    }

    fn stage(&self, n: usize) -> BResult<LadderStage> {
        let inp = &self.input;
        let b = inp.top;
        let big = inp.module.rank();
        let low = inp.starts[n];
        let kap = &self.kappa[n];
        let rk = kap.ncols;
        let r = low + rk;

        // frame of E(n)
        let mut cols: Vec<Vec<Q>> = Vec::with_capacity(r);
        let mut labels = Vec::with_capacity(r);
        let mut degrees = Vec::with_capacity(r);
        for k in 0..low {
            let mut c = vec![Q::zero(); big];
            c[k] = Q::one();
            cols.push(c);
            labels.push(inp.module.labels[k].clone());
            degrees.push(inp.module.degrees[k]);
        }
        for s in 0..rk {
            let mut c = vec![Q::zero(); big];
            c[low..low + kap.nrows].clone_from_slice(&kap.column(s));
            cols.push(c);
            labels.push(if n == b { inp.module.labels[low + s].clone() } else { format!("kappa{n}_{s}") });
            degrees.push(n as i32);
        }
        let frame = Matrix::from_columns(big, &cols);

        // D(n) on the frame, and the (n, j) identity
        let sig = &inp.module.mfd.sig;
        let mut diff = Vec::with_capacity(r);
        let mut dn_failure = None;
        for (a, c) in cols.iter().enumerate() {
            let x: Element = c.iter().map(|v| sig.constant(v.clone())).collect();
            let dx = inp.module.apply(&x);
            let mut coeffs: BTreeMap<usize, Poly> = BTreeMap::new();
            for (k, p) in dx.iter().enumerate().take(low) {
                coeffs.insert(k, p.clone());
            }
            let y = inp.component(n, &dx);
            let mut corrected = y.clone();
            if n < b {
                let z = self.eta(n, &inp.dbar(n + 1, &inp.place(n, &y)));
                for (u, v) in corrected.iter_mut().zip(&z) {
                    u.add_assign(v);
                }
            }
            if a < low && dn_failure.is_none() {
                let expected = self.delta(n - 1, &self.eta(n - 1, &y));
                if expected != corrected {
                    dn_failure = Some(format!("column {}", labels[a]));
                }
            }
            let cy = coords(kap, &corrected).ok_or_else(|| {
                BundleError::Shape(format!("d({n}) of {} leaves κ^{n}", labels[a]))
            })?;
            for (s, p) in cy.into_iter().enumerate() {
                coeffs.insert(low + s, p);
            }
            diff.push(coeffs);
        }
        let module = Arc::new(FreeModule::new(inp.module.mfd.clone(), labels, degrees, diff));

        // ladder automorphism id - Σ_j η_(n-1) d̄_nj on K^j, j <= n-2
        let lower = if n >= 2 { inp.starts[n - 1] } else { 0 };
        let mut fwd = Vec::with_capacity(r);
        let mut back = Vec::with_capacity(r);
        for k in 0..r {
            let mut e = module.unit(k);
            let mut f = module.unit(k);
            if k < lower {
                let corr = self.eta(n - 1, &inp.dbar(n, &self.unit_in_input(k)));
                for (s, p) in corr.iter().enumerate() {
                    e[inp.starts[n - 1] + s].sub_assign(p);
                    f[inp.starts[n - 1] + s].add_assign(p);
                }
            }
            fwd.push(e);
            back.push(f);
        }
        let alpha = ModuleMap::new(module.clone(), module.clone(), 0, None, fwd);
        let alpha_inv = ModuleMap::new(module.clone(), module.clone(), 0, None, back);

        let factor = self.factor(n, &module)?;

        let mut checks = Vec::new();
        checks.push(outcome(
            format!("D({n})^2 = 0"),
            module.square_zero_failure().map(|k| format!("frame element {}", module.labels[k])),
        ));
        checks.push(outcome(format!("d({n})_nj = δ_{} η_{} d̄_nj", n - 1, n - 1), dn_failure));
        if n == b {
            let same = module.labels == inp.module.labels && module.diff == inp.module.diff;
            checks.push(outcome(
                format!("E({n}) is the kernel complex"),
                (!same).then(|| "frame differentials differ".to_string()),
            ));
        }
        let round = |f: &ModuleMap, g: &ModuleMap| {
            let c = f.compose(g);
            (0..r).find(|&k| c.images[k] != module.unit(k)).map(|k| format!("frame element {}", module.labels[k]))
        };
        checks.push(outcome(format!("ladder automorphism of E({n}) is invertible"), round(&alpha, &alpha_inv).or(round(&alpha_inv, &alpha))));
        checks.push(outcome(
            format!("conjugated D({n}) splits as D({}) ⊕ F({n})", n - 1),
            self.splitting_failure(n, &module, &alpha, &alpha_inv, &factor),
        ));
        checks.push(outcome(
            format!("F({n}) acyclic on [{}, {}]", self.window.0, self.window.1),
            factor.cohomology.iter().find(|x| x.1 != 0).map(|(t, d)| format!("H^{t} has dimension {d}")),
        ));
        let h = cohomology_window(module.as_ref(), self.window.0, self.window.1)?;
        checks.push(outcome(
            format!("E({n}) acyclic on [{}, {}]", self.window.0, self.window.1),
            h.iter().find(|x| x.1 != 0).map(|(t, d)| format!("H^{t} has dimension {d}")),
        ));
        Ok(LadderStage { n, module, frame, ladder_automorphism: alpha, inverse: alpha_inv, factor, checks })
    }

    /// `F(n)`: frame `s_k = η_(n-1)(κ^n_k)` in degree `n-1` and `t_k = κ^n_k`,
    /// with `D(s_k) = -t_k`, so `D(c s_k) = Q(c) s_k + (-1)^(|c|+1) c t_k`.
    fn factor(&self, n: usize, stage: &FreeModule) -> BResult<AcyclicFactor> {
        let inp = &self.input;
        let low = inp.starts[n];
        let kap = &self.kappa[n];
        let rk = kap.ncols;
        let mut labels = Vec::new();
        let mut degrees = Vec::new();
        let mut diff = Vec::new();
        for k in 0..rk {
            labels.push(format!("s{n}_{k}"));
            degrees.push(n as i32 - 1);
            diff.push(BTreeMap::from([(rk + k, inp.module.mfd.sig.constant(-Q::one()))]));
        }
        for k in 0..rk {
            labels.push(format!("t{n}_{k}"));
            degrees.push(n as i32);
            diff.push(BTreeMap::new());
        }
        let mut cols = Vec::with_capacity(2 * rk);
        let eta = &self.contraction.etas[n - 1];
        for k in 0..rk {
            let mut c = vec![Q::zero(); stage.rank()];
            let v = eta.apply(&kap.column(k));
            c[inp.starts[n - 1]..low].clone_from_slice(&v);
            cols.push(c);
        }
        for k in 0..rk {
            let mut c = vec![Q::zero(); stage.rank()];
            c[low + k] = Q::one();
            cols.push(c);
        }
        let module = Arc::new(FreeModule::new(inp.module.mfd.clone(), labels, degrees, diff));
        let cohomology = cohomology_window(module.as_ref(), self.window.0, self.window.1)?;
        Ok(AcyclicFactor { n, module, frame: Matrix::from_columns(stage.rank(), &cols), cohomology })
    }

    /// Checks that `α D(n) α^-1`, written in the frame `E(n-1) ⊕ F(n)`, is
    /// block diagonal with blocks `D(n-1)` and the factor differential.
    fn splitting_failure(
        &self,
        n: usize,
        stage: &FreeModule,
        alpha: &ModuleMap,
        alpha_inv: &ModuleMap,
        factor: &AcyclicFactor,
    ) -> Option<String> {
        let r = stage.rank();
        let sig = &stage.mfd.sig;
        // new frame: E(n-1) then F(n), as columns in E(n) coordinates
        let mut cols: Vec<Vec<Q>> = Vec::with_capacity(r);
        let mut expected: Vec<BTreeMap<usize, Poly>> = Vec::new();
        let mut names: Vec<String> = Vec::new();
        let prev_rank = match n {
            1 => 0,
            _ => {
                let prev = &self.stages[n - 2];
                for s in 0..prev.module.rank() {
                    cols.push(prev.frame.column(s)[..r - self.kappa[n].ncols].iter().cloned().chain(
                        std::iter::repeat(Q::zero()).take(self.kappa[n].ncols),
                    ).collect());
                    expected.push(prev.module.diff[s].clone());
                    names.push(prev.module.labels[s].clone());
                }
                prev.module.rank()
            }
        };
        for s in 0..factor.module.rank() {
            cols.push(factor.frame.column(s));
            expected.push(factor.module.diff[s].iter().map(|(&l, p)| (prev_rank + l, p.clone())).collect());
            names.push(factor.module.labels[s].clone());
        }
        if cols.len() != r {
            return Some(format!("E({}) ⊕ F({n}) has rank {}, E({n}) has rank {r}", n - 1, cols.len()));
        }
        let change = Matrix::from_columns(r, &cols);
        if change.rank() != r {
            return Some(format!("E({}) ⊕ F({n}) does not span E({n})", n - 1));
        }
        for (a, c) in cols.iter().enumerate() {
            let u: Element = c.iter().map(|v| sig.constant(v.clone())).collect();
            let w = alpha.apply(&stage.apply(&alpha_inv.apply(&u)));
            let got = match coords(&change, &w) {
                Some(g) => g,
                None => return Some(format!("image of {} not expressible", names[a])),
            };
            for (i, g) in got.iter().enumerate() {
                let e = expected[a].get(&i).cloned().unwrap_or_else(Poly::zero);
                if *g != e {
                    return Some(format!(
                        "block ({}, {}): coefficient of {} in the image of {} is {}, expected {}",
                        block_name(i, prev_rank, n),
                        block_name(a, prev_rank, n),
                        names[i],
                        names[a],
                        sig.fmt(g),
                        sig.fmt(&e)
                    ));
                }
            }
        }
        None
    }
}

fn block_name(i: usize, prev_rank: usize, n: usize) -> String {
    if i < prev_rank {
        format!("E({})", n - 1)
    } else {
        format!("F({n})")
    }
}

/// Coordinates of `y` on the constant, linearly independent columns of
/// `basis`; `None` when `y` is not in their span.
pub fn coords(basis: &Matrix, y: &[Poly]) -> Option<Vec<Poly>> {
    let monos: BTreeSet<_> = y.iter().flat_map(|p| p.terms.keys().cloned()).collect();
    let mut out = vec![Poly::zero(); basis.ncols];
    for m in monos {
        let v: Vec<Q> = y.iter().map(|p| p.coeff(&m)).collect();
        let c = basis.solve(&v)?;
        if basis.apply(&c) != v {
            return None;
        }
        for (a, x) in c.into_iter().enumerate() {
            if !x.is_zero() {
                out[a].add_term(m.clone(), x);
            }
        }
    }
    Some(out)
}
