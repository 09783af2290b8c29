//! Vector fields, forms and tensors of a curved bundle, the pullback module
//! of a morphism, and the maps `Ψ_*`, `I`, `α`, `β` between them.
//!
//! Vector fields use the frame `{∇̃_i, ∂_(ξ_a)}` where, for a connection on
//! the fibre with `∇_(∂x_i) e_a = Σ_c Γ^c_(ia) e_c`,
//! `∇̃_i = ∂_(x_i) + Σ_b (∇_i ξ_b) ∂_(ξ_b)` and `∇_i ξ_b = -Σ_a Γ^b_(ia) ξ_a`.
//! The frame element `∂_(ξ_a)` has degree `k_a` and stands for `e_a`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::Zero;

use crate::dgmod::{tensor_module, tensor_position, Element, FreeModule, ModuleMap};
use crate::linalg::Matrix;
use crate::linfty::{base_var_name, lift, BResult, BundleError, CurvedBundle, LinftyMorphism};
use crate::manifold::{koszul_twist, DgManifold};
use crate::poly::Poly;
use crate::scalar::Q;

/// Connection on the fibre bundle: `(i, a) -> (c -> Γ^c_(ia))`, base polynomials.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FibreConnection {
    pub gamma: BTreeMap<(usize, usize), BTreeMap<usize, Poly>>,
}

impl FibreConnection {
    pub fn flat() -> FibreConnection {
        FibreConnection::default()
    }

    pub fn get(&self, i: usize, a: usize, c: usize) -> Poly {
        self.gamma.get(&(i, a)).and_then(|m| m.get(&c)).cloned().unwrap_or_default()
    }

    pub fn check_shape(&self, b: &CurvedBundle) -> BResult<()> {
        let degs = b.fibre_degrees();
        let m = b.base.dim();
        for ((i, a), img) in &self.gamma {
            if *i >= m || *a >= degs.len() {
                return Err(BundleError::Shape(format!("connection index ({i}, {a}) out of range")));
            }
            for (&c, p) in img {
                if c >= degs.len() || p.terms.keys().any(|mono| mono.len() != m) {
                    return Err(BundleError::Shape(format!("connection entry ({i}, {a}) -> {c} malformed")));
                }
                if !p.is_zero() && degs[c] != degs[*a] {
                    return Err(BundleError::Shape(format!("connection entry ({i}, {a}) -> {c} changes degree")));
                }
            }
        }
        Ok(())
    }
}

/// The `∇`-adapted frame of vector fields of a bundle.
#[derive(Debug, Clone)]
pub struct VectorFrame {
    pub mfd: Arc<DgManifold>,
    pub nbase: usize,
    /// `∇_i ξ_b` as functions.
    pub nabla_xi: Vec<Vec<Poly>>,
    /// Coordinate components of every frame field.
    pub fields: Vec<Vec<Poly>>,
    pub labels: Vec<String>,
    pub degrees: Vec<i32>,
}

impl VectorFrame {
    pub fn new(b: &CurvedBundle, mfd: Arc<DgManifold>, conn: &FibreConnection) -> BResult<VectorFrame> {
        conn.check_shape(b)?;
        let m = b.base.dim();
        let r = b.rank();
        let n = m + r;
        let sig = &mfd.sig;
        let nabla_xi: Vec<Vec<Poly>> = (0..m)
            .map(|i| {
                (0..r)
                    .map(|bb| {
                        let mut p = Poly::zero();
                        for a in 0..r {
                            let g = conn.get(i, a, bb);
                            if !g.is_zero() {
                                p.sub_assign(&sig.mul(&lift(&g, r), &sig.var(m + a)));
                            }
                        }
                        p
                    })
                    .collect()
            })
            .collect();
        let mut fields = Vec::new();
        let mut labels = Vec::new();
        let mut degrees = Vec::new();
        for i in 0..m {
            let mut f = vec![Poly::zero(); n];
            f[i] = sig.one();
            for bb in 0..r {
                f[m + bb] = nabla_xi[i][bb].clone();
            }
            fields.push(f);
            labels.push(base_var_name(i));
            degrees.push(0);
        }
        for (a, (d, l)) in b.generators().into_iter().enumerate() {
            fields.push(mfd.partial(m + a));
            labels.push(l);
            degrees.push(d);
        }
        Ok(VectorFrame { mfd, nbase: m, nabla_xi, fields, labels, degrees })
    }

    /// Frame coefficients of a vector field given by coordinate components.
    pub fn to_frame(&self, v: &[Poly]) -> Element {
        let m = self.nbase;
        let sig = &self.mfd.sig;
        let mut out: Element = v.to_vec();
        for i in 0..m {
            if v[i].is_zero() {
                continue;
            }
            for (bb, nx) in self.nabla_xi[i].iter().enumerate() {
                if !nx.is_zero() {
                    out[m + bb].sub_assign(&sig.mul(&v[i], nx));
                }
            }
        }
        out
    }

    /// Coordinate components of a frame combination.
    pub fn from_frame(&self, x: &Element) -> Vec<Poly> {
        let sig = &self.mfd.sig;
        let mut out = vec![Poly::zero(); self.mfd.ngen()];
        for (k, c) in x.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            for (u, f) in self.fields[k].iter().enumerate() {
                if !f.is_zero() {
                    out[u].add_assign(&sig.mul(c, f));
                }
            }
        }
        out
    }

    /// The DG module of vector fields with `D = [Q, -]` in this frame.
    pub fn module(&self) -> FreeModule {
        let diff = (0..self.fields.len())
            .map(|k| {
                let br = self.mfd.q_bracket(&self.fields[k], self.degrees[k]);
                self.to_frame(&br).into_iter().enumerate().filter(|(_, p)| !p.is_zero()).collect()
            })
            .collect();
        FreeModule::new(self.mfd.clone(), self.labels.clone(), self.degrees.clone(), diff)
    }
}

/// Vector fields, forms and tensors of one bundle with a chosen connection.
#[derive(Debug, Clone)]
pub struct TensorSpaces {
    pub bundle: Arc<CurvedBundle>,
    pub mfd: Arc<DgManifold>,
    pub frame: VectorFrame,
    pub vectors: Arc<FreeModule>,
}

impl TensorSpaces {
    pub fn new(bundle: Arc<CurvedBundle>, conn: &FibreConnection) -> BResult<TensorSpaces> {
        bundle.check()?;
        let mfd = Arc::new(bundle.manifold());
        let frame = VectorFrame::new(&bundle, mfd.clone(), conn)?;
        let vectors = Arc::new(frame.module());
        Ok(TensorSpaces { bundle, mfd, frame, vectors })
    }

    pub fn functions(&self) -> FreeModule {
        FreeModule::functions(self.mfd.clone())
    }

    pub fn forms(&self) -> FreeModule {
        tensor_module(&[], &[self.vectors.clone()])
    }

    /// `(p, q)`-tensors: `q` vector inputs, `p` vector outputs.
    pub fn tensors(&self, p: usize, q: usize) -> FreeModule {
        if p + q == 0 {
            return self.functions();
        }
        tensor_module(&vec![self.vectors.clone(); p], &vec![self.vectors.clone(); q])
    }
}

/// Pullback module `Γ(Ψ^* TN)` framed by `∂̃_u = Ψ^* ∘ ∂_u` over the source,
/// with `L(∂̃_u) = -(-1)^|∂_u| Σ_v Ψ^*(∂_u R^v) ∂̃_v`.
pub fn pullback_module(src: &Arc<DgManifold>, tgt: &DgManifold, images: &[Poly], labels: Vec<String>) -> FreeModule {
    let n = tgt.ngen();
    let mut degrees = Vec::new();
    let mut diff = Vec::new();
    for u in 0..n {
        let du = tgt.partial_degree(u);
        degrees.push(du);
        let mut row = BTreeMap::new();
        for v in 0..n {
            let d = tgt.sig.deriv(u, &tgt.q[v]);
            if d.is_zero() {
                continue;
            }
            let mut p = tgt.sig.subst(&d, images, &src.sig);
            if du.rem_euclid(2) == 0 {
                p = p.neg();
            }
            row.insert(v, p);
        }
        diff.push(row);
    }
    FreeModule::new(src.clone(), labels, degrees, diff)
}

/// Everything attached to a morphism with chosen connections on both sides.
#[derive(Debug, Clone)]
pub struct MorphismTensors {
    pub morphism: LinftyMorphism,
    pub source: TensorSpaces,
    pub target: TensorSpaces,
    /// Values of the pullback on target coordinates.
    pub pullback: Vec<Poly>,
    pub pb: Arc<FreeModule>,
    /// Frame coefficients `Ψ_*(F_k)` in the `∂̃_u` frame.
    pub push: Vec<Element>,
}

impl MorphismTensors {
    pub fn new(
        morphism: LinftyMorphism,
        source_conn: &FibreConnection,
        target_conn: &FibreConnection,
    ) -> BResult<MorphismTensors> {
        morphism.check()?;
        let source = TensorSpaces::new(morphism.source.clone(), source_conn)?;
        let target = TensorSpaces::new(morphism.target.clone(), target_conn)?;
        let pullback = morphism.pullback_images();
        let pb = Arc::new(pullback_module(&source.mfd, &target.mfd, &pullback, target.frame.labels.clone()));
        let push = source
            .frame
            .fields
            .iter()
            .map(|f| pullback.iter().map(|img| source.mfd.vf_apply(f, img)).collect())
            .collect();
        Ok(MorphismTensors { morphism, source, target, pullback, pb, push })
    }

    pub fn push_forward(&self) -> ModuleMap {
        ModuleMap::new(self.source.vectors.clone(), self.pb.clone(), 0, None, self.push.clone())
    }

    /// Coordinate components of the target frame, pulled back.
    fn target_frame_pulled(&self) -> Vec<Element> {
        let (tsig, ssig) = (&self.target.mfd.sig, &self.source.mfd.sig);
        self.target
            .frame
            .fields
            .iter()
            .map(|f| f.iter().map(|c| tsig.subst(c, &self.pullback, ssig)).collect())
            .collect()
    }

    pub fn natural_map(&self) -> ModuleMap {
        ModuleMap::new(
            self.target.vectors.clone(),
            self.pb.clone(),
            0,
            Some(self.pullback.clone()),
            self.target_frame_pulled(),
        )
    }

    /// Coefficients of a pullback-module element in the pulled-back target frame.
    pub fn to_target_frame(&self, v: &Element) -> Element {
        let (tsig, ssig) = (&self.target.mfd.sig, &self.source.mfd.sig);
        let m = self.target.frame.nbase;
        let mut out = v.clone();
        for j in 0..m {
            if v[j].is_zero() {
                continue;
            }
            for (c, nx) in self.target.frame.nabla_xi[j].iter().enumerate() {
                let pulled = tsig.subst(nx, &self.pullback, ssig);
                if !pulled.is_zero() {
                    out[m + c].sub_assign(&ssig.mul(&v[j], &pulled));
                }
            }
        }
        out
    }

    /// `γ(∂_(x_i))`: fibre part of `Ψ_*(∇̃_i)` in the pulled-back target frame.
    pub fn gamma(&self) -> Vec<Vec<Poly>> {
        let mt = self.target.frame.nbase;
        (0..self.source.frame.nbase).map(|i| self.to_target_frame(&self.push[i])[mt..].to_vec()).collect()
    }

    pub fn mixed(&self, p: usize, q: usize) -> FreeModule {
        tensor_module(&vec![self.pb.clone(); p], &vec![self.source.vectors.clone(); q])
    }

    /// `α(F)(X..) = Ψ_* ∘ F(X..)` from source `(p, q)`-tensors to the mixed complex.
    pub fn alpha(&self, p: usize, q: usize, source: Arc<FreeModule>, mixed: Arc<FreeModule>) -> ModuleMap {
        let sv = vec![self.source.vectors.clone(); p];
        let si = vec![self.source.vectors.clone(); q];
        let pbs = vec![self.pb.clone(); p];
        let sig = &self.source.mfd.sig;
        let ns = self.source.vectors.rank();
        let mut images = Vec::new();
        for o in crate::dgmod::tuples(ns, p) {
            for i in crate::dgmod::tuples(ns, q) {
                let mut img = mixed.zero_element();
                for (u, c) in self.expand_outputs(&o, &self.push, sig) {
                    let pos = tensor_position(&pbs, &si, &u, &i);
                    img[pos].add_assign(&c);
                }
                debug_assert_eq!(images.len(), tensor_position(&sv, &si, &o, &i));
                images.push(img);
            }
        }
        ModuleMap::new(source, mixed, 0, None, images)
    }

    /// Expands `V_(o_1) ⊗ ... ⊗ V_(o_p)` with `V_k = Σ_u c_(u,k) ∂̃_u` into
    /// `Σ_u (±Π c) ∂̃_(u_1) ⊗ ... ⊗ ∂̃_(u_p)`.
    fn expand_outputs(&self, o: &[usize], vecs: &[Element], sig: &crate::poly::Signature) -> Vec<(Vec<usize>, Poly)> {
        let mut acc: Vec<(Vec<usize>, Poly, i32)> = vec![(Vec::new(), sig.one(), 0)];
        for &k in o {
            let mut next = Vec::new();
            for (u, c, pref) in &acc {
                for (v, coef) in vecs[k].iter().enumerate() {
                    if coef.is_zero() {
                        continue;
                    }
                    let t = koszul_twist(sig, coef, *pref);
                    let prod = sig.mul(c, &t);
                    if prod.is_zero() {
                        continue;
                    }
                    let mut u2 = u.clone();
                    u2.push(v);
                    next.push((u2, prod, pref + self.pb.degrees[v]));
                }
            }
            acc = next;
        }
        acc.into_iter().map(|(u, c, _)| (u, c)).collect()
    }

    /// `β(G)(Y..) = G̃(Ψ_* Y..)` from target `(p, q)`-tensors to the mixed complex.
    pub fn beta(&self, p: usize, q: usize, source: Arc<FreeModule>, mixed: Arc<FreeModule>) -> ModuleMap {
        let tv = vec![self.target.vectors.clone(); p];
        let ti = vec![self.target.vectors.clone(); q];
        let pbs = vec![self.pb.clone(); p];
        let si = vec![self.source.vectors.clone(); q];
        let sig = &self.source.mfd.sig;
        let nt = self.target.vectors.rank();
        let ns = self.source.vectors.rank();
        let pulled = self.target_frame_pulled();
        // ψ'_(w, j): coefficient of the pulled-back target frame element w in Ψ_* F_j
        let psi: Vec<Element> = self.push.iter().map(|v| self.to_target_frame(v)).collect();
        let tdeg = &self.target.vectors.degrees;
        let mut images = Vec::new();
        for o in crate::dgmod::tuples(nt, p) {
            let outs = self.expand_outputs(&o, &pulled, sig);
            let o_deg: i32 = o.iter().map(|&k| tdeg[k]).sum();
            for w in crate::dgmod::tuples(nt, q) {
                let e_deg = o_deg - w.iter().map(|&k| tdeg[k]).sum::<i32>();
                let mut img = mixed.zero_element();
                for j in crate::dgmod::tuples(ns, q) {
                    let mut coef = sig.one();
                    let mut pref = e_deg;
                    for (s, &js) in j.iter().enumerate() {
                        let c = &psi[js][w[s]];
                        if c.is_zero() {
                            coef = Poly::zero();
                            break;
                        }
                        coef = sig.mul(&coef, &koszul_twist(sig, c, pref));
                        pref += tdeg[w[s]];
                    }
                    if coef.is_zero() {
                        continue;
                    }
                    for (u, c) in &outs {
                        let pos = tensor_position(&pbs, &si, u, &j);
                        img[pos].add_assign(&sig.mul(&coef, c));
                    }
                }
                debug_assert_eq!(images.len(), tensor_position(&tv, &ti, &o, &w));
                images.push(img);
            }
        }
        ModuleMap::new(source, mixed, 0, Some(self.pullback.clone()), images)
    }
}

/// Permutation of the input slots of a tensor module built over repeated
/// copies of one module: `(σF)(X_1, .., X_q) = ± F(X_σ(1), .., X_σ(q))`.
pub fn permute_inputs(t: Arc<FreeModule>, outs: &[Arc<FreeModule>], ins: &[Arc<FreeModule>], perm: &[usize]) -> ModuleMap {
    let sig = &t.mfd.sig;
    let o_all = product(outs);
    let i_all = product(ins);
    let mut images = vec![Vec::new(); t.rank()];
    for o in &o_all {
        for i in &i_all {
            // (σE)(F_j) = sign · E(F_(j∘σ)), nonzero when j_(σ(s)) = i_s
            let mut j = vec![0; i.len()];
            for (s, &ps) in perm.iter().enumerate() {
                j[ps] = i[s];
            }
            let degs: Vec<i64> = j.iter().enumerate().map(|(s, &k)| ins[s].degrees[k] as i64).collect();
            let neg = crate::signs::permutation_sign(&degs, perm, false);
            let mut img = t.zero_element();
            img[tensor_position(outs, ins, o, &j)] = sig.one().signed(neg);
            images[tensor_position(outs, ins, o, i)] = img;
        }
    }
    ModuleMap::new(t.clone(), t, 0, None, images)
}

fn product(fs: &[Arc<FreeModule>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for f in fs {
        out = out
            .into_iter()
            .flat_map(|t: Vec<usize>| {
                (0..f.rank()).map(move |k| {
                    let mut u = t.clone();
                    u.push(k);
                    u
                })
            })
            .collect();
    }
    out
}

/// Adapted connection for a linear morphism with constant `φ_1`: flat on
/// `ker φ_1` and the pullback of the target connection on the image of the
/// splitting `σ` given by columns (one per target generator).
pub fn adapted_connection(
    morphism: &LinftyMorphism,
    target_conn: &FibreConnection,
    splitting: &[Vec<Q>],
) -> BResult<FibreConnection> {
    let src = &morphism.source;
    let tgt = &morphism.target;
    let m = src.base.dim();
    let r = src.rank();
    let phi = constant_linear_part(morphism)?;
    let kernel = phi.kernel();
    let split = Matrix::from_columns(r, splitting);
    if phi.mul(&split) != Matrix::identity(tgt.rank()) {
        return Err(BundleError::Shape("splitting is not a right inverse of φ₁".into()));
    }
    let mut cols: Vec<Vec<Q>> = kernel.clone();
    cols.extend(splitting.iter().cloned());
    let basis = Matrix::from_columns(r, &cols);
    let inv = crate::gen::inverse(&basis);
    let bsig = src.base_sig();
    let tsig = tgt.base_sig();
    let nk = kernel.len();
    let mut conn = FibreConnection::default();
    for i in 0..m {
        // Γ̂_i in the adapted basis, then Γ_i = B Γ̂_i B^-1
        let mut hat: BTreeMap<(usize, usize), Poly> = BTreeMap::new();
        for c in 0..tgt.rank() {
            for d in 0..tgt.rank() {
                let mut p = Poly::zero();
                for (j, fj) in morphism.base_map.iter().enumerate() {
                    let g = target_conn.get(j, c, d);
                    if g.is_zero() {
                        continue;
                    }
                    let pulled = tsig.subst(&g, &morphism.base_map, &bsig);
                    p.add_assign(&bsig.mul(&bsig.deriv(i, fj), &pulled));
                }
                if !p.is_zero() {
                    hat.insert((nk + d, nk + c), p);
                }
            }
        }
        for ((row, col), p) in &hat {
            for a in 0..r {
                let w = inv.get(*col, a);
                if w.is_zero() {
                    continue;
                }
                for cc in 0..r {
                    let v = basis.get(cc, *row);
                    if v.is_zero() {
                        continue;
                    }
                    let e = conn.gamma.entry((i, a)).or_default().entry(cc).or_default();
                    e.add_assign(&p.scale(&(&w * &v)));
                }
            }
        }
    }
    for img in conn.gamma.values_mut() {
        img.retain(|_, p| !p.is_zero());
    }
    conn.gamma.retain(|_, img| !img.is_empty());
    Ok(conn)
}

/// `φ_1` as a constant matrix (target × source), or an error if it depends
/// on the base point.
pub fn constant_linear_part(morphism: &LinftyMorphism) -> BResult<Matrix> {
    let m = morphism.source.base.dim();
    let mut mat = Matrix::zeros(morphism.target.rank(), morphism.source.rank());
    if let Some(tab) = morphism.phi.get(1) {
        for (idx, img) in tab {
            for (&t, p) in img {
                if !p.is_constant() {
                    return Err(BundleError::Shape("φ₁ is not constant".into()));
                }
                let c = p.coeff(&vec![0u8; m]);
                mat.add_to(t, idx[0], &c);
            }
        }
    }
    Ok(mat)
}

/// Jacobian of the base map as a constant matrix, or an error if `f` is not affine.
pub fn constant_jacobian(morphism: &LinftyMorphism) -> BResult<Matrix> {
    let sig = morphism.source.base_sig();
    let m = morphism.source.base.dim();
    let mut jac = Matrix::zeros(morphism.base_map.len(), m);
    for (j, f) in morphism.base_map.iter().enumerate() {
        for i in 0..m {
            let d = sig.deriv(i, f);
            if !d.is_constant() {
                return Err(BundleError::Shape("base map is not affine".into()));
            }
            jac.add_to(j, i, &d.coeff(&vec![0u8; m]));
        }
    }
    Ok(jac)
}

/// `ker Φ_*` for a linear fibration with affine `f` and constant `φ_1`,
/// inside the vector fields of the source in an adapted frame.
pub fn kernel_module(mt: &MorphismTensors) -> BResult<(FreeModule, Matrix)> {
    let f = &mt.morphism;
    if !f.is_linear() {
        return Err(BundleError::Shape("morphism is not linear".into()));
    }
    if let Some(bad) = mt.gamma().iter().flatten().find(|p| !p.is_zero()) {
        return Err(BundleError::Shape(format!("γ does not vanish for this connection: {}", mt.source.mfd.sig.fmt(bad))));
    }
    let jac = constant_jacobian(f)?;
    let phi = constant_linear_part(f)?;
    let m = f.source.base.dim();
    let n = m + f.source.rank();
    let mut cols = Vec::new();
    let mut labels = Vec::new();
    for (s, v) in jac.kernel().into_iter().enumerate() {
        let mut c = vec![Q::zero(); n];
        c[..m].clone_from_slice(&v);
        cols.push(c);
        labels.push(format!("kx{s}"));
    }
    for (s, v) in phi.kernel().into_iter().enumerate() {
        let mut c = vec![Q::zero(); n];
        c[m..].clone_from_slice(&v);
        cols.push(c);
        labels.push(format!("k{s}"));
    }
    mt.source.vectors.submodule(&cols, labels).map_err(BundleError::Shape)
}
