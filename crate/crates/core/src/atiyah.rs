//! Affine connections on the total space, Atiyah cocycles `L_Q ∇`, supertraces
//! of their powers, truncated Todd cocycles, and the comparison of Atiyah
//! cocycles across a linear fibration.
//!
//! A connection is stored on coordinate derivations and extended by
//! `∇_(fX) Y = f ∇_X Y` and `∇_X (f Y) = X(f) Y + (-1)^(|X||f|) f ∇_X Y`.
//! Tensors are elements of the tensor modules of `dgmod`, evaluated with
//! `(cE)(g X, h Y) = c (-1)^(|E||g|) g (-1)^((|E|+|X|)|h|) h E(X, Y)`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::dgmod::{tensor_module, tensor_position, tuple_index, tuples, Element, FreeModule, Preimage};
use crate::graded::GradedError;
use crate::ladder::{coords, IdentityCheck};
use crate::linalg::Matrix;
use crate::linfty::{BundleError, LinftyMorphism};
use crate::manifold::{koszul_twist, DgManifold};
use crate::poly::{Poly, Signature};
use crate::scalar::{binomial, factorial, q, qf, Q};
use crate::series;
use crate::tensors::{kernel_module, FibreConnection, MorphismTensors, TensorSpaces};

#[derive(Debug, Error)]
pub enum AtiyahError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Graded(#[from] GradedError),
    #[error("invalid connection: {0}")]
    Connection(String),
    #[error("{name} failed: {detail}")]
    Identity { name: String, detail: String },
    #[error("element is not a cocycle of degree {0}")]
    Degree(i32),
    #[error("class comparison needs a point base")]
    NotPoint,
    #[error("unsupported input: {0}")]
    Unsupported(String),
}

pub type AResult<T> = Result<T, AtiyahError>;

fn check(name: impl Into<String>, failure: Option<String>) -> IdentityCheck {
    IdentityCheck { name: name.into(), passed: failure.is_none(), detail: failure.unwrap_or_default() }
}

fn vf_is_zero(v: &[Poly]) -> bool {
    v.iter().all(|p| p.is_zero())
}

fn fmt_vf(sig: &Signature, v: &[Poly]) -> String {
    let parts: Vec<String> = v
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_zero())
        .map(|(w, p)| format!("({})∂{}", sig.fmt(p), sig.vars()[w].name))
        .collect();
    if parts.is_empty() {
        "0".into()
    } else {
        parts.join(" + ")
    }
}

/// Affine connection given by `∇_(∂u) ∂v` on coordinate derivations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AffineConnection {
    /// `(u, v) -> ∇_(∂u) ∂v` in coordinate components; absent pairs are zero.
    pub christoffel: BTreeMap<(usize, usize), Vec<Poly>>,
}

impl AffineConnection {
    pub fn flat() -> AffineConnection {
        AffineConnection::default()
    }

    pub fn tabulate(n: usize, mut f: impl FnMut(usize, usize) -> Vec<Poly>) -> AffineConnection {
        let mut christoffel = BTreeMap::new();
        for u in 0..n {
            for v in 0..n {
                let img = f(u, v);
                if !vf_is_zero(&img) {
                    christoffel.insert((u, v), img);
                }
            }
        }
        AffineConnection { christoffel }
    }

    pub fn get(&self, u: usize, v: usize, n: usize) -> Vec<Poly> {
        self.christoffel.get(&(u, v)).cloned().unwrap_or_else(|| vec![Poly::zero(); n])
    }

    /// Shape and degree 0: the `∂w` component of `∇_(∂u) ∂v` has degree
    /// `|∂u| + |∂v| - |∂w|`.
    pub fn check(&self, mfd: &DgManifold) -> AResult<()> {
        let n = mfd.ngen();
        let name = |u: usize| mfd.sig.vars()[u].name.clone();
        for (&(u, v), img) in &self.christoffel {
            if u >= n || v >= n || img.len() != n {
                return Err(AtiyahError::Connection(format!("entry ({u}, {v}) does not fit {n} coordinates")));
            }
            for (w, p) in img.iter().enumerate() {
                if p.terms.keys().any(|m| m.len() != n) {
                    return Err(AtiyahError::Connection(format!("∇_∂{} ∂{} has a malformed coefficient", name(u), name(v))));
                }
                let want = mfd.partial_degree(u) + mfd.partial_degree(v) - mfd.partial_degree(w);
                if p.terms.keys().any(|m| mfd.sig.mono_degree(m) != want) {
                    return Err(AtiyahError::Connection(format!(
                        "∇_∂{} ∂{} has a component along ∂{} of degree other than {want}",
                        name(u),
                        name(v),
                        name(w)
                    )));
                }
            }
        }
        Ok(())
    }

    /// `∇_X Y` for coordinate components `x`, `y`.
    pub fn covariant(&self, mfd: &DgManifold, x: &[Poly], y: &[Poly]) -> Vec<Poly> {
        let sig = &mfd.sig;
        let mut out: Vec<Poly> = y.iter().map(|yv| mfd.vf_apply(x, yv)).collect();
        for (&(u, v), img) in &self.christoffel {
            if x[u].is_zero() || y[v].is_zero() {
                continue;
            }
            let c = sig.mul(&x[u], &koszul_twist(sig, &y[v], mfd.partial_degree(u)));
            for (w, g) in img.iter().enumerate() {
                if !g.is_zero() {
                    out[w].add_assign(&sig.mul(&c, g));
                }
            }
        }
        out
    }

    /// `∇ + A` for a `(1,2)`-tensor `A` of degree 0 in the frame of `spaces`.
    pub fn plus_tensor(&self, spaces: &TensorSpaces, a: &Element) -> AffineConnection {
        let mfd = &spaces.mfd;
        let n = mfd.ngen();
        let frame: Vec<Element> = (0..n).map(|u| spaces.frame.to_frame(&mfd.partial(u))).collect();
        AffineConnection::tabulate(n, |u, v| {
            let extra = spaces.frame.from_frame(&evaluate_bilinear(spaces, a, &frame[u], &frame[v]));
            self.get(u, v, n).iter().zip(&extra).map(|(g, e)| g.plus(e)).collect()
        })
    }
}

/// `F(X, Y)` for a `(1,2)`-tensor of `spaces`; inputs and output in frame
/// coefficients.
pub fn evaluate_bilinear(spaces: &TensorSpaces, f: &Element, x: &Element, y: &Element) -> Element {
    let v = &spaces.vectors;
    let sig = &spaces.mfd.sig;
    let n = v.rank();
    let outs = [v.clone()];
    let ins = [v.clone(), v.clone()];
    let mut out = v.zero_element();
    for o in 0..n {
        for a in (0..n).filter(|&a| !x[a].is_zero()) {
            for b in (0..n).filter(|&b| !y[b].is_zero()) {
                let c = &f[tensor_position(&outs, &ins, &[o], &[a, b])];
                if c.is_zero() {
                    continue;
                }
                let e = v.degrees[o] - v.degrees[a] - v.degrees[b];
                let g = koszul_twist(sig, &x[a], e);
                let h = koszul_twist(sig, &y[b], e + v.degrees[a]);
                out[o].add_assign(&sig.mul_all(&[c.clone(), g, h]));
            }
        }
    }
    out
}

/// `[Q, ∇_X Y] - ∇_([Q,X]) Y - (-1)^|X| ∇_X [Q, Y]` for homogeneous `X`, `Y`.
fn atiyah_value(
    mfd: &DgManifold,
    nabla: &dyn Fn(&[Poly], &[Poly]) -> Vec<Poly>,
    x: &[Poly],
    dx: i32,
    y: &[Poly],
    dy: i32,
) -> Vec<Poly> {
    let first = mfd.q_bracket(&nabla(x, y), dx + dy);
    let second = nabla(&mfd.q_bracket(x, dx), y);
    let third = nabla(x, &mfd.q_bracket(y, dy));
    (0..mfd.ngen())
        .map(|w| {
            let mut p = first[w].minus(&second[w]);
            if dx.rem_euclid(2) == 1 {
                p.add_assign(&third[w]);
            } else {
                p.sub_assign(&third[w]);
            }
            p
        })
        .collect()
}

/// The Atiyah cocycle of a connection as an element of the `(1,2)`-tensors.
#[derive(Debug, Clone)]
pub struct AtiyahCocycle {
    pub spaces: TensorSpaces,
    pub module: Arc<FreeModule>,
    pub element: Element,
    pub checks: Vec<IdentityCheck>,
}

impl AtiyahCocycle {
    pub fn is_zero(&self) -> bool {
        FreeModule::is_zero(&self.element)
    }

    /// `At(∂u, ∂v)` in coordinate components, indexed `[u][v]`.
    pub fn table(&self) -> Vec<Vec<Vec<Poly>>> {
        let mfd = &self.spaces.mfd;
        let n = mfd.ngen();
        let frame: Vec<Element> = (0..n).map(|u| self.spaces.frame.to_frame(&mfd.partial(u))).collect();
        (0..n)
            .map(|u| {
                (0..n)
                    .map(|v| self.spaces.frame.from_frame(&evaluate_bilinear(&self.spaces, &self.element, &frame[u], &frame[v])))
                    .collect()
            })
            .collect()
    }

    /// `At^k` as a sparse `(1, k+1)`-tensor, keyed by `(output, inputs)`:
    /// `At^k(X_1, .., X_k, Y) = At(X_1, At^(k-1)(X_2, .., X_k, Y))`.
    pub fn power(&self, k: usize) -> HashMap<(usize, Vec<usize>), Poly> {
        assert!(k >= 1);
        let v = &self.spaces.vectors;
        let sig = &self.spaces.mfd.sig;
        let n = v.rank();
        let outs = [v.clone()];
        let ins = [v.clone(), v.clone()];
        // (j, o) -> [(o', At[o', (j, o)])]
        let mut by_input: HashMap<(usize, usize), Vec<(usize, Poly)>> = HashMap::new();
        let mut current = HashMap::new();
        for o in 0..n {
            for j in 0..n {
                for a in 0..n {
                    let c = &self.element[tensor_position(&outs, &ins, &[o], &[j, a])];
                    if !c.is_zero() {
                        by_input.entry((j, a)).or_default().push((o, c.clone()));
                        current.insert((o, vec![j, a]), c.clone());
                    }
                }
            }
        }
        for _ in 1..k {
            let mut next: HashMap<(usize, Vec<usize>), Poly> = HashMap::new();
            for ((o2, rest), c) in &current {
                for j in 0..n {
                    let Some(entries) = by_input.get(&(j, *o2)) else { continue };
                    let tc = koszul_twist(sig, c, 1 + v.degrees[j]);
                    let mut idx = vec![j];
                    idx.extend_from_slice(rest);
                    for (o, a) in entries {
                        next.entry((*o, idx.clone())).or_default().add_assign(&sig.mul(&tc, a));
                    }
                }
            }
            next.retain(|_, p| !p.is_zero());
            current = next;
        }
        current
    }
}

/// Atiyah cocycle of `conn` in the tensor spaces of a bundle, with the
/// bilinearity and closedness identities checked.
pub fn atiyah_cocycle(spaces: &TensorSpaces, conn: &AffineConnection) -> AResult<AtiyahCocycle> {
    let mfd = &spaces.mfd;
    conn.check(mfd)?;
    let sig = &mfd.sig;
    let n = mfd.ngen();
    let nabla = |x: &[Poly], y: &[Poly]| conn.covariant(mfd, x, y);
    let module = Arc::new(spaces.tensors(1, 2));
    let v = &spaces.vectors;
    let outs = [v.clone()];
    let ins = [v.clone(), v.clone()];
    let mut element = module.zero_element();
    for a in 0..v.rank() {
        for b in 0..v.rank() {
            let (fa, fb) = (&spaces.frame.fields[a], &spaces.frame.fields[b]);
            let val = atiyah_value(mfd, &nabla, fa, v.degrees[a], fb, v.degrees[b]);
            for (o, c) in spaces.frame.to_frame(&val).into_iter().enumerate() {
                element[tensor_position(&outs, &ins, &[o], &[a, b])] = c;
            }
        }
    }

    let mut checks = Vec::new();
    // At(f ∂u, ∂v) = (-1)^|f| f At(∂u, ∂v) and At(∂u, f ∂v) = (-1)^(|f|(1+|∂u|)) f At(∂u, ∂v)
    let mut failure = None;
    'outer: for u in 0..n {
        for w in 0..n {
            let (pu, pw) = (mfd.partial(u), mfd.partial(w));
            let (du, dw) = (mfd.partial_degree(u), mfd.partial_degree(w));
            let base = atiyah_value(mfd, &nabla, &pu, du, &pw, dw);
            for g in 0..n {
                let f = sig.var(g);
                let df = mfd.gen_degree(g);
                let left = atiyah_value(mfd, &nabla, &mfd.mul_vf(&f, &pu), df + du, &pw, dw);
                let right = atiyah_value(mfd, &nabla, &pu, du, &mfd.mul_vf(&f, &pw), df + dw);
                let scaled = mfd.mul_vf(&f, &base);
                let first: Vec<Poly> = scaled.iter().map(|p| p.signed(df.rem_euclid(2) == 1)).collect();
                let signed: Vec<Poly> = scaled.iter().map(|p| p.signed((df * (1 + du)).rem_euclid(2) == 1)).collect();
                let names = (sig.vars()[g].name.clone(), sig.vars()[u].name.clone(), sig.vars()[w].name.clone());
                if left != first {
                    failure = Some(format!("At({} ∂{}, ∂{}) = {}", names.0, names.1, names.2, fmt_vf(sig, &left)));
                    break 'outer;
                }
                if right != signed {
                    failure = Some(format!("At(∂{}, {} ∂{}) = {}", names.1, names.0, names.2, fmt_vf(sig, &right)));
                    break 'outer;
                }
            }
        }
    }
    checks.push(check("At is function-bilinear", failure));
    let image = module.apply(&element);
    let failure = image
        .iter()
        .position(|p| !p.is_zero())
        .map(|k| format!("L_Q At has {} on {}", sig.fmt(&image[k]), module.labels[k]));
    checks.push(check("L_Q At = 0", failure));
    if let Some(bad) = checks.iter().find(|c| !c.passed) {
        return Err(AtiyahError::Identity { name: bad.name.clone(), detail: bad.detail.clone() });
    }
    Ok(AtiyahCocycle { spaces: spaces.clone(), module, element, checks })
}

/// Result of comparing two cocycles of a Point-base complex.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassComparison {
    /// `c1 - c2 = D h`.
    Cohomologous(Element),
    /// `c1 - c2` is not in the image: `rank D < rank [D | c1 - c2]`.
    Distinct { rank: usize, augmented_rank: usize },
}

/// Decides whether two degree-`degree` cocycles of `module` are cohomologous.
pub fn compare_classes(module: &FreeModule, degree: i32, c1: &Element, c2: &Element) -> AResult<ClassComparison> {
    if !module.mfd.is_point() {
        return Err(AtiyahError::NotPoint);
    }
    for c in [c1, c2] {
        if c.len() != module.rank() || module.to_vector(degree, c).is_err() || !FreeModule::is_zero(&module.apply(c)) {
            return Err(AtiyahError::Degree(degree));
        }
    }
    let diff = FreeModule::sub(c1, c2);
    Ok(match module.preimage(degree - 1, &diff, 0)? {
        Preimage::Found(h) => ClassComparison::Cohomologous(h),
        Preimage::Obstructed { rank, augmented_rank, .. } => ClassComparison::Distinct { rank, augmented_rank },
    })
}

/// `B_0 .. B_n` from `Σ_(j=0)^(m) C(m+1, j) B_j = 0`, so `B_1 = -1/2`.
pub fn bernoulli(n: usize) -> Vec<Q> {
    let mut b = vec![Q::one()];
    for m in 1..=n {
        let s = (0..m).fold(Q::zero(), |acc, j| acc + binomial(m as u32 + 1, j as u32) * &b[j]);
        b.push(-s / q(m as i64 + 1));
    }
    b
}

/// Coefficient `-B_k / (k k!)` of `str(At^k)` in the logarithm of Td.
pub fn todd_coefficient(bern: &[Q], k: usize) -> Q {
    -&bern[k] / (q(k as i64) * factorial(k as u32))
}

/// `x / (1 - e^(-x))` against `exp(Σ_k -B_k x^k / (k k!))` up to `x^order`.
pub fn todd_series_identity(order: usize) -> bool {
    let sig = Signature::new(vec![]);
    let bern = bernoulli(order);
    let mut neg_x = series::zero(order + 1);
    if order >= 1 {
        neg_x[1] = sig.constant(-Q::one());
    }
    // (1 - e^(-x)) / x, one order deeper before dividing by x
    let e = series::exp(&sig, &neg_x);
    let quotient: series::Series = (1..=order + 1).map(|k| e[k].neg()).collect();
    let Some(lhs) = series::inverse(&sig, &quotient) else { return false };
    let mut log = series::zero(order);
    for k in 1..=order {
        log[k] = sig.constant(todd_coefficient(&bern, k));
    }
    lhs == series::exp(&sig, &log)
}

/// A closed `(0,k)`-tensor: the supertrace of `At^k`.
#[derive(Debug, Clone)]
pub struct ScalarCocycle {
    pub k: usize,
    pub module: Arc<FreeModule>,
    pub element: Element,
    pub closed: bool,
}

/// `str(At^k)(X..) = Σ_a (-1)^|f_a| At^k(X.., f_a)_a` for `k = 1..=order`,
/// the supertraces for distinct `k` computed on separate threads.
pub fn scalar_cocycles(at: &AtiyahCocycle, order: usize) -> Vec<ScalarCocycle> {
    let mut powers = Vec::new();
    for k in 1..=order {
        powers.push(at.power(k));
    }
    let v = &at.spaces.vectors;
    let n = v.rank();
    std::thread::scope(|scope| {
        let handles: Vec<_> = powers
            .iter()
            .enumerate()
            .map(|(i, pw)| {
                scope.spawn(move || {
                    let k = i + 1;
                    let module = Arc::new(at.spaces.tensors(0, k));
                    let mut element = module.zero_element();
                    for ((o, idx), c) in pw {
                        if idx[k] != *o {
                            continue;
                        }
                        let p = c.signed(v.degrees[*o].rem_euclid(2) == 1);
                        element[tuple_index(n, &idx[..k])].add_assign(&p);
                    }
                    let closed = FreeModule::is_zero(&module.apply(&element));
                    ScalarCocycle { k, module, element, closed }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("supertrace thread")).collect()
    })
}

/// `(s ⊗ t)(X.., Y..) = (-1)^(|t| Σ|X|) s(X..) t(Y..)` for forms given on the
/// frame, with `t` homogeneous of degree `t_deg`.
fn form_product(sig: &Signature, vdeg: &[i32], s: &Element, ks: usize, t: &Element, kt: usize, t_deg: i32) -> Element {
    let n = vdeg.len();
    let mut out = vec![Poly::zero(); n.pow((ks + kt) as u32)];
    for i in tuples(n, ks) {
        let a = &s[tuple_index(n, &i)];
        if a.is_zero() {
            continue;
        }
        let shift: i32 = i.iter().map(|&x| vdeg[x]).sum();
        let neg = (t_deg * shift).rem_euclid(2) == 1;
        for j in tuples(n, kt) {
            let b = &t[tuple_index(n, &j)];
            if b.is_zero() {
                continue;
            }
            let mut ij = i.clone();
            ij.extend_from_slice(&j);
            out[tuple_index(n, &ij)].add_assign(&sig.mul(a, b).signed(neg));
        }
    }
    out
}

/// `c_k = factor · (i/2π)^k · str(At^k)`; the unit `(i/2π)^k` stays symbolic.
#[derive(Debug, Clone, PartialEq)]
pub struct ChernTerm {
    pub k: usize,
    pub factor: Q,
    pub tag: String,
}

/// `Td = exp(-Σ_k B_k/(k k!) str(At^k))` truncated at form degree `order`.
#[derive(Debug, Clone)]
pub struct ToddTruncation {
    pub order: usize,
    pub bernoulli: Vec<Q>,
    pub scalars: Vec<ScalarCocycle>,
    pub chern: Vec<ChernTerm>,
    /// Components by form degree `0..=order`; degree `k` lives in `modules[k]`.
    pub components: Vec<Element>,
    /// `Td^(1/2) = exp(log(Td) / 2)`, by form degree.
    pub sqrt_components: Vec<Element>,
    pub modules: Vec<Arc<FreeModule>>,
    /// Degrees `k` with `str(At^k) = 0` identically.
    pub vanishing: Vec<usize>,
    /// Degrees `k` where the k-forms have nothing in internal degree `k`:
    /// functions sit in degrees <= 0 and every frame k-form in degree <= 0,
    /// so `str(At^k)` is zero for degree reasons alone.
    pub degree_forced: Vec<usize>,
    pub checks: Vec<IdentityCheck>,
}

impl ToddTruncation {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn is_one(&self) -> bool {
        self.components[0] == vec![self.modules[0].mfd.sig.one()]
            && self.components[1..].iter().all(FreeModule::is_zero)
    }
}

/// `exp(log)` in the tensor algebra of forms, truncated at form degree `order`.
fn exp_forms(sig: &Signature, vdeg: &[i32], modules: &[Arc<FreeModule>], log: &[Element], order: usize) -> Vec<Element> {
    let mut components: Vec<Element> = modules.iter().map(|m| m.zero_element()).collect();
    components[0] = vec![sig.one()];
    let mut power = components.clone();
    for m in 1..=order {
        let mut next: Vec<Element> = modules.iter().map(|md| md.zero_element()).collect();
        for (a, pa) in power.iter().enumerate() {
            if FreeModule::is_zero(pa) {
                continue;
            }
            for (b, lb) in log.iter().enumerate().skip(1) {
                if a + b > order || FreeModule::is_zero(lb) {
                    continue;
                }
                let prod = form_product(sig, vdeg, pa, a, lb, b, b as i32);
                next[a + b] = FreeModule::add(&next[a + b], &prod);
            }
        }
        let inv = Q::one() / q(m as i64);
        power = next.iter().map(|x| x.iter().map(|p| p.scale(&inv)).collect()).collect();
        for (k, x) in power.iter().enumerate() {
            components[k] = FreeModule::add(&components[k], x);
        }
    }
    components
}

pub fn todd_truncation(at: &AtiyahCocycle, order: usize) -> AResult<ToddTruncation> {
    if order == 0 {
        return Err(AtiyahError::Unsupported("Todd truncation order must be at least 1".into()));
    }
    let sig = &at.spaces.mfd.sig;
    let vdeg = at.spaces.vectors.degrees.clone();
    let bern = bernoulli(order);
    let scalars = scalar_cocycles(at, order);
    let mut modules = vec![Arc::new(at.spaces.functions())];
    modules.extend(scalars.iter().map(|s| s.module.clone()));

    // log Td by form degree, then exp in the tensor algebra
    let mut log: Vec<Element> = modules.iter().map(|m| m.zero_element()).collect();
    for s in &scalars {
        let c = todd_coefficient(&bern, s.k);
        log[s.k] = s.element.iter().map(|p| p.scale(&c)).collect();
    }
    let components = exp_forms(sig, &vdeg, &modules, &log, order);
    let half: Vec<Element> = log.iter().map(|x| x.iter().map(|p| p.scale(&qf(1, 2))).collect()).collect();
    let sqrt_components = exp_forms(sig, &vdeg, &modules, &half, order);

    let mut checks = Vec::new();
    let bad = (1..=order).find(|&m| (0..=m).fold(Q::zero(), |acc, j| acc + binomial(m as u32 + 1, j as u32) * &bern[j]) != Q::zero());
    checks.push(check("Bernoulli recurrence", bad.map(|m| format!("fails at n = {m}"))));
    checks.push(check(
        "x/(1-e^-x) = exp(-Σ B_k x^k/(k k!))",
        (!todd_series_identity(order)).then(|| format!("series differ below order {order}")),
    ));
    for s in &scalars {
        checks.push(check(format!("str(At^{}) is closed", s.k), (!s.closed).then(|| "L_Q str(At^k) ≠ 0".to_string())));
    }
    for (k, x) in components.iter().enumerate() {
        let image = modules[k].apply(x);
        let bad = image.iter().position(|p| !p.is_zero());
        checks.push(check(
            format!("Td component of form degree {k} is closed"),
            bad.map(|i| format!("{} on {}", sig.fmt(&image[i]), modules[k].labels[i])),
        ));
    }
    let chern = (1..=order)
        .map(|k| ChernTerm { k, factor: Q::one() / factorial(k as u32), tag: format!("(i/2π)^{k}") })
        .collect();
    let vanishing = scalars.iter().filter(|s| FreeModule::is_zero(&s.element)).map(|s| s.k).collect();
    let degree_forced = scalars
        .iter()
        .filter(|s| s.module.degrees.iter().all(|&d| d < s.k as i32))
        .map(|s| s.k)
        .collect();
    Ok(ToddTruncation { order, bernoulli: bern, scalars, chern, components, sqrt_components, modules, vanishing, degree_forced, checks })
}

/// Certificate comparing `α(At^M)` with `β(At^N)` for a linear fibration.
#[derive(Debug, Clone)]
pub struct InvarianceCertificate {
    pub tensors: MorphismTensors,
    /// `Ψ_*` on coordinate fields (target × source) and its right inverse.
    pub push: Matrix,
    pub splitting: Matrix,
    pub kernel: Arc<FreeModule>,
    /// `B` with `L_Q B` equal to the Atiyah cocycle of the projected flat
    /// connection on the kernel; `None` when none was found.
    pub kernel_correction: Option<Element>,
    pub source_connection: AffineConnection,
    pub source_cocycle: AtiyahCocycle,
    pub target_cocycle: AtiyahCocycle,
    pub mixed: Arc<FreeModule>,
    pub alpha_side: Element,
    pub beta_side: Element,
    /// `(k, α(str(At_M^k)), β(str(At_N^k)))`.
    pub scalar_sides: Vec<(usize, Element, Element)>,
    pub checks: Vec<IdentityCheck>,
}

impl InvarianceCertificate {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn first_difference(module: &FreeModule, a: &Element, b: &Element) -> Option<String> {
    let sig = &module.mfd.sig;
    (0..module.rank())
        .find(|&k| a[k] != b[k])
        .map(|k| format!("entry {}: {} vs {}", module.labels[k], sig.fmt(&a[k]), sig.fmt(&b[k])))
}

/// Right inverse of `push` sending each target coordinate field to fields of
/// the same degree.
fn degree_splitting(push: &Matrix, src: &DgManifold, tgt: &DgManifold) -> Option<Matrix> {
    let (ns, nt) = (src.ngen(), tgt.ngen());
    let all_rows: Vec<usize> = (0..nt).collect();
    let mut cols = Vec::new();
    for w in 0..nt {
        let same: Vec<usize> = (0..ns).filter(|&v| src.partial_degree(v) == tgt.partial_degree(w)).collect();
        let sub = push.sub_matrix(&all_rows, &same);
        let mut e = vec![Q::zero(); nt];
        e[w] = Q::one();
        let x = sub.solve(&e)?;
        if sub.apply(&x) != e {
            return None;
        }
        let mut col = vec![Q::zero(); ns];
        for (k, &v) in same.iter().enumerate() {
            col[v] = x[k].clone();
        }
        cols.push(col);
    }
    Some(Matrix::from_columns(ns, &cols))
}

fn apply_constant(m: &Matrix, y: &[Poly]) -> Vec<Poly> {
    (0..m.nrows)
        .map(|i| {
            let mut p = Poly::zero();
            for (j, yj) in y.iter().enumerate() {
                let c = m.get(i, j);
                if !c.is_zero() && !yj.is_zero() {
                    p.add_scaled(yj, &c);
                }
            }
            p
        })
        .collect()
}

/// Largest base exponent tried when solving for the kernel correction over
/// a base with coordinates.
const KERNEL_CAP: u32 = 3;

/// Builds `∇^M` from `target_conn` through the pullback connection, a
/// splitting of `Ψ_*` and a connection on `ker Ψ_*`, then compares the
/// Atiyah cocycles and the supertraces of their powers up to `order`.
///
/// The morphism must be linear with affine base map and constant `φ_1`.
/// `splitting`, when given, is a constant right inverse of `Ψ_*` on
/// coordinate fields (source × target).
pub fn invariance_harness(
    morphism: &LinftyMorphism,
    target_conn: &AffineConnection,
    splitting: Option<&Matrix>,
    order: usize,
) -> AResult<InvarianceCertificate> {
    if !morphism.is_linear() {
        return Err(AtiyahError::Unsupported("the morphism has higher Taylor components".into()));
    }
    let flat = FibreConnection::flat();
    let mt = MorphismTensors::new(morphism.clone(), &flat, &flat)?;
    let (smfd, tmfd) = (mt.source.mfd.clone(), mt.target.mfd.clone());
    let (ssig, tsig) = (&smfd.sig, &tmfd.sig);
    let (ns, nt) = (smfd.ngen(), tmfd.ngen());
    target_conn.check(&tmfd)?;

    let mut push = Matrix::zeros(nt, ns);
    for v in 0..ns {
        for w in 0..nt {
            let p = smfd.vf_apply(&smfd.partial(v), &mt.pullback[w]);
            if !p.is_constant() {
                return Err(AtiyahError::Unsupported(format!(
                    "Ψ_* ∂{} is not constant along ∂{}",
                    ssig.vars()[v].name,
                    tsig.vars()[w].name
                )));
            }
            push.set(w, v, p.constant_term());
        }
    }
    let split = match splitting {
        Some(s) => {
            if s.nrows != ns || s.ncols != nt || push.mul(s) != Matrix::identity(nt) {
                return Err(AtiyahError::Unsupported("the splitting is not a right inverse of Ψ_*".into()));
            }
            s.clone()
        }
        None => degree_splitting(&push, &smfd, &tmfd)
            .ok_or_else(|| AtiyahError::Unsupported("Ψ_* has no degree-preserving right inverse".into()))?,
    };
    let project = |y: &[Poly]| -> Vec<Poly> {
        let back = apply_constant(&split, &apply_constant(&push, y));
        y.iter().zip(&back).map(|(a, b)| a.minus(b)).collect()
    };
    let (kmod, kmat) = kernel_module(&mt)?;
    let kmod = Arc::new(kmod);
    let nk = kmod.rank();
    let kfield = |s: usize| -> Vec<Poly> { kmat.column(s).into_iter().map(|c| ssig.constant(c)).collect() };

    // pullback connection: ∇~_∂u (Σ g_w ∂~w) = Σ ∂u(g_w) ∂~w + Σ (-1)^(|∂u||g_w|) g_w Ψ^*(∇_(Ψ_* ∂u) ∂w)
    let pulled: BTreeMap<(usize, usize), Vec<Poly>> = target_conn
        .christoffel
        .iter()
        .map(|(&k, img)| (k, img.iter().map(|p| tsig.subst(p, &mt.pullback, ssig)).collect()))
        .collect();
    let tilde = |u: usize, g: &[Poly]| -> Vec<Poly> {
        let mut out: Vec<Poly> = g.iter().map(|gw| ssig.deriv(u, gw)).collect();
        let du = smfd.partial_degree(u);
        for (&(w2, w), img) in &pulled {
            let a = push.get(w2, u);
            if a.is_zero() || g[w].is_zero() {
                continue;
            }
            let c = koszul_twist(ssig, &g[w], du).scale(&a);
            for (z, p) in img.iter().enumerate() {
                if !p.is_zero() {
                    out[z].add_assign(&ssig.mul(&c, p));
                }
            }
        }
        out
    };

    let mut checks = Vec::new();

    // kernel connection: project the flat one, then remove its Atiyah cocycle
    let sv = mt.source.vectors.clone();
    let kt_outs = [kmod.clone()];
    let kt_ins = [sv.clone(), kmod.clone()];
    let kt = tensor_module(&kt_outs, &kt_ins);
    let flat_kernel = |x: &[Poly], y: &[Poly]| -> Vec<Poly> { project(&y.iter().map(|yv| smfd.vf_apply(x, yv)).collect::<Vec<_>>()) };
    let mut at_kernel = kt.zero_element();
    for a in 0..ns {
        for s in 0..nk {
            let val = atiyah_value(&smfd, &flat_kernel, &mt.source.frame.fields[a], sv.degrees[a], &kfield(s), kmod.degrees[s]);
            let kc = coords(&kmat, &val).ok_or_else(|| AtiyahError::Identity {
                name: "kernel Atiyah cocycle takes values in the kernel".into(),
                detail: fmt_vf(ssig, &val),
            })?;
            for (o, c) in kc.into_iter().enumerate() {
                at_kernel[tensor_position(&kt_outs, &kt_ins, &[o], &[a, s])] = c;
            }
        }
    }
    let caps = if smfd.is_point() { 0..=0 } else { 0..=KERNEL_CAP };
    let mut correction = None;
    for cap in caps {
        if let Preimage::Found(b) = kt.preimage(0, &at_kernel, cap)? {
            correction = Some(b);
            break;
        }
    }
    checks.push(check(
        "kernel connection with vanishing Atiyah cocycle",
        correction.is_none().then(|| "no correction found; the projected flat connection is used".to_string()),
    ));

    let correction_value = |u: usize, v: usize| -> Vec<Poly> {
        let mut out = vec![Poly::zero(); ns];
        let Some(b) = &correction else { return out };
        let kc = coords(&kmat, &project(&smfd.partial(v))).expect("projection lands in the kernel");
        for (s, cs) in kc.iter().enumerate() {
            if cs.is_zero() {
                continue;
            }
            for o in 0..nk {
                let coef = &b[tensor_position(&kt_outs, &kt_ins, &[o], &[u, s])];
                if coef.is_zero() {
                    continue;
                }
                let term = ssig.mul(coef, cs);
                for (z, kz) in kfield(o).iter().enumerate() {
                    if !kz.is_zero() {
                        out[z].add_assign(&ssig.mul(&term, kz));
                    }
                }
            }
        }
        out
    };
    let pushed_partial = |v: usize| -> Vec<Poly> { apply_constant(&push, &smfd.partial(v)) };
    let nabla_m = AffineConnection::tabulate(ns, |u, v| {
        let lifted = apply_constant(&split, &tilde(u, &pushed_partial(v)));
        let corr = correction_value(u, v);
        lifted.iter().zip(&corr).map(|(a, b)| a.minus(b)).collect()
    });

    let mut failure = None;
    'compat: for u in 0..ns {
        for v in 0..ns {
            let left = apply_constant(&push, &nabla_m.covariant(&smfd, &smfd.partial(u), &smfd.partial(v)));
            let right = tilde(u, &pushed_partial(v));
            if left != right {
                failure = Some(format!(
                    "u = ∂{}, v = ∂{}: {} vs {}",
                    ssig.vars()[u].name,
                    ssig.vars()[v].name,
                    fmt_vf(ssig, &left),
                    fmt_vf(ssig, &right)
                ));
                break 'compat;
            }
        }
    }
    checks.push(check("Ψ_* ∇^M = ∇~^N Ψ_* on coordinate fields", failure));

    let source_cocycle = atiyah_cocycle(&mt.source, &nabla_m)?;
    let target_cocycle = atiyah_cocycle(&mt.target, target_conn)?;
    let mixed = Arc::new(mt.mixed(1, 2));
    let alpha_side = mt.alpha(1, 2, source_cocycle.module.clone(), mixed.clone()).apply(&source_cocycle.element);
    let beta_side = mt.beta(1, 2, target_cocycle.module.clone(), mixed.clone()).apply(&target_cocycle.element);
    checks.push(check("α(At^M) = β(At^N)", first_difference(&mixed, &alpha_side, &beta_side)));

    let src_scalars = scalar_cocycles(&source_cocycle, order);
    let tgt_scalars = scalar_cocycles(&target_cocycle, order);
    let mut scalar_sides = Vec::new();
    for (s, t) in src_scalars.iter().zip(&tgt_scalars) {
        let k = s.k;
        let mixed_k = Arc::new(mt.mixed(0, k));
        let a = mt.alpha(0, k, s.module.clone(), mixed_k.clone()).apply(&s.element);
        let b = mt.beta(0, k, t.module.clone(), mixed_k.clone()).apply(&t.element);
        checks.push(check(format!("α(str(At_M^{k})) = β(str(At_N^{k}))"), first_difference(&mixed_k, &a, &b)));
        scalar_sides.push((k, a, b));
    }

    Ok(InvarianceCertificate {
        tensors: mt,
        push,
        splitting: split,
        kernel: kmod,
        kernel_correction: correction,
        source_connection: nabla_m,
        source_cocycle,
        target_cocycle,
        mixed,
        alpha_side,
        beta_side,
        scalar_sides,
        checks,
    })
}
