use std::sync::Arc;

use dgm_core::atiyah::{
    atiyah_cocycle, bernoulli, compare_classes, invariance_harness, scalar_cocycles, todd_truncation, AffineConnection,
    ClassComparison,
};
use dgm_core::dgmod::{tensor_position, FreeModule};
use dgm_core::gen::{BundleShape, Gen};
use dgm_core::graded::GradedSpace;
use dgm_core::linfty::{base_signature, Base, CurvedBundle, LinftyMorphism, Taylor};
use dgm_core::poly::{Poly, Signature, Var};
use dgm_core::scalar::{q, qf, Q};
use dgm_core::series;
use dgm_core::tensors::{FibreConnection, TensorSpaces};
use num_traits::{One, Zero};

fn put(tab: &mut Taylor, idx: Vec<usize>, t: usize, p: Poly) {
    tab.entry(idx).or_default().insert(t, p);
}

fn spaces(b: CurvedBundle) -> TensorSpaces {
    TensorSpaces::new(Arc::new(b), &FibreConnection::flat()).unwrap()
}

fn linear_bundle(base: Base) -> CurvedBundle {
    // L^1 = <a>, L^2 = <b, c>, L^3 = <d>: λ1(a) = b - c, λ1(b) = λ1(c) = d
    let sig = base_signature(base.dim());
    let mut l1 = Taylor::new();
    put(&mut l1, vec![0], 1, sig.one());
    put(&mut l1, vec![0], 2, sig.one().neg());
    put(&mut l1, vec![1], 3, sig.one());
    put(&mut l1, vec![2], 3, sig.one());
    let fibre = GradedSpace::new([(1, "a".to_string()), (2, "b".to_string()), (2, "c".to_string()), (3, "d".to_string())]);
    CurvedBundle::new(base, fibre, vec![Taylor::new(), l1]).unwrap()
}

#[test]
fn purely_linear_lambda_with_flat_connection_has_zero_cocycle() {
    for base in [Base::Point, Base::Affine(1), Base::Affine(2)] {
        let b = linear_bundle(base);
        assert!(b.validate().passed());
        let at = atiyah_cocycle(&spaces(b), &AffineConnection::flat()).unwrap();
        assert!(at.is_zero());
        assert!(at.checks.iter().all(|c| c.passed));
    }
}

fn bracket_bundle() -> CurvedBundle {
    // b = 3 over a point: λ2(a, e) = d, λ1(a) = b, λ1(b') = d with no other terms
    let sig = base_signature(0);
    let mut l2 = Taylor::new();
    put(&mut l2, vec![0, 1], 4, sig.one());
    let mut l1 = Taylor::new();
    put(&mut l1, vec![1], 2, sig.constant(q(2)));
    put(&mut l1, vec![3], 4, sig.one());
    let fibre = GradedSpace::new([
        (1, "a".to_string()),
        (1, "e".to_string()),
        (2, "b".to_string()),
        (2, "c".to_string()),
        (3, "d".to_string()),
    ]);
    CurvedBundle::new(Base::Point, fibre, vec![Taylor::new(), l1, l2]).unwrap()
}

#[test]
fn flat_cocycle_is_the_hessian_of_q() {
    let b = bracket_bundle();
    assert!(b.validate().passed());
    let sp = spaces(b);
    let at = atiyah_cocycle(&sp, &AffineConnection::flat()).unwrap();
    let mfd = &sp.mfd;
    let sig = &mfd.sig;
    let n = mfd.ngen();
    // At(∂i, ∂j) = -(-1)^|∂i| ∂i h  with  [Q, ∂j] = -(-1)^|∂j| Σ_k ∂j(Q^k) ∂k
    let table = at.table();
    let mut nonzero = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let h = sig.deriv(j, &mfd.q[k]).signed(mfd.partial_degree(j) % 2 == 0);
                let want = sig.deriv(i, &h).signed(mfd.partial_degree(i) % 2 == 0);
                assert_eq!(table[i][j][k], want, "At(∂{i}, ∂{j}) along ∂{k}");
                if !want.is_zero() {
                    nonzero += 1;
                }
            }
        }
    }
    assert!(nonzero > 0);
}

fn random_cases() -> Vec<(TensorSpaces, AffineConnection, AffineConnection)> {
    let mut g = Gen::new(11);
    let mut out = Vec::new();
    let shapes = [
        (Base::Point, vec![1, 1], false),
        (Base::Point, vec![2, 1], true),
        (Base::Point, vec![1, 1, 1], false),
        (Base::Affine(1), vec![1, 1], true),
        (Base::Affine(1), vec![1], true),
        (Base::Affine(2), vec![1, 1], false),
        (Base::Affine(2), vec![1], true),
    ];
    for i in 0..20 {
        let (base, dims, curved) = shapes[i % shapes.len()].clone();
        let b = g.bundle(&BundleShape { base, dims, curved, prefix: "e".into() });
        let sp = spaces(b);
        let c1 = g.affine_connection(&sp.mfd, 0.3);
        let c2 = g.affine_connection(&sp.mfd, 0.3);
        out.push((sp, c1, c2));
    }
    out
}

#[test]
fn random_cocycles_are_bilinear_and_closed() {
    let mut affine2 = 0;
    for (i, (sp, c1, _)) in random_cases().into_iter().enumerate() {
        let at = atiyah_cocycle(&sp, &c1).unwrap_or_else(|e| panic!("case {i}: {e}"));
        assert!(FreeModule::is_zero(&at.module.apply(&at.element)), "case {i}");
        assert!(at.checks.iter().all(|c| c.passed));
        if sp.mfd.nbase == 2 {
            affine2 += 1;
        }
    }
    assert!(affine2 > 0);
}

/// Difference of two connections as a `(1,2)`-tensor in the coordinate frame.
fn difference(sp: &TensorSpaces, c1: &AffineConnection, c2: &AffineConnection) -> Vec<Poly> {
    let n = sp.mfd.ngen();
    let m = sp.tensors(1, 2);
    let outs = [sp.vectors.clone()];
    let ins = [sp.vectors.clone(), sp.vectors.clone()];
    let mut a = m.zero_element();
    for u in 0..n {
        for v in 0..n {
            let (x, y) = (c1.get(u, v, n), c2.get(u, v, n));
            for w in 0..n {
                a[tensor_position(&outs, &ins, &[w], &[u, v])] = x[w].minus(&y[w]);
            }
        }
    }
    a
}

#[test]
fn connection_change_shifts_cocycle_by_exact_term() {
    for (i, (sp, c1, c2)) in random_cases().into_iter().enumerate() {
        let a = difference(&sp, &c2, &c1);
        assert_eq!(c1.plus_tensor(&sp, &a), c2, "case {i}");
        let at1 = atiyah_cocycle(&sp, &c1).unwrap();
        let at2 = atiyah_cocycle(&sp, &c2).unwrap();
        assert_eq!(FreeModule::sub(&at2.element, &at1.element), at1.module.apply(&a), "case {i}");
        if sp.mfd.is_point() {
            match compare_classes(&at1.module, 1, &at2.element, &at1.element).unwrap() {
                ClassComparison::Cohomologous(h) => {
                    assert_eq!(at1.module.apply(&h), FreeModule::sub(&at2.element, &at1.element))
                }
                other => panic!("case {i}: {other:?}"),
            }
            // s_1 moves by an exact term as well
            let s1 = &scalar_cocycles(&at1, 1)[0];
            let s2 = &scalar_cocycles(&at2, 1)[0];
            assert!(s1.closed && s2.closed);
            assert!(matches!(
                compare_classes(&s1.module, 1, &s2.element, &s1.element).unwrap(),
                ClassComparison::Cohomologous(_)
            ));
        }
    }
}

#[test]
fn equal_cocycles_have_zero_witness() {
    let (sp, c1, _) = random_cases().remove(0);
    let at = atiyah_cocycle(&sp, &c1).unwrap();
    match compare_classes(&at.module, 1, &at.element, &at.element).unwrap() {
        ClassComparison::Cohomologous(h) => assert!(FreeModule::is_zero(&h)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn nonzero_class_is_distinct_from_zero() {
    // L^1 = <a>, L^3 = <d>, Q = 0: E_(d,(a,a)) is a degree-1 cocycle and nothing is exact
    let fibre = GradedSpace::new([(1, "a".to_string()), (3, "d".to_string())]);
    let b = CurvedBundle::new(Base::Point, fibre, vec![]).unwrap();
    let sp = spaces(b);
    let m = sp.tensors(1, 2);
    let outs = [sp.vectors.clone()];
    let ins = [sp.vectors.clone(), sp.vectors.clone()];
    let mut c = m.zero_element();
    c[tensor_position(&outs, &ins, &[1], &[0, 0])] = sp.mfd.sig.one();
    let zero = m.zero_element();
    assert_eq!(compare_classes(&m, 1, &c, &zero).unwrap(), ClassComparison::Distinct { rank: 0, augmented_rank: 1 });
    assert!(compare_classes(&m, 0, &c, &zero).is_err());
}

#[test]
fn bernoulli_numbers_match_generating_function() {
    let b = bernoulli(8);
    assert_eq!(b[..5], [q(1), qf(-1, 2), qf(1, 6), q(0), qf(-1, 30)]);
    // x / (e^x - 1) = Σ B_k x^k / k!, by long division of power series
    let n = 9;
    let mut fact = vec![Q::one()];
    for k in 1..=n + 1 {
        fact.push(&fact[k - 1] * q(k as i64));
    }
    let denom: Vec<Q> = (0..=n).map(|k| Q::one() / &fact[k + 1]).collect();
    let mut quot = vec![Q::zero(); n + 1];
    for k in 0..=n {
        let mut r = if k == 0 { Q::one() } else { Q::zero() };
        for j in 0..k {
            r -= &quot[j] * &denom[k - j];
        }
        quot[k] = r / &denom[0];
    }
    for k in 0..=8 {
        assert_eq!(b[k], &quot[k] * &fact[k], "B_{k}");
    }
}

#[test]
fn berezinian_of_exponential_is_exponential_of_supertrace() {
    let sig = Signature::new((0..3).map(|i| Var::new(format!("θ{i}"), 0, -1)).collect());
    let mut g = Gen::new(5);
    let order = 6;
    for case in 0..20 {
        let even = 1 + case % 2;
        let odd = 1 + (case / 2) % 2;
        let n = even + odd;
        let mut m = vec![vec![Poly::zero(); n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                if (i < even) == (j < even) {
                    // even entry: rational plus a multiple of θ0 θ1
                    let mut p = sig.constant(g.small());
                    if g.coin(0.5) {
                        p.add_assign(&sig.mul(&sig.var(0), &sig.var(1)).scale(&g.small()));
                    }
                    *e = p;
                } else {
                    for t in 0..3 {
                        if g.coin(0.6) {
                            e.add_assign(&sig.var(t).scale(&g.small()));
                        }
                    }
                }
            }
        }
        let ber = series::berezinian(&sig, &series::matrix_exp(&sig, &m, order), even, order).unwrap();
        let mut tstr = series::zero(order);
        tstr[1] = series::supertrace(&m, even);
        assert_eq!(ber, series::exp(&sig, &tstr), "case {case}");
    }
}

#[test]
fn todd_of_zero_cocycle_is_one() {
    let at = atiyah_cocycle(&spaces(linear_bundle(Base::Point)), &AffineConnection::flat()).unwrap();
    let td = todd_truncation(&at, 4).unwrap();
    assert!(td.passed());
    assert!(td.is_one());
    assert_eq!(td.vanishing, vec![1, 2, 3, 4]);
    assert_eq!(td.chern[1].factor, qf(1, 2));
    assert_eq!(td.chern[1].tag, "(i/2π)^2");
}

#[test]
fn todd_components_are_closed() {
    for (i, (sp, c1, _)) in random_cases().into_iter().enumerate() {
        let at = atiyah_cocycle(&sp, &c1).unwrap();
        let td = todd_truncation(&at, 3).unwrap();
        for c in &td.checks {
            assert!(c.passed, "case {i}: {} {}", c.name, c.detail);
        }
        // degree-1 component is -B_1 s_1 = s_1 / 2
        let half: Vec<Poly> = td.scalars[0].element.iter().map(|p| p.scale(&qf(1, 2))).collect();
        assert_eq!(td.components[1], half);
    }
}

#[test]
fn scalar_cocycles_vanish_by_degree() {
    // k-forms never reach internal degree k when functions sit in degrees <= 0
    for (i, (sp, c1, _)) in random_cases().into_iter().enumerate() {
        let at = atiyah_cocycle(&sp, &c1).unwrap();
        let td = todd_truncation(&at, 3).unwrap();
        assert_eq!(td.degree_forced, vec![1, 2, 3], "case {i}");
        assert_eq!(td.vanishing, td.degree_forced, "case {i}");
        assert!(td.is_one(), "case {i}");
    }
}

fn point_bundle() -> Arc<CurvedBundle> {
    Arc::new(CurvedBundle::new(Base::Point, GradedSpace::new(Vec::<(i32, String)>::new()), vec![]).unwrap())
}

fn assert_certified(f: &LinftyMorphism, conn: &AffineConnection, what: &str) {
    let cert = invariance_harness(f, conn, None, 4).unwrap_or_else(|e| panic!("{what}: {e}"));
    for c in &cert.checks {
        assert!(c.passed, "{what}: {} {}", c.name, c.detail);
    }
    assert_eq!(cert.scalar_sides.len(), 4);
}

#[test]
fn identity_morphism_gives_the_same_cocycle() {
    let mut g = Gen::new(3);
    let b = Arc::new(g.bundle(&BundleShape { base: Base::Affine(1), dims: vec![1, 1], curved: true, prefix: "e".into() }));
    let conn = g.affine_connection(&b.manifold(), 0.3);
    let cert = invariance_harness(&LinftyMorphism::identity(b.clone()), &conn, None, 3).unwrap();
    assert!(cert.passed());
    let at = atiyah_cocycle(&spaces((*b).clone()), &conn).unwrap();
    assert_eq!(cert.source_connection, conn);
    assert_eq!(cert.alpha_side, at.element);
    assert_eq!(cert.beta_side, at.element);
}

#[test]
fn projection_to_the_point_has_zero_sides() {
    // L^1 ⊕ L^2 with λ1 an isomorphism, mapped to the zero bundle over a point
    let sig = base_signature(0);
    let mut l1 = Taylor::new();
    put(&mut l1, vec![0], 1, sig.one());
    let fibre = GradedSpace::new([(1, "a".to_string()), (2, "b".to_string())]);
    let src = Arc::new(CurvedBundle::new(Base::Point, fibre, vec![Taylor::new(), l1]).unwrap());
    let f = LinftyMorphism::new(src, point_bundle(), vec![], vec![Taylor::new(), Taylor::new()]).unwrap();
    let cert = invariance_harness(&f, &AffineConnection::flat(), None, 4).unwrap();
    assert!(cert.passed());
    assert!(FreeModule::is_zero(&cert.alpha_side) && FreeModule::is_zero(&cert.beta_side));
    assert!(cert.scalar_sides.iter().all(|(_, a, b)| FreeModule::is_zero(a) && FreeModule::is_zero(b)));
}

#[test]
fn generated_fibrations_are_certified() {
    let mut g = Gen::new(17);
    let mut with_bracket = 0;
    for seed in 0..40u64 {
        let mut h = Gen::new(seed);
        let f = h.acyclic_fibration(
            &BundleShape { base: Base::Point, dims: vec![2, 1, 1], curved: false, prefix: "e".into() },
            &[1, 0],
        );
        if f.target.lambda.len() < 3 || f.target.lambda[2].is_empty() {
            continue;
        }
        with_bracket += 1;
        let conn = g.affine_connection(&f.target.manifold(), 0.3);
        assert_certified(&f, &conn, &format!("b = 3 seed {seed}"));
        if with_bracket == 2 {
            break;
        }
    }
    assert!(with_bracket > 0, "no generated target had a bracket");
    for (seed, dims, pairs) in [(1u64, vec![1], vec![1]), (2, vec![1, 1], vec![1, 1]), (4, vec![2, 1], vec![0, 1])] {
        let mut h = Gen::new(seed);
        let f = h.acyclic_fibration(&BundleShape { base: Base::Point, dims, curved: false, prefix: "e".into() }, &pairs);
        let conn = g.affine_connection(&f.target.manifold(), 0.4);
        assert_certified(&f, &conn, &format!("seed {seed}"));
    }
}

#[test]
fn affine_fibration_with_varying_curvature_is_certified() {
    let mut done = 0;
    for seed in 0..10u64 {
        let mut h = Gen::new(seed);
        let shape = BundleShape { base: Base::Affine(1), dims: vec![1, 1], curved: true, prefix: "e".into() };
        let f = h.acyclic_fibration(&shape, &[1]);
        let varying = f.target.lambda.first().and_then(|t| t.get(&vec![])).is_some_and(|img| img.values().any(|p| !p.is_constant()));
        if !varying {
            continue;
        }
        let conn = h.affine_connection(&f.target.manifold(), 0.3);
        assert_certified(&f, &conn, &format!("affine seed {seed}"));
        done += 1;
        if done == 2 {
            break;
        }
    }
    assert_eq!(done, 2);
}
