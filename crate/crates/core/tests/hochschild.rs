use std::sync::Arc;

use dgm_core::gen::Gen;
use dgm_core::graded::GradedSpace;
use dgm_core::atiyah::{atiyah_cocycle, todd_truncation, AffineConnection};
use dgm_core::hochschild::{
    contract, hkr_diagram, hkr_properties, windowed_hh, CellStatus, CoordinateIso, DiffOp, Operators, PolyVectors, ToddSides, WindowParams,
};
use dgm_core::linfty::{Base, CurvedBundle, Taylor};
use dgm_core::manifold::DgManifold;
use dgm_core::poly::Poly;
use dgm_core::scalar::{q, qf};
use dgm_core::signs::odd_swap;
use dgm_core::tensors::{FibreConnection, TensorSpaces};

/// Point base, `L^1 = <e>`, `λ0 = c e`.
fn rank_one(c: i64) -> Arc<DgManifold> {
    let mut l0 = Taylor::new();
    if c != 0 {
        l0.entry(vec![]).or_default().insert(0, Poly::constant(q(c), 0));
    }
    let b = CurvedBundle::new(Base::Point, GradedSpace::new([(1, "e".to_string())]), vec![l0]).unwrap();
    Arc::new(b.manifold())
}

/// Point base, `L^1 = <a>`, `L^2 = <c>`, `λ1(a) = c`.
fn two_step() -> Arc<DgManifold> {
    let mut l1 = Taylor::new();
    l1.entry(vec![0]).or_default().insert(1, Poly::constant(q(1), 0));
    let fibre = GradedSpace::new([(1, "a".to_string()), (2, "c".to_string())]);
    let b = CurvedBundle::new(Base::Point, fibre, vec![Taylor::new(), l1]).unwrap();
    assert!(b.validate().passed());
    Arc::new(b.manifold())
}

fn random_pv(g: &mut Gen, tp: &PolyVectors) -> Poly {
    loop {
        let p = if g.coin(0.3) { 0 } else if g.coin(0.5) { 1 } else { 2 };
        let d = p as i32 - i32::from(g.coin(0.5));
        let a = g.poly_vector(tp, p, d, 0.8);
        if !a.is_zero() {
            return a;
        }
    }
}

fn bideg(tp: &PolyVectors, a: &Poly) -> (i64, i64) {
    let parts = tp.parts(a);
    assert_eq!(parts.len(), 1);
    let (w, d) = *parts.keys().next().unwrap();
    (i64::from(w), i64::from(d))
}

#[test]
fn schouten_with_a_function_is_the_derivation() {
    let mfd = two_step();
    let tp = PolyVectors::new(mfd.clone());
    let mut g = Gen::new(3);
    for _ in 0..10 {
        let x: Vec<Poly> = (0..mfd.ngen()).map(|v| g.function(&mfd, -mfd.gen_degree(v) - 2, 0.7)).collect();
        let f = g.function(&mfd, -2, 0.8);
        let want = tp.function(&mfd.vf_apply(&x, &f));
        assert_eq!(tp.bracket(&tp.vector_field(&x), &tp.function(&f)), want);
    }
}

#[test]
fn q_commutes_with_itself() {
    for mfd in [rank_one(0), rank_one(2), two_step()] {
        let tp = PolyVectors::new(mfd);
        assert!(tp.bracket(&tp.q(), &tp.q()).is_zero());
    }
}

#[test]
fn schouten_jacobi_on_random_triples() {
    let tp = PolyVectors::new(rank_one(1));
    let mut g = Gen::new(11);
    for _ in 0..30 {
        let (a, b, c) = (random_pv(&mut g, &tp), random_pv(&mut g, &tp), random_pv(&mut g, &tp));
        let (wa, da) = bideg(&tp, &a);
        let (wb, db) = bideg(&tp, &b);
        let lhs = tp.bracket(&a, &tp.bracket(&b, &c));
        let rhs = tp
            .bracket(&tp.bracket(&a, &b), &c)
            .plus(&tp.bracket(&b, &tp.bracket(&a, &c)).signed(odd_swap(wa - 1, da, wb - 1, db)));
        assert_eq!(lhs, rhs);
        // antisymmetry and Leibniz for the wedge
        let ab = tp.bracket(&a, &b);
        let ba = tp.bracket(&b, &a);
        assert_eq!(ab, ba.signed(!odd_swap(wa - 1, da, wb - 1, db)));
        let lhs = tp.bracket(&a, &tp.wedge(&b, &c));
        let rhs = tp.wedge(&ab, &c).plus(&tp.wedge(&b, &tp.bracket(&a, &c)).signed(odd_swap(wa - 1, da, wb, db)));
        assert_eq!(lhs, rhs);
    }
}

#[test]
fn hkr_of_two_vectors_is_half_the_graded_commutator() {
    let mfd = two_step();
    let tp = PolyVectors::new(mfd.clone());
    let ops = Operators::new(mfd.clone(), 2);
    // X = ∂a (degree 1), Y = ∂c (degree 2)
    for (x, y) in [(0usize, 1usize), (0, 0), (1, 1), (1, 0)] {
        let (dx, dy) = (mfd.partial_degree(x), mfd.partial_degree(y));
        let got = ops.hkr(&tp, &tp.wedge(&tp.partial(x), &tp.partial(y)));
        let vx = ops.vector_field(&mfd.partial(x));
        let vy = ops.vector_field(&mfd.partial(y));
        let want = ops.cup(&vx, &vy).minus(&ops.cup(&vy, &vx).scale(&q(if (dx * dy) % 2 == 0 { 1 } else { -1 })));
        let want = want.scale(&qf(1, 2));
        assert_eq!(got.get(&2).cloned().unwrap_or_else(|| DiffOp::zero(2)), want, "∂{x} ∧ ∂{y}");
    }
}

fn hkr_checks(mfd: Arc<DgManifold>, order: u32, max_arity: usize, min_deg: i32) -> usize {
    let (checks, count) = hkr_properties(&mfd, order, max_arity, (min_deg, 2 * max_arity as i32)).unwrap();
    for c in checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
    count
}

#[test]
fn hkr_lands_in_cocycles_and_intertwines_q() {
    assert!(hkr_checks(rank_one(0), 1, 3, -1) > 0);
    assert!(hkr_checks(rank_one(3), 1, 3, -1) > 0);
    assert!(hkr_checks(two_step(), 2, 2, -4) > 0);
}

fn random_op(g: &mut Gen, ops: &Operators, arity: usize, degree: i32) -> DiffOp {
    let monos = ops.slot_monomials(ops.order);
    let mut op = DiffOp::zero(arity);
    let mut tuples: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..arity {
        tuples = tuples.into_iter().flat_map(|t| (0..monos.len()).map(move |i| [t.clone(), vec![i]].concat())).collect();
    }
    for t in tuples {
        let slots: Vec<_> = t.iter().map(|&i| monos[i].clone()).collect();
        let s: i32 = slots.iter().map(|m| ops.dsig.mono_degree(m)).sum();
        if s - degree > 0 && !ops.mfd.monomials(degree - s).map(|b| b.len() > 0).unwrap_or(false) {
            continue;
        }
        let c = g.function(&ops.mfd, degree - s, 0.6);
        if !c.is_zero() {
            op.add(slots, &c);
        }
    }
    op
}

#[test]
fn second_order_operator_is_not_a_cocycle() {
    let mfd = two_step();
    let ops = Operators::new(mfd, 2);
    let mut op = DiffOp::zero(1);
    op.add(vec![vec![0, 2]], &ops.mfd.sig.one());
    let dh = ops.hochschild(&op);
    assert!(!dh.is_zero());
    // d_H(∂c²)(f, g) = -2 ∂c f ∂c g, up to the degree sign of ∂c² (even)
    let mut want = DiffOp::zero(2);
    want.add(vec![vec![0, 1], vec![0, 1]], &ops.mfd.sig.constant(q(-2)));
    assert_eq!(dh, want);
}

#[test]
fn differentials_square_to_zero_and_anticommute() {
    let mut g = Gen::new(5);
    for (mfd, order) in [(rank_one(2), 1), (two_step(), 2)] {
        let ops = Operators::new(mfd.clone(), order);
        let mut nonzero = 0;
        for arity in 0..=2 {
            for degree in -2..=3 {
                let d = random_op(&mut g, &ops, arity, degree);
                let h = ops.hochschild(&d);
                let qd = ops.q_differential(&d);
                nonzero += usize::from(!h.is_zero()) + usize::from(!qd.is_zero());
                assert!(ops.hochschild(&h).is_zero());
                assert!(ops.q_differential(&qd).is_zero());
                assert_eq!(ops.hochschild(&qd), ops.q_differential(&h).scale(&q(-1)));
                // [[Q, -]] through the Gerstenhaber bracket
                let b = ops.bracket(&ops.q(), &d);
                assert!(!b.discarded);
                assert_eq!(b.op, qd);
            }
        }
        assert!(nonzero > 0);
    }
}

#[test]
fn cup_of_functions_is_the_product() {
    let mfd = two_step();
    let ops = Operators::new(mfd.clone(), 2);
    let mut g = Gen::new(8);
    for _ in 0..10 {
        let (f, h) = (g.function(&mfd, -1, 0.8), g.function(&mfd, -2, 0.8));
        assert_eq!(ops.cup(&DiffOp::function(&f), &DiffOp::function(&h)), DiffOp::function(&mfd.sig.mul(&f, &h)));
    }
}

#[test]
fn gerstenhaber_composition_is_right_symmetric() {
    let ops = Operators::new(two_step(), 1);
    let mut g = Gen::new(21);
    let mut nonzero = 0;
    for _ in 0..20 {
        let pick = |g: &mut Gen| {
            let arity = if g.coin(0.5) { 1 } else { 2 };
            let degree = arity as i32 - i32::from(g.coin(0.5));
            (arity, degree)
        };
        let ((pa, ea), (pb, eb), (pc, ec)) = (pick(&mut g), pick(&mut g), pick(&mut g));
        let a = random_op(&mut g, &ops, pa, ea);
        let b = random_op(&mut g, &ops, pb, eb);
        let c = random_op(&mut g, &ops, pc, ec);
        let assoc = |x: &DiffOp, y: &DiffOp, z: &DiffOp| {
            let l = ops.compose_full(&ops.compose_full(x, y), z);
            let r = ops.compose_full(x, &ops.compose_full(y, z));
            l.minus(&r)
        };
        let lhs = assoc(&a, &b, &c);
        let rhs = assoc(&a, &c, &b);
        let sign = odd_swap(pb as i64 - 1, eb.into(), pc as i64 - 1, ec.into());
        assert_eq!(lhs, if sign { rhs.scale(&q(-1)) } else { rhs });
        nonzero += usize::from(!lhs.is_zero());
    }
    assert!(nonzero > 0);
}


#[test]
fn window_of_the_flat_rank_one_algebra() {
    // functions 1, ξ; poly-vectors ξ^a θ^k with θ = ∂ξ even of degree 1, so
    // one class in every total degree n >= -1 (θ^k at 2k, ξ θ^k at 2k - 1)
    let params = WindowParams { arity: 3, order: 1, window: (-2, 4) };
    let w = windowed_hh(rank_one(0), params).unwrap();
    let want = [0, 1, 1, 1, 1, 1, 1];
    for (r, &k) in w.degrees.iter().zip(&want) {
        assert_eq!(r.tpoly, CellStatus::Stable(k), "degree {}", r.degree);
        assert_eq!(r.hh, CellStatus::Stable(k), "degree {}", r.degree);
        assert_eq!(r.matches, Some(true));
    }
}

#[test]
fn curved_rank_one_algebra_has_no_hochschild_cohomology() {
    let params = WindowParams { arity: 3, order: 2, window: (-3, 5) };
    let w = windowed_hh(rank_one(2), params).unwrap();
    assert_eq!(w.degrees.len(), 9);
    assert!(w.stable_degrees().count() > 0);
    for r in w.stable_degrees() {
        assert_eq!(r.hh, CellStatus::Stable(0), "degree {}", r.degree);
        assert_eq!(r.tpoly, CellStatus::Stable(0), "degree {}", r.degree);
    }
}

#[test]
fn empty_window_gives_empty_report() {
    let w = windowed_hh(rank_one(1), WindowParams { arity: 2, order: 1, window: (3, 2) }).unwrap();
    assert!(w.degrees.is_empty());
}

/// `L^1 = <a, b>`, `L^2 = <c>`, `λ0 = b`, `λ1(a) = c`.
fn three_gen() -> CurvedBundle {
    let mut l0 = Taylor::new();
    l0.entry(vec![]).or_default().insert(1, Poly::constant(q(1), 0));
    let mut l1 = Taylor::new();
    l1.entry(vec![0]).or_default().insert(2, Poly::constant(q(1), 0));
    let fibre = GradedSpace::new([(1, "a".to_string()), (1, "b".to_string()), (2, "c".to_string())]);
    CurvedBundle::new(Base::Point, fibre, vec![l0, l1]).unwrap()
}

/// Moves a bundle along `c ↦ c + a b`.
fn nonlinear_iso() -> (Arc<CurvedBundle>, Arc<CurvedBundle>, CoordinateIso) {
    let src = three_gen();
    let m = Arc::new(src.manifold());
    let sig = &m.sig;
    let (a, b, c) = (sig.var(0), sig.var(1), sig.var(2));
    let ab = sig.mul(&a, &b);
    let pullback = vec![a.clone(), b.clone(), c.plus(&ab)];
    let inverse = vec![a, b, c.minus(&ab)];
    // target Q transported through the change of coordinates
    let q_fibre: Vec<Poly> = pullback.iter().map(|g| sig.subst(&m.q_apply(g), &inverse, sig)).collect();
    let tgt = CurvedBundle::from_q(Base::Point, src.fibre.clone(), &q_fibre).unwrap();
    let n = Arc::new(tgt.manifold());
    let iso = CoordinateIso::new(m, n, pullback, inverse).unwrap();
    (Arc::new(src), Arc::new(tgt), iso)
}

#[test]
fn hkr_square_commutes_under_a_nonlinear_change_of_coordinates() {
    let (src, tgt, iso) = nonlinear_iso();
    assert_ne!(iso.source.q, iso.target.q);
    let sm = TensorSpaces::new(src, &FibreConnection::flat()).unwrap();
    let sn = TensorSpaces::new(tgt, &FibreConnection::flat()).unwrap();
    let flat = AffineConnection::flat();
    let tdm = todd_truncation(&atiyah_cocycle(&sm, &flat).unwrap(), 2).unwrap();
    let tdn = todd_truncation(&atiyah_cocycle(&sn, &flat).unwrap(), 2).unwrap();
    let sides = ToddSides { source: (&sm, &tdm), target: (&sn, &tdn) };
    let checks = hkr_diagram(&iso, 2, 2, (-3, 3), Some(&sides)).unwrap();
    assert_eq!(checks.len(), 3);
    for c in checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
}

#[test]
fn coordinate_iso_must_intertwine_q() {
    let (_, _, iso) = nonlinear_iso();
    let wrong = CoordinateIso::new(iso.source.clone(), iso.source.clone(), iso.pullback.clone(), iso.inverse.clone());
    assert!(wrong.is_err());
}

#[test]
fn contraction_with_a_one_form() {
    // L^1 = <e>: the frame field is ∂ξ, and E_e(∂ξ) = 1
    let b = Arc::new(CurvedBundle::new(Base::Point, GradedSpace::new([(1, "e".to_string())]), vec![]).unwrap());
    let sp = TensorSpaces::new(b, &FibreConnection::flat()).unwrap();
    let tp = PolyVectors::new(sp.mfd.clone());
    let form = vec![sp.mfd.sig.one()];
    let th = tp.partial(0);
    assert_eq!(contract(&tp, &sp, &form, 1, -1, &th), tp.sig.one());
    // two ordered choices of one factor out of θ ∧ θ
    let th2 = tp.wedge(&th, &th);
    assert_eq!(contract(&tp, &sp, &form, 1, -1, &th2), th.scale(&q(2)));
    // functions are untouched by 1-forms
    assert!(contract(&tp, &sp, &form, 1, -1, &tp.sig.one()).is_zero());
}
