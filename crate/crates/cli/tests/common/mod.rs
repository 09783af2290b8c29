//! Documents shared by the CLI tests.

use dgm_cli::doc::{poly_doc, BundleDoc, Document, IsoDoc, VERSION};
use dgm_core::graded::GradedSpace;
use dgm_core::linfty::{Base, CurvedBundle, Taylor};
use dgm_core::poly::Poly;
use dgm_core::scalar::q;

/// `L^1 = <a, b>`, `L^2 = <c>`, `λ0 = b`, `λ1(a) = c`, moved along `c ↦ c + a b`.
pub fn nonlinear_iso_doc() -> Document {
    let mut l0 = Taylor::new();
    l0.entry(vec![]).or_default().insert(1, Poly::constant(q(1), 0));
    let mut l1 = Taylor::new();
    l1.entry(vec![0]).or_default().insert(2, Poly::constant(q(1), 0));
    let fibre = GradedSpace::new([(1, "a".to_string()), (1, "b".to_string()), (2, "c".to_string())]);
    let src = CurvedBundle::new(Base::Point, fibre, vec![l0, l1]).unwrap();
    let m = src.manifold();
    let sig = &m.sig;
    let (a, b, c) = (sig.var(0), sig.var(1), sig.var(2));
    let ab = sig.mul(&a, &b);
    let pullback = vec![a.clone(), b.clone(), c.plus(&ab)];
    let inverse = vec![a, b, c.minus(&ab)];
    let q_fibre: Vec<Poly> = pullback.iter().map(|g| sig.subst(&m.q_apply(g), &inverse, sig)).collect();
    let tgt = CurvedBundle::from_q(Base::Point, src.fibre.clone(), &q_fibre).unwrap();
    let mut d = Document { version: VERSION, ..Document::default() };
    d.bundles.insert("M".into(), BundleDoc::from_bundle(&src));
    d.bundles.insert("N".into(), BundleDoc::from_bundle(&tgt));
    let names: Vec<String> = sig.vars().iter().map(|v| v.name.clone()).collect();
    let write = |ps: &[Poly]| names.iter().cloned().zip(ps.iter().map(|p| poly_doc(p, sig))).collect();
    d.isomorphisms.insert(
        "shear".into(),
        IsoDoc { source: "M".into(), target: "N".into(), pullback: write(&pullback), inverse: write(&inverse) },
    );
    d
}
