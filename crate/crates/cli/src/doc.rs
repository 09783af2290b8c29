//! Input documents.
//!
//! JSON with rationals written as `"p/q"` and polynomials as maps from
//! monomials (`"x1^2*xi_a"`, `"1"`) to rationals.  Base coordinates are
//! `x1 .. xm`; the fibre coordinate of a generator labelled `a` is `xi_a`.
//! Unknown fields are rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use dgm_core::atiyah::AffineConnection;
use dgm_core::graded::GradedSpace;
use dgm_core::hochschild::CoordinateIso;
use dgm_core::linalg::Matrix;
use dgm_core::linfty::{base_signature, Base, CurvedBundle, LinftyMorphism, Taylor};
use dgm_core::manifold::DgManifold;
use dgm_core::poly::{Poly, Signature};
use dgm_core::scalar::{fmt_q, parse_q, Q};
use dgm_core::tensors::FibreConnection;
use serde::{Deserialize, Serialize};

pub const VERSION: u32 = 1;

/// Monomial -> coefficient.
pub type PolyDoc = BTreeMap<String, String>;

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq, Default)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub version: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bundles: BTreeMap<String, BundleDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub morphisms: BTreeMap<String, MorphismDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub connections: BTreeMap<String, ConnectionDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub isomorphisms: BTreeMap<String, IsoDoc>,
    /// Classical points, keyed by bundle name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub points: BTreeMap<String, Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Params::is_empty")]
    pub params: Params,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct GeneratorDoc {
    pub label: String,
    pub degree: i32,
}

/// One Taylor coefficient: `inputs` (generator labels, repeats allowed for
/// even generators) map to `coefficient · target`.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct TermDoc {
    pub inputs: Vec<String>,
    pub target: String,
    pub coefficient: PolyDoc,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct BundleDoc {
    /// 0 for a point base.
    #[serde(default)]
    pub base_dim: usize,
    pub fibre: Vec<GeneratorDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda: Vec<TermDoc>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct MorphismDoc {
    pub source: String,
    pub target: String,
    /// One polynomial in the source base coordinates per target base coordinate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub base_map: Vec<PolyDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phi: Vec<TermDoc>,
    /// `(source point, target point)` index pairs; matched by base image when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing: Option<Vec<[usize; 2]>>,
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ConnectionKind {
    /// Christoffel symbols on all coordinates of the graded manifold.
    Affine,
    /// Connection on the fibre bundle over the base.
    Fibre,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct ChristoffelDoc {
    pub along: String,
    pub of: String,
    pub value: BTreeMap<String, PolyDoc>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct ConnectionDoc {
    pub kind: ConnectionKind,
    pub bundle: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<ChristoffelDoc>,
}

/// Polynomial change of coordinates between two bundles over a point.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct IsoDoc {
    pub source: String,
    pub target: String,
    /// Target coordinate -> polynomial in source coordinates.
    pub pullback: BTreeMap<String, PolyDoc>,
    /// Source coordinate -> polynomial in target coordinates.
    pub inverse: BTreeMap<String, PolyDoc>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq, Default)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub morphism: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub connections: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isomorphism: Option<String>,
    /// Right inverse of `Ψ_*`, rows indexed by source coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splitting: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub complexes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub require: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[i32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncate_arity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncate_order: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub todd_order: Option<usize>,
}

impl Params {
    pub fn is_empty(&self) -> bool {
        self == &Params::default()
    }
}

/// Schema or reference error in a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocError(pub String);

impl std::fmt::Display for DocError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DocError {}

pub type DResult<T> = Result<T, DocError>;

fn err<T>(msg: impl Into<String>) -> DResult<T> {
    Err(DocError(msg.into()))
}

pub fn parse_rational(s: &str) -> DResult<Q> {
    parse_q(s).ok_or_else(|| DocError(format!("not a rational: {s:?}")))
}

pub fn parse_poly(doc: &PolyDoc, sig: &Signature) -> DResult<Poly> {
    let mut p = Poly::zero();
    for (mono, c) in doc {
        let m = sig
            .parse_mono(mono)
            .ok_or_else(|| DocError(format!("monomial {mono:?} is not over {}", var_list(sig))))?;
        p.add_term(m, parse_rational(c)?);
    }
    Ok(p)
}

pub fn poly_doc(p: &Poly, sig: &Signature) -> PolyDoc {
    p.terms.iter().map(|(m, c)| (sig.fmt_mono(m), fmt_q(c))).collect()
}

fn var_list(sig: &Signature) -> String {
    if sig.is_empty() {
        return "no variables".into();
    }
    sig.vars().iter().map(|v| v.name.as_str()).collect::<Vec<_>>().join(", ")
}

pub fn parse_point(p: &[String], dim: usize) -> DResult<Vec<Q>> {
    if p.len() != dim {
        return err(format!("point has {} coordinates, base has {dim}", p.len()));
    }
    p.iter().map(|s| parse_rational(s)).collect()
}

impl Document {
    pub fn parse(text: &str) -> DResult<Document> {
        let doc: Document = serde_json::from_str(text).map_err(|e| DocError(format!("schema: {e}")))?;
        if doc.version != VERSION {
            return err(format!("unsupported document version {}", doc.version));
        }
        Ok(doc)
    }

    /// Canonical text: pretty JSON with a trailing newline.
    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents serialize");
        s.push('\n');
        s
    }

    pub fn bundle_doc(&self, name: &str) -> DResult<&BundleDoc> {
        self.bundles.get(name).ok_or_else(|| DocError(format!("no bundle named {name:?}")))
    }

    pub fn bundle(&self, name: &str) -> DResult<Arc<CurvedBundle>> {
        self.bundle_doc(name)?.resolve().map(Arc::new).map_err(|e| DocError(format!("bundle {name:?}: {e}")))
    }

    pub fn morphism(&self, name: &str) -> DResult<LinftyMorphism> {
        let m = self.morphisms.get(name).ok_or_else(|| DocError(format!("no morphism named {name:?}")))?;
        let source = self.bundle(&m.source)?;
        let target = self.bundle(&m.target)?;
        m.resolve(source, target).map_err(|e| DocError(format!("morphism {name:?}: {e}")))
    }

    /// Classical points listed for a bundle.
    pub fn points_of(&self, bundle: &str, dim: usize) -> DResult<Vec<Vec<Q>>> {
        self.points
            .get(bundle)
            .map(|ps| ps.iter().map(|p| parse_point(p, dim)).collect())
            .unwrap_or_else(|| Ok(Vec::new()))
    }

    fn connection_doc(&self, name: &str, kind: ConnectionKind, bundle: &str) -> DResult<Option<&ConnectionDoc>> {
        if name == "flat" {
            return Ok(None);
        }
        let c = self.connections.get(name).ok_or_else(|| DocError(format!("no connection named {name:?}")))?;
        if c.kind != kind {
            return err(format!("connection {name:?} has kind {:?}, expected {kind:?}", c.kind));
        }
        if c.bundle != bundle {
            return err(format!("connection {name:?} lives on {:?}, not on {bundle:?}", c.bundle));
        }
        Ok(Some(c))
    }

    /// Affine connection by name; `"flat"` is the coordinate-flat one.
    pub fn affine_connection(&self, name: &str, bundle: &str) -> DResult<AffineConnection> {
        let Some(c) = self.connection_doc(name, ConnectionKind::Affine, bundle)? else {
            return Ok(AffineConnection::flat());
        };
        let sig = self.bundle(bundle)?.coord_sig();
        let n = sig.len();
        let index = |s: &str| sig.var_index(s).ok_or_else(|| DocError(format!("{s:?} is not a coordinate of {bundle:?}")));
        let mut christoffel: BTreeMap<(usize, usize), Vec<Poly>> = BTreeMap::new();
        for e in &c.entries {
            let key = (index(&e.along)?, index(&e.of)?);
            if christoffel.contains_key(&key) {
                return err(format!("connection {name:?} repeats the entry ({}, {})", e.along, e.of));
            }
            let mut img = vec![Poly::zero(); n];
            for (w, p) in &e.value {
                img[index(w)?] = parse_poly(p, &sig)?;
            }
            christoffel.insert(key, img);
        }
        Ok(AffineConnection { christoffel })
    }

    /// Fibre connection by name; `"flat"` is the trivial one.
    pub fn fibre_connection(&self, name: &str, bundle: &str) -> DResult<FibreConnection> {
        let Some(c) = self.connection_doc(name, ConnectionKind::Fibre, bundle)? else {
            return Ok(FibreConnection::flat());
        };
        let b = self.bundle(bundle)?;
        let bsig = b.base_sig();
        let labels: Vec<String> = b.generators().into_iter().map(|g| g.1).collect();
        let fibre_index =
            |s: &str| labels.iter().position(|l| l == s).ok_or_else(|| DocError(format!("{s:?} is not a generator of {bundle:?}")));
        let mut gamma: BTreeMap<(usize, usize), BTreeMap<usize, Poly>> = BTreeMap::new();
        for e in &c.entries {
            let i = bsig.var_index(&e.along).ok_or_else(|| DocError(format!("{:?} is not a base coordinate", e.along)))?;
            let key = (i, fibre_index(&e.of)?);
            if gamma.contains_key(&key) {
                return err(format!("connection {name:?} repeats the entry ({}, {})", e.along, e.of));
            }
            let mut img = BTreeMap::new();
            for (t, p) in &e.value {
                img.insert(fibre_index(t)?, parse_poly(p, &bsig)?);
            }
            gamma.insert(key, img);
        }
        let conn = FibreConnection { gamma };
        conn.check_shape(&b).map_err(|e| DocError(format!("connection {name:?}: {e}")))?;
        Ok(conn)
    }

    /// The manifolds of an isomorphism with its validated coordinate maps;
    /// the inner error is a mathematical failure of the maps.
    pub fn isomorphism(&self, name: &str) -> DResult<(Arc<CurvedBundle>, Arc<CurvedBundle>, Result<CoordinateIso, String>)> {
        let d = self.isomorphisms.get(name).ok_or_else(|| DocError(format!("no isomorphism named {name:?}")))?;
        let (sb, tb) = (self.bundle(&d.source)?, self.bundle(&d.target)?);
        let (sm, tm): (Arc<DgManifold>, Arc<DgManifold>) = (Arc::new(sb.manifold()), Arc::new(tb.manifold()));
        let read = |map: &BTreeMap<String, PolyDoc>, keys: &Signature, over: &Signature| -> DResult<Vec<Poly>> {
            let mut out = vec![None; keys.len()];
            for (k, p) in map {
                let i = keys.var_index(k).ok_or_else(|| DocError(format!("{k:?} is not a coordinate")))?;
                out[i] = Some(parse_poly(p, over)?);
            }
            out.into_iter()
                .enumerate()
                .map(|(i, p)| p.ok_or_else(|| DocError(format!("no image for coordinate {}", keys.vars()[i].name))))
                .collect()
        };
        let pullback = read(&d.pullback, &tm.sig, &sm.sig)?;
        let inverse = read(&d.inverse, &sm.sig, &tm.sig)?;
        Ok((sb, tb, CoordinateIso::new(sm, tm, pullback, inverse)))
    }

    pub fn splitting(&self, rows: &[Vec<String>]) -> DResult<Matrix> {
        let dense = rows.iter().map(|r| r.iter().map(|s| parse_rational(s)).collect()).collect::<DResult<Vec<Vec<Q>>>>()?;
        let ncols = dense.first().map_or(0, |r| r.len());
        if dense.iter().any(|r| r.len() != ncols) {
            return err("splitting rows have different lengths");
        }
        Ok(Matrix::from_dense_shape(dense.len(), ncols, &dense))
    }
}

fn read_terms(
    terms: &[TermDoc],
    inputs_of: &[(i32, String)],
    targets_of: &[(i32, String)],
    sig: &Signature,
) -> DResult<Vec<Taylor>> {
    let find = |labels: &[(i32, String)], s: &str| {
        labels.iter().position(|g| g.1 == s).ok_or_else(|| DocError(format!("unknown generator {s:?}")))
    };
    let mut out: Vec<Taylor> = Vec::new();
    for t in terms {
        let mut idx = t.inputs.iter().map(|s| find(inputs_of, s)).collect::<DResult<Vec<usize>>>()?;
        idx.sort_unstable();
        let target = find(targets_of, &t.target)?;
        let n = idx.len();
        while out.len() <= n {
            out.push(Taylor::new());
        }
        let slot = out[n].entry(idx).or_default();
        if slot.contains_key(&target) {
            return err(format!("repeated term {:?} -> {}", t.inputs, t.target));
        }
        slot.insert(target, parse_poly(&t.coefficient, sig)?);
    }
    Ok(out)
}

fn write_terms(tabs: &[Taylor], inputs_of: &[(i32, String)], targets_of: &[(i32, String)], sig: &Signature) -> Vec<TermDoc> {
    let mut out = Vec::new();
    for tab in tabs {
        for (idx, img) in tab {
            for (&t, p) in img {
                if p.is_zero() {
                    continue;
                }
                out.push(TermDoc {
                    inputs: idx.iter().map(|&a| inputs_of[a].1.clone()).collect(),
                    target: targets_of[t].1.clone(),
                    coefficient: poly_doc(p, sig),
                });
            }
        }
    }
    out
}

impl BundleDoc {
    fn generators(&self) -> DResult<GradedSpace> {
        let mut seen = BTreeSet::new();
        for g in &self.fibre {
            if g.label.is_empty() || !g.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return err(format!("generator label {:?} must be alphanumeric", g.label));
            }
            if !seen.insert(&g.label) {
                return err(format!("generator label {:?} appears twice", g.label));
            }
            if g.degree < 1 {
                return err(format!("generator {:?} has degree {} < 1", g.label, g.degree));
            }
        }
        Ok(GradedSpace::new(self.fibre.iter().map(|g| (g.degree, g.label.clone()))))
    }

    pub fn resolve(&self) -> DResult<CurvedBundle> {
        let fibre = self.generators()?;
        let base = if self.base_dim == 0 { Base::Point } else { Base::Affine(self.base_dim) };
        let gens = fibre.basis();
        let lambda = read_terms(&self.lambda, &gens, &gens, &base_signature(self.base_dim))?;
        CurvedBundle::new(base, fibre, lambda).map_err(|e| DocError(e.to_string()))
    }

    /// Canonical description of a bundle.
    pub fn from_bundle(b: &CurvedBundle) -> BundleDoc {
        let gens = b.generators();
        BundleDoc {
            base_dim: b.base.dim(),
            fibre: gens.iter().map(|(d, l)| GeneratorDoc { label: l.clone(), degree: *d }).collect(),
            lambda: write_terms(&b.lambda, &gens, &gens, &b.base_sig()),
        }
    }
}

impl MorphismDoc {
    pub fn resolve(&self, source: Arc<CurvedBundle>, target: Arc<CurvedBundle>) -> DResult<LinftyMorphism> {
        let sig = source.base_sig();
        let base_map = self.base_map.iter().map(|p| parse_poly(p, &sig)).collect::<DResult<Vec<_>>>()?;
        let mut phi = read_terms(&self.phi, &source.generators(), &target.generators(), &sig)?;
        if let Some(t) = phi.first() {
            if !t.is_empty() {
                return err("φ has no component without inputs");
            }
        }
        while phi.len() < 2 {
            phi.push(Taylor::new());
        }
        LinftyMorphism::new(source, target, base_map, phi).map_err(|e| DocError(e.to_string()))
    }

    /// Canonical description of a morphism between the named bundles.
    pub fn from_morphism(f: &LinftyMorphism, source: &str, target: &str) -> MorphismDoc {
        let sig = f.source.base_sig();
        MorphismDoc {
            source: source.into(),
            target: target.into(),
            base_map: f.base_map.iter().map(|p| poly_doc(p, &sig)).collect(),
            phi: write_terms(&f.phi, &f.source.generators(), &f.target.generators(), &sig),
            pairing: None,
        }
    }
}

impl ConnectionDoc {
    pub fn from_affine(c: &AffineConnection, bundle: &str, sig: &Signature) -> ConnectionDoc {
        let entries = c
            .christoffel
            .iter()
            .filter(|(_, img)| img.iter().any(|p| !p.is_zero()))
            .map(|(&(u, v), img)| ChristoffelDoc {
                along: sig.vars()[u].name.clone(),
                of: sig.vars()[v].name.clone(),
                value: img
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| !p.is_zero())
                    .map(|(w, p)| (sig.vars()[w].name.clone(), poly_doc(p, sig)))
                    .collect(),
            })
            .collect();
        ConnectionDoc { kind: ConnectionKind::Affine, bundle: bundle.into(), entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RANK_ONE: &str = r#"{
  "version": 1,
  "bundles": {
    "L": {
      "fibre": [{"label": "e", "degree": 1}],
      "lambda": [{"inputs": [], "target": "e", "coefficient": {"1": "1"}}]
    }
  }
}"#;

    #[test]
    fn parses_and_resolves_rank_one() {
        let doc = Document::parse(RANK_ONE).unwrap();
        let b = doc.bundle("L").unwrap();
        assert!(b.validate().passed());
        assert_eq!(BundleDoc::from_bundle(&b), doc.bundles["L"]);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = RANK_ONE.replace("\"degree\": 1", "\"degree\": 1, \"weight\": 0");
        assert!(Document::parse(&text).unwrap_err().0.contains("unknown field"));
    }

    #[test]
    fn bad_rationals_and_monomials_are_rejected() {
        let doc = Document::parse(&RANK_ONE.replace("\"1\": \"1\"", "\"1\": \"1/0\"")).unwrap();
        assert!(doc.bundle("L").is_err());
        let doc = Document::parse(&RANK_ONE.replace("\"1\": \"1\"", "\"x1\": \"1\"")).unwrap();
        assert!(doc.bundle("L").unwrap_err().0.contains("no variables"));
    }

    #[test]
    fn repeated_labels_are_rejected() {
        let text = RANK_ONE.replace(r#"[{"label": "e", "degree": 1}]"#, r#"[{"label": "e", "degree": 1}, {"label": "e", "degree": 2}]"#);
        assert!(Document::parse(&text).unwrap().bundle("L").unwrap_err().0.contains("twice"));
    }

    #[test]
    fn version_is_checked() {
        assert!(Document::parse(&RANK_ONE.replace("\"version\": 1", "\"version\": 2")).is_err());
    }
}
