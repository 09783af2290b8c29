//! Graded manifolds with a homological vector field, in global coordinates.
//!
//! Generators are the base coordinates (degree 0, even) followed by the
//! fibre coordinates.  Vector fields are stored by their values on the
//! generators, i.e. in the coordinate frame `X = sum_v X^v ∂_v`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::graded::{Complex, GResult, GradedError};
use crate::linalg::Matrix;
use crate::poly::{Mono, Poly, Signature};
use crate::scalar::Q;

#[derive(Debug)]
pub struct DgManifold {
    pub sig: Signature,
    pub nbase: usize,
    pub q: Vec<Poly>,
    cache: Mutex<HashMap<i32, Arc<MonoBasis>>>,
}

impl Clone for DgManifold {
    fn clone(&self) -> Self {
        DgManifold::new(self.sig.clone(), self.nbase, self.q.clone())
    }
}

impl PartialEq for DgManifold {
    fn eq(&self, other: &Self) -> bool {
        self.sig == other.sig && self.nbase == other.nbase && self.q == other.q
    }
}

/// Monomial basis of one degree of the function algebra.
#[derive(Debug, Clone)]
pub struct MonoBasis {
    pub monos: Vec<Mono>,
    pub index: HashMap<Mono, usize>,
}

impl MonoBasis {
    pub fn new(monos: Vec<Mono>) -> MonoBasis {
        let index = monos.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        MonoBasis { monos, index }
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }
}

/// Multiplies each monomial term of `p` by `(-1)^(deg m * k)`.
pub fn koszul_twist(sig: &Signature, p: &Poly, k: i32) -> Poly {
    if k.rem_euclid(2) == 0 {
        return p.clone();
    }
    Poly {
        terms: p
            .terms
            .iter()
            .map(|(m, c)| {
                let odd = sig.mono_degree(m).rem_euclid(2) == 1;
                (m.clone(), if odd { -c.clone() } else { c.clone() })
            })
            .collect(),
    }
}

impl DgManifold {
    pub fn new(sig: Signature, nbase: usize, q: Vec<Poly>) -> DgManifold {
        assert_eq!(q.len(), sig.len());
        DgManifold { sig, nbase, q, cache: Mutex::new(HashMap::new()) }
    }

    /// The DG manifold over a single base point: base coordinates are set
    /// to `point` and dropped.  Needs `Q` to vanish on base coordinates.
    pub fn fibre_at(&self, point: &[Q]) -> Result<DgManifold, String> {
        if point.len() != self.nbase {
            return Err(format!("point has {} coordinates, base has {}", point.len(), self.nbase));
        }
        if self.q[..self.nbase].iter().any(|p| !p.is_zero()) {
            return Err("Q does not vanish on base coordinates".into());
        }
        let sig = Signature::new(self.sig.vars()[self.nbase..].to_vec());
        let q = self.q[self.nbase..].iter().map(|p| self.sig.restrict_prefix(p, point)).collect();
        Ok(DgManifold::new(sig, 0, q))
    }

    pub fn ngen(&self) -> usize {
        self.sig.len()
    }

    pub fn is_point(&self) -> bool {
        self.nbase == 0
    }

    pub fn gen_degree(&self, v: usize) -> i32 {
        self.sig.vars()[v].degree
    }

    /// Degree of the coordinate vector field `∂_v`.
    pub fn partial_degree(&self, v: usize) -> i32 {
        -self.gen_degree(v)
    }

    pub fn q_apply(&self, f: &Poly) -> Poly {
        self.sig.apply(&self.q, f)
    }

    /// `Q(Q(g))` for every generator `g`.
    pub fn q_squared(&self) -> Vec<Poly> {
        self.q.iter().map(|g| self.q_apply(g)).collect()
    }

    pub fn partial(&self, v: usize) -> Vec<Poly> {
        let mut x = vec![Poly::zero(); self.ngen()];
        x[v] = self.sig.one();
        x
    }

    pub fn vf_apply(&self, x: &[Poly], f: &Poly) -> Poly {
        self.sig.apply(x, f)
    }

    /// `[X, Y]` for homogeneous fields of degrees `dx`, `dy`.
    pub fn bracket(&self, x: &[Poly], dx: i32, y: &[Poly], dy: i32) -> Vec<Poly> {
        let neg = (dx * dy).rem_euclid(2) == 1;
        (0..self.ngen())
            .map(|v| {
                let a = self.vf_apply(x, &y[v]);
                let b = self.vf_apply(y, &x[v]);
                if neg {
                    a.plus(&b)
                } else {
                    a.minus(&b)
                }
            })
            .collect()
    }

    /// `[Q, Y]` for a homogeneous field of degree `dy`.
    pub fn q_bracket(&self, y: &[Poly], dy: i32) -> Vec<Poly> {
        self.bracket(&self.q, 1, y, dy)
    }

    pub fn mul_vf(&self, c: &Poly, x: &[Poly]) -> Vec<Poly> {
        x.iter().map(|xv| self.sig.mul(c, xv)).collect()
    }

    /// Monomial basis of degree-`t` functions; only finite over a point base.
    pub fn monomials(&self, t: i32) -> GResult<Arc<MonoBasis>> {
        if !self.is_point() {
            return Err(GradedError::NotMaterializable(t));
        }
        if let Some(b) = self.cache.lock().unwrap().get(&t) {
            return Ok(b.clone());
        }
        let n = self.ngen();
        let allowed = vec![true; n];
        let caps = vec![None; n];
        let monos = if t > 0 {
            Vec::new()
        } else {
            self.sig.monomials_of_degree(t, &allowed, &caps).map_err(|_| GradedError::NotMaterializable(t))?
        };
        let b = Arc::new(MonoBasis::new(monos));
        self.cache.lock().unwrap().insert(t, b.clone());
        Ok(b)
    }

    pub fn function_complex(self: &Arc<Self>) -> FunctionComplex {
        FunctionComplex { mfd: self.clone() }
    }
}

/// The function algebra with differential `Q`.
pub struct FunctionComplex {
    pub mfd: Arc<DgManifold>,
}

impl Complex for FunctionComplex {
    fn dim(&self, t: i32) -> GResult<usize> {
        Ok(self.mfd.monomials(t)?.len())
    }

    fn diff(&self, t: i32) -> GResult<Matrix> {
        let src = self.mfd.monomials(t)?;
        let tgt = self.mfd.monomials(t + 1)?;
        let mut m = Matrix::zeros(tgt.len(), src.len());
        for (j, mono) in src.monos.iter().enumerate() {
            let img = self.mfd.q_apply(&Poly::monomial(mono.clone(), crate::scalar::one()));
            for (mm, c) in &img.terms {
                let i = tgt.index[mm];
                m.add_to(i, j, c);
            }
        }
        Ok(m)
    }
}
