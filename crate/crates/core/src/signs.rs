//! Sign conventions shared by every module.
//!
//! Homogeneous elements carry a bidegree `(weight, degree)`.  The weight
//! counts auxiliary slots (wedge factors of poly-vectors); plain functions,
//! vector fields and tensors have weight 0.  Transposing `a` past `b` costs
//! `(-1)^(w_a w_b + d_a d_b)`, which is the Koszul rule when weights vanish.
//!
//! Other fixed choices, referenced from the modules that use them:
//! * parity of a basis element is its degree mod 2;
//! * a linear map `F` of degree `s` extended over functions obeys
//!   `F(c x) = (-1)^(s |c|) c F(x)`;
//! * supertrace is `sum_d (-1)^d tr_d` over the degree of the frame element;
//! * forms use `deg(dw) = deg(w) + 1`, so Atiyah forms are even supermatrices.

/// True when transposing the two bidegrees produces a minus sign.
pub fn odd_swap(w1: i64, d1: i64, w2: i64, d2: i64) -> bool {
    (w1 * w2 + d1 * d2).rem_euclid(2) == 1
}

/// Koszul sign `(-1)^(a b)` as a boolean "is negative".
pub fn koszul(a: i64, b: i64) -> bool {
    (a * b).rem_euclid(2) == 1
}

pub fn parity(d: i64) -> bool {
    d.rem_euclid(2) == 1
}

/// `(-1)^n` as a boolean "is negative".
pub fn minus_one_pow(n: i64) -> bool {
    n.rem_euclid(2) == 1
}

/// Sign of the permutation sorting `degs` (given in order) by `perm`, where
/// `perm[k]` is the original index placed at position `k`; the sign combines
/// the Koszul sign of the reordering with `(-1)^inv` when `alternating`.
pub fn permutation_sign(degs: &[i64], perm: &[usize], alternating: bool) -> bool {
    let mut neg = false;
    for a in 0..perm.len() {
        for b in (a + 1)..perm.len() {
            if perm[a] > perm[b] {
                if koszul(degs[perm[a]], degs[perm[b]]) {
                    neg = !neg;
                }
                if alternating {
                    neg = !neg;
                }
            }
        }
    }
    neg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_of_two_odd_elements_is_negative() {
        assert!(koszul(1, 1));
        assert!(!koszul(1, 2));
        assert!(!koszul(2, 2));
        assert!(odd_swap(0, 1, 0, 1));
        assert!(odd_swap(1, 0, 1, 0));
        assert!(!odd_swap(1, 1, 1, 1));
    }

    #[test]
    fn permutation_signs() {
        assert!(permutation_sign(&[1, 1], &[1, 0], false));
        assert!(!permutation_sign(&[1, 1], &[1, 0], true));
        assert!(permutation_sign(&[0, 2], &[1, 0], true));
        assert!(!permutation_sign(&[0, 2, 1], &[0, 1, 2], true));
    }
}
