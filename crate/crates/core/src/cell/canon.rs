//! Canonical forms for exact comparison of low-dimensional complexes as
//! signed piecewise-affine maps to the product of the two circles.
//!
//! Two complexes that present the same signed map with different cell
//! decompositions (for instance after a fiber product with an identity
//! circle) get equal canonical forms: cells are split where either reduced
//! evaluation crosses the cut, signs are folded to cut trivializations,
//! orientations are normalized, and coefficients are summed per piece.

use super::{Cell, CellKind, SignedCellComplex};
use crate::circle::{lift_fold, CirclePoint, LocalSystem, Rat};
use crate::error::Error;
use num::{BigInt, One, Signed, Zero};
use std::collections::BTreeMap;

pub type CanonPoint = ((CirclePoint, CirclePoint), i64);

/// Canonical form of a 0-dimensional complex: reduced evaluation pairs with
/// summed cut-folded coefficients; zero entries are dropped.
pub fn canonical_points(
    cx: &SignedCellComplex,
    ls_plus: &LocalSystem,
    ls_minus: &LocalSystem,
) -> Vec<CanonPoint> {
    assert_eq!(cx.dim, 0);
    let mut acc: BTreeMap<(CirclePoint, CirclePoint), i64> = BTreeMap::new();
    for c in &cx.cells {
        let (lp, lm) = (&c.e_plus.vertex_lifts[0], &c.e_minus.vertex_lifts[0]);
        let folded = c.sign * lift_fold(ls_plus, lp) * lift_fold(ls_minus, lm);
        let key = (CirclePoint::new(lp.clone()), CirclePoint::new(lm.clone()));
        *acc.entry(key).or_insert(0) += folded.i64();
    }
    acc.into_iter().filter(|(_, v)| *v != 0).collect()
}

type SegKey = ((Rat, Rat), (Rat, Rat));

/// Canonical form of a 1-dimensional complex of simplex cells.
pub fn canonical_segments(
    cx: &SignedCellComplex,
    ls_plus: &LocalSystem,
    ls_minus: &LocalSystem,
) -> Result<Vec<(SegKey, i64)>, Error> {
    assert_eq!(cx.dim, 1);
    let mut acc: BTreeMap<SegKey, i64> = BTreeMap::new();
    for c in &cx.cells {
        if let CellKind::Cylinder { .. } = c.kind {
            return Err(Error::Unsupported("canonical form of cylinder cells".into()));
        }
        for (key, coeff) in segment_pieces(c, ls_plus, ls_minus) {
            *acc.entry(key).or_insert(0) += coeff;
        }
    }
    Ok(acc.into_iter().filter(|(_, v)| *v != 0).collect())
}

fn segment_pieces(c: &Cell, ls_plus: &LocalSystem, ls_minus: &LocalSystem) -> Vec<(SegKey, i64)> {
    let (p0, p1) = (&c.e_plus.vertex_lifts[0], &c.e_plus.vertex_lifts[1]);
    let (m0, m1) = (&c.e_minus.vertex_lifts[0], &c.e_minus.vertex_lifts[1]);
    // Breakpoints where either lift crosses an integer.
    let mut ts: Vec<Rat> = vec![Rat::zero(), Rat::one()];
    for (a, b) in [(p0, p1), (m0, m1)] {
        let g = b - a;
        if g.is_zero() {
            continue;
        }
        let lo = a.min(b);
        let hi = a.max(b);
        let mut k = lo.ceil().to_integer();
        let hi_f = hi.floor().to_integer();
        while k <= hi_f {
            let t = (Rat::from(k.clone()) - a) / &g;
            if t.is_positive() && t < Rat::one() {
                ts.push(t);
            }
            k += BigInt::one();
        }
    }
    ts.sort();
    ts.dedup();
    let eval = |a: &Rat, b: &Rat, t: &Rat| a + t * (b - a);
    let mut out = Vec::new();
    for w in ts.windows(2) {
        let (t0, t1) = (&w[0], &w[1]);
        let mid = (t0 + t1) / Rat::from(BigInt::from(2));
        let kp = eval(p0, p1, &mid).floor();
        let km = eval(m0, m1, &mid).floor();
        let folded = c.sign
            * lift_fold(ls_plus, &Rat::from(kp.to_integer()))
            * lift_fold(ls_minus, &Rat::from(km.to_integer()));
        let a = (eval(p0, p1, t0) - &kp, eval(m0, m1, t0) - &km);
        let b = (eval(p0, p1, t1) - &kp, eval(m0, m1, t1) - &km);
        let (key, coeff) = if b < a {
            (((b.0, b.1), (a.0, a.1)), -folded.i64())
        } else {
            (((a.0, a.1), (b.0, b.1)), folded.i64())
        };
        out.push((key, coeff));
    }
    out
}

/// Exact equality of two complexes as signed maps to the torus of
/// evaluation pairs. Supports dimensions 0 and 1.
pub fn complexes_equal_as_maps(
    a: &SignedCellComplex,
    b: &SignedCellComplex,
    ls_plus: &LocalSystem,
    ls_minus: &LocalSystem,
) -> Result<bool, Error> {
    if a.dim != b.dim {
        return Ok(false);
    }
    match a.dim {
        0 => Ok(canonical_points(a, ls_plus, ls_minus) == canonical_points(b, ls_plus, ls_minus)),
        1 => Ok(canonical_segments(a, ls_plus, ls_minus)? == canonical_segments(b, ls_plus, ls_minus)?),
        d => Err(Error::Unsupported(format!("canonical comparison in dimension {d}"))),
    }
}

/// Fold the signs of a 0-dimensional complex into a single signed count.
pub fn signed_count(cx: &SignedCellComplex, ls_plus: &LocalSystem, ls_minus: &LocalSystem) -> i64 {
    assert_eq!(cx.dim, 0);
    cx.cells
        .iter()
        .map(|c| {
            (c.sign
                * lift_fold(ls_plus, &c.e_plus.vertex_lifts[0])
                * lift_fold(ls_minus, &c.e_minus.vertex_lifts[0]))
            .i64()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::{rat, MINUS, PLUS};

    #[test]
    fn split_and_fold() {
        // One cell winding once on e_plus with a twisted plus system: the
        // two halves fold with opposite signs.
        let c = Cell::segment(PLUS, (rat(1, 2), rat(3, 2)), (rat(1, 4), rat(1, 4)));
        let cx = SignedCellComplex::of_cells(1, vec![c]);
        let canon = canonical_segments(&cx, &LocalSystem::TWISTED, &LocalSystem::TRIVIAL).unwrap();
        assert_eq!(canon.len(), 2);
        let coeffs: Vec<i64> = canon.iter().map(|(_, v)| *v).collect();
        assert!(coeffs.contains(&1) && coeffs.contains(&-1));
    }

    #[test]
    fn orientation_normalization_cancels() {
        let a = Cell::segment(PLUS, (rat(1, 10), rat(3, 10)), (rat(1, 2), rat(1, 2)));
        let b = Cell::segment(MINUS, (rat(3, 10), rat(1, 10)), (rat(1, 2), rat(1, 2)));
        let cx1 = SignedCellComplex::of_cells(1, vec![a]);
        let cx2 = SignedCellComplex::of_cells(1, vec![b]);
        assert!(complexes_equal_as_maps(&cx1, &cx2, &LocalSystem::TRIVIAL, &LocalSystem::TRIVIAL).unwrap());
    }
}
