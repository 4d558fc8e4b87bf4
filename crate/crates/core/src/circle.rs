//! Exact arithmetic on the oriented circle R/Z: points, cyclic order, arcs,
//! and parallel transport in rank-1 local systems.
//!
//! Every circle is parameterized with total length 1 and positive
//! orientation. Local systems are trivialized by cutting at coordinate 0;
//! transport along the positively oriented half-open arc `(from, to]` picks
//! up the monodromy once per cut crossing.

use crate::error::Error;
use num::{BigInt, BigRational, One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Mul, MulAssign, Neg};

/// Exact rational scalar used for all circle coordinates and lifts.
pub type Rat = BigRational;

/// Build a rational from a numerator/denominator pair.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Integer part of a rational, rounding toward negative infinity.
pub fn floor_int(r: &Rat) -> BigInt {
    r.floor().to_integer()
}

/// An orientation sign, +1 or -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sign(i8);

pub const PLUS: Sign = Sign(1);
pub const MINUS: Sign = Sign(-1);

impl Sign {
    pub fn new(v: i64) -> Self {
        match v {
            1 => PLUS,
            -1 => MINUS,
            _ => panic!("sign must be +1 or -1, got {v}"),
        }
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            PLUS
        } else {
            MINUS
        }
    }

    /// Sign of a nonzero rational. Panics on zero.
    pub fn of(r: &Rat) -> Self {
        assert!(!r.is_zero(), "sign of zero");
        Self::from_bool(r.is_positive())
    }

    pub fn i64(self) -> i64 {
        self.0 as i64
    }

    pub fn is_positive(self) -> bool {
        self.0 == 1
    }

    /// self^k, which only depends on the parity of k.
    pub fn pow(self, k: &BigInt) -> Sign {
        if (k % 2u8).is_zero() {
            PLUS
        } else {
            self
        }
    }

    pub fn pow_i64(self, k: i64) -> Sign {
        if k % 2 == 0 {
            PLUS
        } else {
            self
        }
    }
}

impl Mul for Sign {
    type Output = Sign;
    fn mul(self, rhs: Sign) -> Sign {
        Sign(self.0 * rhs.0)
    }
}

impl MulAssign for Sign {
    fn mul_assign(&mut self, rhs: Sign) {
        self.0 *= rhs.0;
    }
}

impl Neg for Sign {
    type Output = Sign;
    fn neg(self) -> Sign {
        Sign(-self.0)
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", if self.0 == 1 { "+1" } else { "-1" })
    }
}

impl Serialize for Sign {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(self.0)
    }
}

impl<'de> Deserialize<'de> for Sign {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = i8::deserialize(d)?;
        if v == 1 || v == -1 {
            Ok(Sign(v))
        } else {
            Err(serde::de::Error::custom(format!("sign must be 1 or -1, got {v}")))
        }
    }
}

/// A point of the circle R/Z: an exact rational in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CirclePoint(Rat);

impl CirclePoint {
    /// Reduce an arbitrary rational mod 1.
    pub fn new(r: Rat) -> Self {
        let f = r.floor();
        CirclePoint(r - f)
    }

    pub fn coord(&self) -> &Rat {
        &self.0
    }

    pub fn into_coord(self) -> Rat {
        self.0
    }

    pub fn is_cut(&self) -> bool {
        self.0.is_zero()
    }

    /// Positive-arc distance from `self` to `q`: `(q - self) mod 1`.
    pub fn arc_to(&self, q: &CirclePoint) -> Rat {
        let d = &q.0 - &self.0;
        if d.is_negative() {
            d + Rat::one()
        } else {
            d
        }
    }
}

impl fmt::Display for CirclePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point of the universal cover R of the circle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lift(pub Rat);

impl Lift {
    pub fn value(&self) -> &Rat {
        &self.0
    }
}

/// Reduce a lift to the circle point it covers.
pub fn reduce(lift: &Lift) -> CirclePoint {
    CirclePoint::new(lift.0.clone())
}

/// A rank-1 local system on a circle, determined by its monodromy. The cut
/// used to trivialize it sits at coordinate 0 by convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalSystem {
    pub monodromy: Sign,
}

impl LocalSystem {
    pub const TRIVIAL: LocalSystem = LocalSystem { monodromy: PLUS };
    pub const TWISTED: LocalSystem = LocalSystem { monodromy: MINUS };

    pub fn is_trivial(&self) -> bool {
        self.monodromy == PLUS
    }
}

/// True iff traversing the circle positively from `p` meets `q` strictly
/// before `r`. The three points must be pairwise distinct.
pub fn cyclically_ordered(p: &CirclePoint, q: &CirclePoint, r: &CirclePoint) -> Result<bool, Error> {
    if p == q || q == r || p == r {
        let (a, b) = if p == q { (p, q) } else if q == r { (q, r) } else { (p, r) };
        return Err(Error::NonDistinctPoints(a.to_string(), b.to_string()));
    }
    Ok(p.arc_to(q) < p.arc_to(r))
}

/// True iff the positively oriented half-open arc `(from, to]` contains the
/// cut point 0. A degenerate arc (`from == to`) contains nothing.
pub fn positive_arc_crosses_cut(from: &CirclePoint, to: &CirclePoint) -> bool {
    if from == to {
        return false;
    }
    let cut = CirclePoint::new(Rat::zero());
    let a = from.arc_to(&cut);
    let b = from.arc_to(to);
    !a.is_zero() && a <= b
}

/// Sign relating the cut trivializations of `ls` at `from` and `to` under
/// parallel transport along the positively oriented arc `(from, to]`.
pub fn transport_sign(ls: &LocalSystem, from: &CirclePoint, to: &CirclePoint) -> Sign {
    if positive_arc_crosses_cut(from, to) {
        ls.monodromy
    } else {
        PLUS
    }
}

/// Sign relating the lift trivialization at lift value `l` to the cut
/// trivialization at `reduce(l)`: the monodromy to the power `floor(l)`.
pub fn lift_fold(ls: &LocalSystem, l: &Rat) -> Sign {
    ls.monodromy.pow(&l.floor().to_integer())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cp(n: i64, d: i64) -> CirclePoint {
        CirclePoint::new(rat(n, d))
    }

    #[test]
    fn reduce_examples() {
        assert_eq!(reduce(&Lift(rat(7, 3))), cp(1, 3));
        assert_eq!(reduce(&Lift(rat(-1, 4))), cp(3, 4));
        assert_eq!(reduce(&Lift(rat(0, 1))), cp(0, 1));
    }

    #[test]
    fn cyclic_order_examples() {
        assert!(cyclically_ordered(&cp(0, 1), &cp(1, 3), &cp(2, 3)).unwrap());
        assert!(!cyclically_ordered(&cp(0, 1), &cp(2, 3), &cp(1, 3)).unwrap());
        assert!(cyclically_ordered(&cp(9, 10), &cp(1, 10), &cp(1, 2)).unwrap());
        assert!(matches!(
            cyclically_ordered(&cp(1, 2), &cp(1, 2), &cp(1, 3)),
            Err(Error::NonDistinctPoints(..))
        ));
    }

    #[test]
    fn arc_examples() {
        assert!(!positive_arc_crosses_cut(&cp(1, 5), &cp(7, 10)));
        assert!(positive_arc_crosses_cut(&cp(7, 10), &cp(1, 5)));
        assert!(!positive_arc_crosses_cut(&cp(1, 4), &cp(1, 4)));
        // The half-open arc (from, 0] ends exactly at the cut.
        assert!(positive_arc_crosses_cut(&cp(1, 4), &cp(0, 1)));
        // Arcs leaving the cut do not cross it.
        assert!(!positive_arc_crosses_cut(&cp(0, 1), &cp(1, 4)));
    }

    #[test]
    fn transport_examples() {
        let triv = LocalSystem::TRIVIAL;
        let tw = LocalSystem::TWISTED;
        assert_eq!(transport_sign(&triv, &cp(7, 10), &cp(1, 5)), PLUS);
        assert_eq!(transport_sign(&tw, &cp(1, 5), &cp(7, 10)), PLUS);
        assert_eq!(transport_sign(&tw, &cp(7, 10), &cp(1, 5)), MINUS);
    }

    fn arb_point() -> impl Strategy<Value = CirclePoint> {
        (0i64..240, 1i64..=240).prop_map(|(n, d)| CirclePoint::new(rat(n % d, d)))
    }

    proptest! {
        #[test]
        fn trichotomy(p in arb_point(), q in arb_point(), r in arb_point()) {
            prop_assume!(p != q && q != r && p != r);
            let a = cyclically_ordered(&p, &q, &r).unwrap();
            let b = cyclically_ordered(&p, &r, &q).unwrap();
            prop_assert!(a ^ b);
        }

        #[test]
        fn rotation_invariance(p in arb_point(), q in arb_point(), r in arb_point(), tn in 0i64..97, td in 1i64..=97) {
            prop_assume!(p != q && q != r && p != r);
            let t = rat(tn, td);
            let rot = |x: &CirclePoint| CirclePoint::new(x.coord() + &t);
            prop_assert_eq!(
                cyclically_ordered(&p, &q, &r).unwrap(),
                cyclically_ordered(&rot(&p), &rot(&q), &rot(&r)).unwrap()
            );
        }

        #[test]
        fn full_loop_law(a in arb_point(), b in arb_point(), twisted in any::<bool>()) {
            prop_assume!(a != b);
            let ls = if twisted { LocalSystem::TWISTED } else { LocalSystem::TRIVIAL };
            prop_assert_eq!(transport_sign(&ls, &a, &b) * transport_sign(&ls, &b, &a), ls.monodromy);
        }

        #[test]
        fn cocycle_on_nonwrapping_chains(a in arb_point(), b in arb_point(), c in arb_point(), twisted in any::<bool>()) {
            prop_assume!(a != b && b != c && a != c);
            prop_assume!(cyclically_ordered(&a, &b, &c).unwrap());
            let ls = if twisted { LocalSystem::TWISTED } else { LocalSystem::TRIVIAL };
            prop_assert_eq!(
                transport_sign(&ls, &a, &b) * transport_sign(&ls, &b, &c),
                transport_sign(&ls, &a, &c)
            );
        }
    }
}
