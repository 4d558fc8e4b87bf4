//! Hand-built fixtures with known homology, a naive independent
//! differential, a constrained generator of valid random systems, and an
//! ordered-basis orientation oracle.
//!
//! The naive differential shares no code with the cascade engine: it
//! re-derives transports, cyclic order, constrained points, and signs from
//! first principles so the two paths can be compared entrywise.

use crate::cascade::{CascadeGenerator, Decoration};
use crate::cell::{AffineEval, Cell, CellKind, FaceGluing, FaceRef, FactorRef, MidRef, BoundaryLabel, SignedCellComplex};
use crate::circle::{rat, CirclePoint, LocalSystem, Rat, Sign, MINUS, PLUS};
use crate::error::Error;
use crate::homology::{HomologyGroup, IntMatrix};
use crate::system::{BasePointAssignment, Item, MBSystem};
use num::{BigInt, One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// A named system with frozen expected homology and a canonical generic
/// base point assignment.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub system: MBSystem,
    pub expected_homology: (HomologyGroup, HomologyGroup),
    pub base_points: BasePointAssignment,
}

pub const FIXTURE_NAMES: [&str; 6] = [
    "circle_trivial",
    "circle_nontrivial",
    "torus",
    "klein",
    "chain3",
    "chain3_twisted",
];

fn item(label: &str, grading: u8, twisted: bool) -> Item {
    Item {
        label: label.into(),
        grading,
        local_system: if twisted { LocalSystem::TWISTED } else { LocalSystem::TRIVIAL },
        action: None,
    }
}

fn points(ps: &[(i64, i64)]) -> BasePointAssignment {
    BasePointAssignment { points: ps.iter().map(|&(n, d)| CirclePoint::new(rat(n, d))).collect() }
}

/// A closed polygonal circle realized as one self-glued segment with the
/// given winding numbers on the two evaluations.
pub fn winding_circle(sign: Sign, w_plus: i64, w_minus: i64) -> SignedCellComplex {
    let cell = Cell::segment(sign, (rat(0, 1), rat(w_plus, 1)), (rat(0, 1), rat(w_minus, 1)));
    SignedCellComplex {
        dim: 1,
        cells: vec![cell],
        gluings: vec![FaceGluing {
            left: FaceRef { cell: 0, face: 0 },
            right: FaceRef { cell: 0, face: 1 },
            perm: vec![],
            offset_plus: w_plus,
            offset_minus: w_minus,
        }],
        boundary_labels: vec![],
    }
}

/// Retrieve one of the six named fixtures.
pub fn fixture(name: &str) -> Result<Fixture, Error> {
    // Expected homology values below were re-derived with
    // `naive_differential` plus hand Smith normal forms before freezing;
    // the torus and Klein values also match the singular homology of the
    // modeled surfaces.
    match name {
        "circle_trivial" => Ok(Fixture {
            name: "circle_trivial",
            system: MBSystem::new(vec![item("x", 0, false)]),
            // d = 0 on two generators.
            expected_homology: (HomologyGroup::free(1), HomologyGroup::free(1)),
            base_points: points(&[(1, 2)]),
        }),
        "circle_nontrivial" => Ok(Fixture {
            name: "circle_nontrivial",
            system: MBSystem::new(vec![item("x", 0, true)]),
            // d hat(x) = -2 check(x): H_even = Z/2, H_odd = 0.
            expected_homology: (
                HomologyGroup { free_rank: 0, torsion: vec![BigInt::from(2)] },
                HomologyGroup::free(0),
            ),
            base_points: points(&[(1, 2)]),
        }),
        "torus" => {
            let mut sys = MBSystem::new(vec![item("top", 1, false), item("bot", 0, false)]);
            let mut circles = winding_circle(MINUS, 1, 1);
            let second = winding_circle(PLUS, 1, 1);
            merge_complex(&mut circles, second);
            sys.add_moduli(0, 1, 1, circles);
            Ok(Fixture {
                name: "torus",
                system: sys,
                // Opposite circle signs cancel every level-set count, so
                // d = 0 and both parities are free of rank 2.
                expected_homology: (HomologyGroup::free(2), HomologyGroup::free(2)),
                base_points: points(&[(1, 2), (1, 2)]),
            })
        }
        "klein" => {
            let mut sys = MBSystem::new(vec![item("top", 1, false), item("bot", 0, false)]);
            let mut circles = winding_circle(MINUS, 1, 1);
            let second = winding_circle(PLUS, 1, -1);
            merge_complex(&mut circles, second);
            sys.add_moduli(0, 1, 1, circles);
            Ok(Fixture {
                name: "klein",
                system: sys,
                // The e_minus windings (1, -1) make the two minus-level
                // counts reinforce: d hat(top) = 2 hat(bot), everything
                // else zero; H_even = Z, H_odd = Z + Z/2.
                expected_homology: (
                    HomologyGroup::free(1),
                    HomologyGroup { free_rank: 1, torsion: vec![BigInt::from(2)] },
                ),
                base_points: points(&[(1, 2), (1, 2)]),
            })
        }
        "chain3" => {
            let mut sys = MBSystem::new(vec![item("x2", 0, false), item("x1", 0, false), item("x0", 0, false)]);
            sys.add_moduli(0, 1, 0, SignedCellComplex::of_cells(0, vec![Cell::point(PLUS, rat(1, 4), rat(1, 3))]));
            sys.add_moduli(1, 2, 0, SignedCellComplex::of_cells(0, vec![Cell::point(PLUS, rat(2, 3), rat(1, 4))]));
            Ok(Fixture {
                name: "chain3",
                system: sys,
                // p_x1 = 1/4 puts (p, 1/3, 2/3) in positive cyclic order,
                // so <d hat(x2), check(x0)> = +1; the 3x3 hat-to-check
                // block has rank 2, leaving Z on each side.
                expected_homology: (HomologyGroup::free(1), HomologyGroup::free(1)),
                base_points: points(&[(1, 2), (1, 4), (1, 2)]),
            })
        }
        "chain3_twisted" => {
            let mut sys = MBSystem::new(vec![item("x2", 0, false), item("x1", 0, true), item("x0", 0, false)]);
            sys.add_moduli(0, 1, 0, SignedCellComplex::of_cells(0, vec![Cell::point(PLUS, rat(1, 4), rat(2, 3))]));
            sys.add_moduli(1, 2, 0, SignedCellComplex::of_cells(0, vec![Cell::point(PLUS, rat(1, 3), rat(1, 4))]));
            Ok(Fixture {
                name: "chain3_twisted",
                system: sys,
                // The middle arc (2/3, 1/3] crosses the cut, flipping the
                // k = 2 cascade to -1; with the -2 self-term on x1 the
                // hat-to-check block still has unimodular rank 2.
                expected_homology: (HomologyGroup::free(1), HomologyGroup::free(1)),
                base_points: points(&[(2, 5), (1, 2), (2, 5)]),
            })
        }
        other => Err(Error::UnknownFixture(other.to_string())),
    }
}

/// Append the cells, gluings, and labels of `other` onto `cx`.
pub fn merge_complex(cx: &mut SignedCellComplex, other: SignedCellComplex) {
    assert_eq!(cx.dim, other.dim);
    let off = cx.cells.len();
    cx.cells.extend(other.cells);
    for mut g in other.gluings {
        g.left.cell += off;
        g.right.cell += off;
        cx.gluings.push(g);
    }
    for (mut f, l) in other.boundary_labels {
        f.cell += off;
        cx.boundary_labels.push((f, l));
    }
}

/// A system with an M1 segment whose ends break into fiber products of an
/// M0 point with a closed M1 circle; exercises the compactification
/// validator with nonempty boundary labels. Items: i -> j -> k.
pub fn segment_break_system() -> MBSystem {
    let mut sys = MBSystem::new(vec![item("i", 1, false), item("j", 1, false), item("k", 0, false)]);
    // u in M0(i, j) at (1/5, 2/5).
    sys.add_moduli(0, 1, 0, SignedCellComplex::of_cells(0, vec![Cell::point(PLUS, rat(1, 5), rat(2, 5))]));
    // C in M1(j, k): two cells; e_plus rises v-1/3 -> v+2/3 then falls
    // back (winding 0), e_minus winds once: w0 -> w0 + 1/2 -> w0 + 1,
    // with v = 2/5, w0 = 1/10.
    let v = rat(2, 5);
    let w0 = rat(1, 10);
    let a = Cell::segment(PLUS, (&v - rat(1, 3), &v + rat(2, 3)), (w0.clone(), &w0 + rat(1, 2)));
    let b = Cell::segment(PLUS, (&v + rat(2, 3), &v - rat(1, 3)), (&w0 + rat(1, 2), &w0 + rat(1, 1)));
    let c_circle = SignedCellComplex {
        dim: 1,
        cells: vec![a, b],
        gluings: vec![
            FaceGluing {
                left: FaceRef { cell: 0, face: 0 },
                right: FaceRef { cell: 1, face: 1 },
                perm: vec![],
                offset_plus: 0,
                offset_minus: 0,
            },
            FaceGluing {
                left: FaceRef { cell: 1, face: 0 },
                right: FaceRef { cell: 0, face: 1 },
                perm: vec![],
                offset_plus: 0,
                offset_minus: 1,
            },
        ],
        boundary_labels: vec![],
    };
    sys.add_moduli(1, 2, 1, c_circle);
    // The fiber product of u with C has two points: in cell A at parameter
    // 1/3 with e_minus = w0 + 1/6 and sign +1, and in cell B at parameter
    // 2/3 with e_minus = w0 + 5/6 and sign -1. The segment sigma in
    // M1(i, k) joins them: e_plus constant 1/5, e_minus from w0+5/6 down
    // to w0+1/6, sign +1; its parameter-1 end then carries +1 and matches
    // the A-point, the parameter-0 end carries -1 and matches the B-point.
    let sigma = Cell::segment(PLUS, (rat(1, 5), rat(1, 5)), (&w0 + rat(5, 6), &w0 + rat(1, 6)));
    let labels = vec![
        (
            FaceRef { cell: 0, face: 0 },
            BoundaryLabel::Breaking {
                mid: MidRef::Item(1),
                plus: FactorRef { dim: 0, cell: 0, points: vec![vec![]] },
                minus: FactorRef { dim: 1, cell: 0, points: vec![vec![rat(1, 3)]] },
            },
        ),
        (
            FaceRef { cell: 0, face: 1 },
            BoundaryLabel::Breaking {
                mid: MidRef::Item(1),
                plus: FactorRef { dim: 0, cell: 0, points: vec![vec![]] },
                minus: FactorRef { dim: 1, cell: 1, points: vec![vec![rat(2, 3)]] },
            },
        ),
    ];
    let sigma_cx = SignedCellComplex { dim: 1, cells: vec![sigma], gluings: vec![], boundary_labels: labels };
    sys.add_moduli(0, 2, 1, sigma_cx);
    sys
}

// ---------------------------------------------------------------------
// Naive differential: an independent transcription of the definitions.
// ---------------------------------------------------------------------

/// Naive transport: the arc `(from, to]` crosses the cut exactly when the
/// target coordinate is strictly below the source coordinate.
fn naive_transport(ls: &LocalSystem, from: &Rat, to: &Rat) -> i64 {
    if from == to {
        return 1;
    }
    if to < from {
        if ls.is_trivial() {
            1
        } else {
            -1
        }
    } else {
        1
    }
}

/// Naive cyclic order via the rotation classification.
fn naive_cyc(p: &Rat, q: &Rat, r: &Rat) -> bool {
    (p < q && q < r) || (q < r && r < p) || (r < p && p < q)
}

/// A rigid point found by the naive per-cell solver.
#[derive(Debug, Clone)]
struct NaivePoint {
    e_plus: Rat,  // reduced
    e_minus: Rat, // reduced
    sign: i64,    // folded to cut trivializations
}

fn reduce_r(x: &Rat) -> Rat {
    x - x.floor()
}

fn fold(ls: &LocalSystem, lift: &Rat) -> i64 {
    if ls.is_trivial() {
        return 1;
    }
    let f = lift.floor().to_integer();
    if (f % BigInt::from(2)).is_zero() {
        1
    } else {
        -1
    }
}

fn naive_m0_points(sys: &MBSystem, f: usize, t: usize) -> Vec<NaivePoint> {
    let Some(cx) = sys.moduli(f, t, 0) else { return vec![] };
    cx.cells
        .iter()
        .map(|c| {
            let lp = &c.e_plus.vertex_lifts[0];
            let lm = &c.e_minus.vertex_lifts[0];
            NaivePoint {
                e_plus: reduce_r(lp),
                e_minus: reduce_r(lm),
                sign: c.sign.i64() * fold(sys.ls(f), lp) * fold(sys.ls(t), lm),
            }
        })
        .collect()
}

/// Solve `lift(s) = target + k` over all k on a 1-cell; returns (s, lift).
fn naive_line_solutions(l0: &Rat, l1: &Rat, target: &Rat) -> Vec<(Rat, Rat)> {
    let g = l1 - l0;
    if g.is_zero() {
        return vec![];
    }
    let mut out = Vec::new();
    let lo = l0.min(l1).clone();
    let hi = l0.max(l1).clone();
    let mut k = (&lo - target).ceil().to_integer();
    let hi_k = (&hi - target).floor().to_integer();
    while k <= hi_k {
        let val = target + Rat::from(k.clone());
        let s = (&val - l0) / &g;
        if s > Rat::zero() && s < Rat::one() {
            out.push((s, val));
        }
        k += BigInt::one();
    }
    out
}

/// Constrained points of M1 cells: plus-level (sign = slope sign) or
/// minus-level (negated), skipping cylinder cells.
fn naive_m1_points(sys: &MBSystem, f: usize, t: usize, plus_side: bool, p: &Rat) -> Vec<NaivePoint> {
    let Some(cx) = sys.moduli(f, t, 1) else { return vec![] };
    let mut out = Vec::new();
    for c in &cx.cells {
        if let CellKind::Cylinder { .. } = c.kind {
            continue; // a line factor never yields rigid points
        }
        let (con, other) = if plus_side { (&c.e_plus, &c.e_minus) } else { (&c.e_minus, &c.e_plus) };
        for (s, lift_at) in naive_line_solutions(&con.vertex_lifts[0], &con.vertex_lifts[1], p) {
            let slope = &con.vertex_lifts[1] - &con.vertex_lifts[0];
            let mut sign = c.sign.i64() * if slope.is_positive() { 1 } else { -1 };
            if !plus_side {
                sign = -sign;
            }
            let other_lift = &other.vertex_lifts[0] + &s * (&other.vertex_lifts[1] - &other.vertex_lifts[0]);
            let (lp, lm) = if plus_side { (lift_at.clone(), other_lift) } else { (other_lift, lift_at.clone()) };
            sign *= fold(sys.ls(f), &lp) * fold(sys.ls(t), &lm);
            out.push(NaivePoint { e_plus: reduce_r(&lp), e_minus: reduce_r(&lm), sign });
        }
    }
    out
}

/// Doubly constrained points of M2 triangles via the literal two-step
/// convention: cut e_minus first (minus a level set), then e_plus.
fn naive_m2_points(sys: &MBSystem, f: usize, t: usize, p_plus: &Rat, p_minus: &Rat) -> Vec<NaivePoint> {
    let Some(cx) = sys.moduli(f, t, 2) else { return vec![] };
    let mut out = Vec::new();
    for c in &cx.cells {
        if let CellKind::Cylinder { .. } = c.kind {
            continue;
        }
        let gp = c.e_plus.gradient();
        let gm = c.e_minus.gradient();
        // Enumerate lift offsets.
        let (pmin, pmax) = (c.e_plus.min().clone(), c.e_plus.max().clone());
        let (mmin, mmax) = (c.e_minus.min().clone(), c.e_minus.max().clone());
        let mut kp = (&pmin - p_plus).ceil().to_integer();
        let kp_hi = (&pmax - p_plus).floor().to_integer();
        while kp <= kp_hi {
            let vp = p_plus + Rat::from(kp.clone());
            let mut km = (&mmin - p_minus).ceil().to_integer();
            let km_hi = (&mmax - p_minus).floor().to_integer();
            while km <= km_hi {
                let vm = p_minus + Rat::from(km.clone());
                // Solve e_plus = vp, e_minus = vm on the triangle.
                let det = &gp[0] * &gm[1] - &gp[1] * &gm[0];
                if !det.is_zero() {
                    let r0 = &vp - &c.e_plus.vertex_lifts[0];
                    let r1 = &vm - &c.e_minus.vertex_lifts[0];
                    let t1 = (&r0 * &gm[1] - &gp[1] * &r1) / &det;
                    let t2 = (&gp[0] * &r1 - &r0 * &gm[0]) / &det;
                    let inside = t1.is_positive()
                        && t2.is_positive()
                        && (&t1 + &t2) < Rat::one();
                    if inside {
                        // Step 1: minus a level set of e_minus. The level
                        // line direction w satisfies (grad e_minus, w)
                        // positively oriented times the cell sign, then
                        // negate. Step 2: derivative of e_plus along w.
                        let w = [-gm[1].clone(), gm[0].clone()]; // rot90(gm)
                        let s1 = -c.sign.i64(); // minus convention
                        let dplus_along = &gp[0] * &w[0] + &gp[1] * &w[1];
                        let step2 = if dplus_along.is_positive() { 1 } else { -1 };
                        let sign = s1 * step2 * fold(sys.ls(f), &vp) * fold(sys.ls(t), &vm);
                        out.push(NaivePoint { e_plus: reduce_r(&vp), e_minus: reduce_r(&vm), sign });
                    }
                }
                km += BigInt::one();
            }
            kp += BigInt::one();
        }
    }
    out
}

/// Brute-force path enumeration over all item sequences.
fn naive_paths(sys: &MBSystem, s: usize, t: usize) -> Vec<Vec<usize>> {
    let n = sys.item_count();
    let mut has_edge = vec![vec![false; n]; n];
    for (&(f, g, _), cx) in &sys.moduli {
        if !cx.is_empty() {
            has_edge[f][g] = true;
        }
    }
    let mut out = Vec::new();
    let mut stack = vec![s];
    fn go(u: usize, t: usize, has_edge: &Vec<Vec<bool>>, stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if u == t {
            out.push(stack.clone());
            return;
        }
        for v in 0..has_edge.len() {
            if has_edge[u][v] && !stack.contains(&v) {
                stack.push(v);
                go(v, t, has_edge, stack, out);
                stack.pop();
            }
        }
    }
    go(s, t, &has_edge, &mut stack, &mut out);
    out
}

/// The cascade differential recomputed independently of the engine.
pub fn naive_differential(sys: &MBSystem, pa: &BasePointAssignment) -> IntMatrix {
    let n = sys.item_count();
    let gens: Vec<CascadeGenerator> = (0..n)
        .flat_map(|x| [CascadeGenerator::check(x), CascadeGenerator::hat(x)])
        .collect();
    let mut d = IntMatrix::zero(2 * n, 2 * n);
    for (cj, from) in gens.iter().enumerate() {
        for (ri, to) in gens.iter().enumerate() {
            let mut total: i64 = 0;
            if from.item == to.item {
                if from.decoration == Decoration::Hat && to.decoration == Decoration::Check {
                    total = if sys.ls(from.item).is_trivial() { 0 } else { -2 };
                }
            } else {
                for path in naive_paths(sys, from.item, to.item) {
                    total += naive_count_path(sys, pa, from, to, &path);
                }
            }
            if total != 0 {
                d[(ri, cj)] = BigInt::from(total);
            }
        }
    }
    d
}

fn naive_count_path(
    sys: &MBSystem,
    pa: &BasePointAssignment,
    from: &CascadeGenerator,
    to: &CascadeGenerator,
    path: &[usize],
) -> i64 {
    let k = path.len() - 1;
    let p = |x: usize| pa.point(x).coord().clone();
    // Candidate point lists per slot.
    let mut slots: Vec<Vec<NaivePoint>> = Vec::with_capacity(k);
    for (i, w) in path.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let first = i == 0;
        let last = i == k - 1;
        let list = match (from.decoration, to.decoration) {
            (Decoration::Hat, Decoration::Check) => naive_m0_points(sys, a, b),
            (Decoration::Check, Decoration::Check) => {
                if first {
                    naive_m1_points(sys, a, b, true, &p(a))
                } else {
                    naive_m0_points(sys, a, b)
                }
            }
            (Decoration::Hat, Decoration::Hat) => {
                if last {
                    naive_m1_points(sys, a, b, false, &p(b))
                } else {
                    naive_m0_points(sys, a, b)
                }
            }
            (Decoration::Check, Decoration::Hat) => {
                if k == 1 {
                    naive_m2_points(sys, a, b, &p(a), &p(b))
                } else if first {
                    naive_m1_points(sys, a, b, true, &p(a))
                } else if last {
                    naive_m1_points(sys, a, b, false, &p(b))
                } else {
                    naive_m0_points(sys, a, b)
                }
            }
        };
        // Starred conditions: unconstrained sides must avoid the base
        // points. A side is pinned (not starred) exactly when the flavor
        // constrains it.
        let pin_plus = first && from.decoration == Decoration::Check;
        let pin_minus = last && to.decoration == Decoration::Hat;
        let filtered: Vec<NaivePoint> = list
            .into_iter()
            .filter(|pt| (pin_plus || pt.e_plus != p(a)) && (pin_minus || pt.e_minus != p(b)))
            .collect();
        slots.push(filtered);
    }
    // Cartesian product with cyclic order and transported signs.
    let mut total = 0i64;
    let mut idx = vec![0usize; k];
    'outer: loop {
        // Evaluate current configuration.
        if slots.iter().any(|s| s.is_empty()) {
            break;
        }
        let pts: Vec<&NaivePoint> = (0..k).map(|i| &slots[i][idx[i]]).collect();
        let mut ok = true;
        for i in 0..k - 1 {
            let mid = path[i + 1];
            let pm = p(mid);
            let a = &pts[i].e_minus;
            let b = &pts[i + 1].e_plus;
            if a == b || *a == pm || *b == pm || !naive_cyc(&pm, a, b) {
                ok = false;
                break;
            }
        }
        if ok {
            let mut sign: i64 = pts.iter().map(|q| q.sign).product();
            if from.decoration == Decoration::Hat {
                sign *= naive_transport(sys.ls(path[0]), &p(path[0]), &pts[0].e_plus);
            }
            for i in 0..k - 1 {
                sign *= naive_transport(sys.ls(path[i + 1]), &pts[i].e_minus, &pts[i + 1].e_plus);
            }
            if to.decoration == Decoration::Check {
                sign *= naive_transport(sys.ls(path[k]), &pts[k - 1].e_minus, &p(path[k]));
            }
            total += sign;
        }
        // Advance the multi-index.
        let mut slot = 0;
        loop {
            idx[slot] += 1;
            if idx[slot] < slots[slot].len() {
                break;
            }
            idx[slot] = 0;
            slot += 1;
            if slot == k {
                break 'outer;
            }
        }
    }
    total
}

// ---------------------------------------------------------------------
// Random valid systems.
// ---------------------------------------------------------------------

/// Size bounds for the random generator.
#[derive(Debug, Clone, Copy)]
pub struct SizeBounds {
    pub max_items: usize,
}

impl Default for SizeBounds {
    fn default() -> Self {
        SizeBounds { max_items: 8 }
    }
}

struct FreshValues {
    used: Vec<BTreeSet<Rat>>,
    denom: i64,
}

impl FreshValues {
    fn new(n: usize) -> Self {
        FreshValues { used: vec![BTreeSet::new(); n], denom: 10007 }
    }

    /// A rational in (0,1) on circle `x`, distinct from everything drawn
    /// there before.
    fn fresh(&mut self, rng: &mut ChaCha8Rng, x: usize) -> Rat {
        loop {
            let num = rng.gen_range(1..self.denom);
            let r = rat(num, self.denom);
            if self.used[x].insert(r.clone()) {
                return r;
            }
        }
    }
}

/// Generate a system satisfying every axiom by construction: a DAG of
/// M0 points between parity-equal items, closed polygonal M1 circles
/// between dedicated source/sink pairs, and optionally an M1 segment pair
/// whose breakings are generated fiber-product-first.
pub fn random_valid_system(seed: u64, bounds: SizeBounds) -> MBSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = bounds.max_items.clamp(2, 8);
    let n = rng.gen_range(2..=max);
    let mut items: Vec<Item> = (0..n)
        .map(|i| item(&format!("x{i}"), rng.gen_range(0..2u8), rng.gen_bool(0.3)))
        .collect();
    let mut reserved: Vec<bool> = vec![false; n];
    let mut sys_moduli: Vec<(usize, usize, usize, SignedCellComplex)> = Vec::new();
    let mut fresh = FreshValues::new(n);

    // Optionally one breaking pattern on a dedicated triple (i, j, k).
    if n >= 3 && rng.gen_bool(0.5) {
        let (i, j, k) = (0usize, 1usize, 2usize);
        reserved[i] = true;
        reserved[j] = true;
        reserved[k] = true;
        // Gradings: |i| = |j| != |k|.
        let gi = rng.gen_range(0..2u8);
        items[i].grading = gi;
        items[j].grading = gi;
        items[k].grading = (gi + 1) % 2;
        let v = fresh.fresh(&mut rng, j);
        let e_plus_u = fresh.fresh(&mut rng, i);
        // u in M0(i, j).
        sys_moduli.push((
            i,
            j,
            0,
            SignedCellComplex::of_cells(0, vec![Cell::point(PLUS, e_plus_u.clone(), v.clone())]),
        ));
        // C in M1(j, k): e_plus rises v - 1/3 -> v + 2/3 and falls back;
        // e_minus winds once for a trivial sink system, or up-and-down for
        // a twisted one.
        let w0 = rat(rng.gen_range(1..1500), 10007);
        let twisted_k = !items[k].local_system.is_trivial();
        let (ma, mb, off_m) = if twisted_k {
            // winding 0: w0 -> w0 + 1/2 -> w0
            ((w0.clone(), &w0 + rat(1, 2)), (&w0 + rat(1, 2), w0.clone()), 0)
        } else {
            ((w0.clone(), &w0 + rat(1, 2)), (&w0 + rat(1, 2), &w0 + rat(1, 1)), 1)
        };
        let ca = Cell::segment(PLUS, (&v - rat(1, 3), &v + rat(2, 3)), ma);
        let cb = Cell::segment(PLUS, (&v + rat(2, 3), &v - rat(1, 3)), mb);
        let c_circle = SignedCellComplex {
            dim: 1,
            cells: vec![ca, cb],
            gluings: vec![
                FaceGluing {
                    left: FaceRef { cell: 0, face: 0 },
                    right: FaceRef { cell: 1, face: 1 },
                    perm: vec![],
                    offset_plus: 0,
                    offset_minus: 0,
                },
                FaceGluing {
                    left: FaceRef { cell: 1, face: 0 },
                    right: FaceRef { cell: 0, face: 1 },
                    perm: vec![],
                    offset_plus: 0,
                    offset_minus: off_m,
                },
            ],
            boundary_labels: vec![],
        };
        // Fiber points: cell A at parameter 1/3 (sign +1), cell B at 2/3
        // (sign -1); e_minus values from C at those parameters.
        let em_a = &w0 + rat(1, 6);
        let em_b = if twisted_k { &w0 + rat(1, 6) } else { &w0 + rat(5, 6) };
        sys_moduli.push((j, k, 1, c_circle));
        // Sigma in M1(i, k): e_plus constant, e_minus from em_b to em_a,
        // sign +1. Ends: parameter-1 matches the A-point (+1),
        // parameter-0 matches the B-point (-1).
        let sigma = Cell::segment(PLUS, (e_plus_u.clone(), e_plus_u.clone()), (em_b, em_a));
        let labels = vec![
            (
                FaceRef { cell: 0, face: 0 },
                BoundaryLabel::Breaking {
                    mid: MidRef::Item(j),
                    plus: FactorRef { dim: 0, cell: 0, points: vec![vec![]] },
                    minus: FactorRef { dim: 1, cell: 0, points: vec![vec![rat(1, 3)]] },
                },
            ),
            (
                FaceRef { cell: 0, face: 1 },
                BoundaryLabel::Breaking {
                    mid: MidRef::Item(j),
                    plus: FactorRef { dim: 0, cell: 0, points: vec![vec![]] },
                    minus: FactorRef { dim: 1, cell: 1, points: vec![vec![rat(2, 3)]] },
                },
            ),
        ];
        sys_moduli.push((
            i,
            k,
            1,
            SignedCellComplex { dim: 1, cells: vec![sigma], gluings: vec![], boundary_labels: labels },
        ));
        // Mark fresh values used on the k circle so nothing else collides.
        fresh.used[k].insert(em_a.clone() - em_a.floor());
        fresh.used[k].insert(em_b.clone() - em_b.floor());
    }

    // Closed M1 circles between dedicated parity-differing pairs.
    let mut free: Vec<usize> = (0..n).filter(|&x| !reserved[x]).collect();
    while free.len() >= 2 && rng.gen_bool(0.4) {
        let s = free.remove(0);
        let t = free.remove(0);
        items[t].grading = (items[s].grading + 1) % 2;
        let (mp, mm) = (items[s].local_system.monodromy, items[t].local_system.monodromy);
        // Windings compatible with the monodromies: m+^wp * m-^wm = +1.
        let mut wp: i64;
        let mut wm: i64;
        loop {
            wp = rng.gen_range(-2..=2i64);
            wm = rng.gen_range(-2..=2i64);
            if (wp, wm) == (0, 0) {
                continue;
            }
            if mp.pow_i64(wp) * mm.pow_i64(wm) == PLUS {
                break;
            }
        }
        let sign = if rng.gen_bool(0.5) { PLUS } else { MINUS };
        let mut cx = winding_circle(sign, wp, wm);
        if rng.gen_bool(0.3) {
            let sign2 = if rng.gen_bool(0.5) { PLUS } else { MINUS };
            merge_complex(&mut cx, winding_circle(sign2, wp, wm));
        }
        sys_moduli.push((s, t, 1, cx));
        reserved[s] = true;
        reserved[t] = true;
    }

    // M0 web on the remaining items: edges low -> high index between
    // parity-equal items, globally fresh values.
    let web: Vec<usize> = (0..n).filter(|&x| !reserved[x]).collect();
    for ai in 0..web.len() {
        for bi in (ai + 1)..web.len() {
            let (a, b) = (web[ai], web[bi]);
            if items[a].grading != items[b].grading {
                continue;
            }
            if !rng.gen_bool(0.5) {
                continue;
            }
            let count = rng.gen_range(1..=2);
            let cells: Vec<Cell> = (0..count)
                .map(|_| {
                    let ep = fresh.fresh(&mut rng, a);
                    let em = fresh.fresh(&mut rng, b);
                    let s = if rng.gen_bool(0.5) { PLUS } else { MINUS };
                    Cell::point(s, ep, em)
                })
                .collect();
            sys_moduli.push((a, b, 0, SignedCellComplex::of_cells(0, cells)));
        }
    }

    let mut sys = MBSystem::new(items);
    for (f, t, d, cx) in sys_moduli {
        sys.add_moduli(f, t, d, cx);
    }
    sys
}

// ---------------------------------------------------------------------
// Ordered-basis orientation oracle.
// ---------------------------------------------------------------------

/// Literal ordered-basis computations of the level-set and fiber-product
/// orientation conventions, used to verify the optimized formulas.
pub mod obasis {
    use super::*;

    fn dot(a: &[Rat], b: &[Rat]) -> Rat {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn det(cols: &[Vec<Rat>]) -> Rat {
        let n = cols.len();
        match n {
            1 => cols[0][0].clone(),
            2 => &cols[0][0] * &cols[1][1] - &cols[0][1] * &cols[1][0],
            3 => {
                &cols[0][0] * (&cols[1][1] * &cols[2][2] - &cols[1][2] * &cols[2][1])
                    - &cols[1][0] * (&cols[0][1] * &cols[2][2] - &cols[0][2] * &cols[2][1])
                    + &cols[2][0] * (&cols[0][1] * &cols[1][2] - &cols[0][2] * &cols[1][1])
            }
            _ => panic!("unsupported dimension"),
        }
    }

    /// An exact basis of the kernel of a nonzero functional `g` on R^n.
    fn kernel_basis(g: &[Rat]) -> Vec<Vec<Rat>> {
        let n = g.len();
        let p = g.iter().position(|x| !x.is_zero()).unwrap();
        let mut out = Vec::new();
        for i in 0..n {
            if i == p {
                continue;
            }
            // g[p] e_i - g[i] e_p
            let mut v = vec![Rat::zero(); n];
            v[i] = g[p].clone();
            v[p] = -g[i].clone();
            out.push(v);
        }
        out
    }

    /// Derivative-first level-set orientation: does the claimed ordered
    /// basis `claimed` orient `ker(g)` the way the convention demands on an
    /// ambient cell of orientation `or_sign * std`?
    ///
    /// Returns the sign relating `claimed` to the convention orientation.
    pub fn level_sign(or_sign: Sign, g: &[Rat], claimed: &[Vec<Rat>]) -> Sign {
        let n = g.len();
        assert_eq!(claimed.len(), n - 1);
        // v1 with dg(v1) > 0: g itself.
        let mut cols: Vec<Vec<Rat>> = vec![g.to_vec()];
        cols.extend(claimed.iter().cloned());
        let d = det(&cols);
        assert!(!d.is_zero(), "claimed vectors do not span the level set transversally");
        // (v1, claimed) is an oriented basis iff det * or_sign > 0; in that
        // case `claimed` is exactly the level orientation.
        Sign::of(&d) * or_sign
    }

    /// Sign of an isolated point of the level set on a 1-dimensional cell.
    pub fn level_point_sign(or_sign: Sign, g: &Rat) -> Sign {
        // The empty basis is the convention orientation iff (v1) with
        // dg(v1) > 0 is an oriented basis.
        or_sign * Sign::of(g)
    }

    /// Two-step double-constraint sign on a 2-cell: minus a level set of
    /// e_minus, then a level set of e_plus inside it.
    pub fn double_point_sign_2d(or_sign: Sign, g_plus: &[Rat], g_minus: &[Rat]) -> Sign {
        // Step 1: level of e_minus with basis w, oriented so that
        // (g_minus, w) matches or_sign, then negated.
        let w = kernel_basis(g_minus).remove(0);
        let lvl = level_sign(or_sign, g_minus, &[w.clone()]);
        // lvl says: +w carries the level orientation times lvl; minus
        // convention negates.
        let step1 = -lvl;
        // Step 2: point sign of e_plus on the span of w with orientation
        // step1 * w.
        let d = dot(g_plus, &w);
        assert!(!d.is_zero());
        step1 * Sign::of(&d)
    }

    /// Two-step double-constraint orientation on a 3-cell: returns the sign
    /// relating `claimed_dir` to the convention orientation of the
    /// solution line.
    pub fn double_dir_sign_3d(or_sign: Sign, g_plus: &[Rat], g_minus: &[Rat], claimed_dir: &[Rat]) -> Sign {
        // Step 1: minus a level set of e_minus: an oriented plane.
        let w = kernel_basis(g_minus);
        let lvl = level_sign(or_sign, g_minus, &w);
        let plane_or = -lvl; // minus convention
        // Step 2: derivative-first for e_plus inside the plane: find v1 in
        // the plane with g_plus(v1) > 0, then claimed_dir matches iff
        // (v1, claimed_dir) is plane_or-oriented in plane coordinates.
        let w_coords = |v: &[Rat]| -> Vec<Rat> {
            // Solve v = a w0 + b w1 using two independent coordinate rows.
            let n = v.len();
            for r1 in 0..n {
                for r2 in (r1 + 1)..n {
                    let dd = &w[0][r1] * &w[1][r2] - &w[0][r2] * &w[1][r1];
                    if !dd.is_zero() {
                        let a = (&v[r1] * &w[1][r2] - &v[r2] * &w[1][r1]) / &dd;
                        let b = (&w[0][r1] * &v[r2] - &w[0][r2] * &v[r1]) / &dd;
                        return vec![a, b];
                    }
                }
            }
            panic!("degenerate plane basis");
        };
        // v1: project g_plus's action onto the plane by picking whichever
        // basis combination has positive derivative.
        let d0 = dot(g_plus, &w[0]);
        let d1 = dot(g_plus, &w[1]);
        let v1 = if !d0.is_zero() {
            if d0.is_positive() { w[0].clone() } else { w[0].iter().map(|x| -x).collect() }
        } else {
            assert!(!d1.is_zero(), "e_plus degenerate on the constrained plane");
            if d1.is_positive() { w[1].clone() } else { w[1].iter().map(|x| -x).collect() }
        };
        let c1 = w_coords(&v1);
        let c2 = w_coords(claimed_dir);
        let dd = &c1[0] * &c2[1] - &c1[1] * &c2[0];
        assert!(!dd.is_zero());
        plane_or * Sign::of(&dd)
    }

    /// The paper's fiber-product recipe, literally: product basis, first
    /// vector with positive difference derivative, kernel completion,
    /// orientation adjustment, drop, and the odd-dimension parity rule.
    /// Returns the sign relating `claimed` (a basis of the solution in the
    /// product coordinates) to the convention orientation.
    pub fn fiber_sign(m: usize, x_sign: Sign, y_sign: Sign, gx_minus: &[Rat], gy_plus: &[Rat], claimed: &[Vec<Rat>]) -> Sign {
        let n = gx_minus.len() + gy_plus.len();
        let mut h = gx_minus.to_vec();
        h.extend(gy_plus.iter().map(|g| -g.clone()));
        assert!(h.iter().any(|v| !v.is_zero()));
        let product_or = x_sign * y_sign;
        if n == 1 {
            // Zero-dimensional fiber product of a 1-dimensional product.
            assert!(claimed.is_empty());
            let base = product_or * Sign::of(&h[0]);
            return if m % 2 == 1 { base } else { -base };
        }
        let mut cols: Vec<Vec<Rat>> = vec![h.clone()];
        cols.extend(claimed.iter().cloned());
        assert_eq!(cols.len(), n, "claimed basis has the wrong rank for the fiber product");
        let d = det(&cols);
        assert!(!d.is_zero());
        let level = Sign::of(&d) * product_or;
        if m % 2 == 1 {
            level
        } else {
            -level
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{cascade_homology, differential, verify_d_squared};
    use crate::system::{choose_basepoints, validate_compactification, validate_genericity, validate_structural};

    #[test]
    fn fixtures_pass_validation_and_match_homology() {
        for name in FIXTURE_NAMES {
            let fx = fixture(name).unwrap();
            assert!(validate_structural(&fx.system).passed(), "{name} structural");
            assert!(validate_genericity(&fx.system, &fx.base_points).passed(), "{name} genericity");
            assert!(validate_compactification(&fx.system, &fx.base_points).passed(), "{name} compactification");
            let ccx = differential(&fx.system, &fx.base_points).unwrap();
            assert!(verify_d_squared(&ccx).passed(), "{name} d^2");
            let h = cascade_homology(&ccx).unwrap();
            assert_eq!(h, fx.expected_homology, "{name} homology");
        }
    }

    #[test]
    fn klein_differential_entry() {
        let fx = fixture("klein").unwrap();
        let ccx = differential(&fx.system, &fx.base_points).unwrap();
        let hat_top = ccx.generator_index(&CascadeGenerator::hat(0));
        let hat_bot = ccx.generator_index(&CascadeGenerator::hat(1));
        assert_eq!(ccx.differential[(hat_bot, hat_top)], BigInt::from(2));
        // Everything else vanishes.
        let mut nonzero = 0;
        for i in 0..4 {
            for j in 0..4 {
                if !ccx.differential[(i, j)].is_zero() {
                    nonzero += 1;
                }
            }
        }
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn torus_differential_is_zero() {
        let fx = fixture("torus").unwrap();
        let ccx = differential(&fx.system, &fx.base_points).unwrap();
        assert!(ccx.differential.is_zero());
    }

    #[test]
    fn naive_matches_engine_on_fixtures() {
        for name in FIXTURE_NAMES {
            let fx = fixture(name).unwrap();
            let ccx = differential(&fx.system, &fx.base_points).unwrap();
            let naive = naive_differential(&fx.system, &fx.base_points);
            assert_eq!(ccx.differential, naive, "{name} oracle equality");
        }
    }

    #[test]
    fn segment_break_fixture_validates() {
        let sys = segment_break_system();
        assert!(validate_structural(&sys).passed());
        let pa = choose_basepoints(&sys, 3).unwrap();
        let report = validate_compactification(&sys, &pa);
        assert!(report.passed(), "{report}");
        let ccx = differential(&sys, &pa).unwrap();
        assert!(verify_d_squared(&ccx).passed());
        let naive = naive_differential(&sys, &pa);
        assert_eq!(ccx.differential, naive);
    }

    #[test]
    fn corrupted_segment_break_fails_compactification_not_d_squared() {
        // Documentation case: flipping the M0 sign leaves d^2 = 0 but the
        // boundary identity no longer matches, so verify_d_squared is
        // necessary, not sufficient.
        let mut sys = segment_break_system();
        if let Some(cx) = sys.moduli.get_mut(&(0, 1, 0)) {
            cx.cells[0].sign = -cx.cells[0].sign;
        }
        let pa = choose_basepoints(&sys, 3).unwrap();
        let ccx = differential(&sys, &pa).unwrap();
        assert!(verify_d_squared(&ccx).passed());
        assert!(!validate_compactification(&sys, &pa).passed());
    }

    #[test]
    fn random_systems_valid_and_oracle_equal() {
        for seed in 0..40 {
            let sys = random_valid_system(seed, SizeBounds::default());
            let structural = validate_structural(&sys);
            assert!(structural.passed(), "seed {seed}: {structural}");
            let pa = choose_basepoints(&sys, seed ^ 0xabcd).unwrap();
            let compact = validate_compactification(&sys, &pa);
            assert!(compact.passed(), "seed {seed}: {compact}");
            let ccx = differential(&sys, &pa).unwrap();
            assert!(verify_d_squared(&ccx).passed(), "seed {seed}");
            let naive = naive_differential(&sys, &pa);
            assert_eq!(ccx.differential, naive, "seed {seed} oracle equality");
        }
    }
}
