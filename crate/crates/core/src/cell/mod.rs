//! Oriented affine cell complexes of dimension 0..=3 with circle-valued
//! evaluation maps.
//!
//! A cell is a standard simplex (or a line crossed with a lower cell, the
//! `cylinder` kind) together with affine lifts of the two evaluation maps
//! and a sign. The sign is read relative to the standard orientation of the
//! parameter domain and the lift trivializations of the two local systems;
//! folding a lift by an integer k multiplies the trivialization by the
//! monodromy to the k-th power.

mod canon;
mod fiber;
mod level;
mod solve;

pub use canon::{canonical_points, canonical_segments, complexes_equal_as_maps, CanonPoint};
pub use fiber::{fiber_product, fiber_transversality, pair_regular_on_product, FiberComplex, FiberMeta};
pub use level::{
    double_constraint, is_regular_pair, is_regular_value, level_set, level_set_minus,
    level_set_plus, ConstrainedComplex, Embed, PieceMeta, Which,
};

use crate::circle::{lift_fold, LocalSystem, Rat, Sign, MINUS, PLUS};
use crate::report::ValidationReport;
use num::{BigInt, Zero};
use serde::{Deserialize, Serialize};

pub type Coords = Vec<Rat>;

/// Affine lift of an evaluation map on a simplex cell: one value of the
/// universal cover per vertex, extended affinely over the cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineEval {
    #[serde(with = "crate::io::rat_vec")]
    pub vertex_lifts: Vec<Rat>,
}

impl AffineEval {
    pub fn new(vertex_lifts: Vec<Rat>) -> Self {
        Self { vertex_lifts }
    }

    pub fn constant(v: Rat) -> Self {
        Self { vertex_lifts: vec![v] }
    }

    /// Simplex dimension this eval lives on.
    pub fn dim(&self) -> usize {
        self.vertex_lifts.len() - 1
    }

    /// Value at simplex coordinates `(t_1..t_d)`.
    pub fn at(&self, coords: &[Rat]) -> Rat {
        let mut v = self.vertex_lifts[0].clone();
        for (i, t) in coords.iter().enumerate() {
            v += t * (&self.vertex_lifts[i + 1] - &self.vertex_lifts[0]);
        }
        v
    }

    /// Gradient with respect to the simplex coordinates.
    pub fn gradient(&self) -> Coords {
        (1..self.vertex_lifts.len())
            .map(|i| &self.vertex_lifts[i] - &self.vertex_lifts[0])
            .collect()
    }

    pub fn is_constant(&self) -> bool {
        self.gradient().iter().all(|g| g.is_zero())
    }

    pub fn min(&self) -> &Rat {
        self.vertex_lifts.iter().min().unwrap()
    }

    pub fn max(&self) -> &Rat {
        self.vertex_lifts.iter().max().unwrap()
    }

    /// Restriction to a face given by vertex indices of the simplex.
    pub fn restrict(&self, vertex_ids: &[usize]) -> AffineEval {
        AffineEval::new(vertex_ids.iter().map(|&j| self.vertex_lifts[j].clone()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellKind {
    Simplex,
    Cylinder { base: Box<Cell> },
}

/// One oriented cell of a moduli complex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub sign: Sign,
    pub e_plus: AffineEval,
    pub e_minus: AffineEval,
    #[serde(flatten)]
    pub kind: CellKind,
}

impl Cell {
    pub fn simplex(sign: Sign, e_plus: AffineEval, e_minus: AffineEval) -> Self {
        assert_eq!(e_plus.dim(), e_minus.dim(), "evaluation dims must agree");
        Cell { sign, e_plus, e_minus, kind: CellKind::Simplex }
    }

    pub fn point(sign: Sign, e_plus: Rat, e_minus: Rat) -> Self {
        Cell::simplex(sign, AffineEval::constant(e_plus), AffineEval::constant(e_minus))
    }

    pub fn segment(sign: Sign, e_plus: (Rat, Rat), e_minus: (Rat, Rat)) -> Self {
        Cell::simplex(
            sign,
            AffineEval::new(vec![e_plus.0, e_plus.1]),
            AffineEval::new(vec![e_minus.0, e_minus.1]),
        )
    }

    /// A line crossed with `base`, evaluations pulled back from the base.
    /// The sign is read relative to `dr` followed by the base's standard
    /// parameterization; the base's own sign is folded in and normalized
    /// away, so `cylinder(base.sign, base)` carries the product orientation.
    pub fn cylinder(sign: Sign, mut base: Cell) -> Self {
        let folded = sign * base.sign;
        base.sign = PLUS;
        Cell {
            sign: folded,
            e_plus: base.e_plus.clone(),
            e_minus: base.e_minus.clone(),
            kind: CellKind::Cylinder { base: Box::new(base) },
        }
    }

    /// Cylinder with the product orientation `dr ^ or(base)`.
    pub fn product_cylinder(base: Cell) -> Self {
        let s = base.sign;
        Cell::cylinder(s, base)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            CellKind::Simplex => self.e_plus.dim(),
            CellKind::Cylinder { base } => base.dim() + 1,
        }
    }

    pub fn is_cylinder(&self) -> bool {
        matches!(self.kind, CellKind::Cylinder { .. })
    }

    /// Evaluation lifts at cell coordinates. Cylinder coordinates are
    /// `(r, base...)`; the evaluations ignore `r`.
    pub fn evals_at(&self, coords: &[Rat]) -> (Rat, Rat) {
        match &self.kind {
            CellKind::Simplex => (self.e_plus.at(coords), self.e_minus.at(coords)),
            CellKind::Cylinder { base } => base.evals_at(&coords[1..]),
        }
    }

    /// Number of codimension-1 faces.
    pub fn face_count(&self) -> usize {
        match &self.kind {
            CellKind::Simplex => {
                if self.dim() == 0 {
                    0
                } else {
                    self.dim() + 1
                }
            }
            CellKind::Cylinder { base } => base.face_count() + 2,
        }
    }

    /// Geometry of one codimension-1 face.
    pub fn face(&self, idx: usize) -> FaceGeom {
        match &self.kind {
            CellKind::Simplex => {
                let d = self.dim();
                assert!(d >= 1 && idx <= d, "face index out of range");
                let vertex_ids: Vec<usize> = (0..=d).filter(|&j| j != idx).collect();
                let verts = vertex_ids.iter().map(|&j| simplex_vertex(d, j)).collect();
                FaceGeom {
                    dim: d - 1,
                    beta: if idx % 2 == 0 { PLUS } else { MINUS },
                    verts,
                    end: None,
                }
            }
            CellKind::Cylinder { base } => {
                let nb = base.face_count();
                if idx < nb {
                    let mut f = base.face(idx);
                    // A face of R x base keeps the base-face parameterization;
                    // moving the line coordinate to the front costs one swap.
                    f.beta = -f.beta;
                    f.dim += 1;
                    f
                } else if idx == nb {
                    FaceGeom { dim: base.dim(), beta: MINUS, verts: base_vertices(base), end: Some(MINUS) }
                } else if idx == nb + 1 {
                    FaceGeom { dim: base.dim(), beta: PLUS, verts: base_vertices(base), end: Some(PLUS) }
                } else {
                    panic!("face index out of range");
                }
            }
        }
    }

    /// Evaluation lifts at the vertices of a face, in face vertex order.
    pub fn face_eval_lifts(&self, idx: usize) -> Vec<(Rat, Rat)> {
        match &self.kind {
            CellKind::Simplex => {
                let f = self.face(idx);
                f.verts.iter().map(|v| self.evals_at(v)).collect()
            }
            CellKind::Cylinder { base } => {
                let nb = base.face_count();
                if idx < nb {
                    base.face_eval_lifts(idx)
                } else {
                    // Ends: a copy of the base.
                    match &base.kind {
                        CellKind::Simplex => (0..=base.dim())
                            .map(|j| base.evals_at(&simplex_vertex(base.dim(), j)))
                            .collect(),
                        CellKind::Cylinder { base: b2 } => {
                            let _ = b2;
                            base.face_eval_lifts(0)
                        }
                    }
                }
            }
        }
    }

    /// The cell induced on a face, with the boundary orientation folded in.
    pub fn induced_face_cell(&self, idx: usize) -> Cell {
        match &self.kind {
            CellKind::Simplex => {
                let d = self.dim();
                let vertex_ids: Vec<usize> = (0..=d).filter(|&j| j != idx).collect();
                let beta = if idx % 2 == 0 { PLUS } else { MINUS };
                Cell::simplex(self.sign * beta, self.e_plus.restrict(&vertex_ids), self.e_minus.restrict(&vertex_ids))
            }
            CellKind::Cylinder { base } => {
                let nb = base.face_count();
                if idx < nb {
                    // Face of R x B over a base face: the line coordinate in
                    // front flips the base's boundary coefficient.
                    let inner = base.induced_face_cell(idx);
                    let beta = inner.sign; // base sign is normalized to +1
                    Cell::cylinder(-(self.sign * beta), Cell { sign: PLUS, ..inner })
                } else {
                    let end_sign = if idx == nb { MINUS } else { PLUS };
                    Cell { sign: self.sign * end_sign, ..(**base).clone() }
                }
            }
        }
    }
}

fn base_vertices(base: &Cell) -> Vec<Coords> {
    match &base.kind {
        CellKind::Simplex => (0..=base.dim()).map(|j| simplex_vertex(base.dim(), j)).collect(),
        CellKind::Cylinder { .. } => Vec::new(),
    }
}

/// Coordinates of vertex `j` of the standard d-simplex (vertex 0 is the
/// origin, vertex j is the j-th unit vector).
pub fn simplex_vertex(d: usize, j: usize) -> Coords {
    let mut v = vec![Rat::zero(); d];
    if j >= 1 {
        v[j - 1] = Rat::from(BigInt::from(1));
    }
    v
}

#[derive(Debug, Clone)]
pub struct FaceGeom {
    pub dim: usize,
    /// Coefficient relating the face's standard parameterization to the
    /// induced boundary orientation (before the cell sign).
    pub beta: Sign,
    /// Vertex coordinates in the cell's parameter space (base coordinates
    /// for cylinder faces; the line coordinate is unconstrained).
    pub verts: Vec<Coords>,
    /// For cylinder ends: which end of the line.
    pub end: Option<Sign>,
}

/// Reference to a codimension-1 face of a cell in a complex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaceRef {
    pub cell: usize,
    pub face: usize,
}

/// Identification of two codimension-1 faces. Vertex `j` of the left face
/// (in canonical face vertex order) matches vertex `perm[j]` of the right
/// face, and the evaluation lifts satisfy
/// `e(left) = e(right) + offset` pointwise for both evaluations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceGluing {
    pub left: FaceRef,
    pub right: FaceRef,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perm: Vec<usize>,
    pub offset_plus: i64,
    pub offset_minus: i64,
}

impl FaceGluing {
    pub fn perm_sign(&self) -> Sign {
        perm_parity(&self.perm)
    }
}

pub fn perm_parity(perm: &[usize]) -> Sign {
    let mut p = perm.to_vec();
    let mut sign = PLUS;
    for i in 0..p.len() {
        while p[i] != i {
            let j = p[i];
            p.swap(i, j);
            sign = -sign;
        }
    }
    sign
}

/// Which intermediate object a breaking label goes through. Systems use
/// `Item`; morphism and homotopy moduli distinguish the two sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MidRef {
    Item(usize),
    Source(usize),
    Target(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomotopySide {
    From,
    To,
}

/// Reference to a point (or affine family of points) of a factor cell in
/// another moduli complex: the images of the labeled face's vertices in the
/// factor cell's parameter coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorRef {
    pub dim: u8,
    pub cell: usize,
    #[serde(with = "crate::io::rat_vec_vec")]
    pub points: Vec<Coords>,
}

impl FactorRef {
    /// Affine image of a face-parameter point.
    pub fn apply(&self, face_coords: &[Rat]) -> Coords {
        affine_apply(&self.points, face_coords)
    }
}

/// Affine extension of vertex images: `pts[0] + sum xi_i (pts[i+1]-pts[0])`.
pub fn affine_apply(pts: &[Coords], xi: &[Rat]) -> Coords {
    let k = pts[0].len();
    let mut res = vec![Rat::zero(); k];
    for c in 0..k {
        let mut v = pts[0][c].clone();
        for (i, t) in xi.iter().enumerate() {
            v += t * (&pts[i + 1][c] - &pts[0][c]);
        }
        res[c] = v;
    }
    res
}

/// What the compactification attaches at an unglued codimension-1 face.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "label", rename_all = "snake_case")]
pub enum BoundaryLabel {
    /// Non-compact direction: the data asserts nothing is attached here.
    End,
    /// A broken configuration through `mid`.
    Breaking { mid: MidRef, plus: FactorRef, minus: FactorRef },
    /// Homotopy data only: a boundary point lying on one of the two
    /// morphisms being connected.
    MorphismEnd { side: HomotopySide, factor: FactorRef },
}

/// An oriented affine cell complex with face gluings and boundary labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SignedCellComplex {
    pub dim: usize,
    pub cells: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gluings: Vec<FaceGluing>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boundary_labels: Vec<(FaceRef, BoundaryLabel)>,
}

impl SignedCellComplex {
    pub fn empty(dim: usize) -> Self {
        SignedCellComplex { dim, cells: Vec::new(), gluings: Vec::new(), boundary_labels: Vec::new() }
    }

    pub fn of_cells(dim: usize, cells: Vec<Cell>) -> Self {
        let cx = SignedCellComplex { dim, cells, gluings: Vec::new(), boundary_labels: Vec::new() };
        cx.assert_dims();
        cx
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn assert_dims(&self) {
        for c in &self.cells {
            assert_eq!(c.dim(), self.dim, "cell dimension mismatch");
        }
    }

    /// Face -> gluing lookup: (gluing index, is_left).
    pub fn glued_face(&self, f: FaceRef) -> Option<(usize, bool)> {
        for (i, g) in self.gluings.iter().enumerate() {
            if g.left == f {
                return Some((i, true));
            }
            if g.right == f {
                return Some((i, false));
            }
        }
        None
    }

    pub fn label_of(&self, f: FaceRef) -> Option<&BoundaryLabel> {
        self.boundary_labels.iter().find(|(fr, _)| *fr == f).map(|(_, l)| l)
    }

    /// Multiply every d-cell sign by (-1)^d.
    pub fn conjugate(&self) -> SignedCellComplex {
        let mut out = self.clone();
        for c in &mut out.cells {
            if c.dim() % 2 == 1 {
                c.sign = -c.sign;
            }
        }
        out
    }
}

/// A boundary face of a complex with its induced orientation data.
#[derive(Debug, Clone)]
pub struct BoundaryFace {
    pub face: FaceRef,
    /// Induced cell (dimension one lower) with the boundary orientation
    /// folded into its sign.
    pub induced: Cell,
    pub label: Option<BoundaryLabel>,
}

/// Enumerate unglued codimension-1 faces with induced orientations and
/// labels.
pub fn boundary(cx: &SignedCellComplex) -> Vec<BoundaryFace> {
    assert!(cx.dim >= 1, "boundary requires dim >= 1");
    let mut out = Vec::new();
    for (ci, cell) in cx.cells.iter().enumerate() {
        for fi in 0..cell.face_count() {
            let fr = FaceRef { cell: ci, face: fi };
            if cx.glued_face(fr).is_some() {
                continue;
            }
            out.push(BoundaryFace {
                face: fr,
                induced: cell.induced_face_cell(fi),
                label: cx.label_of(fr).cloned(),
            });
        }
    }
    out
}

/// Signed boundary points of a 1-dimensional complex: `(e_plus lift,
/// e_minus lift, sign, face, label)`.
pub fn boundary_points(cx: &SignedCellComplex) -> Vec<(Rat, Rat, Sign, FaceRef, Option<BoundaryLabel>)> {
    assert_eq!(cx.dim, 1);
    boundary(cx)
        .into_iter()
        .map(|bf| {
            let c = bf.induced;
            (c.e_plus.vertex_lifts[0].clone(), c.e_minus.vertex_lifts[0].clone(), c.sign, bf.face, bf.label)
        })
        .collect()
}

/// The boundary of a complex as a complex of one dimension lower (cells
/// only; no gluings are derived).
pub fn boundary_complex(cx: &SignedCellComplex) -> SignedCellComplex {
    assert!(cx.dim >= 1);
    let cells = boundary(cx).into_iter().map(|bf| bf.induced).collect();
    SignedCellComplex { dim: cx.dim - 1, cells, gluings: Vec::new(), boundary_labels: Vec::new() }
}

/// Fold a cell's sign to the cut trivializations at given lifts.
pub fn fold_to_cut(sign: Sign, ls_plus: &LocalSystem, lift_plus: &Rat, ls_minus: &LocalSystem, lift_minus: &Rat) -> Sign {
    sign * lift_fold(ls_plus, lift_plus) * lift_fold(ls_minus, lift_minus)
}

/// Verify evaluation continuity and the monodromy-adjusted sign relation
/// across every face gluing.
pub fn check_sign_consistency(cx: &SignedCellComplex, ls_plus: &LocalSystem, ls_minus: &LocalSystem) -> ValidationReport {
    let mut report = ValidationReport::new();
    for (gi, g) in cx.gluings.iter().enumerate() {
        let loc = format!("gluing {gi} ({:?} ~ {:?})", g.left, g.right);
        let (lc, rc) = (&cx.cells[g.left.cell], &cx.cells[g.right.cell]);
        if g.left.face >= lc.face_count() || g.right.face >= rc.face_count() {
            report.push("SignConsistency", loc, "face index out of range");
            continue;
        }
        let lf = lc.face(g.left.face);
        let rf = rc.face(g.right.face);
        if lf.dim != rf.dim {
            report.push("SignConsistency", loc, format!("face dims differ: {} vs {}", lf.dim, rf.dim));
            continue;
        }
        let n = lf.verts.len().max(1);
        let perm: Vec<usize> = if g.perm.is_empty() { (0..n).collect() } else { g.perm.clone() };
        if perm.len() != lf.verts.len().max(rf.verts.len()) && !(lf.verts.is_empty() && perm.len() <= 1) {
            // 0-dim faces have a single implicit vertex.
        }
        let llifts = lc.face_eval_lifts(g.left.face);
        let rlifts = rc.face_eval_lifts(g.right.face);
        if llifts.len() != rlifts.len() {
            report.push("SignConsistency", loc, "face vertex counts differ");
            continue;
        }
        let kp = Rat::from(BigInt::from(g.offset_plus));
        let km = Rat::from(BigInt::from(g.offset_minus));
        let mut continuity_ok = true;
        for (j, (lp, lm)) in llifts.iter().enumerate() {
            let pj = if perm.is_empty() { j } else { perm[j] };
            let (rp, rm) = &rlifts[pj];
            if lp - rp != kp || lm - rm != km {
                continuity_ok = false;
                report.push(
                    "EvaluationContinuity",
                    loc.clone(),
                    format!("lift mismatch at face vertex {j}: ({lp},{lm}) vs ({rp},{rm}) with offsets ({},{})", g.offset_plus, g.offset_minus),
                );
            }
        }
        if !continuity_ok {
            continue;
        }
        // Compare the two induced boundary orientations through the
        // identification; consistency demands they be opposite.
        let (lp0, lm0) = &llifts[0];
        let pj = if perm.is_empty() { 0 } else { perm[0] };
        let (rp0, rm0) = &rlifts[pj];
        let tl = fold_to_cut(lc.sign, ls_plus, lp0, ls_minus, lm0);
        let tr = fold_to_cut(rc.sign, ls_plus, rp0, ls_minus, rm0);
        let ok = tl * lf.beta * perm_parity(&perm) == -(tr * rf.beta);
        if !ok {
            report.push(
                "SignConsistency",
                loc,
                format!("induced orientations do not oppose: left {} beta {}, right {} beta {}", tl, lf.beta, tr, rf.beta),
            );
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::rat;

    fn seg(sign: Sign, p0: i64, p1: i64, q: i64, d: i64) -> Cell {
        Cell::segment(sign, (rat(p0, d), rat(p1, d)), (rat(q, d), rat(q, d)))
    }

    #[test]
    fn single_segment_boundary_signs() {
        let cx = SignedCellComplex::of_cells(1, vec![seg(PLUS, 1, 3, 2, 10)]);
        let pts = boundary_points(&cx);
        assert_eq!(pts.len(), 2);
        // Face 0 is the parameter-1 end with +, face 1 the parameter-0 end with -.
        let by_face: std::collections::BTreeMap<usize, Sign> = pts.iter().map(|p| (p.3.face, p.2)).collect();
        assert_eq!(by_face[&0], PLUS);
        assert_eq!(by_face[&1], MINUS);
        assert_eq!(pts.iter().find(|p| p.3.face == 0).unwrap().0, rat(3, 10));
    }

    #[test]
    fn winding_circle_is_closed_and_consistent() {
        // One cell 0 -> 1 on both evaluations, self-glued end to start with
        // offsets (1,1).
        let cell = Cell::segment(PLUS, (rat(0, 1), rat(1, 1)), (rat(0, 1), rat(1, 1)));
        let cx = SignedCellComplex {
            dim: 1,
            cells: vec![cell],
            gluings: vec![FaceGluing {
                left: FaceRef { cell: 0, face: 0 },
                right: FaceRef { cell: 0, face: 1 },
                perm: vec![],
                offset_plus: 1,
                offset_minus: 1,
            }],
            boundary_labels: vec![],
        };
        assert!(boundary(&cx).is_empty());
        assert!(check_sign_consistency(&cx, &LocalSystem::TRIVIAL, &LocalSystem::TRIVIAL).passed());
        // A twisted local system on both sides still closes up: the two
        // monodromies cancel.
        assert!(check_sign_consistency(&cx, &LocalSystem::TWISTED, &LocalSystem::TWISTED).passed());
        // A single twist does not close.
        assert!(!check_sign_consistency(&cx, &LocalSystem::TWISTED, &LocalSystem::TRIVIAL).passed());
    }

    #[test]
    fn gluing_flip_examples() {
        // Two 1-cells glued head-to-tail with offsets (0,0) and equal signs: pass.
        let a = seg(PLUS, 1, 2, 1, 10);
        let b = seg(PLUS, 2, 3, 1, 10);
        let glue = |off: i64, sb: Sign| SignedCellComplex {
            dim: 1,
            cells: vec![a.clone(), Cell { sign: sb, ..b.clone() }],
            gluings: vec![FaceGluing {
                left: FaceRef { cell: 0, face: 0 },
                right: FaceRef { cell: 1, face: 1 },
                perm: vec![],
                offset_plus: off,
                offset_minus: 0,
            }],
            boundary_labels: vec![],
        };
        assert!(check_sign_consistency(&glue(0, PLUS), &LocalSystem::TRIVIAL, &LocalSystem::TRIVIAL).passed());
        // e_plus offset 1 with twisted plus system: requires a sign flip.
        let mut shifted = glue(1, PLUS);
        shifted.cells[1].e_plus = AffineEval::new(vec![rat(2, 10) - rat(1, 1), rat(3, 10) - rat(1, 1)]);
        assert!(!check_sign_consistency(&shifted, &LocalSystem::TWISTED, &LocalSystem::TRIVIAL).passed());
        let mut flipped = shifted.clone();
        flipped.cells[1].sign = MINUS;
        assert!(check_sign_consistency(&flipped, &LocalSystem::TWISTED, &LocalSystem::TRIVIAL).passed());
    }
}
