//! Level sets and point constraints on signed cell complexes.
//!
//! Orientation follows the derivative-first convention: constraining
//! `e_plus` keeps the level-set orientation, constraining `e_minus` negates
//! it, and a double constraint applies the minus cut first and the plus cut
//! second. Cylinder cells produce cylinders over the base's level set and
//! never isolated points.

use super::solve::{det2, k_range, solve_one, solve_two, Domain, Piece};
use super::{
    affine_apply, AffineEval, BoundaryLabel, Cell, CellKind, Coords, FaceGluing, FaceRef,
    FactorRef, SignedCellComplex,
};
use crate::circle::{CirclePoint, Rat, Sign, MINUS, PLUS};
use crate::error::Error;
use num::{BigInt, Zero};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Plus,
    Minus,
}

/// Affine embedding of a result cell into its originating cell's
/// coordinates: images of the result cell's simplex vertices (base vertices
/// for cylinder results, with the line coordinate passed through).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Embed {
    Simplex(Vec<Coords>),
    /// Pass the line coordinate through and embed the base.
    Cyl(Box<Embed>),
    /// Drop the line coordinate (it belongs to the other factor).
    DropR(Box<Embed>),
}

impl Embed {
    pub fn apply(&self, coords: &[Rat]) -> Coords {
        match self {
            Embed::Simplex(verts) => affine_apply(verts, coords),
            Embed::Cyl(inner) => {
                let mut out = vec![coords[0].clone()];
                out.extend(inner.apply(&coords[1..]));
                out
            }
            Embed::DropR(inner) => inner.apply(&coords[1..]),
        }
    }

    /// Vertex images for a simplex embed; panics on cylinder embeds.
    pub fn verts(&self) -> &Vec<Coords> {
        match self {
            Embed::Simplex(v) => v,
            _ => panic!("cylinder embed has no simplex vertices"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PieceMeta {
    pub orig_cell: usize,
    pub embed: Embed,
    /// Integer lift offsets (k_plus, k_minus) absorbed by the applied
    /// constraints; unconstrained sides carry 0.
    pub k_plus: i64,
    pub k_minus: i64,
}

/// Result of constraining a complex at one or two circle points.
#[derive(Debug, Clone)]
pub struct ConstrainedComplex {
    pub complex: SignedCellComplex,
    pub plus_constraint: Option<CirclePoint>,
    pub minus_constraint: Option<CirclePoint>,
    pub meta: Vec<PieceMeta>,
}

impl ConstrainedComplex {
    pub fn is_empty(&self) -> bool {
        self.complex.is_empty()
    }
}

fn eval_of(cell: &Cell, which: Which) -> &AffineEval {
    match which {
        Which::Plus => &cell.e_plus,
        Which::Minus => &cell.e_minus,
    }
}

/// True iff `p` is a regular value of the chosen evaluation on every cell:
/// preimages have a nonzero derivative and avoid the exclusion loci that
/// keep constrained complexes clean (cell endpoints in dimension 1, cell
/// vertices in dimensions 2 and 3, constant matches anywhere).
pub fn is_regular_value(cx: &SignedCellComplex, which: Which, p: &CirclePoint) -> bool {
    cx.cells.iter().all(|c| cell_regular(c, which, p))
}

fn cell_regular(cell: &Cell, which: Which, p: &CirclePoint) -> bool {
    match &cell.kind {
        CellKind::Cylinder { base } => cell_regular(base, which, p),
        CellKind::Simplex => {
            let e = eval_of(cell, which);
            let hits_value = |v: &Rat| (v - p.coord()).is_integer();
            match cell.dim() {
                0 => !hits_value(&e.vertex_lifts[0]),
                1 => {
                    let g = &e.vertex_lifts[1] - &e.vertex_lifts[0];
                    if g.is_zero() {
                        return !hits_value(&e.vertex_lifts[0]);
                    }
                    // Solutions must not sit at the cell endpoints.
                    !hits_value(&e.vertex_lifts[0]) && !hits_value(&e.vertex_lifts[1])
                }
                _ => {
                    if e.is_constant() {
                        !hits_value(&e.vertex_lifts[0])
                    } else {
                        // The level set must not pass through any vertex.
                        e.vertex_lifts.iter().all(|v| !hits_value(v))
                    }
                }
            }
        }
    }
}

/// True iff `(p_plus, p_minus)` is a regular value of `e_plus x e_minus` on
/// every cell.
pub fn is_regular_pair(cx: &SignedCellComplex, p_plus: &CirclePoint, p_minus: &CirclePoint) -> bool {
    cx.cells.iter().all(|c| cell_pair_regular(c, p_plus, p_minus))
}

fn cell_pair_regular(cell: &Cell, p_plus: &CirclePoint, p_minus: &CirclePoint) -> bool {
    match &cell.kind {
        CellKind::Cylinder { base } => match base.dim() {
            // Pulled back from the base, the pair map is never regular on
            // nonempty solution sets unless the base solutions are cut out
            // by full rank, which needs base dimension 2.
            2 => cell_pair_regular(base, p_plus, p_minus),
            _ => joint_solutions_empty(base, p_plus, p_minus),
        },
        CellKind::Simplex => {
            let d = cell.dim();
            let gp = cell.e_plus.gradient();
            let gm = cell.e_minus.gradient();
            let rank = super::solve::pair_rank(&gp, &gm);
            match d {
                0 | 1 => joint_solutions_empty(cell, p_plus, p_minus),
                2 => {
                    if rank < 2 {
                        return joint_solutions_empty(cell, p_plus, p_minus);
                    }
                    // Isolated solutions must avoid all faces.
                    for (kp, km, piece) in joint_pieces(cell, p_plus, p_minus) {
                        let _ = (kp, km);
                        match piece {
                            Piece::Point { active, .. } => {
                                if !active.is_empty() {
                                    return false;
                                }
                            }
                            _ => return false,
                        }
                    }
                    true
                }
                3 => {
                    if rank < 2 {
                        return joint_solutions_empty(cell, p_plus, p_minus);
                    }
                    // Solution segments must meet facets only at their
                    // endpoints, one facet at a time.
                    for (_, _, piece) in joint_pieces(cell, p_plus, p_minus) {
                        match piece {
                            Piece::Segment { a_active, b_active, .. } => {
                                if a_active.len() != 1 || b_active.len() != 1 {
                                    return false;
                                }
                            }
                            _ => return false,
                        }
                    }
                    true
                }
                _ => false,
            }
        }
    }
}

fn joint_solutions_empty(cell: &Cell, p_plus: &CirclePoint, p_minus: &CirclePoint) -> bool {
    match &cell.kind {
        CellKind::Cylinder { base } => joint_solutions_empty(base, p_plus, p_minus),
        CellKind::Simplex => joint_pieces(cell, p_plus, p_minus).is_empty(),
    }
}

/// All joint solution pieces of `e_plus = p_plus + k_plus`,
/// `e_minus = p_minus + k_minus` on a simplex cell, over all lift offsets.
/// Degenerate (positive-dimensional dependent) solution sets are reported
/// as a single `Polygon` piece with no vertices so callers can reject them.
fn joint_pieces(cell: &Cell, p_plus: &CirclePoint, p_minus: &CirclePoint) -> Vec<(i64, i64, Piece)> {
    let d = cell.dim();
    let domain = Domain::simplex(d);
    let gp = cell.e_plus.gradient();
    let gm = cell.e_minus.gradient();
    let mut out = Vec::new();
    for kp in k_range(&(cell.e_plus.min() - p_plus.coord()), &(cell.e_plus.max() - p_plus.coord())) {
        for km in k_range(&(cell.e_minus.min() - p_minus.coord()), &(cell.e_minus.max() - p_minus.coord())) {
            let cp = &cell.e_plus.vertex_lifts[0] - p_plus.coord() - Rat::from(BigInt::from(kp));
            let cm = &cell.e_minus.vertex_lifts[0] - p_minus.coord() - Rat::from(BigInt::from(km));
            if d == 0 {
                if cp.is_zero() && cm.is_zero() {
                    out.push((kp, km, Piece::Point { coords: vec![], active: vec![] }));
                }
                continue;
            }
            if d == 1 {
                // Two equations on one parameter: any common solution in
                // [0,1] is a failure; report it as a point piece.
                let sol_p: Option<Vec<Rat>> = if gp[0].is_zero() {
                    if cp.is_zero() {
                        None // e_plus identically satisfied; fall through to e_minus
                    } else {
                        continue;
                    }
                } else {
                    Some(vec![-&cp / &gp[0]])
                };
                let sol = match (sol_p, gm[0].is_zero()) {
                    (Some(s), true) => {
                        if cm.is_zero() {
                            Some(s)
                        } else {
                            None
                        }
                    }
                    (Some(s), false) => {
                        let t = -&cm / &gm[0];
                        if t == s[0] {
                            Some(s)
                        } else {
                            None
                        }
                    }
                    (None, true) => {
                        // Both constant and matching: whole segment.
                        if cm.is_zero() {
                            out.push((kp, km, Piece::Polygon { verts: vec![] }));
                        }
                        None
                    }
                    (None, false) => {
                        let t = -&cm / &gm[0];
                        Some(vec![t])
                    }
                };
                if let Some(s) = sol {
                    if domain.contains(&s) {
                        let active = domain.active_facets(&s);
                        out.push((kp, km, Piece::Point { coords: s, active }));
                    }
                }
                continue;
            }
            match solve_two(&domain, &gp, &cp, &gm, &cm) {
                Ok(pieces) => out.extend(pieces.into_iter().map(|p| (kp, km, p))),
                Err(()) => out.push((kp, km, Piece::Polygon { verts: vec![] })),
            }
        }
    }
    out
}

pub fn level_set_plus(cx: &SignedCellComplex, p: &CirclePoint) -> Result<ConstrainedComplex, Error> {
    level_set(cx, Which::Plus, p)
}

pub fn level_set_minus(cx: &SignedCellComplex, p: &CirclePoint) -> Result<ConstrainedComplex, Error> {
    level_set(cx, Which::Minus, p)
}

/// Raw per-cell result pieces of a constrained complex before cross-cell
/// assembly. `face_origins[j] = Some(orig face)` when result face j lies on
/// a codimension-1 face of the originating cell.
struct RawPiece {
    cell: Cell,
    meta: PieceMeta,
    face_origins: Vec<Option<usize>>,
    /// Labels attached during construction (cylinder ends, fan cuts are
    /// glued immediately instead).
    labels: Vec<(usize, BoundaryLabel)>,
}

/// Level set of one evaluation map. Requires `is_regular_value`.
pub fn level_set(cx: &SignedCellComplex, which: Which, p: &CirclePoint) -> Result<ConstrainedComplex, Error> {
    if !is_regular_value(cx, which, p) {
        return Err(Error::NotRegular(p.to_string(), format!("on a dim-{} complex", cx.dim)));
    }
    if cx.dim == 0 {
        // Regularity means the level is empty.
        return Ok(ConstrainedComplex {
            complex: SignedCellComplex::empty(0),
            plus_constraint: (which == Which::Plus).then(|| p.clone()),
            minus_constraint: (which == Which::Minus).then(|| p.clone()),
            meta: vec![],
        });
    }
    let mut raw: Vec<RawPiece> = Vec::new();
    let mut fan_gluings: Vec<FaceGluing> = Vec::new();
    for (ci, cell) in cx.cells.iter().enumerate() {
        cell_level_pieces(ci, cell, which, p, &mut raw, &mut fan_gluings)?;
    }
    assemble(cx, raw, fan_gluings, cx.dim - 1, which_constraints(which, p, None))
}

/// Double constraint: minus first, then plus, composing the orientation
/// conventions. Requires `is_regular_pair`.
pub fn double_constraint(cx: &SignedCellComplex, p_plus: &CirclePoint, p_minus: &CirclePoint) -> Result<ConstrainedComplex, Error> {
    if !is_regular_pair(cx, p_plus, p_minus) {
        return Err(Error::NotRegular(format!("({p_plus}, {p_minus})"), format!("pair on a dim-{} complex", cx.dim)));
    }
    if cx.dim < 2 {
        return Ok(ConstrainedComplex {
            complex: SignedCellComplex::empty(cx.dim.saturating_sub(2)),
            plus_constraint: Some(p_plus.clone()),
            minus_constraint: Some(p_minus.clone()),
            meta: vec![],
        });
    }
    let mut raw: Vec<RawPiece> = Vec::new();
    for (ci, cell) in cx.cells.iter().enumerate() {
        cell_double_pieces(ci, cell, p_plus, p_minus, &mut raw)?;
    }
    assemble(cx, raw, Vec::new(), cx.dim - 2, (Some(p_plus.clone()), Some(p_minus.clone())))
}

fn which_constraints(which: Which, p: &CirclePoint, _other: Option<&CirclePoint>) -> (Option<CirclePoint>, Option<CirclePoint>) {
    match which {
        Which::Plus => (Some(p.clone()), None),
        Which::Minus => (None, Some(p.clone())),
    }
}

/// Sign of the derivative-first level set of an affine map with gradient
/// `g` at an interior point of a 1-dimensional cell.
fn point_sign_1d(cell_sign: Sign, g: &Rat) -> Sign {
    cell_sign * Sign::of(g)
}

fn cell_level_pieces(
    ci: usize,
    cell: &Cell,
    which: Which,
    p: &CirclePoint,
    raw: &mut Vec<RawPiece>,
    fan_gluings: &mut Vec<FaceGluing>,
) -> Result<(), Error> {
    // Orientation flip: minus level sets are negated by convention.
    let conv = match which {
        Which::Plus => PLUS,
        Which::Minus => MINUS,
    };
    match &cell.kind {
        CellKind::Cylinder { base } => {
            // Cylinder over the base's level set; the line coordinate
            // passing to the front flips the orientation once.
            let mut inner_raw: Vec<RawPiece> = Vec::new();
            let mut inner_fans: Vec<FaceGluing> = Vec::new();
            cell_level_pieces(0, base, which, p, &mut inner_raw, &mut inner_fans)?;
            if !inner_fans.is_empty() {
                return Err(Error::Unsupported("triangulated level set under a cylinder".into()));
            }
            for ip in inner_raw {
                raw.push(cylinder_piece(ci, cell, base, ip));
            }
            Ok(())
        }
        CellKind::Simplex => {
            let e = eval_of(cell, which);
            let g = e.gradient();
            let d = cell.dim();
            let domain = Domain::simplex(d);
            for k in k_range(&(e.min() - p.coord()), &(e.max() - p.coord())) {
                let c0 = &e.vertex_lifts[0] - p.coord() - Rat::from(BigInt::from(k));
                let pieces = solve_one(&domain, &g, &c0)
                    .map_err(|()| Error::NotRegular(p.to_string(), format!("evaluation constant on cell {ci}")))?;
                for piece in pieces {
                    push_level_piece(ci, cell, which, conv, k, &g, piece, raw, fan_gluings)?;
                }
            }
            Ok(())
        }
    }
}

/// Lift a raw base piece to a cylinder piece over it. Each applied
/// constraint contributes one orientation flip for the line coordinate
/// moving to the front; the parity is the number of constraints applied,
/// which equals `orig_dim - result_dim`.
fn cylinder_piece(ci: usize, cyl: &Cell, base: &Cell, ip: RawPiece) -> RawPiece {
    let constraints = base.dim() - ip.cell.dim();
    let flip = if constraints % 2 == 1 { MINUS } else { PLUS };
    // ip.cell.sign was computed against base.sign (normalized +1 inside the
    // cylinder); rebase it against the cylinder's sign.
    let new_sign = flip * cyl.sign * base.sign * ip.cell.sign;
    let result = Cell::cylinder(new_sign, Cell { sign: PLUS, ..ip.cell.clone() });
    // Faces: base-derived faces keep their origin (same face index on the
    // cylinder); the result ends lie on the original cylinder's ends.
    let nb = base.face_count();
    let mut face_origins = ip.face_origins.clone();
    face_origins.push(Some(nb));
    face_origins.push(Some(nb + 1));
    let embed = Embed::Cyl(Box::new(ip.meta.embed.clone()));
    RawPiece {
        cell: result,
        meta: PieceMeta { orig_cell: ci, embed, k_plus: ip.meta.k_plus, k_minus: ip.meta.k_minus },
        face_origins,
        labels: ip.labels,
    }
}

#[allow(clippy::too_many_arguments)]
fn push_level_piece(
    ci: usize,
    cell: &Cell,
    which: Which,
    conv: Sign,
    k: i64,
    g: &Coords,
    piece: Piece,
    raw: &mut Vec<RawPiece>,
    fan_gluings: &mut Vec<FaceGluing>,
) -> Result<(), Error> {
    let p_lift = |kk: i64, pcoord: &Rat| pcoord + Rat::from(BigInt::from(kk));
    let (kp, km) = match which {
        Which::Plus => (k, 0),
        Which::Minus => (0, k),
    };
    match piece {
        Piece::Point { coords, active } => {
            if !active.is_empty() {
                return Err(Error::NotRegular(
                    "level".into(),
                    format!("solution on a boundary face of cell {ci}"),
                ));
            }
            let (vp, vm) = cell.evals_at(&coords);
            let (e_plus, e_minus) = match which {
                Which::Plus => (AffineEval::constant(vp), AffineEval::constant(vm)),
                Which::Minus => (AffineEval::constant(vp), AffineEval::constant(vm)),
            };
            let sign = conv * point_sign_1d(cell.sign, &g[0]);
            raw.push(RawPiece {
                cell: Cell { sign, e_plus, e_minus, kind: CellKind::Simplex },
                meta: PieceMeta { orig_cell: ci, embed: Embed::Simplex(vec![coords]), k_plus: kp, k_minus: km },
                face_origins: vec![],
                labels: vec![],
            });
            let _ = p_lift;
            Ok(())
        }
        Piece::Segment { a, b, a_active, b_active } => {
            // Result segment runs a -> b along +rot90(g); derivative-first
            // orients the level set along sign * rot90(g).
            if a_active.len() != 1 || b_active.len() != 1 {
                return Err(Error::NotRegular("level".into(), format!("level segment touches a corner of cell {ci}")));
            }
            let sign = conv * cell.sign;
            let (pa, ma) = cell.evals_at(&a);
            let (pb, mb) = cell.evals_at(&b);
            // face 0 of the segment is the b end, face 1 the a end.
            let fa = facet_to_face(&a_active);
            let fb = facet_to_face(&b_active);
            raw.push(RawPiece {
                cell: Cell::segment(sign, (pa, pb), (ma, mb)),
                meta: PieceMeta { orig_cell: ci, embed: Embed::Simplex(vec![a, b]), k_plus: kp, k_minus: km },
                face_origins: vec![Some(fb), Some(fa)],
                labels: vec![],
            });
            Ok(())
        }
        Piece::Polygon { verts } => {
            if verts.is_empty() {
                return Err(Error::NotRegular("level".into(), format!("degenerate level set on cell {ci}")));
            }
            // Fan-triangulate the (positively ordered) polygon.
            let m = verts.len();
            let first = raw.len();
            for j in 1..m - 1 {
                let (v0, _) = &verts[0];
                let (vj, _) = &verts[j];
                let (vj1, _) = &verts[j + 1];
                let evals: Vec<(Rat, Rat)> = [v0, vj, vj1].iter().map(|v| cell.evals_at(v)).collect();
                let sign = conv * cell.sign;
                let tri = Cell::simplex(
                    sign,
                    AffineEval::new(evals.iter().map(|e| e.0.clone()).collect()),
                    AffineEval::new(evals.iter().map(|e| e.1.clone()).collect()),
                );
                // Triangle faces: 0 = (vj, vj1), 1 = (v0, vj1), 2 = (v0, vj).
                let f0 = common_facet(&verts[j].1, &verts[j + 1].1);
                let f1 = if j + 1 == m - 1 { common_facet(&verts[0].1, &verts[j + 1].1) } else { None };
                let f2 = if j == 1 { common_facet(&verts[0].1, &verts[1].1) } else { None };
                raw.push(RawPiece {
                    cell: tri,
                    meta: PieceMeta {
                        orig_cell: ci,
                        embed: Embed::Simplex(vec![v0.clone(), vj.clone(), vj1.clone()]),
                        k_plus: kp,
                        k_minus: km,
                    },
                    face_origins: vec![f0, f1, f2],
                    labels: vec![],
                });
                if j > 1 {
                    // Glue face 2 of this triangle to face 1 of the previous.
                    fan_gluings.push(FaceGluing {
                        left: FaceRef { cell: raw.len() - 1, face: 2 },
                        right: FaceRef { cell: raw.len() - 2, face: 1 },
                        perm: vec![0, 1],
                        offset_plus: 0,
                        offset_minus: 0,
                    });
                }
            }
            let _ = first;
            Ok(())
        }
    }
}

fn facet_to_face(active: &[usize]) -> usize {
    // Single-simplex domains list face 0 first, then faces 1..=d, so the
    // facet index equals the face index.
    active[0]
}

fn common_facet(a: &[usize], b: &[usize]) -> Option<usize> {
    a.iter().find(|x| b.contains(x)).copied()
}

fn cell_double_pieces(
    ci: usize,
    cell: &Cell,
    p_plus: &CirclePoint,
    p_minus: &CirclePoint,
    raw: &mut Vec<RawPiece>,
) -> Result<(), Error> {
    match &cell.kind {
        CellKind::Cylinder { base } => {
            let mut inner: Vec<RawPiece> = Vec::new();
            cell_double_pieces(0, base, p_plus, p_minus, &mut inner)?;
            for ip in inner {
                raw.push(cylinder_piece(ci, cell, base, ip));
            }
            Ok(())
        }
        CellKind::Simplex => {
            let d = cell.dim();
            let domain = Domain::simplex(d);
            let gp = cell.e_plus.gradient();
            let gm = cell.e_minus.gradient();
            for (kp, km, piece) in joint_pieces(cell, p_plus, p_minus) {
                match piece {
                    Piece::Point { coords, active } => {
                        if !active.is_empty() {
                            return Err(Error::NotRegular("pair".into(), format!("solution on a face of cell {ci}")));
                        }
                        if d != 2 {
                            return Err(Error::NotRegular("pair".into(), format!("isolated pair solution on a dim-{d} cell")));
                        }
                        let (vp, vm) = cell.evals_at(&coords);
                        let sign = cell.sign * Sign::of(&det2(&gp, &gm));
                        raw.push(RawPiece {
                            cell: Cell::point(sign, vp, vm),
                            meta: PieceMeta { orig_cell: ci, embed: Embed::Simplex(vec![coords]), k_plus: kp, k_minus: km },
                            face_origins: vec![],
                            labels: vec![],
                        });
                    }
                    Piece::Segment { a, b, a_active, b_active } => {
                        if d != 3 {
                            return Err(Error::NotRegular("pair".into(), "segment solution off a 3-cell".into()));
                        }
                        if a_active.len() != 1 || b_active.len() != 1 {
                            return Err(Error::NotRegular("pair".into(), format!("pair segment touches an edge of cell {ci}")));
                        }
                        // solve_two parameterizes along +cross(g_plus, g_minus),
                        // which carries the minus-then-plus orientation times
                        // the cell sign.
                        let sign = cell.sign;
                        let (pa, ma) = cell.evals_at(&a);
                        let (pb, mb) = cell.evals_at(&b);
                        let fa = facet_to_face(&a_active);
                        let fb = facet_to_face(&b_active);
                        raw.push(RawPiece {
                            cell: Cell::segment(sign, (pa, pb), (ma, mb)),
                            meta: PieceMeta { orig_cell: ci, embed: Embed::Simplex(vec![a, b]), k_plus: kp, k_minus: km },
                            face_origins: vec![Some(fb), Some(fa)],
                            labels: vec![],
                        });
                    }
                    Piece::Polygon { .. } => {
                        return Err(Error::NotRegular("pair".into(), format!("degenerate pair solutions on cell {ci}")));
                    }
                }
            }
            let _ = domain;
            Ok(())
        }
    }
}

/// Stitch raw pieces into a constrained complex: glue across original
/// gluings, inherit boundary labels, keep fan gluings.
fn assemble(
    orig: &SignedCellComplex,
    raw: Vec<RawPiece>,
    mut gluings: Vec<FaceGluing>,
    dim: usize,
    constraints: (Option<CirclePoint>, Option<CirclePoint>),
) -> Result<ConstrainedComplex, Error> {
    let mut labels: Vec<(FaceRef, BoundaryLabel)> = Vec::new();
    // Collect construction-time labels (cylinder ends).
    for (i, rp) in raw.iter().enumerate() {
        for (f, l) in &rp.labels {
            labels.push((FaceRef { cell: i, face: *f }, l.clone()));
        }
    }
    // Cross-cell matching for faces on original faces.
    for (i, rp) in raw.iter().enumerate() {
        for (fj, fo) in rp.face_origins.iter().enumerate() {
            let Some(orig_face) = fo else { continue };
            let ofr = FaceRef { cell: rp.meta.orig_cell, face: *orig_face };
            if let Some((gi, is_left)) = orig.glued_face(ofr) {
                if !is_left {
                    continue; // handled from the left side
                }
                let g = &orig.gluings[gi];
                let (partner_cell, partner_face) = (g.right.cell, g.right.face);
                // Map my face's vertex coordinates through the identification.
                let my_verts = result_face_verts(rp, fj);
                let mapped: Vec<Coords> = my_verts
                    .iter()
                    .map(|v| map_through_gluing(orig, g, v))
                    .collect::<Result<_, _>>()?;
                // Find the partner raw piece with a face matching those coords.
                let mut found = None;
                'search: for (i2, rp2) in raw.iter().enumerate() {
                    if rp2.meta.orig_cell != partner_cell {
                        continue;
                    }
                    for (fj2, fo2) in rp2.face_origins.iter().enumerate() {
                        if *fo2 != Some(partner_face) {
                            continue;
                        }
                        let their = result_face_verts(rp2, fj2);
                        if let Some(perm) = match_vertex_sets(&mapped, &their) {
                            found = Some((i2, fj2, perm));
                            break 'search;
                        }
                    }
                }
                let Some((i2, fj2, perm)) = found else {
                    return Err(Error::NotRegular(
                        "assembly".into(),
                        format!("no partner piece across gluing {gi} for piece {i} face {fj}"),
                    ));
                };
                gluings.push(FaceGluing {
                    left: FaceRef { cell: i, face: fj },
                    right: FaceRef { cell: i2, face: fj2 },
                    perm,
                    offset_plus: g.offset_plus,
                    offset_minus: g.offset_minus,
                });
            } else if let Some(orig_label) = orig.label_of(ofr) {
                let derived = derive_label(orig, rp, fj, ofr, orig_label)?;
                labels.push((FaceRef { cell: i, face: fj }, derived));
            }
        }
    }
    let cells: Vec<Cell> = raw.iter().map(|rp| rp.cell.clone()).collect();
    let meta: Vec<PieceMeta> = raw.into_iter().map(|rp| rp.meta).collect();
    let complex = SignedCellComplex { dim, cells, gluings, boundary_labels: labels };
    Ok(ConstrainedComplex { complex, plus_constraint: constraints.0, minus_constraint: constraints.1, meta })
}

/// Vertex coordinates (in the originating cell's parameter space) of a
/// result cell's face.
fn result_face_verts(rp: &RawPiece, face: usize) -> Vec<Coords> {
    match &rp.cell.kind {
        CellKind::Simplex => {
            let d = rp.cell.dim();
            let verts = rp.meta.embed.verts();
            if d == 0 {
                vec![verts[0].clone()]
            } else {
                (0..=d).filter(|&j| j != face).map(|j| verts[j].clone()).collect()
            }
        }
        CellKind::Cylinder { base } => match &rp.meta.embed {
            Embed::Cyl(inner) => {
                // Faces below the base's face count restrict the base's
                // verts; the two ends are copies of the whole base piece.
                let verts = inner.verts();
                let d = rp.cell.dim() - 1;
                let nbr = base.face_count();
                if face >= nbr {
                    verts.clone()
                } else if d == 0 {
                    vec![verts[0].clone()]
                } else {
                    (0..=d).filter(|&j| j != face).map(|j| verts[j].clone()).collect()
                }
            }
            _ => unreachable!(),
        },
    }
}

/// Map a point lying on the left face of a gluing to the right cell's
/// coordinates.
pub(crate) fn map_through_gluing(orig: &SignedCellComplex, g: &FaceGluing, point: &Coords) -> Result<Coords, Error> {
    let lcell = &orig.cells[g.left.cell];
    let rcell = &orig.cells[g.right.cell];
    let lface = lcell.face(g.left.face);
    let rface = rcell.face(g.right.face);
    let xi = face_params(&lface.verts, point)?;
    let perm: Vec<usize> = if g.perm.is_empty() { (0..rface.verts.len().max(1)).collect() } else { g.perm.clone() };
    if lface.verts.is_empty() {
        // 0-dimensional face: the image is the right face's single vertex.
        return Ok(rface.verts.first().cloned().unwrap_or_default());
    }
    let reordered: Vec<Coords> = (0..lface.verts.len()).map(|j| rface.verts[perm[j]].clone()).collect();
    Ok(affine_apply(&reordered, &xi))
}

/// Solve for face parameters: `point = v0 + sum xi_i (v_i - v0)`.
pub(crate) fn face_params(verts: &[Coords], point: &Coords) -> Result<Vec<Rat>, Error> {
    let m = verts.len() - 1; // face dimension
    if m == 0 {
        return Ok(vec![]);
    }
    let n = point.len();
    // Build the n x m system and pick m independent rows.
    let cols: Vec<Coords> = (1..=m)
        .map(|i| (0..n).map(|c| &verts[i][c] - &verts[0][c]).collect())
        .collect();
    let rhs: Coords = (0..n).map(|c| &point[c] - &verts[0][c]).collect();
    match m {
        1 => {
            let r = (0..n)
                .find(|&c| !cols[0][c].is_zero())
                .ok_or_else(|| Error::Parse("degenerate face".into()))?;
            Ok(vec![&rhs[r] / &cols[0][r]])
        }
        2 => {
            for r1 in 0..n {
                for r2 in (r1 + 1)..n {
                    let det = &cols[0][r1] * &cols[1][r2] - &cols[0][r2] * &cols[1][r1];
                    if !det.is_zero() {
                        let x = (&rhs[r1] * &cols[1][r2] - &rhs[r2] * &cols[1][r1]) / &det;
                        let y = (&cols[0][r1] * &rhs[r2] - &cols[0][r2] * &rhs[r1]) / &det;
                        return Ok(vec![x, y]);
                    }
                }
            }
            Err(Error::Parse("degenerate 2-face".into()))
        }
        _ => Err(Error::Parse("unsupported face dimension".into())),
    }
}

/// Match two vertex lists up to order; returns the permutation sending my
/// vertex j to their vertex perm[j].
fn match_vertex_sets(mine: &[Coords], theirs: &[Coords]) -> Option<Vec<usize>> {
    if mine.len() != theirs.len() {
        return None;
    }
    let mut perm = Vec::with_capacity(mine.len());
    let mut used = vec![false; theirs.len()];
    for v in mine {
        let mut found = None;
        for (j, w) in theirs.iter().enumerate() {
            if !used[j] && v == w {
                found = Some(j);
                break;
            }
        }
        let j = found?;
        used[j] = true;
        perm.push(j);
    }
    Some(perm)
}

/// Restrict an original boundary label to a constrained face.
fn derive_label(
    orig: &SignedCellComplex,
    rp: &RawPiece,
    face: usize,
    ofr: FaceRef,
    orig_label: &BoundaryLabel,
) -> Result<BoundaryLabel, Error> {
    match orig_label {
        BoundaryLabel::End => Ok(BoundaryLabel::End),
        BoundaryLabel::Breaking { mid, plus, minus } => {
            let (p2, m2) = restrict_factors(orig, rp, face, ofr, plus, minus)?;
            Ok(BoundaryLabel::Breaking { mid: *mid, plus: p2, minus: m2 })
        }
        BoundaryLabel::MorphismEnd { side, factor } => {
            let (f2, _) = restrict_factors(orig, rp, face, ofr, factor, factor)?;
            Ok(BoundaryLabel::MorphismEnd { side: *side, factor: f2 })
        }
    }
}

fn restrict_factors(
    orig: &SignedCellComplex,
    rp: &RawPiece,
    face: usize,
    ofr: FaceRef,
    plus: &FactorRef,
    minus: &FactorRef,
) -> Result<(FactorRef, FactorRef), Error> {
    let oface = orig.cells[ofr.cell].face(ofr.face);
    let my_verts = result_face_verts(rp, face);
    let xi: Vec<Vec<Rat>> = my_verts
        .iter()
        .map(|v| face_params(&oface.verts, v))
        .collect::<Result<_, _>>()?;
    let map = |f: &FactorRef| FactorRef {
        dim: f.dim,
        cell: f.cell,
        points: xi.iter().map(|x| f.apply(x)).collect(),
    };
    Ok((map(plus), map(minus)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::{rat, LocalSystem};

    fn cp(n: i64, d: i64) -> CirclePoint {
        CirclePoint::new(rat(n, d))
    }

    #[test]
    fn regular_value_examples() {
        let cx0 = SignedCellComplex::of_cells(
            0,
            vec![Cell::point(PLUS, rat(1, 3), rat(0, 1)), Cell::point(PLUS, rat(2, 3), rat(0, 1))],
        );
        assert!(is_regular_value(&cx0, Which::Plus, &cp(1, 2)));
        assert!(!is_regular_value(&cx0, Which::Plus, &cp(1, 3)));

        let const_cell = SignedCellComplex::of_cells(
            1,
            vec![Cell::segment(PLUS, (rat(1, 4), rat(1, 4)), (rat(0, 1), rat(1, 1)))],
        );
        assert!(!is_regular_value(&const_cell, Which::Plus, &cp(1, 4)));
        assert!(is_regular_value(&const_cell, Which::Plus, &cp(1, 2)));

        let cx1 = SignedCellComplex::of_cells(
            1,
            vec![Cell::segment(PLUS, (rat(1, 10), rat(4, 10)), (rat(0, 1), rat(1, 1)))],
        );
        assert!(is_regular_value(&cx1, Which::Plus, &cp(1, 2)));
        assert!(is_regular_value(&cx1, Which::Plus, &cp(1, 4)));
        assert!(!is_regular_value(&cx1, Which::Plus, &cp(1, 10)));
    }

    #[test]
    fn level_set_on_segments() {
        // Increasing e_plus: derivative-first gives +.
        let up = SignedCellComplex::of_cells(
            1,
            vec![Cell::segment(PLUS, (rat(1, 10), rat(4, 10)), (rat(1, 2), rat(3, 5)))],
        );
        let ls = level_set_plus(&up, &cp(1, 4)).unwrap();
        assert_eq!(ls.complex.cells.len(), 1);
        assert_eq!(ls.complex.cells[0].sign, PLUS);
        // e_minus inherited at the solution parameter s = 1/2.
        assert_eq!(ls.complex.cells[0].e_minus.vertex_lifts[0], rat(11, 20));

        let down = SignedCellComplex::of_cells(
            1,
            vec![Cell::segment(PLUS, (rat(4, 10), rat(1, 10)), (rat(1, 2), rat(3, 5)))],
        );
        let ls = level_set_plus(&down, &cp(1, 4)).unwrap();
        assert_eq!(ls.complex.cells[0].sign, MINUS);

        // level_set_minus flips the convention.
        let up_minus = SignedCellComplex::of_cells(
            1,
            vec![Cell::segment(PLUS, (rat(1, 2), rat(3, 5)), (rat(1, 10), rat(4, 10)))],
        );
        let ls = level_set_minus(&up_minus, &cp(1, 4)).unwrap();
        assert_eq!(ls.complex.cells[0].sign, MINUS);
        let down_minus = SignedCellComplex::of_cells(
            1,
            vec![Cell::segment(PLUS, (rat(1, 2), rat(3, 5)), (rat(4, 10), rat(1, 10)))],
        );
        let ls = level_set_minus(&down_minus, &cp(1, 4)).unwrap();
        assert_eq!(ls.complex.cells[0].sign, PLUS);
    }

    fn winding_circle(sign: Sign, w_plus: i64, w_minus: i64) -> SignedCellComplex {
        let cell = Cell::segment(
            sign,
            (rat(0, 1), rat(w_plus, 1)),
            (rat(0, 1), rat(w_minus, 1)),
        );
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

    #[test]
    fn winding_circle_level_count() {
        // Degree-1 winding forces a single signed point. Frozen from the
        // per-cell derivative-first oracle: a monotone increasing cell
        // crossed once gives sign = cell sign.
        for s in [PLUS, MINUS] {
            let cx = winding_circle(s, 1, 1);
            let ls = level_set_plus(&cx, &cp(3, 7)).unwrap();
            assert_eq!(ls.complex.cells.len(), 1);
            assert_eq!(ls.complex.cells[0].sign, s);
        }
        // e_minus winding -1 under the minus convention gives +s.
        for s in [PLUS, MINUS] {
            let cx = winding_circle(s, 1, -1);
            let ls = level_set_minus(&cx, &cp(3, 7)).unwrap();
            assert_eq!(ls.complex.cells.len(), 1);
            assert_eq!(ls.complex.cells[0].sign, s);
        }
        let _ = LocalSystem::TRIVIAL;
    }

    #[test]
    fn double_constraint_on_triangle() {
        // e_plus gradient (1,0), e_minus gradient (0,1): det = +1.
        let tri = Cell::simplex(
            PLUS,
            AffineEval::new(vec![rat(0, 1), rat(1, 1), rat(0, 1)]),
            AffineEval::new(vec![rat(0, 1), rat(0, 1), rat(1, 1)]),
        );
        let cx = SignedCellComplex::of_cells(2, vec![tri]);
        let dc = double_constraint(&cx, &cp(1, 4), &cp(1, 3)).unwrap();
        assert_eq!(dc.complex.cells.len(), 1);
        assert_eq!(dc.complex.cells[0].sign, PLUS);
        // Swapping the gradients flips the sign.
        let tri2 = Cell::simplex(
            PLUS,
            AffineEval::new(vec![rat(0, 1), rat(0, 1), rat(1, 1)]),
            AffineEval::new(vec![rat(0, 1), rat(1, 1), rat(0, 1)]),
        );
        let cx2 = SignedCellComplex::of_cells(2, vec![tri2]);
        let dc2 = double_constraint(&cx2, &cp(1, 4), &cp(1, 3)).unwrap();
        assert_eq!(dc2.complex.cells[0].sign, MINUS);
        // A miss is empty.
        let dc3 = double_constraint(&cx, &cp(9, 10), &cp(9, 10)).unwrap();
        assert!(dc3.is_empty());
    }

    #[test]
    fn double_constraint_on_tetrahedron() {
        // Independent affine evaluations on a 3-cell give one oriented segment.
        let tet = Cell::simplex(
            PLUS,
            AffineEval::new(vec![rat(0, 1), rat(1, 1), rat(0, 1), rat(0, 1)]),
            AffineEval::new(vec![rat(0, 1), rat(0, 1), rat(1, 1), rat(0, 1)]),
        );
        let cx = SignedCellComplex::of_cells(3, vec![tet]);
        let dc = double_constraint(&cx, &cp(1, 4), &cp(1, 4)).unwrap();
        assert_eq!(dc.complex.dim, 1);
        assert_eq!(dc.complex.cells.len(), 1);
        // Direction = cross((1,0,0),(0,1,0)) = +e_z; cell sign +1.
        let c = &dc.complex.cells[0];
        assert_eq!(c.sign, PLUS);
        assert_eq!(c.e_plus.vertex_lifts[0], rat(1, 4));
        assert_eq!(c.e_minus.vertex_lifts[0], rat(1, 4));
    }

    #[test]
    fn level_set_of_tetrahedron_is_two_complex() {
        let tet = Cell::simplex(
            PLUS,
            AffineEval::new(vec![rat(0, 1), rat(1, 1), rat(0, 1), rat(0, 1)]),
            AffineEval::new(vec![rat(0, 1), rat(0, 1), rat(1, 1), rat(2, 1)]),
        );
        let cx = SignedCellComplex::of_cells(3, vec![tet]);
        let ls = level_set_plus(&cx, &cp(1, 3)).unwrap();
        assert_eq!(ls.complex.dim, 2);
        assert!(!ls.complex.cells.is_empty());
        for c in &ls.complex.cells {
            assert_eq!(c.e_plus.vertex_lifts.iter().collect::<std::collections::BTreeSet<_>>().len(), 1);
        }
    }

    #[test]
    fn cylinder_level_set_is_cylinder() {
        // Cylinder over a segment with increasing e_minus; constraining
        // e_minus gives a 1-dimensional cylinder, never isolated points.
        let base = Cell::segment(PLUS, (rat(1, 5), rat(1, 5)), (rat(1, 10), rat(4, 10)));
        let cyl = Cell::product_cylinder(base);
        let cx = SignedCellComplex::of_cells(2, vec![cyl]);
        let ls = level_set_minus(&cx, &cp(1, 4)).unwrap();
        assert_eq!(ls.complex.dim, 1);
        assert_eq!(ls.complex.cells.len(), 1);
        assert!(ls.complex.cells[0].is_cylinder());
    }
}
