//! Fiber products of signed cell complexes over a middle circle.
//!
//! `fiber_product(X, Y, ls)` computes `{(x, y) : e_minus(x) = e_plus(y)
//! mod 1}` with the orientation rule: take the derivative-first level set
//! of the difference map on the product orientation, multiply by the
//! parity factor (positive exactly when `dim X` is odd), and fold the
//! middle-circle monodromy once per integer lift offset between the two
//! factors.

use super::level::Embed;
use super::solve::{k_range, solve_one, Domain, Piece};
use crate::cell::{AffineEval, Cell, CellKind, Coords, FaceGluing, FaceRef, SignedCellComplex};
use crate::circle::{LocalSystem, Rat, Sign, MINUS, PLUS};
use crate::error::Error;
use num::{BigInt, Zero};

/// Where a face of a fiber-product cell lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiberFaceOrigin {
    XFace(usize),
    YFace(usize),
}

#[derive(Debug, Clone)]
pub struct FiberMeta {
    pub x_cell: usize,
    pub x_embed: Embed,
    pub y_cell: usize,
    pub y_embed: Embed,
    /// Lift offset on the middle circle: `e_minus(x) = e_plus(y) + k`.
    pub k: i64,
    /// Per result face: origin in the factors, `None` for internal cuts.
    pub face_origins: Vec<Option<FiberFaceOrigin>>,
}

#[derive(Debug, Clone)]
pub struct FiberComplex {
    pub complex: SignedCellComplex,
    pub meta: Vec<FiberMeta>,
}

/// Check Fiber Product Transversality of `X x_S Y` without building the
/// complex: the affine difference map must have 0 as a regular value for
/// every cell pair and every realized lift offset. In particular two
/// 0-cells with equal evaluation are non-transverse.
pub fn fiber_transversality(xcx: &SignedCellComplex, ycx: &SignedCellComplex) -> Result<(), String> {
    for (xi, xc) in xcx.cells.iter().enumerate() {
        for (yi, yc) in ycx.cells.iter().enumerate() {
            cell_pair_transversality(xc, yc).map_err(|m| format!("cells ({xi}, {yi}): {m}"))?;
        }
    }
    Ok(())
}

fn cell_pair_transversality(xc: &Cell, yc: &Cell) -> Result<(), String> {
    let (ex, ey) = (effective_minus(xc), effective_plus(yc));
    let mut grad = ex.gradient();
    grad.extend(ey.gradient().iter().map(|g| -g));
    if grad.iter().all(|g| g.is_zero()) {
        // Constant difference: any value match is a tangency.
        let diff = &ex.vertex_lifts[0] - &ey.vertex_lifts[0];
        if diff.is_integer() {
            return Err(format!(
                "constant difference map hits 0 (values {} vs {})",
                ex.vertex_lifts[0], ey.vertex_lifts[0]
            ));
        }
    }
    Ok(())
}

/// The evaluation used on the middle circle, looked up through cylinders.
fn effective_minus(c: &Cell) -> &AffineEval {
    match &c.kind {
        CellKind::Simplex => &c.e_minus,
        CellKind::Cylinder { base } => effective_minus(base),
    }
}

fn effective_plus(c: &Cell) -> &AffineEval {
    match &c.kind {
        CellKind::Simplex => &c.e_plus,
        CellKind::Cylinder { base } => effective_plus(base),
    }
}

/// Fiber product of two complexes over the middle circle whose local
/// system is `ls`.
pub fn fiber_product(
    xcx: &SignedCellComplex,
    ycx: &SignedCellComplex,
    ls: &LocalSystem,
) -> Result<FiberComplex, Error> {
    if xcx.dim + ycx.dim > 4 {
        return Err(Error::Unsupported(format!(
            "fiber product of dimensions {} and {}",
            xcx.dim, ycx.dim
        )));
    }
    let rdim = (xcx.dim + ycx.dim).saturating_sub(1);
    let mut pieces: Vec<RawFiberPiece> = Vec::new();
    let mut gluings: Vec<FaceGluing> = Vec::new();
    for (xi, xc) in xcx.cells.iter().enumerate() {
        for (yi, yc) in ycx.cells.iter().enumerate() {
            cell_fiber_pieces(xi, xc, yi, yc, ls, &mut pieces, &mut gluings)?;
        }
    }
    // Drop duplicate isolated solutions that sit exactly on glued faces:
    // keep the copy seen from the gluing's left side.
    if rdim == 0 {
        pieces.retain(|p| match dedupe_side(xcx, ycx, p) {
            Keep::Yes => true,
            Keep::No => false,
        });
        for p in &pieces {
            boundary_hit_check(xcx, ycx, p).map_err(Error::NotTransverse)?;
        }
    }
    // Cross-cell matching for faces of 1- and 2-dimensional results.
    if rdim >= 1 {
        cross_match(xcx, ycx, &pieces, &mut gluings)?;
    }
    let cells: Vec<Cell> = pieces.iter().map(|p| p.cell.clone()).collect();
    let meta: Vec<FiberMeta> = pieces.into_iter().map(|p| p.meta).collect();
    let complex = SignedCellComplex { dim: rdim, cells, gluings, boundary_labels: Vec::new() };
    Ok(FiberComplex { complex, meta })
}

struct RawFiberPiece {
    cell: Cell,
    meta: FiberMeta,
    /// Active domain facets for isolated solutions (side, face).
    point_faces: Vec<FiberFaceOrigin>,
}

enum Keep {
    Yes,
    No,
}

fn dedupe_side(xcx: &SignedCellComplex, ycx: &SignedCellComplex, p: &RawFiberPiece) -> Keep {
    for fo in &p.point_faces {
        let (cx, fr) = match fo {
            FiberFaceOrigin::XFace(f) => (xcx, FaceRef { cell: p.meta.x_cell, face: *f }),
            FiberFaceOrigin::YFace(f) => (ycx, FaceRef { cell: p.meta.y_cell, face: *f }),
        };
        if let Some((_, is_left)) = cx.glued_face(fr) {
            if !is_left {
                return Keep::No;
            }
        }
    }
    Keep::Yes
}

fn boundary_hit_check(xcx: &SignedCellComplex, ycx: &SignedCellComplex, p: &RawFiberPiece) -> Result<(), String> {
    for fo in &p.point_faces {
        let (cx, fr) = match fo {
            FiberFaceOrigin::XFace(f) => (xcx, FaceRef { cell: p.meta.x_cell, face: *f }),
            FiberFaceOrigin::YFace(f) => (ycx, FaceRef { cell: p.meta.y_cell, face: *f }),
        };
        if cx.glued_face(fr).is_none() {
            return Err(format!("isolated fiber solution on an unglued boundary face {fr:?}"));
        }
    }
    Ok(())
}

fn cell_fiber_pieces(
    xi: usize,
    xc: &Cell,
    yi: usize,
    yc: &Cell,
    ls: &LocalSystem,
    pieces: &mut Vec<RawFiberPiece>,
    gluings: &mut Vec<FaceGluing>,
) -> Result<(), Error> {
    match (&xc.kind, &yc.kind) {
        (CellKind::Cylinder { base }, _) => {
            // fp(R x B, Y) = R x fp(B, Y) with unchanged sign.
            let mut inner: Vec<RawFiberPiece> = Vec::new();
            let mut inner_glue: Vec<FaceGluing> = Vec::new();
            cell_fiber_pieces(xi, base, yi, yc, ls, &mut inner, &mut inner_glue)?;
            if !inner_glue.is_empty() {
                return Err(Error::Unsupported("triangulated fiber product under a cylinder".into()));
            }
            for ip in inner {
                pieces.push(wrap_cylinder(xc, base, ip, true, PLUS));
            }
            Ok(())
        }
        (_, CellKind::Cylinder { base }) => {
            // fp(X, R x B) = R x fp(X, B) with sign (-1)^(dim X - 1).
            let kappa = if xc.dim() % 2 == 1 { PLUS } else { MINUS };
            let mut inner: Vec<RawFiberPiece> = Vec::new();
            let mut inner_glue: Vec<FaceGluing> = Vec::new();
            cell_fiber_pieces(xi, xc, yi, base, ls, &mut inner, &mut inner_glue)?;
            if !inner_glue.is_empty() {
                return Err(Error::Unsupported("triangulated fiber product under a cylinder".into()));
            }
            for ip in inner {
                pieces.push(wrap_cylinder(yc, base, ip, false, kappa));
            }
            Ok(())
        }
        (CellKind::Simplex, CellKind::Simplex) => {
            simplex_fiber_pieces(xi, xc, yi, yc, ls, pieces, gluings)
        }
    }
}

/// Wrap an inner fiber piece into a cylinder over it. `left` says whether
/// the line came from the X factor.
fn wrap_cylinder(cyl: &Cell, base: &Cell, ip: RawFiberPiece, left: bool, kappa: Sign) -> RawFiberPiece {
    let new_sign = kappa * cyl.sign * base.sign * ip.cell.sign;
    let cell = Cell::cylinder(new_sign, Cell { sign: PLUS, ..ip.cell.clone() });
    let nb = base.face_count();
    let mut face_origins = ip.meta.face_origins.clone();
    let (end_minus, end_plus) = if left {
        (FiberFaceOrigin::XFace(nb), FiberFaceOrigin::XFace(nb + 1))
    } else {
        (FiberFaceOrigin::YFace(nb), FiberFaceOrigin::YFace(nb + 1))
    };
    face_origins.push(Some(end_minus));
    face_origins.push(Some(end_plus));
    let meta = FiberMeta {
        x_cell: ip.meta.x_cell,
        x_embed: if left { Embed::Cyl(Box::new(ip.meta.x_embed.clone())) } else { Embed::DropR(Box::new(ip.meta.x_embed.clone())) },
        y_cell: ip.meta.y_cell,
        y_embed: if left { Embed::DropR(Box::new(ip.meta.y_embed.clone())) } else { Embed::Cyl(Box::new(ip.meta.y_embed.clone())) },
        k: ip.meta.k,
        face_origins,
    };
    RawFiberPiece { cell, meta, point_faces: ip.point_faces }
}

fn simplex_fiber_pieces(
    xi: usize,
    xc: &Cell,
    yi: usize,
    yc: &Cell,
    ls: &LocalSystem,
    pieces: &mut Vec<RawFiberPiece>,
    gluings: &mut Vec<FaceGluing>,
) -> Result<(), Error> {
    let (m, n) = (xc.dim(), yc.dim());
    let domain = Domain::product(&[m, n]);
    let s = xc.sign * yc.sign;
    let parity = if m % 2 == 1 { PLUS } else { MINUS };
    let gx = xc.e_minus.gradient();
    let gy = yc.e_plus.gradient();
    let mut grad = gx.clone();
    grad.extend(gy.iter().map(|g| -g));
    let klo = xc.e_minus.min() - yc.e_plus.max();
    let khi = xc.e_minus.max() - yc.e_plus.min();
    for k in k_range(&klo, &khi) {
        let c0 = &xc.e_minus.vertex_lifts[0] - &yc.e_plus.vertex_lifts[0] - Rat::from(BigInt::from(k));
        if grad.iter().all(|g| g.is_zero()) {
            if c0.is_zero() {
                return Err(Error::NotTransverse(format!(
                    "constant difference map on cell pair ({xi},{yi}), offset {k}"
                )));
            }
            continue;
        }
        let sol = solve_one(&domain, &grad, &c0).map_err(|()| {
            Error::NotTransverse(format!("degenerate difference map on cell pair ({xi},{yi})"))
        })?;
        let monodromy = ls.monodromy.pow_i64(k);
        let sigma = parity * monodromy * s;
        for piece in sol {
            push_fiber_piece(xi, xc, yi, yc, m, k, sigma, &domain, piece, pieces, gluings)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn push_fiber_piece(
    xi: usize,
    xc: &Cell,
    yi: usize,
    yc: &Cell,
    m: usize,
    k: i64,
    sigma: Sign,
    domain: &Domain,
    piece: Piece,
    pieces: &mut Vec<RawFiberPiece>,
    gluings: &mut Vec<FaceGluing>,
) -> Result<(), Error> {
    let split = |coords: &Coords| -> (Coords, Coords) {
        (coords[..m].to_vec(), coords[m..].to_vec())
    };
    let origin_of = |facet: usize| -> FiberFaceOrigin {
        let f = &domain.facets[facet];
        if f.side == 0 {
            FiberFaceOrigin::XFace(f.face)
        } else {
            FiberFaceOrigin::YFace(f.face)
        }
    };
    match piece {
        Piece::Point { coords, active } => {
            if m + yc.dim() != 1 {
                return Err(Error::NotTransverse(format!(
                    "fiber solutions touch a corner on cell pair ({xi},{yi})"
                )));
            }
            let (xp, yp) = split(&coords);
            let e_plus = xc.e_plus.at(&xp);
            let e_minus = yc.e_minus.at(&yp);
            // Point sign: derivative-first on a 1-dim product is
            // sign * sgn(dh/dt) on whichever factor carries the parameter.
            let g = if m == 1 { xc.e_minus.gradient()[0].clone() } else { -yc.e_plus.gradient()[0].clone() };
            let sign = sigma * Sign::of(&g);
            pieces.push(RawFiberPiece {
                cell: Cell::point(sign, e_plus, e_minus),
                meta: FiberMeta {
                    x_cell: xi,
                    x_embed: Embed::Simplex(vec![xp]),
                    y_cell: yi,
                    y_embed: Embed::Simplex(vec![yp]),
                    k,
                    face_origins: vec![],
                },
                point_faces: active.iter().map(|&f| origin_of(f)).collect(),
            });
            Ok(())
        }
        Piece::Segment { a, b, a_active, b_active } => {
            if a_active.len() != 1 || b_active.len() != 1 {
                return Err(Error::NotTransverse(format!(
                    "fiber segment touches a corner on cell pair ({xi},{yi})"
                )));
            }
            let (xa, ya) = split(&a);
            let (xb, yb) = split(&b);
            let cell = Cell::segment(
                sigma,
                (xc.e_plus.at(&xa), xc.e_plus.at(&xb)),
                (yc.e_minus.at(&ya), yc.e_minus.at(&yb)),
            );
            pieces.push(RawFiberPiece {
                cell,
                meta: FiberMeta {
                    x_cell: xi,
                    x_embed: Embed::Simplex(vec![xa, xb]),
                    y_cell: yi,
                    y_embed: Embed::Simplex(vec![ya, yb]),
                    k,
                    face_origins: vec![Some(origin_of(b_active[0])), Some(origin_of(a_active[0]))],
                },
                point_faces: vec![],
            });
            Ok(())
        }
        Piece::Polygon { verts } => {
            let mcount = verts.len();
            let common = |a: &Vec<usize>, b: &Vec<usize>| -> Option<usize> {
                a.iter().find(|f| b.contains(f)).copied()
            };
            for j in 1..mcount - 1 {
                let (v0, act0) = &verts[0];
                let (vj, actj) = &verts[j];
                let (vj1, actj1) = &verts[j + 1];
                let coords3 = [v0, vj, vj1];
                let (xs, ys): (Vec<Coords>, Vec<Coords>) = coords3.iter().map(|v| split(v)).unzip();
                let cell = Cell::simplex(
                    sigma,
                    AffineEval::new(xs.iter().map(|x| xc.e_plus.at(x)).collect()),
                    AffineEval::new(ys.iter().map(|y| yc.e_minus.at(y)).collect()),
                );
                let f0 = common(actj, actj1).map(origin_of);
                let f1 = if j + 1 == mcount - 1 { common(act0, actj1).map(origin_of) } else { None };
                let f2 = if j == 1 { common(act0, actj).map(origin_of) } else { None };
                pieces.push(RawFiberPiece {
                    cell,
                    meta: FiberMeta {
                        x_cell: xi,
                        x_embed: Embed::Simplex(xs),
                        y_cell: yi,
                        y_embed: Embed::Simplex(ys),
                        k,
                        face_origins: vec![f0, f1, f2],
                    },
                    point_faces: vec![],
                });
                if j > 1 {
                    gluings.push(FaceGluing {
                        left: FaceRef { cell: pieces.len() - 1, face: 2 },
                        right: FaceRef { cell: pieces.len() - 2, face: 1 },
                        perm: vec![0, 1],
                        offset_plus: 0,
                        offset_minus: 0,
                    });
                }
            }
            Ok(())
        }
    }
}

/// Glue result faces across factor-complex gluings by exact geometric
/// matching.
fn cross_match(
    xcx: &SignedCellComplex,
    ycx: &SignedCellComplex,
    pieces: &[RawFiberPiece],
    gluings: &mut Vec<FaceGluing>,
) -> Result<(), Error> {
    for (i, p) in pieces.iter().enumerate() {
        for (fj, fo) in p.meta.face_origins.iter().enumerate() {
            let Some(origin) = fo else { continue };
            let (factor_cx, factor_cell, factor_face, is_x) = match origin {
                FiberFaceOrigin::XFace(f) => (xcx, p.meta.x_cell, *f, true),
                FiberFaceOrigin::YFace(f) => (ycx, p.meta.y_cell, *f, false),
            };
            let fr = FaceRef { cell: factor_cell, face: factor_face };
            let Some((gi, is_left)) = factor_cx.glued_face(fr) else { continue };
            if !is_left {
                continue;
            }
            let g = &factor_cx.gluings[gi];
            let my = fiber_face_verts(p, fj)?;
            let mapped: Vec<(Coords, Coords)> = my
                .iter()
                .map(|(xv, yv)| {
                    if is_x {
                        super::level::map_through_gluing(factor_cx, g, xv).map(|m| (m, yv.clone()))
                    } else {
                        super::level::map_through_gluing(factor_cx, g, yv).map(|m| (xv.clone(), m))
                    }
                })
                .collect::<Result<_, _>>()?;
            let mut found = None;
            'search: for (i2, p2) in pieces.iter().enumerate() {
                let cell_match = if is_x {
                    p2.meta.x_cell == g.right.cell && p2.meta.y_cell == p.meta.y_cell
                } else {
                    p2.meta.y_cell == g.right.cell && p2.meta.x_cell == p.meta.x_cell
                };
                if !cell_match {
                    continue;
                }
                for (fj2, fo2) in p2.meta.face_origins.iter().enumerate() {
                    let want = if is_x {
                        Some(FiberFaceOrigin::XFace(g.right.face))
                    } else {
                        Some(FiberFaceOrigin::YFace(g.right.face))
                    };
                    if *fo2 != want {
                        continue;
                    }
                    let theirs = fiber_face_verts(p2, fj2)?;
                    if let Some(perm) = match_pairs(&mapped, &theirs) {
                        found = Some((i2, fj2, perm));
                        break 'search;
                    }
                }
            }
            let Some((i2, fj2, perm)) = found else {
                return Err(Error::NotTransverse(format!(
                    "fiber piece {i} face {fj} has no partner across factor gluing"
                )));
            };
            if i2 == i && fj2 == fj {
                continue;
            }
            gluings.push(FaceGluing {
                left: FaceRef { cell: i, face: fj },
                right: FaceRef { cell: i2, face: fj2 },
                perm,
                offset_plus: if is_x { g.offset_plus } else { 0 },
                offset_minus: if is_x { 0 } else { g.offset_minus },
            });
        }
    }
    Ok(())
}

/// Vertex coordinates of a fiber piece face, as (x-part, y-part) pairs in
/// the factor cells' coordinates.
fn fiber_face_verts(p: &RawFiberPiece, face: usize) -> Result<Vec<(Coords, Coords)>, Error> {
    match (&p.cell.kind, &p.meta.x_embed, &p.meta.y_embed) {
        (CellKind::Simplex, Embed::Simplex(xs), Embed::Simplex(ys)) => {
            let d = p.cell.dim();
            if d == 0 {
                return Ok(vec![(xs[0].clone(), ys[0].clone())]);
            }
            Ok((0..=d)
                .filter(|&j| j != face)
                .map(|j| (xs[j].clone(), ys[j].clone()))
                .collect())
        }
        _ => Err(Error::Unsupported("face matching on cylinder fiber pieces".into())),
    }
}

fn match_pairs(mine: &[(Coords, Coords)], theirs: &[(Coords, Coords)]) -> Option<Vec<usize>> {
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

/// Regularity of a pair of point constraints for the product map on every
/// cell of a complex; used by genericity checks on fiber factors.
pub fn pair_regular_on_product(cx: &SignedCellComplex, p_plus: &crate::circle::CirclePoint, p_minus: &crate::circle::CirclePoint) -> bool {
    super::level::is_regular_pair(cx, p_plus, p_minus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::rat;

    fn identity_circle() -> SignedCellComplex {
        let cell = Cell::segment(PLUS, (rat(0, 1), rat(1, 1)), (rat(0, 1), rat(1, 1)));
        SignedCellComplex {
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
        }
    }

    #[test]
    fn winding_segment_against_point() {
        // 1-cell X, sign +1, e_minus winding once against a 0-cell with
        // e_plus = 1/2: one 0-cell of sign +1. Frozen from the
        // ordered-basis computation with trivial parity factor.
        let x = SignedCellComplex::of_cells(
            1,
            vec![Cell::segment(PLUS, (rat(1, 5), rat(1, 5)), (rat(0, 1), rat(1, 1)))],
        );
        let y = SignedCellComplex::of_cells(0, vec![Cell::point(PLUS, rat(1, 2), rat(3, 4))]);
        let fp = fiber_product(&x, &y, &LocalSystem::TRIVIAL).unwrap();
        assert_eq!(fp.complex.cells.len(), 1);
        let c = &fp.complex.cells[0];
        assert_eq!(c.sign, PLUS);
        assert_eq!(c.e_plus.vertex_lifts[0], rat(1, 5));
        assert_eq!(c.e_minus.vertex_lifts[0], rat(3, 4));
    }

    #[test]
    fn zero_zero_disjoint_is_empty_and_collision_errors() {
        let x = SignedCellComplex::of_cells(0, vec![Cell::point(PLUS, rat(1, 5), rat(1, 3))]);
        let y = SignedCellComplex::of_cells(0, vec![Cell::point(PLUS, rat(2, 3), rat(1, 7))]);
        let fp = fiber_product(&x, &y, &LocalSystem::TRIVIAL).unwrap();
        assert!(fp.complex.is_empty());
        let y_bad = SignedCellComplex::of_cells(0, vec![Cell::point(PLUS, rat(1, 3), rat(1, 7))]);
        assert!(fiber_product(&x, &y_bad, &LocalSystem::TRIVIAL).is_err());
        assert!(fiber_transversality(&x, &y_bad).is_err());
        assert!(fiber_transversality(&x, &y).is_ok());
    }

    #[test]
    fn identity_law_on_points() {
        // X x_S S = X for a 0-dimensional X.
        let s = identity_circle();
        for sign in [PLUS, MINUS] {
            let x = SignedCellComplex::of_cells(0, vec![Cell::point(sign, rat(2, 7), rat(3, 7))]);
            let fp = fiber_product(&x, &s, &LocalSystem::TRIVIAL).unwrap();
            assert_eq!(fp.complex.cells.len(), 1);
            assert_eq!(fp.complex.cells[0].sign, sign);
            assert_eq!(fp.complex.cells[0].e_plus.vertex_lifts[0], rat(2, 7));
            assert_eq!(fp.complex.cells[0].e_minus.vertex_lifts[0], rat(3, 7));
            // S x_S Y = Y likewise.
            let y = SignedCellComplex::of_cells(0, vec![Cell::point(sign, rat(2, 7), rat(3, 7))]);
            let fp = fiber_product(&s, &y, &LocalSystem::TRIVIAL).unwrap();
            assert_eq!(fp.complex.cells.len(), 1);
            assert_eq!(fp.complex.cells[0].sign, sign);
        }
    }
}
