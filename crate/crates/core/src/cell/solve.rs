//! Exact affine solving on products of standard simplices.
//!
//! Domains have dimension at most 3. Solutions of one or two affine
//! equations are clipped against the domain facets and returned with the
//! set of facets active at each solution vertex, which downstream code maps
//! back to cell faces.

use crate::circle::Rat;
use num::{BigInt, One, Signed, Zero};

use super::Coords;

/// One facet inequality `grad . t + offset >= 0`, tagged with the factor
/// simplex and face it came from.
#[derive(Debug, Clone)]
pub struct FacetDef {
    pub grad: Coords,
    pub offset: Rat,
    pub side: usize,
    pub face: usize,
}

/// A product of at most two standard simplices.
#[derive(Debug, Clone)]
pub struct Domain {
    pub dim: usize,
    pub facets: Vec<FacetDef>,
    pub verts: Vec<Coords>,
}

impl Domain {
    pub fn simplex(d: usize) -> Domain {
        Domain::product(&[d])
    }

    /// Product of simplices of the given dimensions (zeros contribute
    /// nothing). Coordinates are concatenated factor by factor.
    pub fn product(dims: &[usize]) -> Domain {
        let dim: usize = dims.iter().sum();
        let mut facets = Vec::new();
        let mut offset = 0usize;
        for (side, &d) in dims.iter().enumerate() {
            if d == 0 {
                continue;
            }
            // face 0: 1 - sum t_i >= 0
            let mut g0 = vec![Rat::zero(); dim];
            for i in 0..d {
                g0[offset + i] = -Rat::one();
            }
            facets.push(FacetDef { grad: g0, offset: Rat::one(), side, face: 0 });
            // face i: t_{i-1} >= 0
            for i in 1..=d {
                let mut g = vec![Rat::zero(); dim];
                g[offset + i - 1] = Rat::one();
                facets.push(FacetDef { grad: g, offset: Rat::zero(), side, face: i });
            }
            offset += d;
        }
        // Vertices: products of factor simplex vertices.
        let mut verts: Vec<Coords> = vec![Vec::new()];
        for &d in dims {
            let mut next = Vec::new();
            for v in &verts {
                for j in 0..=d {
                    let mut w = v.clone();
                    w.extend(super::simplex_vertex(d, j));
                    next.push(w);
                }
            }
            verts = next;
        }
        Domain { dim, facets, verts }
    }

    pub fn contains(&self, p: &[Rat]) -> bool {
        self.facets.iter().all(|f| dot(&f.grad, p) + &f.offset >= Rat::zero())
    }

    pub fn active_facets(&self, p: &[Rat]) -> Vec<usize> {
        self.facets
            .iter()
            .enumerate()
            .filter(|(_, f)| (dot(&f.grad, p) + &f.offset).is_zero())
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn dot(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Solution pieces of affine systems on a domain.
#[derive(Debug, Clone)]
pub enum Piece {
    Point { coords: Coords, active: Vec<usize> },
    Segment { a: Coords, b: Coords, a_active: Vec<usize>, b_active: Vec<usize> },
    /// Cyclically ordered polygon vertices with their active facets.
    Polygon { verts: Vec<(Coords, Vec<usize>)> },
}

/// Outcome of solving: either pieces, or the equation is degenerate on the
/// domain (identically zero), which callers map to transversality errors.
pub type SolveResult = Result<Vec<Piece>, ()>;

/// Solve `grad . t + offset = 0` on the domain.
pub fn solve_one(domain: &Domain, grad: &[Rat], offset: &Rat) -> SolveResult {
    if grad.iter().all(|g| g.is_zero()) {
        return if offset.is_zero() { Err(()) } else { Ok(Vec::new()) };
    }
    match domain.dim {
        1 => {
            let t = -offset / &grad[0];
            let p = vec![t];
            if domain.contains(&p) {
                let active = domain.active_facets(&p);
                Ok(vec![Piece::Point { coords: p, active }])
            } else {
                Ok(Vec::new())
            }
        }
        2 => {
            // Parameterize the line through a base point with direction
            // rot90(grad).
            let dir = vec![-grad[1].clone(), grad[0].clone()];
            let base = if !grad[0].is_zero() {
                vec![-offset / &grad[0], Rat::zero()]
            } else {
                vec![Rat::zero(), -offset / &grad[1]]
            };
            Ok(clip_line(domain, &base, &dir))
        }
        3 => solve_plane(domain, grad, offset),
        _ => panic!("unsupported domain dimension {}", domain.dim),
    }
}

/// Clip the parameterized line `base + s dir` against the domain facets.
/// Returns a segment (a at the low-s end), a touching point, or nothing.
fn clip_line(domain: &Domain, base: &[Rat], dir: &[Rat]) -> Vec<Piece> {
    let mut lo: Option<Rat> = None;
    let mut hi: Option<Rat> = None;
    for f in &domain.facets {
        let den = dot(&f.grad, dir);
        let num = dot(&f.grad, base) + &f.offset;
        if den.is_zero() {
            if num.is_negative() {
                return Vec::new();
            }
        } else {
            let s = -num / &den;
            if den.is_positive() {
                if lo.as_ref().map_or(true, |l| s > *l) {
                    lo = Some(s);
                }
            } else if hi.as_ref().map_or(true, |h| s < *h) {
                hi = Some(s);
            }
        }
    }
    let (lo, hi) = match (lo, hi) {
        (Some(l), Some(h)) => (l, h),
        // The line is unbounded in the domain, which cannot happen for
        // compact domains.
        _ => return Vec::new(),
    };
    if lo > hi {
        return Vec::new();
    }
    let at = |s: &Rat| -> Coords { base.iter().zip(dir.iter()).map(|(b, d)| b + s * d).collect() };
    let a = at(&lo);
    if lo == hi {
        let active = domain.active_facets(&a);
        return vec![Piece::Point { coords: a, active }];
    }
    let b = at(&hi);
    let a_active = domain.active_facets(&a);
    let b_active = domain.active_facets(&b);
    vec![Piece::Segment { a, b, a_active, b_active }]
}

/// Plane section of a 3-dimensional domain, returned as a convex polygon
/// whose vertices are sorted positively with respect to a basis `(b1, b2)`
/// of the plane chosen so that `det[grad, b1, b2] > 0`.
fn solve_plane(domain: &Domain, grad: &[Rat], offset: &Rat) -> SolveResult {
    let n = domain.facets.len();
    let mut verts: Vec<(Coords, Vec<usize>)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let fi = &domain.facets[i];
            let fj = &domain.facets[j];
            if let Some(p) = solve3(
                grad,
                offset,
                &fi.grad,
                &fi.offset,
                &fj.grad,
                &fj.offset,
            ) {
                if domain.contains(&p) && !verts.iter().any(|(q, _)| *q == p) {
                    let active = domain.active_facets(&p);
                    verts.push((p, active));
                }
            }
        }
    }
    if verts.is_empty() {
        return Ok(Vec::new());
    }
    if verts.len() == 1 {
        let (coords, active) = verts.pop().unwrap();
        return Ok(vec![Piece::Point { coords, active }]);
    }
    if verts.len() == 2 {
        let (b, b_active) = verts.pop().unwrap();
        let (a, a_active) = verts.pop().unwrap();
        return Ok(vec![Piece::Segment { a, b, a_active, b_active }]);
    }
    // Choose (b1, b2) as two coordinate axes so that det[grad, b1, b2] > 0;
    // plane coordinates of a vector are then just two of its components.
    let i0 = (0..3).max_by_key(|&i| grad[i].abs()).unwrap();
    let (mut i1, mut i2) = match i0 {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let det = det3_axes(grad, i1, i2);
    if det.is_negative() {
        std::mem::swap(&mut i1, &mut i2);
    }
    let m = verts.len();
    let mut cx = Rat::zero();
    let mut cy = Rat::zero();
    for (v, _) in &verts {
        cx += &v[i1];
        cy += &v[i2];
    }
    let mr = Rat::from(BigInt::from(m as i64));
    cx /= &mr;
    cy /= &mr;
    verts.sort_by(|(va, _), (vb, _)| {
        let ua = (&va[i1] - &cx, &va[i2] - &cy);
        let ub = (&vb[i1] - &cx, &vb[i2] - &cy);
        angle_cmp(&ua, &ub)
    });
    Ok(vec![Piece::Polygon { verts }])
}

/// det of the 3x3 matrix with columns (g, e_i1, e_i2).
fn det3_axes(g: &[Rat], i1: usize, i2: usize) -> Rat {
    let mut cols = [vec![Rat::zero(); 3], vec![Rat::zero(); 3], vec![Rat::zero(); 3]];
    cols[0] = g.to_vec();
    cols[1][i1] = Rat::one();
    cols[2][i2] = Rat::one();
    det3(&cols[0], &cols[1], &cols[2])
}

pub fn det3(a: &[Rat], b: &[Rat], c: &[Rat]) -> Rat {
    &a[0] * (&b[1] * &c[2] - &b[2] * &c[1]) - &a[1] * (&b[0] * &c[2] - &b[2] * &c[0])
        + &a[2] * (&b[0] * &c[1] - &b[1] * &c[0])
}

pub fn det2(a: &[Rat], b: &[Rat]) -> Rat {
    &a[0] * &b[1] - &a[1] * &b[0]
}

pub fn cross3(a: &[Rat], b: &[Rat]) -> Coords {
    vec![
        &a[1] * &b[2] - &a[2] * &b[1],
        &a[2] * &b[0] - &a[0] * &b[2],
        &a[0] * &b[1] - &a[1] * &b[0],
    ]
}

/// Exact counterclockwise angular comparison of two nonzero plane vectors.
fn angle_cmp(a: &(Rat, Rat), b: &(Rat, Rat)) -> std::cmp::Ordering {
    fn half(v: &(Rat, Rat)) -> u8 {
        // 0: angle in [0, pi), 1: in [pi, 2pi)
        if v.1.is_positive() || (v.1.is_zero() && v.0.is_positive()) {
            0
        } else {
            1
        }
    }
    let (ha, hb) = (half(a), half(b));
    if ha != hb {
        return ha.cmp(&hb);
    }
    // Same half-plane: compare by cross product.
    let cross = &a.0 * &b.1 - &a.1 * &b.0;
    if cross.is_positive() {
        std::cmp::Ordering::Less
    } else if cross.is_negative() {
        std::cmp::Ordering::Greater
    } else {
        std::cmp::Ordering::Equal
    }
}

/// Unique solution of the 3x3 system { g0.t = -c0, g1.t = -c1, g2.t = -c2 },
/// if the system is nonsingular.
fn solve3(g0: &[Rat], c0: &Rat, g1: &[Rat], c1: &Rat, g2: &[Rat], c2: &Rat) -> Option<Coords> {
    let det = det3_rows(g0, g1, g2);
    if det.is_zero() {
        return None;
    }
    let rhs = [-c0.clone(), -c1.clone(), -c2.clone()];
    let mut out = Vec::with_capacity(3);
    for col in 0..3 {
        let mut m = [g0.to_vec(), g1.to_vec(), g2.to_vec()];
        for (r, val) in rhs.iter().enumerate() {
            m[r][col] = val.clone();
        }
        out.push(det3_rows(&m[0], &m[1], &m[2]) / &det);
    }
    Some(out)
}

fn det3_rows(r0: &[Rat], r1: &[Rat], r2: &[Rat]) -> Rat {
    &r0[0] * (&r1[1] * &r2[2] - &r1[2] * &r2[1]) - &r0[1] * (&r1[0] * &r2[2] - &r1[2] * &r2[0])
        + &r0[2] * (&r1[0] * &r2[1] - &r1[1] * &r2[0])
}

/// Solve the pair { g1.t + c1 = 0, g2.t + c2 = 0 } on the domain.
pub fn solve_two(domain: &Domain, g1: &[Rat], c1: &Rat, g2: &[Rat], c2: &Rat) -> SolveResult {
    let rank = pair_rank(g1, g2);
    if rank < 2 {
        // Dependent system: either inconsistent (empty) or effectively one
        // equation; any solution set is degenerate for a two-constraint cut.
        if g1.iter().all(|g| g.is_zero()) && g2.iter().all(|g| g.is_zero()) {
            return if c1.is_zero() && c2.is_zero() { Err(()) } else { Ok(Vec::new()) };
        }
        // Express dependency: g2 = lambda g1 (or one of them is zero).
        let (ga, ca, gb, cb) = if g1.iter().any(|g| !g.is_zero()) {
            (g1, c1, g2, c2)
        } else {
            (g2, c2, g1, c1)
        };
        let i = ga.iter().position(|g| !g.is_zero()).unwrap();
        let lambda = &gb[i] / &ga[i];
        let consistent = cb - &lambda * ca;
        if !consistent.is_zero() {
            return Ok(Vec::new());
        }
        // One effective equation; if it has solutions on the domain the
        // pair is degenerate.
        let vals: Vec<Rat> = domain.verts.iter().map(|v| dot(ga, v) + ca).collect();
        let has_nonneg = vals.iter().any(|v| !v.is_negative());
        let has_nonpos = vals.iter().any(|v| !v.is_positive());
        return if has_nonneg && has_nonpos { Err(()) } else { Ok(Vec::new()) };
    }
    match domain.dim {
        2 => {
            let det = det2(g1, g2);
            // rank 2 in dim 2: unique solution of the transposed system.
            let t1 = (-c1 * &g2[1] + c2 * &g1[1]) / &det;
            let t2 = (-g1[0].clone() * c2 + g2[0].clone() * c1) / &det;
            let p = vec![t1, t2];
            if domain.contains(&p) {
                let active = domain.active_facets(&p);
                Ok(vec![Piece::Point { coords: p, active }])
            } else {
                Ok(Vec::new())
            }
        }
        3 => {
            let dir = cross3(g1, g2);
            // Base point: fix the coordinate with the largest direction
            // component to zero and solve the 2x2 minor.
            let fix = (0..3).max_by_key(|&i| dir[i].abs()).unwrap();
            let (a, b) = match fix {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let det = &g1[a] * &g2[b] - &g1[b] * &g2[a];
            debug_assert!(!det.is_zero());
            let ta = (-c1 * &g2[b] + c2 * &g1[b]) / &det;
            let tb = (-&g1[a] * c2 + &g2[a] * c1) / &det;
            let mut base = vec![Rat::zero(); 3];
            base[a] = ta;
            base[b] = tb;
            Ok(clip_line(domain, &base, &dir))
        }
        _ => panic!("unsupported domain dimension for solve_two"),
    }
}

pub fn pair_rank(g1: &[Rat], g2: &[Rat]) -> usize {
    let z1 = g1.iter().all(|g| g.is_zero());
    let z2 = g2.iter().all(|g| g.is_zero());
    if z1 && z2 {
        return 0;
    }
    if z1 || z2 {
        return 1;
    }
    let n = g1.len();
    for i in 0..n {
        for j in (i + 1)..n {
            if !(&g1[i] * &g2[j] - &g1[j] * &g2[i]).is_zero() {
                return 2;
            }
        }
    }
    1
}

/// Integers k with lo <= k <= hi.
pub fn k_range(lo: &Rat, hi: &Rat) -> impl Iterator<Item = i64> {
    let a = lo.ceil().to_integer();
    let b = hi.floor().to_integer();
    let a: i64 = num::ToPrimitive::to_i64(&a).expect("lift offset out of range");
    let b: i64 = num::ToPrimitive::to_i64(&b).expect("lift offset out of range");
    a..=b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::rat;

    #[test]
    fn clip_triangle_level() {
        // Level x = 1/2 on the standard triangle.
        let d = Domain::simplex(2);
        let pieces = solve_one(&d, &[rat(1, 1), rat(0, 1)], &rat(-1, 2)).unwrap();
        assert_eq!(pieces.len(), 1);
        match &pieces[0] {
            Piece::Segment { a, b, .. } => {
                assert_eq!(a[0], rat(1, 2));
                assert_eq!(b[0], rat(1, 2));
                let (ya, yb) = (a[1].clone(), b[1].clone());
                let mut ends = [ya, yb];
                ends.sort();
                assert_eq!(ends, [rat(0, 1), rat(1, 2)]);
            }
            other => panic!("expected segment, got {other:?}"),
        }
    }

    #[test]
    fn plane_section_of_tetrahedron() {
        let d = Domain::simplex(3);
        // x + y + z = 1/2 cuts a triangle.
        let pieces = solve_one(&d, &[rat(1, 1), rat(1, 1), rat(1, 1)], &rat(-1, 2)).unwrap();
        assert_eq!(pieces.len(), 1);
        match &pieces[0] {
            Piece::Polygon { verts } => assert_eq!(verts.len(), 3),
            other => panic!("expected polygon, got {other:?}"),
        }
        // x = 1/4 cuts a quadrilateral? No: a triangle again (faces y=0, z=0,
        // x+y+z=1). But y + z = 1/4 with x free cuts a quad.
        let pieces = solve_one(&d, &[rat(0, 1), rat(1, 1), rat(1, 1)], &rat(-1, 4)).unwrap();
        match &pieces[0] {
            Piece::Polygon { verts } => assert_eq!(verts.len(), 4),
            other => panic!("expected polygon, got {other:?}"),
        }
    }

    #[test]
    fn double_constraint_line() {
        let d = Domain::simplex(3);
        let pieces = solve_two(&d, &[rat(1, 1), rat(0, 1), rat(0, 1)], &rat(-1, 4), &[rat(0, 1), rat(1, 1), rat(0, 1)], &rat(-1, 4)).unwrap();
        assert_eq!(pieces.len(), 1);
        match &pieces[0] {
            Piece::Segment { a, b, .. } => {
                assert_eq!((a[0].clone(), a[1].clone()), (rat(1, 4), rat(1, 4)));
                let mut zs = [a[2].clone(), b[2].clone()];
                zs.sort();
                assert_eq!(zs, [rat(0, 1), rat(1, 2)]);
            }
            other => panic!("expected segment, got {other:?}"),
        }
    }
}
