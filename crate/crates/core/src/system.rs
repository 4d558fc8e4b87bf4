//! Morse-Bott systems: the fundamental data type, its axioms as executable
//! validators, base-point selection, and conjugation.

use crate::cell::{
    boundary_points, check_sign_consistency, double_constraint, fiber_product,
    fiber_transversality, is_regular_pair, is_regular_value, level_set_minus, level_set_plus,
    BoundaryLabel, ConstrainedComplex, Coords, HomotopySide, MidRef, SignedCellComplex, Which,
};
use crate::circle::{CirclePoint, LocalSystem, Rat, Sign, MINUS, PLUS};
use crate::error::Error;
use crate::report::ValidationReport;
use num::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One critical circle: grading bit, rank-1 local system, display label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub label: String,
    pub grading: u8,
    pub local_system: LocalSystem,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::io::rat_opt")]
    pub action: Option<Rat>,
}

pub type ModuliKey = (usize, usize, usize);

/// A Morse-Bott system: finite indexed family of graded circles with local
/// systems, plus moduli complexes `M_d(from, to)` for `from != to`,
/// `d in 0..=3`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MBSystem {
    pub items: Vec<Item>,
    pub moduli: BTreeMap<ModuliKey, SignedCellComplex>,
}

impl MBSystem {
    pub fn new(items: Vec<Item>) -> Self {
        MBSystem { items, moduli: BTreeMap::new() }
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn ls(&self, x: usize) -> &LocalSystem {
        &self.items[x].local_system
    }

    pub fn grading(&self, x: usize) -> u8 {
        self.items[x].grading % 2
    }

    pub fn moduli(&self, from: usize, to: usize, dim: usize) -> Option<&SignedCellComplex> {
        self.moduli.get(&(from, to, dim))
    }

    pub fn moduli_or_empty(&self, from: usize, to: usize, dim: usize) -> SignedCellComplex {
        self.moduli.get(&(from, to, dim)).cloned().unwrap_or_else(|| SignedCellComplex::empty(dim))
    }

    pub fn add_moduli(&mut self, from: usize, to: usize, dim: usize, cx: SignedCellComplex) {
        assert_ne!(from, to, "no moduli between an item and itself");
        assert_eq!(cx.dim, dim);
        if !cx.is_empty() {
            self.moduli.insert((from, to, dim), cx);
        }
    }

    /// Directed edges of the nonempty-moduli relation.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .moduli
            .iter()
            .filter(|(_, cx)| !cx.is_empty())
            .map(|(&(f, t, _), _)| (f, t))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn item_index(&self, label: &str) -> Option<usize> {
        self.items.iter().position(|i| i.label == label)
    }
}

/// A generic base point per circle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasePointAssignment {
    pub points: Vec<CirclePoint>,
}

impl BasePointAssignment {
    pub fn point(&self, x: usize) -> &CirclePoint {
        &self.points[x]
    }
}

/// Multiply every d-dimensional moduli orientation by (-1)^d.
pub fn conjugate_system(sys: &MBSystem) -> MBSystem {
    let mut out = sys.clone();
    for cx in out.moduli.values_mut() {
        *cx = cx.conjugate();
    }
    out
}

/// Structural shape checks not tied to a named axiom: no self-moduli, valid
/// dimensions, per-complex sign consistency, well-formed breaking labels.
pub fn validate_shape(sys: &MBSystem) -> ValidationReport {
    let mut report = ValidationReport::new();
    for (&(f, t, d), cx) in &sys.moduli {
        let loc = format!("M_{d}({}, {})", sys.items[f].label, sys.items[t].label);
        if f == t {
            report.push("Shape", loc.clone(), "moduli between an item and itself");
            continue;
        }
        if d > 3 {
            report.push("Shape", loc.clone(), "moduli dimension exceeds 3");
        }
        if cx.dim != d {
            report.push("Shape", loc.clone(), "complex dimension disagrees with key");
        }
        for c in &cx.cells {
            if c.dim() != cx.dim {
                report.push("Shape", loc.clone(), "cell dimension disagrees with complex");
            }
        }
        report.merge(prefix_report(check_sign_consistency(cx, sys.ls(f), sys.ls(t)), &loc));
        for (fr, label) in &cx.boundary_labels {
            if let BoundaryLabel::Breaking { mid, .. } = label {
                match mid {
                    MidRef::Item(x0) => {
                        if *x0 == f || *x0 == t {
                            report.push(
                                "Shape",
                                format!("{loc} label at {fr:?}"),
                                "breaking middle item must differ from the endpoints",
                            );
                        }
                    }
                    _ => report.push(
                        "Shape",
                        format!("{loc} label at {fr:?}"),
                        "system labels must reference items, not morphism sides",
                    ),
                }
            }
        }
    }
    report
}

fn prefix_report(r: ValidationReport, loc: &str) -> ValidationReport {
    let mut out = ValidationReport::new();
    for mut v in r.violations {
        v.location = format!("{loc}: {}", v.location);
        out.violations.push(v);
    }
    out
}

/// Grading axiom: nonempty `M_d(x_+, x_-)` forces
/// `d = |x_+| - |x_-| mod 2`.
pub fn validate_grading(sys: &MBSystem) -> ValidationReport {
    let mut report = ValidationReport::new();
    for (&(f, t, d), cx) in &sys.moduli {
        if cx.is_empty() {
            continue;
        }
        if (sys.grading(f) as i64 - sys.grading(t) as i64 - d as i64).rem_euclid(2) != 0 {
            report.push(
                "Grading",
                format!("M_{d}({}, {})", sys.items[f].label, sys.items[t].label),
                format!("dimension {d} has the wrong parity for gradings {} and {}", sys.grading(f), sys.grading(t)),
            );
        }
    }
    report
}

/// Finiteness axiom: for finite X this is acyclicity of the
/// nonempty-moduli digraph. With an action function present, nonempty
/// moduli must strictly decrease it.
pub fn validate_finiteness(sys: &MBSystem) -> ValidationReport {
    let mut report = ValidationReport::new();
    let n = sys.item_count();
    let edges = sys.edges();
    // Kahn's algorithm.
    let mut indeg = vec![0usize; n];
    for &(_, t) in &edges {
        indeg[t] += 1;
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(x) = queue.pop() {
        seen += 1;
        for &(f, t) in &edges {
            if f == x {
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    queue.push(t);
                }
            }
        }
    }
    if seen != n {
        report.push("Finiteness", "moduli digraph".to_string(), "nonempty-moduli relation has a cycle");
    }
    if sys.items.iter().any(|i| i.action.is_some()) {
        for &(f, t) in &edges {
            match (&sys.items[f].action, &sys.items[t].action) {
                (Some(af), Some(at)) => {
                    if af <= at {
                        report.push(
                            "Action",
                            format!("({}, {})", sys.items[f].label, sys.items[t].label),
                            format!("action must strictly decrease: {af} <= {at}"),
                        );
                    }
                }
                _ => report.push(
                    "Action",
                    format!("({}, {})", sys.items[f].label, sys.items[t].label),
                    "action defined for only part of the system",
                ),
            }
        }
    }
    report
}

/// Fiber Product Transversality axiom across all chained pairs with
/// dimension sum at most 3.
pub fn validate_transversality(sys: &MBSystem) -> ValidationReport {
    let mut report = ValidationReport::new();
    let n = sys.item_count();
    for x1 in 0..n {
        for x2 in 0..n {
            for x3 in 0..n {
                if x1 == x2 || x2 == x3 || x1 == x3 {
                    continue;
                }
                for d1 in 0..=3usize {
                    for d2 in 0..=(3 - d1) {
                        let (Some(a), Some(b)) = (sys.moduli(x1, x2, d1), sys.moduli(x2, x3, d2)) else {
                            continue;
                        };
                        if let Err(msg) = fiber_transversality(a, b) {
                            report.push(
                                "FiberProductTransversality",
                                format!(
                                    "M_{d1}({}, {}) x M_{d2}({}, {})",
                                    sys.items[x1].label, sys.items[x2].label, sys.items[x2].label, sys.items[x3].label
                                ),
                                msg,
                            );
                        }
                    }
                }
            }
        }
    }
    report
}

/// Shape + Grading + Finiteness + Fiber Product Transversality.
pub fn validate_structural(sys: &MBSystem) -> ValidationReport {
    let mut report = validate_shape(sys);
    report.merge(validate_grading(sys));
    report.merge(validate_finiteness(sys));
    report.merge(validate_transversality(sys));
    report
}

/// The committed genericity list for a base point assignment.
pub fn validate_genericity(sys: &MBSystem, pa: &BasePointAssignment) -> ValidationReport {
    let mut report = ValidationReport::new();
    let n = sys.item_count();
    if pa.points.len() != n {
        report.push("Genericity", "assignment", "wrong number of base points");
        return report;
    }
    for x in 0..n {
        if pa.point(x).is_cut() {
            report.push("Genericity", sys.items[x].label.clone(), "base point sits on the cut");
        }
    }
    // Regular values of single evaluations in dimensions <= 2.
    for (&(f, t, d), cx) in &sys.moduli {
        if d <= 2 {
            if !is_regular_value(cx, Which::Plus, pa.point(f)) {
                report.push(
                    "Genericity",
                    format!("M_{d}({}, {})", sys.items[f].label, sys.items[t].label),
                    format!("p_{} is not regular for e_plus", sys.items[f].label),
                );
            }
            if !is_regular_value(cx, Which::Minus, pa.point(t)) {
                report.push(
                    "Genericity",
                    format!("M_{d}({}, {})", sys.items[f].label, sys.items[t].label),
                    format!("p_{} is not regular for e_minus", sys.items[t].label),
                );
            }
        }
        // Pair regularity in dimensions <= 3.
        if !is_regular_pair(cx, pa.point(f), pa.point(t)) {
            report.push(
                "Genericity",
                format!("M_{d}({}, {})", sys.items[f].label, sys.items[t].label),
                "(p_+, p_-) is not a regular value of the product evaluation",
            );
        }
    }
    // No base point may hit a breaking label's evaluation values (system
    // compactification added points).
    for (&(f, t, d), cx) in &sys.moduli {
        let _ = d;
        for (fr, label) in &cx.boundary_labels {
            let face_lifts = cx.cells[fr.cell].face_eval_lifts(fr.face);
            if face_lifts.len() != 1 {
                continue; // only isolated added points impose exclusions
            }
            let (lp, lm) = &face_lifts[0];
            let vp = CirclePoint::new(lp.clone());
            let vm = CirclePoint::new(lm.clone());
            if pa.point(f) == &vp {
                report.push("Genericity", format!("label at {fr:?}"), format!("p_{} hits a compactification point value", sys.items[f].label));
            }
            if pa.point(t) == &vm {
                report.push("Genericity", format!("label at {fr:?}"), format!("p_{} hits a compactification point value", sys.items[t].label));
            }
            if let BoundaryLabel::Breaking { mid: MidRef::Item(x0), plus, .. } = label {
                // Middle evaluation value of the broken configuration.
                if plus.points.len() == 1 {
                    if let Some(mcx) = sys.moduli(f, *x0, plus.dim as usize) {
                        if let Some(cell) = mcx.cells.get(plus.cell) {
                            let (_, lm_mid) = cell.evals_at(&plus.points[0]);
                            if pa.point(*x0) == &CirclePoint::new(lm_mid) {
                                report.push(
                                    "Genericity",
                                    format!("label at {fr:?}"),
                                    format!("p_{} hits a breaking middle value", sys.items[*x0].label),
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    // All fiber products appearing in the compactification identities must
    // be transverse with these constraints.
    let terms = compactification_terms(sys, pa);
    match terms {
        Ok(list) => {
            for term in &list {
                if let Err(msg) = fiber_transversality(&term.f_complex, &term.g_complex) {
                    report.push("Genericity", term.location.clone(), format!("identity fiber product not transverse: {msg}"));
                }
            }
        }
        Err(e) => report.push("Genericity", "constrained moduli", e.to_string()),
    }
    report
}

/// Which compactification identity a fiber-product term belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum IdentityTag {
    DM1,
    DM2Minus,
    DM2Plus,
    DM3,
}

impl IdentityTag {
    pub fn name(self) -> &'static str {
        match self {
            IdentityTag::DM1 => "dM1",
            IdentityTag::DM2Minus => "dM2-",
            IdentityTag::DM2Plus => "dM2+",
            IdentityTag::DM3 => "dM3",
        }
    }
}

/// One fiber-product term of a compactification identity.
pub(crate) struct IdentityTerm {
    pub location: String,
    pub tag: IdentityTag,
    pub a: usize,
    pub b: usize,
    pub mid: MidRef,
    pub coeff: Sign,
    pub d_plus: usize,
    pub d_minus: usize,
    pub f_complex: SignedCellComplex,
    pub f_map: OrigMap,
    pub g_complex: SignedCellComplex,
    pub g_map: OrigMap,
    pub mid_ls: LocalSystem,
}

/// Maps result-complex cells back to cells of the original (unconstrained)
/// moduli complex.
pub(crate) enum OrigMap {
    Plain,
    Constrained(Vec<(usize, crate::cell::Embed)>),
}

impl OrigMap {
    pub fn apply(&self, cell: usize, coords: &[Rat]) -> (usize, Coords) {
        match self {
            OrigMap::Plain => (cell, coords.to_vec()),
            OrigMap::Constrained(meta) => {
                let (orig, embed) = &meta[cell];
                (*orig, embed.apply(coords))
            }
        }
    }

    pub fn from_constrained(cc: &ConstrainedComplex) -> OrigMap {
        OrigMap::Constrained(cc.meta.iter().map(|m| (m.orig_cell, m.embed.clone())).collect())
    }
}

/// Enumerate the fiber-product terms of all four compactification
/// identities of a system at a base point assignment.
fn compactification_terms(sys: &MBSystem, pa: &BasePointAssignment) -> Result<Vec<IdentityTerm>, Error> {
    let mut out = Vec::new();
    let n = sys.item_count();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            for x0 in 0..n {
                if x0 == a || x0 == b {
                    continue;
                }
                let loc = |tag: &str, dp: usize, dm: usize| {
                    format!(
                        "{tag}: M_{dp}({}, {}) x M_{dm}({}, {})",
                        sys.items[a].label, sys.items[x0].label, sys.items[x0].label, sys.items[b].label
                    )
                };
                // (b): d+ + d- = 1, coefficient (-1)^{d+}.
                for (dp, dm) in [(0usize, 1usize), (1, 0)] {
                    let f = sys.moduli_or_empty(a, x0, dp);
                    let g = sys.moduli_or_empty(x0, b, dm);
                    if f.is_empty() || g.is_empty() {
                        continue;
                    }
                    out.push(IdentityTerm {
                        location: loc("dM1", dp, dm),
                        tag: IdentityTag::DM1,
                        a,
                        b,
                        mid: MidRef::Item(x0),
                        coeff: if dp % 2 == 0 { PLUS } else { MINUS },
                        d_plus: dp,
                        d_minus: dm,
                        f_complex: f,
                        f_map: OrigMap::Plain,
                        g_complex: g,
                        g_map: OrigMap::Plain,
                        mid_ls: *sys.ls(x0),
                    });
                }
                // (c-): d+ + d- = 2, minus constraint on G, coeff (-1)^{d+}.
                for (dp, dm) in [(0usize, 2usize), (1, 1), (2, 0)] {
                    let f = sys.moduli_or_empty(a, x0, dp);
                    let g = sys.moduli_or_empty(x0, b, dm);
                    if f.is_empty() || g.is_empty() {
                        continue;
                    }
                    let gc = level_set_minus(&g, pa.point(b))?;
                    if gc.is_empty() {
                        continue;
                    }
                    out.push(IdentityTerm {
                        location: loc("dM2-", dp, dm),
                        tag: IdentityTag::DM2Minus,
                        a,
                        b,
                        mid: MidRef::Item(x0),
                        coeff: if dp % 2 == 0 { PLUS } else { MINUS },
                        d_plus: dp,
                        d_minus: dm,
                        f_complex: f,
                        f_map: OrigMap::Plain,
                        g_map: OrigMap::from_constrained(&gc),
                        g_complex: gc.complex,
                        mid_ls: *sys.ls(x0),
                    });
                }
                // (c+): d+ + d- = 2, plus constraint on F, coeff (-1)^{d+-1}.
                for (dp, dm) in [(0usize, 2usize), (1, 1), (2, 0)] {
                    let f = sys.moduli_or_empty(a, x0, dp);
                    let g = sys.moduli_or_empty(x0, b, dm);
                    if f.is_empty() || g.is_empty() {
                        continue;
                    }
                    let fc = level_set_plus(&f, pa.point(a))?;
                    if fc.is_empty() {
                        continue;
                    }
                    out.push(IdentityTerm {
                        location: loc("dM2+", dp, dm),
                        tag: IdentityTag::DM2Plus,
                        a,
                        b,
                        mid: MidRef::Item(x0),
                        coeff: if dp % 2 == 1 { PLUS } else { MINUS },
                        d_plus: dp,
                        d_minus: dm,
                        f_map: OrigMap::from_constrained(&fc),
                        f_complex: fc.complex,
                        g_complex: g,
                        g_map: OrigMap::Plain,
                        mid_ls: *sys.ls(x0),
                    });
                }
                // (d): d+ + d- = 3, both constraints, coeff (-1)^{d+-1}.
                for (dp, dm) in [(0usize, 3usize), (1, 2), (2, 1), (3, 0)] {
                    let f = sys.moduli_or_empty(a, x0, dp);
                    let g = sys.moduli_or_empty(x0, b, dm);
                    if f.is_empty() || g.is_empty() {
                        continue;
                    }
                    let fc = level_set_plus(&f, pa.point(a))?;
                    let gc = level_set_minus(&g, pa.point(b))?;
                    if fc.is_empty() || gc.is_empty() {
                        continue;
                    }
                    out.push(IdentityTerm {
                        location: loc("dM3", dp, dm),
                        tag: IdentityTag::DM3,
                        a,
                        b,
                        mid: MidRef::Item(x0),
                        coeff: if dp % 2 == 1 { PLUS } else { MINUS },
                        d_plus: dp,
                        d_minus: dm,
                        f_map: OrigMap::from_constrained(&fc),
                        f_complex: fc.complex,
                        g_map: OrigMap::from_constrained(&gc),
                        g_complex: gc.complex,
                        mid_ls: *sys.ls(x0),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Comparable boundary entry: a broken configuration or a morphism end.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum EntryKey {
    Breaking {
        mid: MidRef,
        d_plus: usize,
        plus_cell: usize,
        plus_pt: Coords,
        d_minus: usize,
        minus_cell: usize,
        minus_pt: Coords,
    },
    MorphismSide {
        side: HomotopySide,
        cell: usize,
        pt: Coords,
    },
}

pub(crate) type SignedEntries = BTreeMap<EntryKey, i64>;

pub(crate) fn add_entry(map: &mut SignedEntries, key: EntryKey, coeff: i64) {
    let e = map.entry(key).or_insert(0);
    *e += coeff;
    // Keep zero entries out so map equality means identity equality.
}

pub(crate) fn prune(map: &mut SignedEntries) {
    map.retain(|_, v| *v != 0);
}

/// Collect the Breaking-labeled boundary points of a 1-dimensional complex
/// into signed entries, folding signs to cut trivializations.
pub(crate) fn lhs_entries(
    cx: &SignedCellComplex,
    ls_plus: &LocalSystem,
    ls_minus: &LocalSystem,
    report: &mut ValidationReport,
    loc: &str,
) -> SignedEntries {
    let mut map = SignedEntries::new();
    if cx.is_empty() {
        return map;
    }
    for (lp, lm, sign, fr, label) in boundary_points(cx) {
        let folded = crate::cell::fold_to_cut(sign, ls_plus, &lp, ls_minus, &lm);
        match label {
            None => {
                report.push("Compactification", format!("{loc} face {fr:?}"), "unglued boundary face has no label");
            }
            Some(BoundaryLabel::End) => {}
            Some(BoundaryLabel::Breaking { mid, plus, minus }) => {
                add_entry(
                    &mut map,
                    EntryKey::Breaking {
                        mid,
                        d_plus: plus.dim as usize,
                        plus_cell: plus.cell,
                        plus_pt: plus.points[0].clone(),
                        d_minus: minus.dim as usize,
                        minus_cell: minus.cell,
                        minus_pt: minus.points[0].clone(),
                    },
                    folded.i64(),
                );
            }
            Some(BoundaryLabel::MorphismEnd { side, factor }) => {
                add_entry(
                    &mut map,
                    EntryKey::MorphismSide { side, cell: factor.cell, pt: factor.points[0].clone() },
                    folded.i64(),
                );
            }
        }
    }
    map
}

/// Evaluate the right-hand side fiber products of a list of identity terms.
pub(crate) fn rhs_entries(
    terms: &[IdentityTerm],
    ls_plus: &LocalSystem,
    ls_minus: &LocalSystem,
    report: &mut ValidationReport,
) -> SignedEntries {
    let mut map = SignedEntries::new();
    for term in terms {
        let fp = match fiber_product(&term.f_complex, &term.g_complex, &term.mid_ls) {
            Ok(fp) => fp,
            Err(e) => {
                report.push("Compactification", term.location.clone(), format!("identity fiber product failed: {e}"));
                continue;
            }
        };
        if fp.complex.dim != 0 {
            report.push("Compactification", term.location.clone(), "identity fiber product is not rigid");
            continue;
        }
        for (i, cell) in fp.complex.cells.iter().enumerate() {
            let meta = &fp.meta[i];
            let folded = crate::cell::fold_to_cut(
                cell.sign,
                ls_plus,
                &cell.e_plus.vertex_lifts[0],
                ls_minus,
                &cell.e_minus.vertex_lifts[0],
            ) * term.coeff;
            let (pc, pp) = term.f_map.apply(meta.x_cell, &meta.x_embed.apply(&[]));
            let (mc, mp) = term.g_map.apply(meta.y_cell, &meta.y_embed.apply(&[]));
            add_entry(
                &mut map,
                EntryKey::Breaking {
                    mid: term.mid,
                    d_plus: term.d_plus,
                    plus_cell: pc,
                    plus_pt: pp,
                    d_minus: term.d_minus,
                    minus_cell: mc,
                    minus_pt: mp,
                },
                folded.i64(),
            );
        }
    }
    map
}

pub(crate) fn compare_sides(lhs: &mut SignedEntries, rhs: &mut SignedEntries, report: &mut ValidationReport, loc: &str) {
    prune(lhs);
    prune(rhs);
    if lhs == rhs {
        return;
    }
    let keys: std::collections::BTreeSet<&EntryKey> = lhs.keys().chain(rhs.keys()).collect();
    for k in keys {
        let l = lhs.get(k).copied().unwrap_or(0);
        let r = rhs.get(k).copied().unwrap_or(0);
        if l != r {
            report.push(
                "Compactification",
                loc.to_string(),
                format!("boundary term mismatch at {k:?}: boundary side {l}, fiber side {r}"),
            );
        }
    }
}

/// Compactification axiom parts (b)-(e) against a generic base point
/// assignment. Part (a) holds by construction (finite cell lists).
pub fn validate_compactification(sys: &MBSystem, pa: &BasePointAssignment) -> ValidationReport {
    let mut report = ValidationReport::new();
    let n = sys.item_count();
    // Group the identity terms by (a, b, identity tag).
    let all_terms = match compactification_terms(sys, pa) {
        Ok(t) => t,
        Err(e) => {
            let mut r = ValidationReport::new();
            r.push("Compactification", "constrained moduli", e.to_string());
            return r;
        }
    };
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let pair_loc = |tag: &str| format!("{tag}({}, {})", sys.items[a].label, sys.items[b].label);
            let select = |tag: IdentityTag| -> Vec<&IdentityTerm> {
                all_terms.iter().filter(|t| t.tag == tag && t.a == a && t.b == b).collect()
            };
            // (b)
            {
                let lhs_cx = sys.moduli_or_empty(a, b, 1);
                let mut lhs = lhs_entries(&lhs_cx, sys.ls(a), sys.ls(b), &mut report, &pair_loc("dM1"));
                let terms: Vec<IdentityTerm> = select(IdentityTag::DM1).into_iter().map(clone_term).collect();
                let mut rhs = rhs_entries(&terms, sys.ls(a), sys.ls(b), &mut report);
                compare_sides(&mut lhs, &mut rhs, &mut report, &pair_loc("dM1"));
            }
            // (c-)
            {
                let m2 = sys.moduli_or_empty(a, b, 2);
                match level_set_minus(&m2, pa.point(b)) {
                    Ok(cc) => {
                        let mut lhs = lhs_entries(&cc.complex, sys.ls(a), sys.ls(b), &mut report, &pair_loc("dM2-"));
                        let terms: Vec<IdentityTerm> = select(IdentityTag::DM2Minus).into_iter().map(clone_term).collect();
                        let mut rhs = rhs_entries(&terms, sys.ls(a), sys.ls(b), &mut report);
                        compare_sides(&mut lhs, &mut rhs, &mut report, &pair_loc("dM2-"));
                    }
                    Err(e) => report.push("Compactification", pair_loc("dM2-"), e.to_string()),
                }
            }
            // (c+)
            {
                let m2 = sys.moduli_or_empty(a, b, 2);
                match level_set_plus(&m2, pa.point(a)) {
                    Ok(cc) => {
                        let mut lhs = lhs_entries(&cc.complex, sys.ls(a), sys.ls(b), &mut report, &pair_loc("dM2+"));
                        let terms: Vec<IdentityTerm> = select(IdentityTag::DM2Plus).into_iter().map(clone_term).collect();
                        let mut rhs = rhs_entries(&terms, sys.ls(a), sys.ls(b), &mut report);
                        compare_sides(&mut lhs, &mut rhs, &mut report, &pair_loc("dM2+"));
                    }
                    Err(e) => report.push("Compactification", pair_loc("dM2+"), e.to_string()),
                }
            }
            // (d)
            {
                let m3 = sys.moduli_or_empty(a, b, 3);
                match double_constraint(&m3, pa.point(a), pa.point(b)) {
                    Ok(cc) => {
                        let mut lhs = lhs_entries(&cc.complex, sys.ls(a), sys.ls(b), &mut report, &pair_loc("dM3"));
                        let terms: Vec<IdentityTerm> = select(IdentityTag::DM3).into_iter().map(clone_term).collect();
                        let mut rhs = rhs_entries(&terms, sys.ls(a), sys.ls(b), &mut report);
                        compare_sides(&mut lhs, &mut rhs, &mut report, &pair_loc("dM3"));
                    }
                    Err(e) => report.push("Compactification", pair_loc("dM3"), e.to_string()),
                }
            }
        }
    }
    report.merge(validate_no_extra_points(sys, pa));
    report
}

fn clone_term(t: &IdentityTerm) -> IdentityTerm {
    IdentityTerm {
        location: t.location.clone(),
        tag: t.tag,
        a: t.a,
        b: t.b,
        mid: t.mid,
        coeff: t.coeff,
        d_plus: t.d_plus,
        d_minus: t.d_minus,
        f_complex: t.f_complex.clone(),
        f_map: clone_map(&t.f_map),
        g_complex: t.g_complex.clone(),
        g_map: clone_map(&t.g_map),
        mid_ls: t.mid_ls,
    }
}

fn clone_map(m: &OrigMap) -> OrigMap {
    match m {
        OrigMap::Plain => OrigMap::Plain,
        OrigMap::Constrained(v) => OrigMap::Constrained(v.clone()),
    }
}

/// The finite added points of a compactified 1-dimensional complex: its
/// labeled boundary values.
pub(crate) fn added_point_values(cx: &SignedCellComplex) -> Vec<(Rat, Rat)> {
    if cx.is_empty() || cx.dim != 1 {
        return Vec::new();
    }
    boundary_points(cx)
        .into_iter()
        .filter(|(_, _, _, _, l)| matches!(l, Some(BoundaryLabel::Breaking { .. }) | Some(BoundaryLabel::MorphismEnd { .. })))
        .map(|(lp, lm, _, _, _)| (lp, lm))
        .collect()
}

fn values_on_circle_plus(cx: &SignedCellComplex) -> Vec<CirclePoint> {
    cx.cells.iter().map(|c| CirclePoint::new(c.e_plus.vertex_lifts[0].clone())).collect()
}

fn values_on_circle_minus(cx: &SignedCellComplex) -> Vec<CirclePoint> {
    cx.cells.iter().map(|c| CirclePoint::new(c.e_minus.vertex_lifts[0].clone())).collect()
}

/// Part (e): the identities would gain no extra points if compactified
/// moduli replaced open ones. All finite cases are checked by exact value
/// comparison on the middle circle.
fn validate_no_extra_points(sys: &MBSystem, pa: &BasePointAssignment) -> ValidationReport {
    let mut report = ValidationReport::new();
    let n = sys.item_count();
    for a in 0..n {
        for x0 in 0..n {
            for b in 0..n {
                if a == b || a == x0 || b == x0 {
                    continue;
                }
                let loc = format!("extra points ({}, {}, {})", sys.items[a].label, sys.items[x0].label, sys.items[b].label);
                let m0_out = sys.moduli_or_empty(a, x0, 0);
                let m0_in = sys.moduli_or_empty(x0, b, 0);
                let m1_out = sys.moduli_or_empty(a, x0, 1);
                let m1_in = sys.moduli_or_empty(x0, b, 1);
                let added_out: Vec<CirclePoint> =
                    added_point_values(&m1_out).into_iter().map(|(_, lm)| CirclePoint::new(lm)).collect();
                let added_in: Vec<CirclePoint> =
                    added_point_values(&m1_in).into_iter().map(|(lp, _)| CirclePoint::new(lp)).collect();
                // (b): M0(a,x0) x added(M1(x0,b)) and added(M1(a,x0)) x M0(x0,b).
                for v in values_on_circle_minus(&m0_out) {
                    if added_in.contains(&v) {
                        report.push("CompactificationE", loc.clone(), format!("M0 meets an added point of M1 at {v}"));
                    }
                }
                for v in values_on_circle_plus(&m0_in) {
                    if added_out.contains(&v) {
                        report.push("CompactificationE", loc.clone(), format!("an added point of M1 meets M0 at {v}"));
                    }
                }
                // (c-): M0(a,x0) x added(M2(x0,b,p_b)) and
                // added(M1(a,x0)) x M1(x0,b,p_b).
                let m2_in = sys.moduli_or_empty(x0, b, 2);
                if let Ok(cc) = level_set_minus(&m2_in, pa.point(b)) {
                    let added: Vec<CirclePoint> =
                        added_point_values(&cc.complex).into_iter().map(|(lp, _)| CirclePoint::new(lp)).collect();
                    for v in values_on_circle_minus(&m0_out) {
                        if added.contains(&v) {
                            report.push("CompactificationE", loc.clone(), format!("M0 meets an added point of constrained M2 at {v}"));
                        }
                    }
                }
                if let Ok(cc) = level_set_minus(&m1_in, pa.point(b)) {
                    for v in values_on_circle_plus(&cc.complex) {
                        if added_out.contains(&v) {
                            report.push("CompactificationE", loc.clone(), format!("an added point of M1 meets constrained M1 at {v}"));
                        }
                    }
                }
                // (c+) mirror.
                let m2_out = sys.moduli_or_empty(a, x0, 2);
                if let Ok(cc) = level_set_plus(&m2_out, pa.point(a)) {
                    let added: Vec<CirclePoint> =
                        added_point_values(&cc.complex).into_iter().map(|(_, lm)| CirclePoint::new(lm)).collect();
                    for v in values_on_circle_plus(&m0_in) {
                        if added.contains(&v) {
                            report.push("CompactificationE", loc.clone(), format!("an added point of constrained M2 meets M0 at {v}"));
                        }
                    }
                }
                if let Ok(cc) = level_set_plus(&m1_out, pa.point(a)) {
                    for v in values_on_circle_minus(&cc.complex) {
                        if added_in.contains(&v) {
                            report.push("CompactificationE", loc.clone(), format!("constrained M1 meets an added point of M1 at {v}"));
                        }
                    }
                }
                // (d) analogue: both constraints, the two finite pairings.
                if let (Ok(f1), Ok(g2)) = (level_set_plus(&m1_out, pa.point(a)), level_set_minus(&m2_in, pa.point(b))) {
                    let added: Vec<CirclePoint> =
                        added_point_values(&g2.complex).into_iter().map(|(lp, _)| CirclePoint::new(lp)).collect();
                    for v in values_on_circle_minus(&f1.complex) {
                        if added.contains(&v) {
                            report.push("CompactificationE", loc.clone(), format!("constrained M1 meets an added point of constrained M2 at {v}"));
                        }
                    }
                }
                if let (Ok(f2), Ok(g1)) = (level_set_plus(&m2_out, pa.point(a)), level_set_minus(&m1_in, pa.point(b))) {
                    let added: Vec<CirclePoint> =
                        added_point_values(&f2.complex).into_iter().map(|(_, lm)| CirclePoint::new(lm)).collect();
                    for v in values_on_circle_plus(&g1.complex) {
                        if added.contains(&v) {
                            report.push("CompactificationE", loc.clone(), format!("an added point of constrained M2 meets constrained M1 at {v}"));
                        }
                    }
                }
            }
        }
    }
    report
}

/// Deterministically choose a generic base point assignment.
pub fn choose_basepoints(sys: &MBSystem, seed: u64) -> Result<BasePointAssignment, Error> {
    let structural = validate_structural(sys);
    if !structural.passed() {
        return Err(Error::NotValidated(format!("{structural}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = 200;
    for attempt in 0..budget {
        // Denominators grow with the attempt so every finite exclusion list
        // is eventually dodged.
        let den = 997u64 + 2 * attempt as u64;
        let points: Vec<CirclePoint> = (0..sys.item_count())
            .map(|_| {
                let num = rng.gen_range(1..den);
                CirclePoint::new(Rat::new(BigInt::from(num), BigInt::from(den)))
            })
            .collect();
        let pa = BasePointAssignment { points };
        if validate_genericity(sys, &pa).passed() {
            return Ok(pa);
        }
    }
    Err(Error::ExhaustedCandidates(format!("{budget} attempts")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{AffineEval, Cell};
    use crate::circle::rat;

    fn item(label: &str, grading: u8, twisted: bool) -> Item {
        Item {
            label: label.into(),
            grading,
            local_system: if twisted { LocalSystem::TWISTED } else { LocalSystem::TRIVIAL },
            action: None,
        }
    }

    fn m0(e_plus: Rat, e_minus: Rat, sign: Sign) -> SignedCellComplex {
        SignedCellComplex::of_cells(0, vec![Cell::point(sign, e_plus, e_minus)])
    }

    #[test]
    fn grading_examples() {
        let mut sys = MBSystem::new(vec![item("a", 1, false), item("b", 0, false)]);
        let circle = {
            let cell = Cell::segment(PLUS, (rat(0, 1), rat(1, 1)), (rat(0, 1), rat(1, 1)));
            SignedCellComplex {
                dim: 1,
                cells: vec![cell],
                gluings: vec![crate::cell::FaceGluing {
                    left: crate::cell::FaceRef { cell: 0, face: 0 },
                    right: crate::cell::FaceRef { cell: 0, face: 1 },
                    perm: vec![],
                    offset_plus: 1,
                    offset_minus: 1,
                }],
                boundary_labels: vec![],
            }
        };
        sys.add_moduli(0, 1, 1, circle.clone());
        assert!(validate_grading(&sys).passed());
        let mut bad = MBSystem::new(vec![item("a", 0, false), item("b", 0, false)]);
        bad.add_moduli(0, 1, 1, circle);
        assert!(!validate_grading(&bad).passed());
        assert!(validate_grading(&MBSystem::new(vec![item("a", 0, false)])).passed());
    }

    #[test]
    fn finiteness_examples() {
        let mut chain = MBSystem::new(vec![item("x2", 0, false), item("x1", 0, false), item("x0", 0, false)]);
        chain.add_moduli(0, 1, 0, m0(rat(1, 4), rat(1, 3), PLUS));
        chain.add_moduli(1, 2, 0, m0(rat(2, 3), rat(1, 4), PLUS));
        assert!(validate_finiteness(&chain).passed());
        let mut cyc = chain.clone();
        cyc.add_moduli(2, 0, 0, m0(rat(1, 5), rat(1, 7), PLUS));
        assert!(!validate_finiteness(&cyc).passed());
        assert!(validate_finiteness(&MBSystem::new(vec![item("a", 0, false)])).passed());
    }

    #[test]
    fn transversality_examples() {
        let mut sys = MBSystem::new(vec![item("x1", 0, false), item("x2", 0, false), item("x3", 0, false)]);
        sys.add_moduli(0, 1, 0, m0(rat(1, 5), rat(1, 3), PLUS));
        sys.add_moduli(1, 2, 0, m0(rat(1, 3), rat(1, 7), PLUS));
        assert!(!validate_transversality(&sys).passed());
        let mut ok = MBSystem::new(vec![item("x1", 0, false), item("x2", 0, false), item("x3", 0, false)]);
        ok.add_moduli(0, 1, 0, m0(rat(1, 5), rat(1, 3), PLUS));
        ok.add_moduli(1, 2, 0, m0(rat(2, 5), rat(1, 7), PLUS));
        assert!(validate_transversality(&ok).passed());
    }

    #[test]
    fn genericity_examples() {
        let mut sys = MBSystem::new(vec![item("x", 0, false), item("y", 0, false)]);
        sys.add_moduli(0, 1, 0, m0(rat(1, 4), rat(1, 3), PLUS));
        let good = BasePointAssignment { points: vec![CirclePoint::new(rat(1, 2)), CirclePoint::new(rat(2, 5))] };
        assert!(validate_genericity(&sys, &good).passed());
        let on_value = BasePointAssignment { points: vec![CirclePoint::new(rat(1, 4)), CirclePoint::new(rat(2, 5))] };
        assert!(!validate_genericity(&sys, &on_value).passed());
        let on_cut = BasePointAssignment { points: vec![CirclePoint::new(rat(0, 1)), CirclePoint::new(rat(2, 5))] };
        assert!(!validate_genericity(&sys, &on_cut).passed());
    }

    #[test]
    fn choose_basepoints_deterministic() {
        let mut sys = MBSystem::new(vec![item("x", 0, false), item("y", 0, false)]);
        sys.add_moduli(0, 1, 0, m0(rat(1, 4), rat(1, 3), PLUS));
        let a = choose_basepoints(&sys, 7).unwrap();
        let b = choose_basepoints(&sys, 7).unwrap();
        assert_eq!(a, b);
        let c = choose_basepoints(&sys, 8).unwrap();
        assert!(validate_genericity(&sys, &c).passed());
    }

    #[test]
    fn conjugation_is_involution_and_preserves_validators() {
        let mut sys = MBSystem::new(vec![item("a", 1, false), item("b", 0, false)]);
        let seg = SignedCellComplex::of_cells(
            1,
            vec![Cell::simplex(
                PLUS,
                AffineEval::new(vec![rat(1, 5), rat(2, 5)]),
                AffineEval::new(vec![rat(1, 7), rat(3, 7)]),
            )],
        );
        // Closed circle instead, to stay label-free.
        let _ = seg;
        let circle = {
            let cell = Cell::segment(MINUS, (rat(0, 1), rat(1, 1)), (rat(0, 1), rat(1, 1)));
            SignedCellComplex {
                dim: 1,
                cells: vec![cell],
                gluings: vec![crate::cell::FaceGluing {
                    left: crate::cell::FaceRef { cell: 0, face: 0 },
                    right: crate::cell::FaceRef { cell: 0, face: 1 },
                    perm: vec![],
                    offset_plus: 1,
                    offset_minus: 1,
                }],
                boundary_labels: vec![],
            }
        };
        sys.add_moduli(0, 1, 1, circle);
        let conj = conjugate_system(&sys);
        assert_eq!(conjugate_system(&conj), sys);
        assert_ne!(conj, sys);
        assert_eq!(validate_structural(&sys).passed(), validate_structural(&conj).passed());
        let pa = choose_basepoints(&sys, 0).unwrap();
        assert_eq!(
            validate_compactification(&sys, &pa).passed(),
            validate_compactification(&conj, &pa).passed()
        );
    }

    #[test]
    fn compactification_trivial_cases() {
        // Closed polygonal-circle M1 with all other moduli empty passes.
        let mut sys = MBSystem::new(vec![item("a", 1, false), item("b", 0, false)]);
        let circle = {
            let cell = Cell::segment(PLUS, (rat(0, 1), rat(1, 1)), (rat(0, 1), rat(1, 1)));
            SignedCellComplex {
                dim: 1,
                cells: vec![cell],
                gluings: vec![crate::cell::FaceGluing {
                    left: crate::cell::FaceRef { cell: 0, face: 0 },
                    right: crate::cell::FaceRef { cell: 0, face: 1 },
                    perm: vec![],
                    offset_plus: 1,
                    offset_minus: 1,
                }],
                boundary_labels: vec![],
            }
        };
        sys.add_moduli(0, 1, 1, circle);
        let pa = choose_basepoints(&sys, 1).unwrap();
        assert!(validate_compactification(&sys, &pa).passed());
    }
}
