//! Cascades and the cascade differential.
//!
//! A rigid cascade from one generator to another is a chain of rigid moduli
//! points through intermediate circles, subject to positive cyclic order at
//! each intermediate base point. Its sign is the product of the factor
//! signs (folded to cut trivializations) and the parallel-transport signs
//! along the connecting arcs; constrained ends dispense with the outer
//! transports.

use crate::cell::{double_constraint, level_set_minus, level_set_plus, Cell};
use crate::circle::{
    cyclically_ordered, transport_sign, CirclePoint, Rat, Sign, PLUS,
};
use crate::error::Error;
use crate::homology::IntMatrix;
use crate::report::ValidationReport;
use crate::system::{validate_genericity, validate_structural, BasePointAssignment, MBSystem};
use num::BigInt;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoration {
    Check,
    Hat,
}

/// A chain-module generator: an item with a hat or check decoration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CascadeGenerator {
    pub item: usize,
    pub decoration: Decoration,
}

impl CascadeGenerator {
    pub fn check(item: usize) -> Self {
        CascadeGenerator { item, decoration: Decoration::Check }
    }

    pub fn hat(item: usize) -> Self {
        CascadeGenerator { item, decoration: Decoration::Hat }
    }
}

/// One rigid factor of a cascade, with its folded sign and evaluation
/// values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeFactor {
    pub kind: FactorKind,
    /// Cell index in the constrained complex the point came from.
    pub cell: usize,
    pub e_plus: CirclePoint,
    pub e_minus: CirclePoint,
    /// Sign folded to cut trivializations at both evaluation values.
    pub sign: Sign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    /// A point of M_0, unconstrained.
    Unconstrained,
    /// A plus-level-set point of M_1 pinned at the source base point.
    PlusConstrained,
    /// A minus-level-set point of M_1 pinned at the target base point.
    MinusConstrained,
    /// A doubly constrained point of M_2.
    DoubleConstrained,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cascade {
    /// Items x_0, ..., x_k along the path.
    pub items: Vec<usize>,
    pub factors: Vec<CascadeFactor>,
    pub from: CascadeGenerator,
    pub to: CascadeGenerator,
}

/// The cascade chain complex: generators in a fixed order (check then hat
/// per item), their mod-2 gradings, and the differential matrix with
/// `d[(row, col)] = <d gen_col, gen_row>`.
#[derive(Debug, Clone)]
pub struct CascadeChainComplex {
    pub generators: Vec<CascadeGenerator>,
    pub gradings: Vec<u8>,
    pub differential: IntMatrix,
    pub labels: Vec<String>,
}

impl CascadeChainComplex {
    pub fn generator_index(&self, g: &CascadeGenerator) -> usize {
        2 * g.item + match g.decoration {
            Decoration::Check => 0,
            Decoration::Hat => 1,
        }
    }

    /// Indices of generators with the given parity.
    pub fn parity_indices(&self, parity: u8) -> Vec<usize> {
        (0..self.generators.len()).filter(|&i| self.gradings[i] == parity).collect()
    }

    /// Extract the block of the differential from `parity` generators to
    /// the opposite parity.
    pub fn parity_block(&self, parity: u8) -> IntMatrix {
        let cols = self.parity_indices(parity);
        let rows = self.parity_indices(1 - parity);
        let mut m = IntMatrix::zero(rows.len(), cols.len());
        for (j, &c) in cols.iter().enumerate() {
            for (i, &r) in rows.iter().enumerate() {
                m[(i, j)] = self.differential[(r, c)].clone();
            }
        }
        m
    }
}

pub fn generator_label(sys: &MBSystem, g: &CascadeGenerator) -> String {
    match g.decoration {
        Decoration::Check => format!("check:{}", sys.items[g.item].label),
        Decoration::Hat => format!("hat:{}", sys.items[g.item].label),
    }
}

pub fn generator_grading(sys: &MBSystem, g: &CascadeGenerator) -> u8 {
    match g.decoration {
        Decoration::Check => sys.grading(g.item),
        Decoration::Hat => (sys.grading(g.item) + 1) % 2,
    }
}

/// Rigid factor points available on one edge of the moduli digraph.
struct EdgeFactors {
    m0: Vec<CascadeFactor>,
    lsp: Vec<CascadeFactor>,
    lsm: Vec<CascadeFactor>,
    dbl: Vec<CascadeFactor>,
}

fn fold_point(sys: &MBSystem, from: usize, to: usize, cell_idx: usize, cell: &Cell, kind: FactorKind) -> CascadeFactor {
    let lp = &cell.e_plus.vertex_lifts[0];
    let lm = &cell.e_minus.vertex_lifts[0];
    let sign = crate::cell::fold_to_cut(cell.sign, sys.ls(from), lp, sys.ls(to), lm);
    CascadeFactor {
        kind,
        cell: cell_idx,
        e_plus: CirclePoint::new(lp.clone()),
        e_minus: CirclePoint::new(lm.clone()),
        sign,
    }
}

fn edge_factors(sys: &MBSystem, pa: &BasePointAssignment, from: usize, to: usize) -> Result<EdgeFactors, Error> {
    let p_from = pa.point(from);
    let p_to = pa.point(to);
    let mut out = EdgeFactors { m0: vec![], lsp: vec![], lsm: vec![], dbl: vec![] };
    if let Some(m0) = sys.moduli(from, to, 0) {
        for (i, c) in m0.cells.iter().enumerate() {
            let f = fold_point(sys, from, to, i, c, FactorKind::Unconstrained);
            // Starred conditions: both evaluations avoid the base points.
            if &f.e_plus != p_from && &f.e_minus != p_to {
                out.m0.push(f);
            }
        }
    }
    if let Some(m1) = sys.moduli(from, to, 1) {
        let lsp = level_set_plus(m1, p_from)?;
        for (i, c) in lsp.complex.cells.iter().enumerate() {
            let f = fold_point(sys, from, to, i, c, FactorKind::PlusConstrained);
            if &f.e_minus != p_to {
                out.lsp.push(f);
            }
        }
        let lsm = level_set_minus(m1, p_to)?;
        for (i, c) in lsm.complex.cells.iter().enumerate() {
            let f = fold_point(sys, from, to, i, c, FactorKind::MinusConstrained);
            if &f.e_plus != p_from {
                out.lsm.push(f);
            }
        }
    }
    if let Some(m2) = sys.moduli(from, to, 2) {
        let dbl = double_constraint(m2, p_from, p_to)?;
        for (i, c) in dbl.complex.cells.iter().enumerate() {
            out.dbl.push(fold_point(sys, from, to, i, c, FactorKind::DoubleConstrained));
        }
    }
    Ok(out)
}

/// All simple paths from `s` to `t` in the nonempty-moduli digraph.
fn item_paths(sys: &MBSystem, s: usize, t: usize) -> Vec<Vec<usize>> {
    let n = sys.item_count();
    let edges = sys.edges();
    let mut adj = vec![Vec::new(); n];
    for &(f, g) in &edges {
        adj[f].push(g);
    }
    // Reachability pruning.
    let mut reach = vec![false; n];
    reach[t] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for &(f, g) in &edges {
            if reach[g] && !reach[f] {
                reach[f] = true;
                changed = true;
            }
        }
    }
    let mut out = Vec::new();
    let mut stack = vec![s];
    fn dfs(u: usize, t: usize, adj: &[Vec<usize>], reach: &[bool], stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if u == t {
            out.push(stack.clone());
            return;
        }
        for &v in &adj[u] {
            if reach[v] && !stack.contains(&v) {
                stack.push(v);
                dfs(v, t, adj, reach, stack, out);
                stack.pop();
            }
        }
    }
    if reach[s] {
        dfs(s, t, &adj, &reach, &mut stack, &mut out);
    }
    out
}

/// Enumerate the rigid cascades from one generator to another (distinct
/// items). Requires structural validation and genericity.
pub fn enumerate_cascades(
    sys: &MBSystem,
    pa: &BasePointAssignment,
    from: CascadeGenerator,
    to: CascadeGenerator,
) -> Result<Vec<Cascade>, Error> {
    if from.item == to.item {
        return Err(Error::NotValidated("enumerate_cascades requires distinct items".into()));
    }
    let mut out = Vec::new();
    for path in item_paths(sys, from.item, to.item) {
        let k = path.len() - 1;
        // Factor lists per edge.
        let mut per_edge: Vec<EdgeFactors> = Vec::with_capacity(k);
        for w in path.windows(2) {
            per_edge.push(edge_factors(sys, pa, w[0], w[1])?);
        }
        // Choose factor kinds per flavor.
        let choices: Vec<Vec<&CascadeFactor>> = (0..k)
            .map(|i| {
                let first = i == 0;
                let last = i == k - 1;
                let ef = &per_edge[i];
                match (from.decoration, to.decoration) {
                    (Decoration::Hat, Decoration::Check) => ef.m0.iter().collect(),
                    (Decoration::Check, Decoration::Check) => {
                        if first {
                            ef.lsp.iter().collect()
                        } else {
                            ef.m0.iter().collect()
                        }
                    }
                    (Decoration::Hat, Decoration::Hat) => {
                        if last {
                            ef.lsm.iter().collect()
                        } else {
                            ef.m0.iter().collect()
                        }
                    }
                    (Decoration::Check, Decoration::Hat) => {
                        if k == 1 {
                            ef.dbl.iter().collect()
                        } else if first {
                            ef.lsp.iter().collect()
                        } else if last {
                            ef.lsm.iter().collect()
                        } else {
                            ef.m0.iter().collect()
                        }
                    }
                }
            })
            .collect();
        // Cartesian product with cyclic-order pruning.
        let mut partial: Vec<Vec<&CascadeFactor>> = vec![Vec::new()];
        for choice in &choices {
            let mut next = Vec::new();
            for pref in &partial {
                for cand in choice {
                    if let Some(prev) = pref.last() {
                        let mid_item = path[pref.len()];
                        let p_mid = pa.point(mid_item);
                        let a = &prev.e_minus;
                        let b = &cand.e_plus;
                        if p_mid == a || p_mid == b || a == b {
                            continue;
                        }
                        if !cyclically_ordered(p_mid, a, b).unwrap_or(false) {
                            continue;
                        }
                    }
                    let mut ext = pref.clone();
                    ext.push(*cand);
                    next.push(ext);
                }
            }
            partial = next;
            if partial.is_empty() {
                break;
            }
        }
        for factors in partial {
            if factors.len() == k {
                out.push(Cascade {
                    items: path.clone(),
                    factors: factors.into_iter().cloned().collect(),
                    from,
                    to,
                });
            }
        }
    }
    Ok(out)
}

/// Sign of a rigid cascade: factor signs times the transports the flavor
/// does not dispense with.
pub fn cascade_sign(sys: &MBSystem, pa: &BasePointAssignment, c: &Cascade) -> Sign {
    let mut sign = PLUS;
    for f in &c.factors {
        sign *= f.sign;
    }
    let k = c.factors.len();
    if c.from.decoration == Decoration::Hat {
        sign *= transport_sign(sys.ls(c.items[0]), pa.point(c.items[0]), &c.factors[0].e_plus);
    }
    for i in 0..k.saturating_sub(1) {
        let mid = c.items[i + 1];
        sign *= transport_sign(sys.ls(mid), &c.factors[i].e_minus, &c.factors[i + 1].e_plus);
    }
    if c.to.decoration == Decoration::Check {
        sign *= transport_sign(sys.ls(c.items[k]), &c.factors[k - 1].e_minus, pa.point(c.items[k]));
    }
    sign
}

/// Same-item differential coefficient: `< d hat(x), check(x) >` is 0 for a
/// trivial local system and -2 for a nontrivial one; all other same-item
/// coefficients vanish.
pub fn self_term(sys: &MBSystem, x: usize) -> i64 {
    if sys.ls(x).is_trivial() {
        0
    } else {
        -2
    }
}

/// Assemble the integer cascade differential. Requires structural
/// validation and a generic base point assignment.
pub fn differential(sys: &MBSystem, pa: &BasePointAssignment) -> Result<CascadeChainComplex, Error> {
    differential_checked(sys, pa, true)
}

/// As `differential`, optionally skipping the precondition re-validation
/// (used on glued objects whose validity is established by construction).
pub fn differential_unvalidated(sys: &MBSystem, pa: &BasePointAssignment) -> Result<CascadeChainComplex, Error> {
    differential_checked(sys, pa, false)
}

fn differential_checked(sys: &MBSystem, pa: &BasePointAssignment, validate: bool) -> Result<CascadeChainComplex, Error> {
    if validate {
        let structural = validate_structural(sys);
        if !structural.passed() {
            return Err(Error::NotValidated(format!("{structural}")));
        }
        let genericity = validate_genericity(sys, pa);
        if !genericity.passed() {
            return Err(Error::NotGeneric(format!("{genericity}")));
        }
    }
    let n = sys.item_count();
    let mut generators = Vec::with_capacity(2 * n);
    for x in 0..n {
        generators.push(CascadeGenerator::check(x));
        generators.push(CascadeGenerator::hat(x));
    }
    let gradings: Vec<u8> = generators.iter().map(|g| generator_grading(sys, g)).collect();
    let labels: Vec<String> = generators.iter().map(|g| generator_label(sys, g)).collect();
    let mut d = IntMatrix::zero(2 * n, 2 * n);
    for (cj, gfrom) in generators.iter().enumerate() {
        for (ri, gto) in generators.iter().enumerate() {
            let coeff: i64 = if gfrom.item == gto.item {
                if gfrom.decoration == Decoration::Hat && gto.decoration == Decoration::Check {
                    self_term(sys, gfrom.item)
                } else {
                    0
                }
            } else {
                let cascades = enumerate_cascades(sys, pa, *gfrom, *gto)?;
                cascades.iter().map(|c| cascade_sign(sys, pa, c).i64()).sum()
            };
            if coeff != 0 {
                if gradings[cj] == gradings[ri] {
                    return Err(Error::ParityViolation(format!(
                        "<d {}, {}> = {} between equal parities",
                        labels[cj], labels[ri], coeff
                    )));
                }
                d[(ri, cj)] = BigInt::from(coeff);
            }
        }
    }
    Ok(CascadeChainComplex { generators, gradings, differential: d, labels })
}

/// Check that the differential squares to zero, reporting each nonzero
/// entry of the square with its generator pair. A pass is necessary but
/// not sufficient for valid data: compactification violations can leave
/// the square zero while other identities fail.
pub fn verify_d_squared(ccx: &CascadeChainComplex) -> ValidationReport {
    let mut report = ValidationReport::new();
    let sq = ccx.differential.mul(&ccx.differential);
    for i in 0..sq.rows {
        for j in 0..sq.cols {
            if !num::Zero::is_zero(&sq[(i, j)]) {
                report.push(
                    "DSquared",
                    format!("({}, {})", ccx.labels[j], ccx.labels[i]),
                    format!("<d^2 {}, {}> = {}", ccx.labels[j], ccx.labels[i], sq[(i, j)]),
                );
            }
        }
    }
    report
}

/// Two-periodic homology of a cascade chain complex.
pub fn cascade_homology(ccx: &CascadeChainComplex) -> Result<(crate::homology::HomologyGroup, crate::homology::HomologyGroup), Error> {
    let d_eo = ccx.parity_block(0);
    let d_oe = ccx.parity_block(1);
    crate::homology::two_periodic_homology(&d_eo, &d_oe)
}

/// The tau involution as a matrix: +1 on check generators, -1 on hats.
pub fn tau_matrix(ccx: &CascadeChainComplex) -> IntMatrix {
    let n = ccx.generators.len();
    let mut t = IntMatrix::zero(n, n);
    for (i, g) in ccx.generators.iter().enumerate() {
        t[(i, i)] = match g.decoration {
            Decoration::Check => BigInt::from(1),
            Decoration::Hat => BigInt::from(-1),
        };
    }
    t
}

/// Convert a rational lift to a circle point.
pub fn lift_to_point(l: &Rat) -> CirclePoint {
    CirclePoint::new(l.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::{rat, LocalSystem, MINUS};
    use crate::system::{choose_basepoints, Item};

    fn item(label: &str, grading: u8, twisted: bool) -> Item {
        Item {
            label: label.into(),
            grading,
            local_system: if twisted { LocalSystem::TWISTED } else { LocalSystem::TRIVIAL },
            action: None,
        }
    }

    #[test]
    fn self_terms() {
        let sys = MBSystem::new(vec![item("triv", 0, false), item("tw", 0, true)]);
        assert_eq!(self_term(&sys, 0), 0);
        assert_eq!(self_term(&sys, 1), -2);
    }

    #[test]
    fn single_circle_differentials() {
        for (twisted, expect) in [(false, 0i64), (true, -2i64)] {
            let sys = MBSystem::new(vec![item("x", 0, twisted)]);
            let pa = choose_basepoints(&sys, 0).unwrap();
            let ccx = differential(&sys, &pa).unwrap();
            let hat = ccx.generator_index(&CascadeGenerator::hat(0));
            let check = ccx.generator_index(&CascadeGenerator::check(0));
            assert_eq!(ccx.differential[(check, hat)], BigInt::from(expect));
            // <d check, hat> = 0 always.
            assert_eq!(ccx.differential[(hat, check)], BigInt::from(0));
            assert!(verify_d_squared(&ccx).passed());
        }
    }

    fn chain3(twisted_mid: bool) -> MBSystem {
        let mut sys = MBSystem::new(vec![
            item("x2", 0, false),
            item("x1", 0, twisted_mid),
            item("x0", 0, false),
        ]);
        let (em, ep2) = if twisted_mid {
            // Twisted variant: the middle arc crosses the cut.
            (rat(2, 3), rat(1, 3))
        } else {
            (rat(1, 3), rat(2, 3))
        };
        sys.add_moduli(
            0,
            1,
            0,
            SignedCellComplex::of_cells(0, vec![Cell::point(PLUS, rat(1, 4), em)]),
        );
        sys.add_moduli(
            1,
            2,
            0,
            SignedCellComplex::of_cells(0, vec![Cell::point(PLUS, ep2, rat(1, 4))]),
        );
        sys
    }

    fn pa_for(points: &[(i64, i64)]) -> BasePointAssignment {
        BasePointAssignment {
            points: points.iter().map(|&(n, d)| CirclePoint::new(rat(n, d))).collect(),
        }
    }

    #[test]
    fn chain3_cascade_counts() {
        // Untwisted: p1 = 1/4 puts (p1, 1/3, 2/3) in positive cyclic order.
        let sys = chain3(false);
        let pa = pa_for(&[(1, 2), (1, 4), (1, 2)]);
        assert!(validate_genericity(&sys, &pa).passed());
        let cs = enumerate_cascades(&sys, &pa, CascadeGenerator::hat(0), CascadeGenerator::check(2)).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cascade_sign(&sys, &pa, &cs[0]), PLUS);
        // Moving p1 into the forbidden arc kills the cascade.
        let pa_bad = pa_for(&[(1, 2), (1, 2), (1, 2)]);
        assert!(validate_genericity(&sys, &pa_bad).passed());
        let cs = enumerate_cascades(&sys, &pa_bad, CascadeGenerator::hat(0), CascadeGenerator::check(2)).unwrap();
        assert!(cs.is_empty());
    }

    #[test]
    fn chain3_twisted_sign_flip() {
        // Twisted middle local system with the connecting arc crossing the
        // cut: the k = 2 cascade sign flips to -1.
        let sys = chain3(true);
        let pa = pa_for(&[(2, 5), (1, 2), (2, 5)]);
        assert!(validate_genericity(&sys, &pa).passed());
        let cs = enumerate_cascades(&sys, &pa, CascadeGenerator::hat(0), CascadeGenerator::check(2)).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cascade_sign(&sys, &pa, &cs[0]), MINUS);
        let ccx = differential(&sys, &pa).unwrap();
        assert!(verify_d_squared(&ccx).passed());
    }

    use crate::cell::SignedCellComplex;
    use crate::circle::PLUS;
    use crate::cell::Cell;
}
