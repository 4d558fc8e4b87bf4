//! Exact integer linear algebra: Smith normal form and homology of
//! 2-periodic chain complexes.

use crate::error::Error;
use num::{BigInt, One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Dense integer matrix with arbitrary-precision entries, row major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<BigInt>,
}

impl IntMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        IntMatrix { rows, cols, data: vec![BigInt::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = IntMatrix::zero(n, n);
        for i in 0..n {
            m[(i, i)] = BigInt::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<i64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut m = IntMatrix::zero(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = BigInt::from(*v);
            }
        }
        m
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    pub fn transpose(&self) -> IntMatrix {
        let mut t = IntMatrix::zero(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.rows, "shape mismatch in matrix product");
        let mut out = IntMatrix::zero(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                if self[(i, k)].is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let add = &self[(i, k)] * &other[(k, j)];
                    out[(i, j)] += add;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= b;
        }
        out
    }

    pub fn neg(&self) -> IntMatrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a = -a.clone();
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<BigInt> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn mul_vec(&self, v: &[BigInt]) -> Vec<BigInt> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| &self[(i, j)] * &v[j]).sum())
            .collect()
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn det(&self) -> BigInt {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        if n == 0 {
            return BigInt::one();
        }
        let mut m: Vec<Vec<BigInt>> = (0..n).map(|i| (0..n).map(|j| self[(i, j)].clone()).collect()).collect();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if m[k][k].is_zero() {
                let swap = (k + 1..n).find(|&i| !m[i][k].is_zero());
                match swap {
                    Some(i) => {
                        m.swap(k, i);
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let num = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                    m[i][j] = num / &prev;
                }
                m[i][k] = BigInt::zero();
            }
            prev = m[k][k].clone();
        }
        sign * m[n - 1][n - 1].clone()
    }

    /// Rank over the rationals, computed fraction-free.
    pub fn rank(&self) -> usize {
        let mut m: Vec<Vec<BigInt>> = (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].clone()).collect())
            .collect();
        let mut rank = 0;
        let mut row = 0;
        for col in 0..self.cols {
            let pivot = (row..self.rows).find(|&i| !m[i][col].is_zero());
            let Some(p) = pivot else { continue };
            m.swap(row, p);
            for i in 0..self.rows {
                if i != row && !m[i][col].is_zero() {
                    let (a, b) = (m[row][col].clone(), m[i][col].clone());
                    for j in 0..self.cols {
                        m[i][j] = &m[i][j] * &a - &m[row][j] * &b;
                    }
                }
            }
            row += 1;
            rank += 1;
            if row == self.rows {
                break;
            }
        }
        rank
    }

    /// Rank of the matrix reduced modulo a prime.
    pub fn rank_mod(&self, p: u64) -> usize {
        let p = p as i128;
        let mut m: Vec<Vec<i128>> = (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| {
                        let v = &self[(i, j)] % p;
                        let v: i128 = num::ToPrimitive::to_i128(&v).unwrap();
                        v.rem_euclid(p)
                    })
                    .collect()
            })
            .collect();
        fn inv_mod(a: i128, p: i128) -> i128 {
            // Fermat: p prime.
            let mut base = a.rem_euclid(p);
            let mut e = p - 2;
            let mut acc = 1i128;
            while e > 0 {
                if e & 1 == 1 {
                    acc = acc * base % p;
                }
                base = base * base % p;
                e >>= 1;
            }
            acc
        }
        let mut rank = 0;
        let mut row = 0;
        for col in 0..self.cols {
            let pivot = (row..self.rows).find(|&i| m[i][col] != 0);
            let Some(piv) = pivot else { continue };
            m.swap(row, piv);
            let inv = inv_mod(m[row][col], p);
            for j in col..self.cols {
                m[row][j] = m[row][j] * inv % p;
            }
            for i in 0..self.rows {
                if i != row && m[i][col] != 0 {
                    let f = m[i][col];
                    for j in col..self.cols {
                        m[i][j] = (m[i][j] - f * m[row][j]).rem_euclid(p);
                    }
                }
            }
            row += 1;
            rank += 1;
            if row == self.rows {
                break;
            }
        }
        rank
    }
}

impl std::ops::Index<(usize, usize)> for IntMatrix {
    type Output = BigInt;
    fn index(&self, (i, j): (usize, usize)) -> &BigInt {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IntMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut BigInt {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Display for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self[(i, j)].to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Smith normal form decomposition `U * A * V = D`.
pub struct Snf {
    pub u: IntMatrix,
    pub d: IntMatrix,
    pub v: IntMatrix,
    /// Inverses tracked during the reduction.
    pub u_inv: IntMatrix,
    pub v_inv: IntMatrix,
    pub rank: usize,
}

/// Compute the Smith normal form: returns `(U, D, V)` with `U A V = D`,
/// `U, V` unimodular, and the diagonal of `D` nonnegative with each entry
/// dividing the next.
pub fn smith_normal_form(a: &IntMatrix) -> (IntMatrix, IntMatrix, IntMatrix) {
    let s = snf(a);
    (s.u, s.d, s.v)
}

pub fn snf(a: &IntMatrix) -> Snf {
    let (rows, cols) = (a.rows, a.cols);
    let mut d = a.clone();
    let mut u = IntMatrix::identity(rows);
    let mut u_inv = IntMatrix::identity(rows);
    let mut v = IntMatrix::identity(cols);
    let mut v_inv = IntMatrix::identity(cols);

    // Row ops apply to u on the left (and the inverse op to u_inv on the
    // right); column ops apply to v on the right (inverse to v_inv left).
    fn swap_rows(m: &mut IntMatrix, i: usize, j: usize) {
        for c in 0..m.cols {
            let t = m[(i, c)].clone();
            m[(i, c)] = m[(j, c)].clone();
            m[(j, c)] = t;
        }
    }
    fn swap_cols(m: &mut IntMatrix, i: usize, j: usize) {
        for r in 0..m.rows {
            let t = m[(r, i)].clone();
            m[(r, i)] = m[(r, j)].clone();
            m[(r, j)] = t;
        }
    }
    fn add_row(m: &mut IntMatrix, dst: usize, src: usize, f: &BigInt) {
        for c in 0..m.cols {
            let t = &m[(src, c)] * f;
            m[(dst, c)] += t;
        }
    }
    fn add_col(m: &mut IntMatrix, dst: usize, src: usize, f: &BigInt) {
        for r in 0..m.rows {
            let t = &m[(r, src)] * f;
            m[(r, dst)] += t;
        }
    }
    fn negate_row(m: &mut IntMatrix, i: usize) {
        for c in 0..m.cols {
            let t = -m[(i, c)].clone();
            m[(i, c)] = t;
        }
    }
    fn negate_col(m: &mut IntMatrix, j: usize) {
        for r in 0..m.rows {
            let t = -m[(r, j)].clone();
            m[(r, j)] = t;
        }
    }

    let n = rows.min(cols);
    let mut t = 0;
    while t < n {
        // Find the pivot of least absolute value in the remaining block.
        let mut pivot: Option<(usize, usize)> = None;
        for i in t..rows {
            for j in t..cols {
                if d[(i, j)].is_zero() {
                    continue;
                }
                match &pivot {
                    None => pivot = Some((i, j)),
                    Some((pi, pj)) => {
                        if d[(i, j)].abs() < d[(*pi, *pj)].abs() {
                            pivot = Some((i, j));
                        }
                    }
                }
            }
        }
        let Some((pi, pj)) = pivot else { break };
        if pi != t {
            swap_rows(&mut d, pi, t);
            swap_rows(&mut u, pi, t);
            swap_cols(&mut u_inv, pi, t);
        }
        if pj != t {
            swap_cols(&mut d, pj, t);
            swap_cols(&mut v, pj, t);
            swap_rows(&mut v_inv, pj, t);
        }
        // Clear row and column t by Euclidean steps; repeat while remainders
        // appear.
        let mut dirty = true;
        while dirty {
            dirty = false;
            for i in t + 1..rows {
                if d[(i, t)].is_zero() {
                    continue;
                }
                let q = div_round(&d[(i, t)], &d[(t, t)]);
                if !q.is_zero() {
                    add_row(&mut d, i, t, &-q.clone());
                    add_row(&mut u, i, t, &-q.clone());
                    add_col(&mut u_inv, t, i, &q);
                }
                if !d[(i, t)].is_zero() {
                    // Remainder smaller than pivot: swap up and restart.
                    swap_rows(&mut d, i, t);
                    swap_rows(&mut u, i, t);
                    swap_cols(&mut u_inv, i, t);
                    dirty = true;
                }
            }
            for j in t + 1..cols {
                if d[(t, j)].is_zero() {
                    continue;
                }
                let q = div_round(&d[(t, j)], &d[(t, t)]);
                if !q.is_zero() {
                    add_col(&mut d, j, t, &-q.clone());
                    add_col(&mut v, j, t, &-q.clone());
                    add_row(&mut v_inv, t, j, &q);
                }
                if !d[(t, j)].is_zero() {
                    swap_cols(&mut d, j, t);
                    swap_cols(&mut v, j, t);
                    swap_rows(&mut v_inv, j, t);
                    dirty = true;
                }
            }
        }
        // Divisibility fix-up: the pivot must divide every remaining entry.
        let mut fixed = true;
        'outer: for i in t + 1..rows {
            for j in t + 1..cols {
                if !(&d[(i, j)] % &d[(t, t)]).is_zero() {
                    // Fold row i into row t and restart this pivot.
                    add_row(&mut d, t, i, &BigInt::one());
                    add_row(&mut u, t, i, &BigInt::one());
                    add_col(&mut u_inv, i, t, &-BigInt::one());
                    fixed = false;
                    break 'outer;
                }
            }
        }
        if !fixed {
            continue;
        }
        if d[(t, t)].is_negative() {
            negate_row(&mut d, t);
            negate_row(&mut u, t);
            negate_col(&mut u_inv, t);
        }
        t += 1;
    }
    let rank = (0..n).take_while(|&i| !d[(i, i)].is_zero()).count();
    Snf { u, d, v, u_inv, v_inv, rank }
}

/// Symmetric rounded division: quotient q minimizing |a - q b|.
fn div_round(a: &BigInt, b: &BigInt) -> BigInt {
    let (q, r) = num::Integer::div_rem(a, b);
    let two_r: BigInt = &r * BigInt::from(2);
    if two_r.abs() > b.abs() {
        if (r.is_negative()) == (b.is_negative()) {
            q + 1
        } else {
            q - 1
        }
    } else {
        q
    }
}

/// A finitely generated abelian group: free rank plus torsion coefficients
/// in a divisibility chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomologyGroup {
    pub free_rank: usize,
    pub torsion: Vec<BigInt>,
}

impl HomologyGroup {
    pub fn free(rank: usize) -> Self {
        HomologyGroup { free_rank: rank, torsion: vec![] }
    }

    pub fn is_trivial(&self) -> bool {
        self.free_rank == 0 && self.torsion.is_empty()
    }
}

impl fmt::Display for HomologyGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        match self.free_rank {
            0 => {}
            1 => parts.push("Z".to_string()),
            k => parts.push(format!("Z^{k}")),
        }
        for t in &self.torsion {
            parts.push(format!("Z/{t}"));
        }
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

/// Kernel basis of a matrix as columns, from the SNF.
pub fn kernel_basis(a: &IntMatrix) -> Vec<Vec<BigInt>> {
    let s = snf(a);
    (s.rank..a.cols).map(|j| s.v.column(j)).collect()
}

/// Is `v` in the column span of `a` over the integers?
pub fn in_column_span(a: &IntMatrix, v: &[BigInt]) -> bool {
    let s = snf(a);
    let w = s.u.mul_vec(v);
    for (i, wi) in w.iter().enumerate() {
        if i < s.rank {
            if !(wi % &s.d[(i, i)]).is_zero() {
                return false;
            }
        } else if !wi.is_zero() {
            return false;
        }
    }
    true
}

/// Homology of a 2-periodic complex: `H_even = ker(d_eo)/im(d_oe)` and
/// symmetrically. Checks that both composites vanish.
pub fn two_periodic_homology(
    d_even_to_odd: &IntMatrix,
    d_odd_to_even: &IntMatrix,
) -> Result<(HomologyGroup, HomologyGroup), Error> {
    if !d_even_to_odd.mul(d_odd_to_even).is_zero() || !d_odd_to_even.mul(d_even_to_odd).is_zero() {
        return Err(Error::NotAComplex("a composite of the two differentials is nonzero".into()));
    }
    Ok((
        homology_of(d_even_to_odd, d_odd_to_even),
        homology_of(d_odd_to_even, d_even_to_odd),
    ))
}

/// `ker(d_out) / im(d_in)` for consecutive differentials.
pub fn homology_of(d_out: &IntMatrix, d_in: &IntMatrix) -> HomologyGroup {
    let s_out = snf(d_out);
    let k = d_out.cols - s_out.rank; // kernel rank
    // Kernel coordinates: x in ker(d_out) iff (v_inv x) has zero first
    // `rank` entries; kernel coords are the remaining entries.
    let s_in = snf(d_in);
    // Image generators: columns of d_in * (cols of v up to rank) span the
    // image; equivalently u_inv * d (first rank columns).
    let mut w = IntMatrix::zero(k, s_in.rank);
    for j in 0..s_in.rank {
        let img = s_in.u_inv.column(j);
        let img: Vec<BigInt> = img.iter().map(|x| x * &s_in.d[(j, j)]).collect();
        // Express in kernel coordinates.
        let coords = s_out.v_inv.mul_vec(&img);
        for (i, c) in coords.iter().enumerate() {
            if i < s_out.rank {
                debug_assert!(c.is_zero(), "image vector not in kernel");
            } else {
                w[(i - s_out.rank, j)] = c.clone();
            }
        }
    }
    let sw = snf(&w);
    let mut torsion: Vec<BigInt> = Vec::new();
    for i in 0..sw.rank {
        let d = sw.d[(i, i)].clone();
        if d > BigInt::one() {
            torsion.push(d);
        }
    }
    HomologyGroup { free_rank: k - sw.rank, torsion }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_contract(a: &IntMatrix) {
        let (u, d, v) = smith_normal_form(a);
        assert_eq!(u.mul(a).mul(&v), d, "U A V != D");
        assert_eq!(u.det().abs(), BigInt::one(), "U not unimodular");
        assert_eq!(v.det().abs(), BigInt::one(), "V not unimodular");
        let n = a.rows.min(a.cols);
        for i in 0..n {
            assert!(!d[(i, i)].is_negative());
            if i + 1 < n && !d[(i + 1, i + 1)].is_zero() {
                assert!(!d[(i, i)].is_zero(), "zero before nonzero on diagonal");
            }
            if i + 1 < n && !d[(i, i)].is_zero() && !d[(i + 1, i + 1)].is_zero() {
                assert!((&d[(i + 1, i + 1)] % &d[(i, i)]).is_zero(), "divisibility chain broken");
            }
            for j in 0..n {
                if i != j {
                    assert!(d[(i, j)].is_zero());
                }
            }
        }
    }

    #[test]
    fn snf_examples() {
        let a = IntMatrix::from_rows(vec![vec![2]]);
        let (_, d, _) = smith_normal_form(&a);
        assert_eq!(d[(0, 0)], BigInt::from(2));
        check_contract(&a);

        let z = IntMatrix::zero(2, 2);
        let (_, d, _) = smith_normal_form(&z);
        assert!(d.is_zero());

        // d1 = gcd of entries = 2, d1 d2 = |det| = 8.
        let a = IntMatrix::from_rows(vec![vec![2, 4], vec![6, 8]]);
        let (_, d, _) = smith_normal_form(&a);
        assert_eq!(d[(0, 0)], BigInt::from(2));
        assert_eq!(d[(1, 1)], BigInt::from(4));
        check_contract(&a);
    }

    #[test]
    fn snf_contract_small_sweep() {
        // Deterministic pseudo-random small matrices.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..60 {
            let r = (next() % 5 + 1) as usize;
            let c = (next() % 5 + 1) as usize;
            let mut m = IntMatrix::zero(r, c);
            for i in 0..r {
                for j in 0..c {
                    m[(i, j)] = BigInt::from((next() % 21) as i64 - 10);
                }
            }
            check_contract(&m);
            let rank_q = m.rank();
            let s = snf(&m);
            assert_eq!(rank_q, s.rank, "rank mismatch vs SNF");
        }
    }

    #[test]
    fn homology_examples() {
        // Zero differentials on ranks (2,2): free of rank 2 on both sides.
        let z = IntMatrix::zero(2, 2);
        let (he, ho) = two_periodic_homology(&z, &z).unwrap();
        assert_eq!(he, HomologyGroup::free(2));
        assert_eq!(ho, HomologyGroup::free(2));

        // Single nontrivial circle: hat (odd) -> -2 check (even).
        // d_odd_to_even = [-2], d_even_to_odd = 0.
        let d_eo = IntMatrix::zero(1, 1);
        let d_oe = IntMatrix::from_rows(vec![vec![-2]]);
        let (he, ho) = two_periodic_homology(&d_eo, &d_oe).unwrap();
        assert_eq!(he, HomologyGroup { free_rank: 0, torsion: vec![BigInt::from(2)] });
        assert_eq!(ho, HomologyGroup::free(0));

        // Klein-shaped complex: C_even = <top_hat, bot_check>,
        // C_odd = <top_check, bot_hat>, d_even_to_odd(top_hat) = 2 bot_hat.
        // Hand SNF: H_even = Z, H_odd = Z + Z/2.
        let d_eo = IntMatrix::from_rows(vec![vec![0, 0], vec![2, 0]]);
        let d_oe = IntMatrix::zero(2, 2);
        let (he, ho) = two_periodic_homology(&d_eo, &d_oe).unwrap();
        assert_eq!(he, HomologyGroup::free(1));
        assert_eq!(ho, HomologyGroup { free_rank: 1, torsion: vec![BigInt::from(2)] });

        // Composite check.
        let bad = IntMatrix::from_rows(vec![vec![1]]);
        assert!(two_periodic_homology(&bad, &bad).is_err());
    }

    #[test]
    fn homology_invariant_under_unimodular_change() {
        // Conjugating both differentials by unimodular matrices preserves
        // (free rank, torsion).
        let d_eo = IntMatrix::from_rows(vec![vec![2, 0], vec![0, 6]]);
        let d_oe = IntMatrix::zero(2, 2);
        let (he0, ho0) = two_periodic_homology(&d_eo, &d_oe).unwrap();
        let p = IntMatrix::from_rows(vec![vec![1, 1], vec![0, 1]]);
        let q = IntMatrix::from_rows(vec![vec![1, 0], vec![3, 1]]);
        // New even basis via q, odd via p: d' = p d q, and the incoming
        // differential stays zero.
        let d2 = p.mul(&d_eo).mul(&q);
        let (he1, ho1) = two_periodic_homology(&d2, &IntMatrix::zero(2, 2)).unwrap();
        assert_eq!(he0, he1);
        assert_eq!(ho0, ho1);
    }

    #[test]
    fn display_forms() {
        assert_eq!(HomologyGroup::free(2).to_string(), "Z^2");
        assert_eq!(HomologyGroup::free(0).to_string(), "0");
        assert_eq!(
            HomologyGroup { free_rank: 1, torsion: vec![BigInt::from(2)] }.to_string(),
            "Z + Z/2"
        );
    }
}
