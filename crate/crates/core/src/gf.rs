//! Arithmetic and dense linear algebra over prime fields `F_q`.
//!
//! Elements are canonical residues in `[0, q)`. Matrices are row-major and
//! immutable once built; every operation returns a fresh value.

use std::fmt;

use crate::error::{Error, Result};
use crate::limits::Limits;
use crate::qcomb;

/// A prime field `F_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Field {
    q: u32,
}

impl Field {
    /// Largest supported order; products of two residues must fit in `u64`.
    pub const MAX_ORDER: u32 = 1 << 16;

    pub fn new(q: u32) -> Result<Self> {
        if !(2..=Self::MAX_ORDER).contains(&q) || !is_prime(q) {
            return Err(Error::NotPrime(q as u64));
        }
        Ok(Field { q })
    }

    #[inline]
    pub fn q(self) -> u32 {
        self.q
    }

    #[inline]
    pub fn add(self, a: u32, b: u32) -> u32 {
        ((a as u64 + b as u64) % self.q as u64) as u32
    }

    #[inline]
    pub fn sub(self, a: u32, b: u32) -> u32 {
        ((a as u64 + self.q as u64 - b as u64) % self.q as u64) as u32
    }

    #[inline]
    pub fn mul(self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.q as u64) as u32
    }

    #[inline]
    pub fn neg(self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    /// Multiplicative inverse by Fermat's little theorem. `a` must be nonzero.
    pub fn inv(self, a: u32) -> u32 {
        debug_assert!(!a.is_multiple_of(self.q), "zero has no inverse");
        let mut base = a as u64 % self.q as u64;
        let mut exp = self.q as u64 - 2;
        let mut acc = 1u64;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % self.q as u64;
            }
            base = base * base % self.q as u64;
            exp >>= 1;
        }
        acc as u32
    }
}

fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// `q^e` as a `u64`, or `None` on overflow.
pub(crate) fn checked_pow(q: u32, e: usize) -> Option<u64> {
    let mut acc: u64 = 1;
    for _ in 0..e {
        acc = acc.checked_mul(q as u64)?;
    }
    Some(acc)
}

/// Dense matrix over a prime field, stored row-major.
///
/// The derived ordering compares field, shape, then entries lexicographically
/// in row-major order; all enumeration in this crate follows it.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Matrix {
    field: Field,
    rows: usize,
    cols: usize,
    data: Vec<u32>,
}

/// Reduced row-echelon form together with rank and pivot columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rref {
    pub matrix: Matrix,
    pub rank: usize,
    pub pivots: Vec<usize>,
}

impl Matrix {
    pub fn new(field: Field, rows: usize, cols: usize, data: Vec<u32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(&bad) = data.iter().find(|&&e| e >= field.q) {
            return Err(Error::EntryOutOfRange {
                value: bad as u64,
                q: field.q,
            });
        }
        Ok(Matrix {
            field,
            rows,
            cols,
            data,
        })
    }

    /// Builds a matrix from nested rows. An empty slice yields a `0 x cols`
    /// matrix only through [`Matrix::zeros`]; here it gives `0 x 0`.
    pub fn from_rows<R: AsRef<[u32]>>(field: Field, rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::new(field, rows.len(), cols, data)
    }

    pub fn zeros(field: Field, rows: usize, cols: usize) -> Self {
        Matrix {
            field,
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(field: Field, n: usize) -> Self {
        let mut m = Matrix::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    #[inline]
    pub fn field(&self) -> Field {
        self.field
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[u32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&e| e == 0)
    }

    pub fn to_nested(&self) -> Vec<Vec<u32>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    fn check_field(&self, other: &Matrix) -> Result<()> {
        if self.field != other.field {
            return Err(Error::FieldMismatch {
                left: self.field.q,
                right: other.field.q,
            });
        }
        Ok(())
    }

    /// Matrix product `self * other` over the field.
    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        self.check_field(other)?;
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let q = self.field.q as u64;
        let mut data = vec![0u32; self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k] as u64;
                if a == 0 {
                    continue;
                }
                let brow = other.row(k);
                let out = &mut data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out.iter_mut().zip(brow) {
                    *o = ((*o as u64 + a * b as u64) % q) as u32;
                }
            }
        }
        Ok(Matrix {
            field: self.field,
            rows: self.rows,
            cols: other.cols,
            data,
        })
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0u32; self.rows * self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix {
            field: self.field,
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        self.check_field(other)?;
        if self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "cannot stack {} columns on {} columns",
                self.cols, other.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            field: self.field,
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Places `other` to the right of `self`.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        self.check_field(other)?;
        if self.rows != other.rows {
            return Err(Error::Dimension(format!(
                "cannot join {} rows with {} rows",
                self.rows, other.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Matrix {
            field: self.field,
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_block(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            field: self.field,
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Gauss-Jordan elimination. Pivots are normalized to one and cleared
    /// above and below.
    pub fn rref(&self) -> Rref {
        let f = self.field;
        let mut m = self.clone();
        let (rows, cols) = (m.rows, m.cols);
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..cols {
            if r == rows {
                break;
            }
            let Some(p) = (r..rows).find(|&i| m.data[i * cols + c] != 0) else {
                continue;
            };
            if p != r {
                for j in 0..cols {
                    m.data.swap(p * cols + j, r * cols + j);
                }
            }
            let inv = f.inv(m.data[r * cols + c]);
            for j in c..cols {
                m.data[r * cols + j] = f.mul(m.data[r * cols + j], inv);
            }
            for i in 0..rows {
                if i == r {
                    continue;
                }
                let factor = m.data[i * cols + c];
                if factor == 0 {
                    continue;
                }
                for j in c..cols {
                    let v = f.mul(factor, m.data[r * cols + j]);
                    m.data[i * cols + j] = f.sub(m.data[i * cols + j], v);
                }
            }
            pivots.push(c);
            r += 1;
        }
        Rref {
            matrix: m,
            rank: r,
            pivots,
        }
    }

    pub fn rank(&self) -> usize {
        self.rref().rank
    }

    /// Index of this matrix in the row-major lexicographic enumeration of
    /// all matrices of its shape (first entry most significant).
    pub fn to_index(&self) -> u64 {
        let q = self.field.q as u64;
        self.data.iter().fold(0u64, |acc, &e| acc * q + e as u64)
    }

    /// Inverse of [`Matrix::to_index`].
    pub fn from_index(field: Field, rows: usize, cols: usize, mut index: u64) -> Matrix {
        let q = field.q as u64;
        let mut data = vec![0u32; rows * cols];
        for slot in data.iter_mut().rev() {
            *slot = (index % q) as u32;
            index /= q;
        }
        Matrix {
            field,
            rows,
            cols,
            data,
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}{:?}", self.field.q, self.to_nested())
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            let row: Vec<String> = self.row(i).iter().map(u32::to_string).collect();
            write!(f, "{}", row.join(" "))?;
        }
        write!(f, "]")
    }
}

/// Returns the unique `C` with `b * C = a`, written `a / b`.
///
/// `b` must have full column rank and the column space of `a` must lie in
/// that of `b`.
pub fn solve_factor(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.check_field(b)?;
    if a.rows != b.rows {
        return Err(Error::Dimension(format!(
            "dividend has {} rows, divisor has {}",
            a.rows, b.rows
        )));
    }
    let r = b.cols;
    let aug = b.hstack(a)?.rref();
    if aug.pivots.iter().take_while(|&&p| p < r).count() != r {
        return Err(Error::NotFullColumnRank);
    }
    if aug.rank != r {
        return Err(Error::NotInSpan);
    }
    let m = a.cols;
    let mut data = Vec::with_capacity(r * m);
    for i in 0..r {
        data.extend_from_slice(&aug.matrix.row(i)[r..]);
    }
    Ok(Matrix {
        field: a.field,
        rows: r,
        cols: m,
        data,
    })
}

/// Every `rows x cols` matrix in row-major lexicographic order.
pub fn all_matrices(
    field: Field,
    rows: usize,
    cols: usize,
    limits: &Limits,
) -> Result<impl Iterator<Item = Matrix>> {
    let count = checked_pow(field.q, rows * cols)
        .filter(|&c| c <= limits.enumeration)
        .ok_or_else(|| {
            Error::budget(
                "matrix enumeration",
                format!("{}^{}", field.q, rows * cols),
                limits.enumeration,
            )
        })?;
    Ok((0..count).map(move |i| Matrix::from_index(field, rows, cols, i)))
}

/// Every full-column-rank `t x r` matrix, exactly once.
///
/// Columns are chosen left to right; each column ranges over `F^t` in
/// lexicographic order (first coordinate most significant), skipping
/// vectors in the span of the columns already chosen.
pub fn enumerate_full_rank(
    t: usize,
    r: usize,
    field: Field,
    limits: &Limits,
) -> Result<impl Iterator<Item = Matrix>> {
    let count = qcomb::xi(t, r, field.q);
    if count > limits.enumeration.into() {
        return Err(Error::budget(
            "full-rank enumeration",
            count,
            limits.enumeration,
        ));
    }
    let vectors = checked_pow(field.q, t)
        .filter(|&c| c <= limits.enumeration)
        .ok_or_else(|| {
            Error::budget(
                "vector enumeration",
                format!("{}^{t}", field.q),
                limits.enumeration,
            )
        })?;
    let mut out = Vec::new();
    if r <= t {
        let mut cols: Vec<Matrix> = Vec::with_capacity(r);
        extend_full_rank(field, t, r, vectors, &mut cols, &mut out);
    }
    Ok(out.into_iter())
}

fn extend_full_rank(
    field: Field,
    t: usize,
    r: usize,
    vectors: u64,
    chosen: &mut Vec<Matrix>,
    out: &mut Vec<Matrix>,
) {
    if chosen.len() == r {
        // `chosen` holds the columns as 1 x t rows.
        let mut data = vec![0u32; t * r];
        for (j, col) in chosen.iter().enumerate() {
            for i in 0..t {
                data[i * r + j] = col.data[i];
            }
        }
        out.push(Matrix {
            field,
            rows: t,
            cols: r,
            data,
        });
        return;
    }
    let span = if chosen.is_empty() {
        None
    } else {
        let mut stacked = chosen[0].clone();
        for c in &chosen[1..] {
            stacked = stacked.vstack(c).expect("same shape");
        }
        Some(stacked)
    };
    for idx in 1..vectors {
        let v = Matrix::from_index(field, 1, t, idx);
        let independent = match &span {
            None => true,
            Some(s) => s.vstack(&v).expect("same shape").rank() == chosen.len() + 1,
        };
        if independent {
            chosen.push(v);
            extend_full_rank(field, t, r, vectors, chosen, out);
            chosen.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(q: u32) -> Field {
        Field::new(q).unwrap()
    }

    fn m(q: u32, rows: &[&[u32]]) -> Matrix {
        Matrix::from_rows(f(q), rows).unwrap()
    }

    /// Scalar triple loop, kept separate from `Matrix::mul`.
    fn naive_mul(a: &Matrix, b: &Matrix) -> Vec<u32> {
        let q = a.field().q();
        let mut out = Vec::new();
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0u32;
                for k in 0..a.cols() {
                    s = (s + a.get(i, k) * b.get(k, j)) % q;
                }
                out.push(s);
            }
        }
        out
    }

    /// Size of the row span by brute-force enumeration of all combinations.
    fn span_size(a: &Matrix) -> u64 {
        let q = a.field().q() as u64;
        let mut seen = std::collections::BTreeSet::new();
        let combos = q.pow(a.rows() as u32);
        for c in 0..combos {
            let coeffs = Matrix::from_index(a.field(), 1, a.rows(), c);
            seen.insert(coeffs.mul(a).unwrap().data().to_vec());
        }
        seen.len() as u64
    }

    #[test]
    fn field_rejects_composites() {
        assert!(Field::new(4).is_err());
        assert!(Field::new(1).is_err());
        assert!(Field::new(0).is_err());
        assert!(Field::new(7).is_ok());
    }

    #[test]
    fn inverses() {
        for q in [2, 3, 5, 7, 13] {
            let fld = f(q);
            for a in 1..q {
                assert_eq!(fld.mul(a, fld.inv(a)), 1);
            }
        }
    }

    #[test]
    fn entries_must_be_residues() {
        assert!(Matrix::from_rows(f(2), &[[0, 2]]).is_err());
        assert!(Matrix::new(f(3), 2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn products() {
        let h = m(2, &[&[1, 1], &[0, 1]]);
        assert_eq!(Matrix::identity(f(2), 2).mul(&h).unwrap(), h);
        assert!(Matrix::zeros(f(2), 2, 2).mul(&h).unwrap().is_zero());
        let x = m(2, &[&[1, 1]]);
        let g = m(2, &[&[1, 0], &[1, 1]]);
        let y = x.mul(&g).unwrap();
        assert_eq!(y, m(2, &[&[0, 1]]));
        assert_eq!(y.data(), naive_mul(&x, &g).as_slice());
    }

    #[test]
    fn product_errors() {
        let a = Matrix::zeros(f(2), 2, 3);
        assert!(matches!(a.mul(&a), Err(Error::Dimension(_))));
        let b = Matrix::zeros(f(3), 3, 2);
        assert!(matches!(a.mul(&b), Err(Error::FieldMismatch { .. })));
    }

    #[test]
    fn rref_examples() {
        let z = Matrix::zeros(f(2), 2, 3);
        let r = z.rref();
        assert_eq!((r.matrix, r.rank, r.pivots), (z, 0, vec![]));

        let i3 = Matrix::identity(f(3), 3);
        let r = i3.rref();
        assert_eq!((r.matrix, r.rank, r.pivots), (i3, 3, vec![0, 1, 2]));

        let a = m(2, &[&[1, 1], &[1, 1]]);
        let r = a.rref();
        assert_eq!(r.matrix, m(2, &[&[1, 1], &[0, 0]]));
        assert_eq!(r.rank, 1);
        assert_eq!(r.pivots, vec![0]);
        assert_eq!(span_size(&a), 2u64.pow(r.rank as u32));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(Matrix::zeros(f(2), 3, 2).rank(), 0);
        assert_eq!(Matrix::identity(f(5), 4).rank(), 4);
        let a = m(2, &[&[1, 0], &[1, 0]]);
        assert_eq!(a.rank(), 1);
        assert_eq!(span_size(&a), 2);
    }

    #[test]
    fn factor_examples() {
        let b = m(2, &[&[1], &[1]]);
        assert_eq!(solve_factor(&b, &b).unwrap(), Matrix::identity(f(2), 1));
        let zero = Matrix::zeros(f(2), 2, 3);
        assert!(solve_factor(&zero, &b).unwrap().is_zero());
        let a = m(2, &[&[1, 0], &[1, 0]]);
        let c = solve_factor(&a, &b).unwrap();
        assert_eq!(c, m(2, &[&[1, 0]]));
        assert_eq!(b.mul(&c).unwrap(), a);
    }

    #[test]
    fn factor_errors() {
        let b = m(2, &[&[1, 1], &[1, 1]]);
        assert!(matches!(
            solve_factor(&b, &b),
            Err(Error::NotFullColumnRank)
        ));
        let b = m(2, &[&[1], &[0]]);
        let a = m(2, &[&[0], &[1]]);
        assert!(matches!(solve_factor(&a, &b), Err(Error::NotInSpan)));
    }

    #[test]
    fn factor_with_empty_divisor() {
        let b = Matrix::zeros(f(2), 3, 0);
        let c = solve_factor(&Matrix::zeros(f(2), 3, 2), &b).unwrap();
        assert_eq!((c.rows(), c.cols()), (0, 2));
        assert!(solve_factor(&m(2, &[&[1], &[0], &[0]]), &b).is_err());
    }

    #[test]
    fn transposes() {
        let i = Matrix::identity(f(3), 3);
        assert_eq!(i.transpose(), i);
        let row = m(5, &[&[3, 4]]);
        assert_eq!(row.transpose(), m(5, &[&[3], &[4]]));
    }

    #[test]
    fn full_rank_enumeration() {
        let lim = Limits::default();
        let all: Vec<_> = enumerate_full_rank(2, 2, f(2), &lim).unwrap().collect();
        assert_eq!(all.len(), 6);
        let filtered = all_matrices(f(2), 2, 2, &lim)
            .unwrap()
            .filter(|x| x.rank() == 2)
            .count();
        assert_eq!(filtered, 6);
        let empty: Vec<_> = enumerate_full_rank(3, 0, f(2), &lim).unwrap().collect();
        assert_eq!(empty.len(), 1);
        assert_eq!((empty[0].rows(), empty[0].cols()), (3, 0));
        assert_eq!(enumerate_full_rank(3, 1, f(2), &lim).unwrap().count(), 7);
        assert_eq!(enumerate_full_rank(1, 2, f(2), &lim).unwrap().count(), 0);
    }

    #[test]
    fn full_rank_counts_match_xi() {
        let lim = Limits::default();
        for q in [2, 3] {
            for t in 0..=4 {
                for r in 0..=t {
                    if q == 3 && t == 4 && r == 4 {
                        continue; // 24M matrices, over the default budget
                    }
                    let got: Vec<_> = enumerate_full_rank(t, r, f(q), &lim).unwrap().collect();
                    assert_eq!(
                        qcomb::xi(t, r, q),
                        (got.len() as u64).into(),
                        "t={t} r={r} q={q}"
                    );
                    let distinct: std::collections::BTreeSet<_> = got.iter().collect();
                    assert_eq!(distinct.len(), got.len());
                    assert!(got.iter().all(|x| x.rank() == r));
                }
            }
        }
    }

    #[test]
    fn enumeration_is_lexicographic_by_column() {
        let lim = Limits::default();
        let got: Vec<_> = enumerate_full_rank(2, 1, f(2), &lim).unwrap().collect();
        let expected = [
            m(2, &[&[0], &[1]]),
            m(2, &[&[1], &[0]]),
            m(2, &[&[1], &[1]]),
        ];
        assert_eq!(got, expected);
    }

    #[test]
    fn budget_guard() {
        let lim = Limits {
            enumeration: 5,
            ..Limits::default()
        };
        assert!(matches!(
            enumerate_full_rank(2, 2, f(2), &lim),
            Err(Error::Budget { .. })
        ));
        assert!(matches!(
            all_matrices(f(2), 2, 2, &lim),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn index_round_trip() {
        let fld = f(3);
        for i in 0..81 {
            assert_eq!(Matrix::from_index(fld, 2, 2, i).to_index(), i);
        }
    }

    fn arb_matrix(q: u32, rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(0..q, rows * cols)
            .prop_map(move |d| Matrix::new(Field::new(q).unwrap(), rows, cols, d).unwrap())
    }

    fn arb_triple() -> impl Strategy<Value = (Matrix, Matrix, Matrix)> {
        (
            prop_oneof![Just(2u32), Just(3), Just(5)],
            1..4usize,
            1..4usize,
            1..4usize,
            1..4usize,
        )
            .prop_flat_map(|(q, a, b, c, d)| {
                (
                    arb_matrix(q, a, b),
                    arb_matrix(q, b, c),
                    arb_matrix(q, c, d),
                )
            })
    }

    fn arb_any() -> impl Strategy<Value = Matrix> {
        (
            prop_oneof![Just(2u32), Just(3), Just(5)],
            0..5usize,
            0..5usize,
        )
            .prop_flat_map(|(q, r, c)| arb_matrix(q, r, c))
    }

    proptest! {
        #[test]
        fn associativity((a, b, c) in arb_triple()) {
            let left = a.mul(&b).unwrap().mul(&c).unwrap();
            let right = a.mul(&b.mul(&c).unwrap()).unwrap();
            prop_assert_eq!(left, right);
            let prod = a.mul(&b).unwrap();
            prop_assert_eq!(prod.data().to_vec(), naive_mul(&a, &b));
        }

        #[test]
        fn rref_is_idempotent(a in arb_any()) {
            let once = a.rref().matrix;
            prop_assert_eq!(once.rref().matrix, once.clone());
        }

        #[test]
        fn rank_survives_transpose(a in arb_any()) {
            prop_assert_eq!(a.rank(), a.transpose().rank());
            prop_assert_eq!(a.transpose().transpose(), a.clone());
            prop_assert!(a.rank() <= a.rows().min(a.cols()));
        }

        #[test]
        fn rank_matches_span_enumeration(a in (prop_oneof![Just(2u32), Just(3)], 1..4usize, 1..4usize)
            .prop_flat_map(|(q, r, c)| arb_matrix(q, r, c)))
        {
            let q = a.field().q() as u64;
            prop_assert_eq!(span_size(&a), q.pow(a.rank() as u32));
        }

        #[test]
        fn factor_round_trip((a, b) in (prop_oneof![Just(2u32), Just(3), Just(5)], 1..4usize, 0..4usize, 0..4usize)
            .prop_flat_map(|(q, t, r, m)| (arb_matrix(q, t, m), arb_matrix(q, t, r))))
        {
            if let Ok(c) = solve_factor(&a, &b) {
                prop_assert_eq!(b.mul(&c).unwrap(), a);
            }
        }
    }
}
