//! Canonical subspaces of `F^t` and enumeration of Grassmannians.
//!
//! A subspace is stored as the nonzero rows of its reduced row-echelon
//! basis, so equality, ordering and hashing are structural.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gf::{checked_pow, enumerate_full_rank, Field, Matrix};
use crate::limits::Limits;
use crate::qcomb;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subspace {
    // Ordering derives from the basis: by dimension first (row count), then
    // entries. Enumeration order within a Grassmannian is separate, see
    // `enumerate_grassmannian`.
    basis: Matrix,
}

impl Subspace {
    pub fn trivial(field: Field, ambient: usize) -> Self {
        Subspace {
            basis: Matrix::zeros(field, 0, ambient),
        }
    }

    pub fn full(field: Field, ambient: usize) -> Self {
        Subspace {
            basis: Matrix::identity(field, ambient),
        }
    }

    /// Span of the rows of `a`.
    pub fn span_rows(a: &Matrix) -> Self {
        let r = a.rref();
        Subspace {
            basis: r.matrix.row_block(0, r.rank),
        }
    }

    /// Span of the columns of `a`, as a subspace of `F^{rows(a)}`.
    pub fn span_columns(a: &Matrix) -> Self {
        Subspace::span_rows(&a.transpose())
    }

    pub fn field(&self) -> Field {
        self.basis.field()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    /// RREF basis, one basis vector per row. This is the canonical row-space
    /// representative `D_U`: full row rank with row space exactly `self`.
    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    /// `true` iff `other` is a subspace of `self`.
    pub fn contains(&self, other: &Subspace) -> Result<bool> {
        if self.ambient_dim() != other.ambient_dim() || self.field() != other.field() {
            return Err(Error::Dimension(format!(
                "subspaces of F^{} and F^{} are not comparable",
                self.ambient_dim(),
                other.ambient_dim()
            )));
        }
        if other.dim() > self.dim() {
            return Ok(false);
        }
        if other.dim() == 0 {
            return Ok(true);
        }
        Ok(self.basis.vstack(&other.basis)?.rank() == self.dim())
    }

    /// `rows x t` matrix whose row space is `self`: basis rows first, zero
    /// rows appended.
    pub fn row_representative(&self, rows: usize) -> Result<Matrix> {
        if self.dim() > rows {
            return Err(Error::Dimension(format!(
                "a {}-dimensional subspace needs at least {} rows",
                self.dim(),
                self.dim()
            )));
        }
        self.basis.vstack(&Matrix::zeros(
            self.field(),
            rows - self.dim(),
            self.ambient_dim(),
        ))
    }

    /// `t x m` matrix whose column space is `self`: basis vectors as the
    /// leading columns, zero columns appended.
    pub fn representative_matrix(&self, m: usize) -> Result<Matrix> {
        Ok(self.row_representative(m)?.transpose())
    }

    pub fn to_nested(&self) -> Vec<Vec<u32>> {
        self.basis.to_nested()
    }
}

impl fmt::Debug for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "<{:?} in F^{}>",
            self.basis.to_nested(),
            self.ambient_dim()
        )
    }
}

impl fmt::Display for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dim() == 0 {
            return write!(f, "<0>");
        }
        let rows: Vec<String> = (0..self.dim())
            .map(|i| {
                let v: Vec<String> = self.basis.row(i).iter().map(u32::to_string).collect();
                format!("({})", v.join(","))
            })
            .collect();
        write!(f, "<{}>", rows.join(","))
    }
}

/// Wire form used in reports: `{ambient_dim, basis}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubspaceRecord {
    pub ambient_dim: usize,
    pub basis: Vec<Vec<u32>>,
}

impl From<&Subspace> for SubspaceRecord {
    fn from(s: &Subspace) -> Self {
        SubspaceRecord {
            ambient_dim: s.ambient_dim(),
            basis: s.to_nested(),
        }
    }
}

impl Serialize for Subspace {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        SubspaceRecord::from(self).serialize(serializer)
    }
}

/// All `r`-dimensional subspaces of `F^t`, each exactly once.
///
/// Generated directly from RREF profiles: pivot patterns in lexicographic
/// order, then the free entries (row-major, to the right of each pivot and
/// outside pivot columns) in lexicographic order.
pub fn enumerate_grassmannian(
    r: usize,
    t: usize,
    field: Field,
    limits: &Limits,
) -> Result<Vec<Subspace>> {
    if r > t {
        return Ok(Vec::new());
    }
    let count = qcomb::gaussian_binomial(t, r, field.q());
    if count > limits.enumeration.into() {
        return Err(Error::budget(
            "Grassmannian enumeration",
            count,
            limits.enumeration,
        ));
    }
    let mut out = Vec::new();
    let mut pivots: Vec<usize> = (0..r).collect();
    loop {
        let free: Vec<(usize, usize)> = (0..r)
            .flat_map(|i| {
                let pivots = &pivots;
                (pivots[i] + 1..t)
                    .filter(move |c| !pivots.contains(c))
                    .map(move |c| (i, c))
            })
            .collect();
        let fills = checked_pow(field.q(), free.len()).expect("bounded by the Gaussian binomial");
        for fill in 0..fills {
            let values = Matrix::from_index(field, 1, free.len(), fill);
            let mut data = vec![0u32; r * t];
            for (i, &p) in pivots.iter().enumerate() {
                data[i * t + p] = 1;
            }
            for (k, &(i, c)) in free.iter().enumerate() {
                data[i * t + c] = values.data()[k];
            }
            out.push(Subspace {
                basis: Matrix::new(field, r, t, data)?,
            });
        }
        if !next_combination(&mut pivots, t) {
            break;
        }
    }
    Ok(out)
}

/// Advances `c` to the next `k`-subset of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// `Pj(m, F^t)`: all subspaces of dimension at most `m`, by increasing
/// dimension.
pub fn enumerate_projective(
    m: usize,
    t: usize,
    field: Field,
    limits: &Limits,
) -> Result<Vec<Subspace>> {
    let total: num_bigint::BigUint = (0..=m.min(t))
        .map(|r| qcomb::gaussian_binomial(t, r, field.q()))
        .sum();
    if total > limits.enumeration.into() {
        return Err(Error::budget(
            "projective-space enumeration",
            total,
            limits.enumeration,
        ));
    }
    let mut out = Vec::new();
    for r in 0..=m.min(t) {
        out.extend(enumerate_grassmannian(r, t, field, limits)?);
    }
    Ok(out)
}

/// Every `t x m` matrix with column space exactly `u`, realized as
/// `B * D` for the canonical basis matrix `B` and every full-row-rank
/// `dim(u) x m` matrix `D`.
pub fn matrices_with_column_space(u: &Subspace, m: usize, limits: &Limits) -> Result<Vec<Matrix>> {
    if u.dim() > m {
        return Err(Error::Dimension(format!(
            "a {}-dimensional column space needs at least {} columns, got {m}",
            u.dim(),
            u.dim()
        )));
    }
    let b = u.basis().transpose();
    enumerate_full_rank(m, u.dim(), u.field(), limits)?
        .map(|d| b.mul(&d.transpose()))
        .collect()
}
