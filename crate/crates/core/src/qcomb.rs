//! Exact q-analog counting.
//!
//! All counts are big integers; nothing here touches floating point except
//! [`epsilon_term`], which returns a rate in bits.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Pow, Zero};

use crate::error::{Error, Result};
use crate::prob::{log2_ratio, Rational, Weight};

fn pow(q: u32, e: usize) -> BigUint {
    Pow::pow(BigUint::from(q), e)
}

/// Number of full-column-rank `m x r` matrices:
/// `(q^m - 1)(q^m - q)...(q^m - q^{r-1})`, one for `r = 0`, zero for `r > m`.
pub fn xi(m: usize, r: usize, q: u32) -> BigUint {
    if r > m {
        return BigUint::zero();
    }
    let qm = pow(q, m);
    (0..r).fold(BigUint::one(), |acc, i| acc * (&qm - pow(q, i)))
}

/// Probability that a uniformly random `m x r` matrix has full column rank.
pub fn xi_tilde(m: usize, r: usize, q: u32) -> Rational {
    Rational::new(BigInt::from(xi(m, r, q)), BigInt::from(pow(q, m * r)))
}

/// Gaussian binomial `[m r]_q`, the number of `r`-dimensional subspaces of `F^m`.
pub fn gaussian_binomial(m: usize, r: usize, q: u32) -> BigUint {
    if r > m {
        return BigUint::zero();
    }
    xi(m, r, q) / xi(r, r, q)
}

/// Number of `m x n` matrices of rank `r`.
pub fn xi2(m: usize, n: usize, r: usize, q: u32) -> BigUint {
    if r > m.min(n) {
        return BigUint::zero();
    }
    xi(m, r, q) * xi(n, r, q) / xi(r, r, q)
}

/// Number of `r`-dimensional subspaces of `F^t` containing a fixed
/// `s`-dimensional one.
///
/// Evaluated two ways, `[t-s, r-s]_q` and `[t r]_q xi(r,s) / xi(t,s)`; a
/// disagreement is reported as an internal error.
pub fn count_superspaces(t: usize, s: usize, r: usize, q: u32) -> Result<BigUint> {
    if !(s <= r && r <= t) {
        return Err(Error::Precondition(format!(
            "need s <= r <= t, got s={s} r={r} t={t}"
        )));
    }
    let direct = gaussian_binomial(t - s, r - s, q);
    let scaled = gaussian_binomial(t, r, q) * xi(r, s, q);
    let den = xi(t, s, q);
    if &scaled % &den != BigUint::zero() || scaled / den != direct {
        return Err(Error::Internal(format!(
            "superspace count formulas disagree at t={t} s={s} r={r} q={q}"
        )));
    }
    Ok(direct)
}

/// Correction term of the full-rank rate decomposition:
/// `sum_s p(s) log2(xi~(t,s) / xi~(m,s))`, where `p` is the rank law of the
/// transfer matrix. Lies in `[0, 1.8)` whenever `t >= m`.
pub fn epsilon_term<W: Weight>(
    rank_pmf: &BTreeMap<usize, W>,
    t: usize,
    m: usize,
    q: u32,
) -> Result<f64> {
    if t < m {
        return Err(Error::Precondition(format!(
            "epsilon term needs T >= M, got T={t} M={m}"
        )));
    }
    let mut total = 0.0;
    for (&s, p) in rank_pmf {
        if p.is_zero() {
            continue;
        }
        if s > m {
            return Err(Error::Precondition(format!("rank {s} exceeds M={m}")));
        }
        // xi~(t,s)/xi~(m,s) = xi(t,s) q^{ms} / (xi(m,s) q^{ts})
        let num = xi(t, s, q) * pow(q, m * s);
        let den = xi(m, s, q) * pow(q, t * s);
        total += p.to_f64() * log2_ratio(&num, &den);
    }
    Ok(total)
}
