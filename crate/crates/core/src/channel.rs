//! The linear operator channel `Y = X H` and its transition law.
//!
//! `P(Y|X)` is computed from a small table indexed by row spaces: for every
//! `U` in `Pj(min(T,M), F^M)` we store the law of `D_U H`, where `D_U` is the
//! RREF basis of `U`. Any `X` with row space `U` factors as `X = B D_U` with
//! `B` of full column rank, so `P(Y|X) = Pr{D_U H = Y / B}` when the column
//! space of `Y` lies in that of `X`, and zero otherwise.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::{all_matrices, checked_pow, enumerate_full_rank, solve_factor, Field, Matrix};
use crate::limits::Limits;
use crate::prob::{format_rational, parse_rational, Rational, Weight};
use crate::qcomb;
use crate::subspace::{enumerate_projective, Subspace};

/// `LOC(H, T)`: `T x M` inputs, `T x N` outputs, and the law of the `M x N`
/// transfer matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSpec {
    field: Field,
    t: usize,
    m: usize,
    n: usize,
    pmf: BTreeMap<Matrix, Rational>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    q: u64,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    pmf: Vec<RawEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    #[serde(rename = "H")]
    h: Vec<Vec<u64>>,
    p: String,
}

impl ChannelSpec {
    /// Validates and builds a channel. Entries must be distinct `M x N`
    /// matrices with positive masses summing to one.
    pub fn new(
        field: Field,
        t: usize,
        m: usize,
        n: usize,
        entries: Vec<(Matrix, Rational)>,
    ) -> Result<Self> {
        if t == 0 || m == 0 || n == 0 {
            return Err(Error::Invalid(format!(
                "T, M, N must be positive, got T={t} M={m} N={n}"
            )));
        }
        if entries.is_empty() {
            return Err(Error::Invalid("pmf: empty support".into()));
        }
        let mut pmf = BTreeMap::new();
        let mut total = Rational::zero();
        for (i, (h, p)) in entries.into_iter().enumerate() {
            if h.field() != field {
                return Err(Error::FieldMismatch {
                    left: field.q(),
                    right: h.field().q(),
                });
            }
            if h.rows() != m || h.cols() != n {
                return Err(Error::Invalid(format!(
                    "pmf[{i}].H: expected {m}x{n}, got {}x{}",
                    h.rows(),
                    h.cols()
                )));
            }
            if p <= Rational::zero() {
                return Err(Error::Invalid(format!(
                    "pmf[{i}].p: mass must be positive, got {}",
                    format_rational(&p)
                )));
            }
            total += &p;
            if pmf.insert(h, p).is_some() {
                return Err(Error::Invalid(format!(
                    "pmf[{i}].H: duplicate support matrix"
                )));
            }
        }
        if !total.is_one() {
            return Err(Error::Invalid(format!(
                "pmf: masses sum to {}, not 1",
                format_rational(&total)
            )));
        }
        Ok(ChannelSpec {
            field,
            t,
            m,
            n,
            pmf,
        })
    }

    /// `H = 0` with probability one.
    pub fn zero(field: Field, t: usize, m: usize, n: usize) -> Result<Self> {
        ChannelSpec::new(
            field,
            t,
            m,
            n,
            vec![(Matrix::zeros(field, m, n), Rational::one())],
        )
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn q(&self) -> u32 {
        self.field.q()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pmf(&self) -> &BTreeMap<Matrix, Rational> {
        &self.pmf
    }

    /// Mass of `h`, zero off the support.
    pub fn mass(&self, h: &Matrix) -> Rational {
        self.pmf.get(h).cloned().unwrap_or_else(Rational::zero)
    }

    /// Same transfer matrix law used with a different number of input rows.
    pub fn with_t(&self, t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::Invalid("T must be positive".into()));
        }
        Ok(ChannelSpec { t, ..self.clone() })
    }

    pub fn is_zero_channel(&self) -> bool {
        self.pmf.keys().all(Matrix::is_zero)
    }

    /// Law of `rank(H)`.
    pub fn rank_pmf(&self) -> BTreeMap<usize, Rational> {
        let mut out = BTreeMap::new();
        for (h, p) in &self.pmf {
            *out.entry(h.rank()).or_insert_with(Rational::zero) += p;
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let q = u32::try_from(raw.q).map_err(|_| Error::NotPrime(raw.q))?;
        let field = Field::new(q)?;
        let mut entries = Vec::with_capacity(raw.pmf.len());
        for (i, e) in raw.pmf.into_iter().enumerate() {
            let mut rows = Vec::with_capacity(e.h.len());
            for row in &e.h {
                let mut r = Vec::with_capacity(row.len());
                for &v in row {
                    if v >= u64::from(q) {
                        return Err(Error::Invalid(format!(
                            "pmf[{i}].H: entry {v} out of range for F_{q}"
                        )));
                    }
                    r.push(v as u32);
                }
                rows.push(r);
            }
            if rows.len() != raw.m || rows.iter().any(|r| r.len() != raw.n) {
                return Err(Error::Invalid(format!(
                    "pmf[{i}].H: expected {}x{} matrix",
                    raw.m, raw.n
                )));
            }
            let h = Matrix::from_rows(field, &rows)
                .map_err(|e| Error::Invalid(format!("pmf[{i}].H: {e}")))?;
            let p = parse_rational(&e.p).ok_or_else(|| {
                Error::Invalid(format!(
                    "pmf[{i}].p: {:?} is not a rational \"num/den\"",
                    e.p
                ))
            })?;
            entries.push((h, p));
        }
        ChannelSpec::new(field, raw.t, raw.m, raw.n, entries)
    }

    /// Canonical JSON: fixed key order, one support entry per line, entries
    /// sorted by matrix.
    pub fn to_json(&self) -> String {
        let mut out = format!(
            "{{\n  \"q\": {},\n  \"T\": {},\n  \"M\": {},\n  \"N\": {},\n  \"pmf\": [\n",
            self.q(),
            self.t,
            self.m,
            self.n
        );
        let lines: Vec<String> = self
            .pmf
            .iter()
            .map(|(h, p)| {
                let e = RawEntry {
                    h: h.to_nested()
                        .into_iter()
                        .map(|r| r.into_iter().map(u64::from).collect())
                        .collect(),
                    p: format_rational(p),
                };
                format!("    {}", serde_json::to_string(&e).expect("plain data"))
            })
            .collect();
        out.push_str(&lines.join(",\n"));
        out.push_str("\n  ]\n}\n");
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ChannelSpec::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Law of `D H` for a fixed `k x M` matrix `D`.
pub fn image_distribution(spec: &ChannelSpec, d: &Matrix) -> Result<BTreeMap<Matrix, Rational>> {
    if d.cols() != spec.m {
        return Err(Error::Dimension(format!(
            "D has {} columns, M = {}",
            d.cols(),
            spec.m
        )));
    }
    let mut out: BTreeMap<Matrix, Rational> = BTreeMap::new();
    for (h, p) in &spec.pmf {
        *out.entry(d.mul(h)?).or_insert_with(Rational::zero) += p;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct CoreEntry {
    /// Row space `U`; its RREF basis is the representative `D_U`.
    pub subspace: Subspace,
    /// `E -> Pr{D_U H = E}`, support only.
    pub dist: BTreeMap<Matrix, Rational>,
}

impl CoreEntry {
    pub fn representative(&self) -> &Matrix {
        self.subspace.basis()
    }

    pub fn dim(&self) -> usize {
        self.subspace.dim()
    }
}

/// Per-row-space tables from which every transition probability follows.
#[derive(Debug, Clone)]
pub struct TransitionCore {
    spec: ChannelSpec,
    entries: Vec<CoreEntry>,
    index: HashMap<Subspace, usize>,
}

impl TransitionCore {
    /// Tables are computed in parallel, one per row space, and assembled in
    /// enumeration order.
    pub fn new(spec: &ChannelSpec, limits: &Limits) -> Result<Self> {
        let k = spec.t.min(spec.m);
        if checked_pow(spec.q(), k * spec.n).is_none_or(|c| c > limits.core_table) {
            return Err(Error::budget(
                "transition core table",
                format!("{}^{}", spec.q(), k * spec.n),
                limits.core_table,
            ));
        }
        let subspaces = enumerate_projective(k, spec.m, spec.field, limits)?;
        let entries = subspaces
            .into_par_iter()
            .map(|u| {
                Ok(CoreEntry {
                    dist: image_distribution(spec, u.basis())?,
                    subspace: u,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.subspace.clone(), i))
            .collect();
        Ok(TransitionCore {
            spec: spec.clone(),
            entries,
            index,
        })
    }

    pub fn spec(&self) -> &ChannelSpec {
        &self.spec
    }

    pub fn field(&self) -> Field {
        self.spec.field
    }

    pub fn t(&self) -> usize {
        self.spec.t
    }

    pub fn m(&self) -> usize {
        self.spec.m
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    /// Input row spaces in enumeration order (dimension, then RREF order).
    pub fn entries(&self) -> &[CoreEntry] {
        &self.entries
    }

    pub fn index_of(&self, u: &Subspace) -> Option<usize> {
        self.index.get(u).copied()
    }

    pub fn entry(&self, u: &Subspace) -> Result<&CoreEntry> {
        self.index_of(u).map(|i| &self.entries[i]).ok_or_else(|| {
            Error::Invalid(format!(
                "{u} is not a row space of a {}x{} input",
                self.spec.t, self.spec.m
            ))
        })
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.field() != self.spec.field {
            return Err(Error::FieldMismatch {
                left: self.spec.q(),
                right: x.field().q(),
            });
        }
        if x.rows() != self.spec.t || x.cols() != self.spec.m {
            return Err(Error::Dimension(format!(
                "input must be {}x{}, got {}x{}",
                self.spec.t,
                self.spec.m,
                x.rows(),
                x.cols()
            )));
        }
        Ok(())
    }

    /// `B` in `X = B D_U`, together with the core entry of `U`.
    fn factor_input(&self, x: &Matrix) -> Result<(Matrix, &CoreEntry)> {
        self.check_input(x)?;
        let entry = self.entry(&Subspace::span_rows(x))?;
        let bt = solve_factor(&x.transpose(), &entry.representative().transpose())
            .map_err(|e| Error::Internal(format!("factoring input {x}: {e}")))?;
        Ok((bt.transpose(), entry))
    }

    pub fn p_y_given_x(&self, x: &Matrix, y: &Matrix) -> Result<Rational> {
        self.check_input(x)?;
        if y.field() != self.spec.field || y.rows() != self.spec.t || y.cols() != self.spec.n {
            return Err(Error::Dimension(format!(
                "output must be {}x{} over F_{}",
                self.spec.t,
                self.spec.n,
                self.spec.q()
            )));
        }
        if x.hstack(y)?.rank() != x.rank() {
            return Ok(Rational::zero());
        }
        let (b, entry) = self.factor_input(x)?;
        let e = solve_factor(y, &b)
            .map_err(|err| Error::Internal(format!("factoring output {y}: {err}")))?;
        Ok(entry.dist.get(&e).cloned().unwrap_or_else(Rational::zero))
    }

    /// Support of `P(.|X)`: each `E` in the core table of `<X^T>` maps to
    /// the distinct output `B E`.
    pub fn transition_row(&self, x: &Matrix) -> Result<BTreeMap<Matrix, Rational>> {
        let (b, entry) = self.factor_input(x)?;
        entry
            .dist
            .iter()
            .map(|(e, p)| Ok((b.mul(e)?, p.clone())))
            .collect()
    }

    /// `P(rank Y = s | <X^T> = U)`.
    pub fn cond_rank_given_rowspace(&self, u: &Subspace) -> Result<BTreeMap<usize, Rational>> {
        Ok(rank_law(&self.entry(u)?.dist))
    }

    /// Law of `(rank X, rank Y)` under an input law on row spaces.
    pub fn rank_joint<W: Weight>(&self, alpha: &AlphaInput<W>) -> Result<RankJoint<W>> {
        let mut joint = BTreeMap::new();
        for (u, a) in alpha.pmf() {
            if a.is_zero() {
                continue;
            }
            for (s, p) in self.cond_rank_given_rowspace(u)? {
                let v = a.clone() * W::from_rational(&p);
                let slot = joint.entry((u.dim(), s)).or_insert_with(W::zero);
                *slot = slot.clone() + v;
            }
        }
        Ok(RankJoint { pmf: joint })
    }

    /// Tables serialized for caching, masses as rational strings.
    pub fn to_json(&self) -> serde_json::Value {
        let tables: Vec<serde_json::Value> = self
            .entries
            .iter()
            .map(|e| {
                let dist: Vec<serde_json::Value> = e
                    .dist
                    .iter()
                    .map(|(m, p)| serde_json::json!({"E": m.to_nested(), "p": format_rational(p)}))
                    .collect();
                serde_json::json!({"U": e.subspace, "D": e.representative().to_nested(), "dist": dist})
            })
            .collect();
        serde_json::json!({
            "q": self.spec.q(),
            "T": self.spec.t,
            "M": self.spec.m,
            "N": self.spec.n,
            "tables": tables,
        })
    }
}

pub(crate) fn rank_law(dist: &BTreeMap<Matrix, Rational>) -> BTreeMap<usize, Rational> {
    let mut out = BTreeMap::new();
    for (e, p) in dist {
        *out.entry(e.rank()).or_insert_with(Rational::zero) += p;
    }
    out
}

/// Full transition table from the definition, for cross-checking.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    inputs: Vec<Matrix>,
    rows: Vec<BTreeMap<Matrix, Rational>>,
}

impl TransitionTable {
    /// Every input in index order.
    pub fn inputs(&self) -> &[Matrix] {
        &self.inputs
    }

    /// Sparse row of `x`.
    pub fn row(&self, x: &Matrix) -> &BTreeMap<Matrix, Rational> {
        &self.rows[x.to_index() as usize]
    }

    pub fn get(&self, x: &Matrix, y: &Matrix) -> Rational {
        self.row(x).get(y).cloned().unwrap_or_else(Rational::zero)
    }
}

/// `P(Y|X) = sum of pmf_H(H) over H with X H = Y`, for every input.
pub fn transition_naive(spec: &ChannelSpec, limits: &Limits) -> Result<TransitionTable> {
    let inputs: Vec<Matrix> = all_matrices(spec.field, spec.t, spec.m, limits)?.collect();
    let work = (inputs.len() as u64).saturating_mul(spec.pmf.len() as u64);
    if work > limits.naive_table {
        return Err(Error::budget(
            "naive transition table",
            work,
            limits.naive_table,
        ));
    }
    let rows = inputs
        .par_iter()
        .map(|x| {
            let mut row: BTreeMap<Matrix, Rational> = BTreeMap::new();
            for (h, p) in &spec.pmf {
                *row.entry(x.mul(h)?).or_insert_with(Rational::zero) += p;
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransitionTable { inputs, rows })
}

/// Input law on row spaces `<X^T>`; the induced law on `X` is uniform
/// within each row-space class.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaInput<W> {
    pmf: BTreeMap<Subspace, W>,
}

impl<W: Weight> AlphaInput<W> {
    /// Checks that every row space is legal for the core and, for exact
    /// weights, that the masses sum to one (floats: within `1e-9`).
    pub fn new(core: &TransitionCore, pmf: BTreeMap<Subspace, W>) -> Result<Self> {
        let mut total = W::zero();
        for (u, w) in &pmf {
            core.entry(u)?;
            if *w < W::zero() {
                return Err(Error::Invalid(format!("negative mass on {u}")));
            }
            total = total + w.clone();
        }
        if !total.agrees(&W::one(), 1e-9) {
            return Err(Error::Invalid(format!("input masses sum to {:?}", total)));
        }
        Ok(AlphaInput { pmf })
    }

    /// Uniform over all row spaces of the core.
    pub fn uniform(core: &TransitionCore) -> Self {
        let n = core.entries.len();
        let w = W::one() / W::from_count(&(n as u64).into());
        AlphaInput {
            pmf: core
                .entries
                .iter()
                .map(|e| (e.subspace.clone(), w.clone()))
                .collect(),
        }
    }

    pub fn point(core: &TransitionCore, u: &Subspace) -> Result<Self> {
        core.entry(u)?;
        Ok(AlphaInput {
            pmf: [(u.clone(), W::one())].into(),
        })
    }

    pub fn pmf(&self) -> &BTreeMap<Subspace, W> {
        &self.pmf
    }

    pub fn mass(&self, u: &Subspace) -> W {
        self.pmf.get(u).cloned().unwrap_or_else(W::zero)
    }

    /// Law of `rank X`.
    pub fn rank_marginal(&self) -> BTreeMap<usize, W> {
        let mut out = BTreeMap::new();
        for (u, w) in &self.pmf {
            let slot = out.entry(u.dim()).or_insert_with(W::zero);
            *slot = slot.clone() + w.clone();
        }
        out
    }
}

/// Joint law of `(rank X, rank Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankJoint<W> {
    pub pmf: BTreeMap<(usize, usize), W>,
}

impl<W: Weight> RankJoint<W> {
    pub fn get(&self, r: usize, s: usize) -> W {
        self.pmf.get(&(r, s)).cloned().unwrap_or_else(W::zero)
    }

    pub fn marginal_x(&self) -> BTreeMap<usize, W> {
        self.marginal(|(r, _)| r)
    }

    pub fn marginal_y(&self) -> BTreeMap<usize, W> {
        self.marginal(|(_, s)| s)
    }

    fn marginal(&self, key: impl Fn((usize, usize)) -> usize) -> BTreeMap<usize, W> {
        let mut out = BTreeMap::new();
        for (&k, w) in &self.pmf {
            let slot = out.entry(key(k)).or_insert_with(W::zero);
            *slot = slot.clone() + w.clone();
        }
        out
    }
}

/// Standard transfer-matrix families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Every `M x N` matrix equally likely.
    IidUniform,
    /// Uniform over invertible `M x M` matrices.
    FullRankUniform,
    /// Given rank law; equal-rank matrices share the rank's mass equally.
    UniformGivenRank(BTreeMap<usize, Rational>),
    /// Given rank law; within a rank, mass is split by seeded random
    /// integer weights in `1..=9`.
    CustomRankDist {
        rank_pmf: BTreeMap<usize, Rational>,
        seed: u64,
    },
}

pub fn generate(
    family: &Family,
    field: Field,
    t: usize,
    m: usize,
    n: usize,
    limits: &Limits,
) -> Result<ChannelSpec> {
    let q = field.q();
    match family {
        Family::IidUniform => {
            let all: Vec<Matrix> = all_matrices(field, m, n, limits)?.collect();
            let p = Rational::new(1.into(), (all.len() as u64).into());
            ChannelSpec::new(
                field,
                t,
                m,
                n,
                all.into_iter().map(|h| (h, p.clone())).collect(),
            )
        }
        Family::FullRankUniform => {
            if m != n {
                return Err(Error::Invalid(format!(
                    "full_rank_uniform needs M = N, got M={m} N={n}"
                )));
            }
            let all: Vec<Matrix> = enumerate_full_rank(m, m, field, limits)?.collect();
            let p = Rational::new(1.into(), (all.len() as u64).into());
            ChannelSpec::new(
                field,
                t,
                m,
                n,
                all.into_iter().map(|h| (h, p.clone())).collect(),
            )
        }
        Family::UniformGivenRank(rank_pmf) => {
            check_rank_pmf(rank_pmf, m, n)?;
            let mut entries = Vec::new();
            for h in all_matrices(field, m, n, limits)? {
                let r = h.rank();
                if let Some(p) = rank_pmf.get(&r).filter(|p| !p.is_zero()) {
                    let count = qcomb::xi2(m, n, r, q);
                    entries.push((h, p / Rational::from_integer(count.into())));
                }
            }
            ChannelSpec::new(field, t, m, n, entries)
        }
        Family::CustomRankDist { rank_pmf, seed } => {
            check_rank_pmf(rank_pmf, m, n)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut by_rank: BTreeMap<usize, Vec<(Matrix, u64)>> = BTreeMap::new();
            for h in all_matrices(field, m, n, limits)? {
                let w = rng.gen_range(1..=9u64);
                by_rank.entry(h.rank()).or_default().push((h, w));
            }
            let mut entries = Vec::new();
            for (r, group) in by_rank {
                let Some(p) = rank_pmf.get(&r).filter(|p| !p.is_zero()) else {
                    continue;
                };
                let total: u64 = group.iter().map(|(_, w)| w).sum();
                for (h, w) in group {
                    entries.push((h, p * Rational::new(w.into(), total.into())));
                }
            }
            ChannelSpec::new(field, t, m, n, entries)
        }
    }
}

fn check_rank_pmf(rank_pmf: &BTreeMap<usize, Rational>, m: usize, n: usize) -> Result<()> {
    let mut total = Rational::zero();
    for (&r, p) in rank_pmf {
        if r > m.min(n) {
            return Err(Error::Invalid(format!(
                "rank {r} exceeds min(M,N) = {}",
                m.min(n)
            )));
        }
        if *p < Rational::zero() {
            return Err(Error::Invalid(format!("negative mass on rank {r}")));
        }
        total += p;
    }
    if !total.is_one() {
        return Err(Error::Invalid(format!(
            "rank masses sum to {}",
            format_rational(&total)
        )));
    }
    Ok(())
}

/// Random law on `M x N` matrices: between 1 and `max_support` distinct
/// matrices with random integer weights in `1..=6`.
pub fn random_channel<R: Rng>(
    field: Field,
    t: usize,
    m: usize,
    n: usize,
    max_support: usize,
    rng: &mut R,
) -> Result<ChannelSpec> {
    let count = checked_pow(field.q(), m * n).ok_or_else(|| {
        Error::budget(
            "random channel",
            format!("{}^{}", field.q(), m * n),
            u64::MAX,
        )
    })?;
    let k = rng.gen_range(1..=max_support.max(1)).min(count as usize);
    let mut chosen: BTreeMap<Matrix, u64> = BTreeMap::new();
    while chosen.len() < k {
        chosen.insert(
            Matrix::from_index(field, m, n, rng.gen_range(0..count)),
            rng.gen_range(1..=6),
        );
    }
    let total: u64 = chosen.values().sum();
    let entries = chosen
        .into_iter()
        .map(|(h, w)| (h, Rational::new(w.into(), total.into())))
        .collect();
    ChannelSpec::new(field, t, m, n, entries)
}

/// Random law whose mass depends only on the row space `<H^T>`: each row
/// space in a random subset gets a random weight spread evenly over its
/// matrices.
pub fn random_row_space_invariant<R: Rng>(
    field: Field,
    t: usize,
    m: usize,
    n: usize,
    rng: &mut R,
    limits: &Limits,
) -> Result<ChannelSpec> {
    let mut classes: BTreeMap<Subspace, Vec<Matrix>> = BTreeMap::new();
    for h in all_matrices(field, m, n, limits)? {
        classes.entry(Subspace::span_rows(&h)).or_default().push(h);
    }
    let mut weights: Vec<(Vec<Matrix>, u64)> = Vec::new();
    for (_, members) in classes {
        if rng.gen_bool(0.5) {
            weights.push((members, rng.gen_range(1..=6)));
        }
    }
    if weights.is_empty() {
        return ChannelSpec::zero(field, t, m, n);
    }
    let total: u64 = weights.iter().map(|(_, w)| w).sum();
    let mut entries = Vec::new();
    for (members, w) in weights {
        let p = Rational::new(w.into(), (total * members.len() as u64).into());
        entries.extend(members.into_iter().map(|h| (h, p.clone())));
    }
    ChannelSpec::new(field, t, m, n, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::rational;

    fn f2() -> Field {
        Field::new(2).unwrap()
    }

    fn mat(rows: &[&[u32]]) -> Matrix {
        Matrix::from_rows(f2(), rows).unwrap()
    }

    fn spec(t: usize, m: usize, n: usize, entries: &[(&[&[u32]], i64, i64)]) -> ChannelSpec {
        ChannelSpec::new(
            f2(),
            t,
            m,
            n,
            entries
                .iter()
                .map(|(h, a, b)| (mat(h), rational(*a, *b)))
                .collect(),
        )
        .unwrap()
    }

    fn lim() -> Limits {
        Limits::default()
    }

    fn all_outputs(spec: &ChannelSpec) -> Vec<Matrix> {
        all_matrices(spec.field(), spec.t(), spec.n(), &lim())
            .unwrap()
            .collect()
    }

    #[test]
    fn validation() {
        let one = Rational::one();
        assert!(ChannelSpec::new(f2(), 1, 1, 1, vec![]).is_err());
        assert!(ChannelSpec::new(f2(), 0, 1, 1, vec![(mat(&[&[1]]), one.clone())]).is_err());
        assert!(ChannelSpec::new(f2(), 1, 1, 2, vec![(mat(&[&[1]]), one.clone())]).is_err());
        assert!(ChannelSpec::new(f2(), 1, 1, 1, vec![(mat(&[&[1]]), rational(1, 2))]).is_err());
        let dup = vec![
            (mat(&[&[1]]), rational(1, 2)),
            (mat(&[&[1]]), rational(1, 2)),
        ];
        assert!(ChannelSpec::new(f2(), 1, 1, 1, dup).is_err());
        let neg = vec![
            (mat(&[&[1]]), rational(3, 2)),
            (mat(&[&[0]]), rational(-1, 2)),
        ];
        assert!(ChannelSpec::new(f2(), 1, 1, 1, neg).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = spec(2, 2, 1, &[(&[&[1], &[0]], 1, 3), (&[&[0], &[1]], 2, 3)]);
        let text = s.to_json();
        assert_eq!(ChannelSpec::from_json(&text).unwrap(), s);
        assert_eq!(ChannelSpec::from_json(&text).unwrap().to_json(), text);
    }

    #[test]
    fn json_errors() {
        let bad_syntax = "{\n  \"q\": 2,\n  \"T\": 1 \"M\": 1}";
        match ChannelSpec::from_json(bad_syntax) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let not_prime = r#"{"q":4,"T":1,"M":1,"N":1,"pmf":[{"H":[[1]],"p":"1"}]}"#;
        assert!(matches!(
            ChannelSpec::from_json(not_prime),
            Err(Error::NotPrime(4))
        ));
        let bad_sum = r#"{"q":2,"T":1,"M":1,"N":1,"pmf":[{"H":[[1]],"p":"1/2"}]}"#;
        assert!(matches!(
            ChannelSpec::from_json(bad_sum),
            Err(Error::Invalid(_))
        ));
        let empty = r#"{"q":2,"T":1,"M":1,"N":1,"pmf":[]}"#;
        assert!(ChannelSpec::from_json(empty).is_err());
        let shape = r#"{"q":2,"T":1,"M":1,"N":2,"pmf":[{"H":[[1]],"p":"1"}]}"#;
        let err = ChannelSpec::from_json(shape).unwrap_err().to_string();
        assert!(err.contains("pmf[0].H"), "{err}");
        let entry = r#"{"q":2,"T":1,"M":1,"N":1,"pmf":[{"H":[[2]],"p":"1"}]}"#;
        assert!(ChannelSpec::from_json(entry).is_err());
        let zero = r#"{"q":2,"T":1,"M":1,"N":1,"pmf":[{"H":[[1]],"p":"1"},{"H":[[0]],"p":"0"}]}"#;
        assert!(ChannelSpec::from_json(zero).is_err());
    }

    #[test]
    fn core_trivial_and_zero() {
        let s = ChannelSpec::zero(f2(), 2, 2, 2).unwrap();
        let core = TransitionCore::new(&s, &lim()).unwrap();
        assert_eq!(core.entries().len(), 5);
        let trivial = &core.entries()[0];
        assert_eq!(trivial.dim(), 0);
        assert_eq!(trivial.dist.len(), 1);
        let (e, p) = trivial.dist.iter().next().unwrap();
        assert_eq!((e.rows(), e.cols()), (0, 2));
        assert!(p.is_one());
        for entry in core.entries() {
            assert_eq!(entry.dist.len(), 1);
            assert!(entry.dist.keys().next().unwrap().is_zero());
        }
    }

    #[test]
    fn core_full_space_reproduces_pmf() {
        let s = spec(
            2,
            2,
            2,
            &[(&[&[1, 0], &[0, 0]], 1, 4), (&[&[1, 1], &[0, 1]], 3, 4)],
        );
        let core = TransitionCore::new(&s, &lim()).unwrap();
        let full = core.entry(&Subspace::full(f2(), 2)).unwrap();
        assert_eq!(*full.representative(), Matrix::identity(f2(), 2));
        assert_eq!(full.dist, *s.pmf());
        for e in core.entries() {
            assert!(e.dist.values().sum::<Rational>().is_one());
            assert_eq!(e.representative().rank(), e.dim());
            assert_eq!(Subspace::span_rows(e.representative()), e.subspace);
        }
    }

    #[test]
    fn core_budget() {
        let s = ChannelSpec::zero(f2(), 3, 3, 3).unwrap();
        let tight = Limits {
            core_table: 256,
            ..lim()
        };
        assert!(matches!(
            TransitionCore::new(&s, &tight),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn transition_examples() {
        let s = spec(1, 1, 1, &[(&[&[1]], 1, 3), (&[&[0]], 2, 3)]);
        let core = TransitionCore::new(&s, &lim()).unwrap();
        let (zero, one) = (mat(&[&[0]]), mat(&[&[1]]));
        assert!(core.p_y_given_x(&zero, &zero).unwrap().is_one());
        assert!(core.p_y_given_x(&zero, &one).unwrap().is_zero());
        assert_eq!(core.p_y_given_x(&one, &one).unwrap(), rational(1, 3));
        assert_eq!(core.p_y_given_x(&one, &zero).unwrap(), rational(2, 3));
        assert!(core.p_y_given_x(&mat(&[&[1, 0]]), &one).is_err());
    }

    #[test]
    fn fast_path_matches_naive_on_random_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..40 {
            let (t, m, n) = (
                rng.gen_range(1..=3),
                rng.gen_range(1..=2),
                rng.gen_range(1..=2),
            );
            let q = [2, 3][trial % 2];
            let field = Field::new(q).unwrap();
            let s = random_channel(field, t, m, n, 5, &mut rng).unwrap();
            let core = TransitionCore::new(&s, &lim()).unwrap();
            let naive = transition_naive(&s, &lim()).unwrap();
            let outputs = all_outputs(&s);
            for x in naive.inputs() {
                let mut total = Rational::zero();
                for y in &outputs {
                    let p = core.p_y_given_x(x, y).unwrap();
                    assert_eq!(p, naive.get(x, y), "X={x} Y={y} channel {s:?}");
                    total += p;
                }
                assert!(total.is_one());
                assert_eq!(core.transition_row(x).unwrap(), *naive.row(x));
            }
        }
    }

    #[test]
    fn zero_channel_maps_everything_to_zero() {
        let s = ChannelSpec::zero(f2(), 2, 2, 1).unwrap();
        let naive = transition_naive(&s, &lim()).unwrap();
        let zero = Matrix::zeros(f2(), 2, 1);
        for x in naive.inputs() {
            assert!(naive.get(x, &zero).is_one());
        }
    }

    #[test]
    fn rank_given_row_space() {
        let s = spec(
            2,
            2,
            2,
            &[
                (&[&[0, 0], &[0, 0]], 1, 6),
                (&[&[1, 0], &[0, 0]], 1, 3),
                (&[&[1, 0], &[0, 1]], 1, 2),
            ],
        );
        let core = TransitionCore::new(&s, &lim()).unwrap();
        let trivial = core
            .cond_rank_given_rowspace(&Subspace::trivial(f2(), 2))
            .unwrap();
        assert_eq!(trivial, [(0, Rational::one())].into());
        let full = core
            .cond_rank_given_rowspace(&Subspace::full(f2(), 2))
            .unwrap();
        assert_eq!(full, s.rank_pmf());
        assert_eq!(
            full,
            [
                (0, rational(1, 6)),
                (1, rational(1, 3)),
                (2, rational(1, 2))
            ]
            .into()
        );

        let fr = generate(
            &Family::FullRankUniform,
            Field::new(3).unwrap(),
            3,
            2,
            2,
            &lim(),
        )
        .unwrap();
        let core = TransitionCore::new(&fr, &lim()).unwrap();
        let full = core
            .cond_rank_given_rowspace(&Subspace::full(fr.field(), 2))
            .unwrap();
        assert_eq!(full, [(2, Rational::one())].into());
    }

    #[test]
    fn rank_law_does_not_depend_on_representative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s = random_channel(f2(), 3, 3, 2, 6, &mut rng).unwrap();
            let core = TransitionCore::new(&s, &lim()).unwrap();
            for entry in core.entries() {
                let d = entry.representative();
                for g in enumerate_full_rank(d.rows(), d.rows(), f2(), &lim()).unwrap() {
                    let other = g.mul(d).unwrap();
                    let law = rank_law(&image_distribution(&s, &other).unwrap());
                    assert_eq!(law, rank_law(&entry.dist));
                }
            }
        }
    }

    #[test]
    fn equal_row_space_inputs_permute_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let s = random_channel(f2(), 2, 2, 2, 6, &mut rng).unwrap();
            let core = TransitionCore::new(&s, &lim()).unwrap();
            let inputs: Vec<Matrix> = all_matrices(f2(), 2, 2, &lim()).unwrap().collect();
            let outputs = all_outputs(&s);
            let profile = |x: &Matrix| {
                let mut by_class: BTreeMap<Subspace, Vec<Rational>> = BTreeMap::new();
                for y in &outputs {
                    by_class
                        .entry(Subspace::span_rows(y))
                        .or_default()
                        .push(core.p_y_given_x(x, y).unwrap());
                }
                by_class.values_mut().for_each(|v| v.sort());
                by_class
            };
            for x1 in &inputs {
                for x2 in &inputs {
                    if Subspace::span_rows(x1) == Subspace::span_rows(x2) {
                        assert_eq!(profile(x1), profile(x2));
                    }
                }
            }
        }
    }

    #[test]
    fn rank_joint_marginals() {
        let s = spec(
            1,
            2,
            2,
            &[(&[&[1, 0], &[0, 0]], 1, 2), (&[&[0, 0], &[0, 1]], 1, 2)],
        );
        let core = TransitionCore::new(&s, &lim()).unwrap();
        let trivial = AlphaInput::<Rational>::point(&core, &Subspace::trivial(f2(), 2)).unwrap();
        assert_eq!(
            core.rank_joint(&trivial).unwrap().pmf,
            [((0, 0), Rational::one())].into()
        );

        let alpha = AlphaInput::<Rational>::uniform(&core);
        let joint = core.rank_joint(&alpha).unwrap();
        assert_eq!(joint.marginal_x(), alpha.rank_marginal());
        assert!(joint.pmf.keys().all(|&(r, s)| s <= r && r <= 1));
        assert!(
            AlphaInput::new(&core, [(Subspace::full(f2(), 2), Rational::one())].into()).is_err()
        );
        assert!(
            AlphaInput::new(&core, [(Subspace::trivial(f2(), 2), rational(1, 2))].into()).is_err()
        );
    }

    #[test]
    fn generator_examples() {
        let s = generate(&Family::IidUniform, f2(), 1, 1, 1, &lim()).unwrap();
        assert_eq!(s.pmf().len(), 2);
        assert!(s.pmf().values().all(|p| *p == rational(1, 2)));

        let s = generate(&Family::FullRankUniform, f2(), 2, 2, 2, &lim()).unwrap();
        assert_eq!(s.pmf().len(), 6);
        assert!(s.pmf().values().all(|p| *p == rational(1, 6)));
        assert!(generate(&Family::FullRankUniform, f2(), 2, 2, 1, &lim()).is_err());

        let s = generate(
            &Family::UniformGivenRank([(1, Rational::one())].into()),
            f2(),
            2,
            2,
            2,
            &lim(),
        )
        .unwrap();
        assert_eq!(s.pmf().len(), 9);
        assert!(s.pmf().values().all(|p| *p == rational(1, 9)));

        let bad = Family::UniformGivenRank([(3, Rational::one())].into());
        assert!(generate(&bad, f2(), 2, 2, 2, &lim()).is_err());
        let bad = Family::UniformGivenRank([(1, rational(1, 2))].into());
        assert!(generate(&bad, f2(), 2, 2, 2, &lim()).is_err());
    }

    #[test]
    fn custom_rank_dist_keeps_rank_law() {
        let law: BTreeMap<usize, Rational> = [
            (0, rational(1, 5)),
            (1, rational(1, 5)),
            (2, rational(3, 5)),
        ]
        .into();
        let fam = Family::CustomRankDist {
            rank_pmf: law.clone(),
            seed: 3,
        };
        let s = generate(&fam, f2(), 2, 2, 2, &lim()).unwrap();
        assert_eq!(s.rank_pmf(), law);
        assert_eq!(generate(&fam, f2(), 2, 2, 2, &lim()).unwrap(), s);
    }

    #[test]
    fn row_space_invariant_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let s = random_row_space_invariant(f2(), 2, 2, 2, &mut rng, &lim()).unwrap();
            for (h, p) in s.pmf() {
                for (h2, p2) in s.pmf() {
                    if Subspace::span_rows(h) == Subspace::span_rows(h2) {
                        assert_eq!(p, p2);
                    }
                }
            }
        }
    }
}
