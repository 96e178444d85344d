//! Exact membership tests for the channel classes: row-space symmetric,
//! unique subspace degradation, degraded, rank symmetric, and uniform given
//! rank.
//!
//! Every test is a scan over all inputs `X` in index order, with outputs in
//! matrix order, so the returned witness is the first violation found.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::channel::{ChannelSpec, TransitionCore};
use crate::error::{Error, Result};
use crate::gf::{all_matrices, Matrix};
use crate::limits::Limits;
use crate::prob::{format_rational, Rational};
use crate::qcomb;
use crate::subspace::{enumerate_projective, Subspace};

/// A tuple violating one of the defining equalities.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    /// `P(y|x) != P(y2|x2)` although `<x^T> = <x2^T>`, `<y^T> = <y2^T>`,
    /// `<y> <= <x>` and `<y2> <= <x2>`.
    RowSpace {
        x: Matrix,
        y: Matrix,
        x2: Matrix,
        y2: Matrix,
        p: Rational,
        p2: Rational,
    },
    /// `P(<Y> = v | x) != P(<Y> = v | x2)` although `<x> = <x2>`.
    Degradation {
        x: Matrix,
        x2: Matrix,
        v: Subspace,
        p: Rational,
        p2: Rational,
    },
    /// `P(y|x) != P(y|x2)` although `<x> = <x2>`.
    InputColumnSpace {
        x: Matrix,
        x2: Matrix,
        y: Matrix,
        p: Rational,
        p2: Rational,
    },
    /// `P(y|x) P(y2|x2) != P(y2|x) P(y|x2)` for reachable `y`, `y2` with
    /// `<y> = <y2>`.
    OutputRatio {
        y: Matrix,
        y2: Matrix,
        x: Matrix,
        x2: Matrix,
        lhs: Rational,
        rhs: Rational,
    },
    /// `P(y|x) != P(y2|x2)` although the input ranks agree, the output
    /// ranks agree, `<y> <= <x>` and `<y2> <= <x2>`.
    Rank {
        x: Matrix,
        y: Matrix,
        x2: Matrix,
        y2: Matrix,
        p: Rational,
        p2: Rational,
    },
    /// Two transfer matrices of equal rank with different masses.
    Mass {
        h: Matrix,
        h2: Matrix,
        p: Rational,
        p2: Rational,
    },
}

fn nested(m: &Matrix) -> Value {
    json!(m.to_nested())
}

fn rat(r: &Rational) -> Value {
    json!(format_rational(r))
}

impl Witness {
    pub fn to_json(&self) -> Value {
        match self {
            Witness::RowSpace {
                x,
                y,
                x2,
                y2,
                p,
                p2,
            } => json!({
                "kind": "row_space", "X": nested(x), "Y": nested(y), "X2": nested(x2), "Y2": nested(y2),
                "p": rat(p), "p2": rat(p2),
            }),
            Witness::Degradation { x, x2, v, p, p2 } => json!({
                "kind": "degradation", "X": nested(x), "X2": nested(x2), "V": v, "p": rat(p), "p2": rat(p2),
            }),
            Witness::InputColumnSpace { x, x2, y, p, p2 } => json!({
                "kind": "input_column_space", "X": nested(x), "X2": nested(x2), "Y": nested(y),
                "p": rat(p), "p2": rat(p2),
            }),
            Witness::OutputRatio {
                y,
                y2,
                x,
                x2,
                lhs,
                rhs,
            } => json!({
                "kind": "output_ratio", "Y": nested(y), "Y2": nested(y2), "X": nested(x), "X2": nested(x2),
                "lhs": rat(lhs), "rhs": rat(rhs),
            }),
            Witness::Rank {
                x,
                y,
                x2,
                y2,
                p,
                p2,
            } => json!({
                "kind": "rank", "X": nested(x), "Y": nested(y), "X2": nested(x2), "Y2": nested(y2),
                "p": rat(p), "p2": rat(p2),
            }),
            Witness::Mass { h, h2, p, p2 } => json!({
                "kind": "mass", "H": nested(h), "H2": nested(h2), "p": rat(p), "p2": rat(p2),
            }),
        }
    }

    /// Re-evaluates the witness from scratch: `true` iff it really violates
    /// its equality and satisfies its side conditions.
    pub fn confirm(&self, core: &TransitionCore) -> Result<bool> {
        let rows = |a: &Matrix| Subspace::span_rows(a);
        let cols = |a: &Matrix| Subspace::span_columns(a);
        let within = |y: &Matrix, x: &Matrix| cols(x).contains(&cols(y));
        Ok(match self {
            Witness::RowSpace { x, y, x2, y2, .. } => {
                rows(x) == rows(x2)
                    && rows(y) == rows(y2)
                    && within(y, x)?
                    && within(y2, x2)?
                    && core.p_y_given_x(x, y)? != core.p_y_given_x(x2, y2)?
            }
            Witness::Degradation { x, x2, v, .. } => {
                let law = |a: &Matrix| -> Result<Rational> {
                    Ok(core
                        .transition_row(a)?
                        .iter()
                        .filter(|(y, _)| cols(y) == *v)
                        .map(|(_, p)| p.clone())
                        .sum())
                };
                cols(x) == cols(x2) && law(x)? != law(x2)?
            }
            Witness::InputColumnSpace { x, x2, y, .. } => {
                cols(x) == cols(x2) && core.p_y_given_x(x, y)? != core.p_y_given_x(x2, y)?
            }
            Witness::OutputRatio { y, y2, x, x2, .. } => {
                let p = |a: &Matrix, b: &Matrix| core.p_y_given_x(a, b);
                cols(y) == cols(y2)
                    && reachable(core, y)?
                    && reachable(core, y2)?
                    && p(x, y)? * p(x2, y2)? != p(x, y2)? * p(x2, y)?
            }
            Witness::Rank { x, y, x2, y2, .. } => {
                x.rank() == x2.rank()
                    && y.rank() == y2.rank()
                    && within(y, x)?
                    && within(y2, x2)?
                    && core.p_y_given_x(x, y)? != core.p_y_given_x(x2, y2)?
            }
            Witness::Mass { h, h2, .. } => {
                let spec = core.spec();
                h.rank() == h2.rank() && spec.mass(h) != spec.mass(h2)
            }
        })
    }
}

fn reachable(core: &TransitionCore, y: &Matrix) -> Result<bool> {
    for x in all_matrices(core.field(), core.t(), core.m(), &Limits::default())? {
        if !core.p_y_given_x(&x, y)?.is_zero() {
            return Ok(true);
        }
    }
    Ok(false)
}

impl Serialize for Witness {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

/// Outcome of one membership test.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub holds: bool,
    pub witness: Option<Witness>,
}

impl Verdict {
    fn yes() -> Self {
        Verdict {
            holds: true,
            witness: None,
        }
    }

    fn no(w: Witness) -> Self {
        Verdict {
            holds: false,
            witness: Some(w),
        }
    }
}

/// `mu(rank X, rank Y)` for a rank-symmetric channel.
pub type RankTable = BTreeMap<(usize, usize), Rational>;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub row_space_symmetric: bool,
    pub unique_subspace_degradation: bool,
    pub degraded: bool,
    pub rank_symmetric: bool,
    pub uniform_given_rank: bool,
    /// One witness per false flag, keyed by flag name.
    pub witnesses: BTreeMap<&'static str, Witness>,
    pub rank_table: Option<RankTable>,
}

impl ClassReport {
    pub fn to_json(&self) -> Value {
        let mu = self.rank_table.as_ref().map(|t| {
            t.iter()
                .map(|(&(r, s), p)| json!({"rank_x": r, "rank_y": s, "p": rat(p)}))
                .collect::<Vec<_>>()
        });
        json!({
            "row_space_symmetric": self.row_space_symmetric,
            "unique_subspace_degradation": self.unique_subspace_degradation,
            "degraded": self.degraded,
            "rank_symmetric": self.rank_symmetric,
            "uniform_given_rank": self.uniform_given_rank,
            "witnesses": self.witnesses,
            "rank_table": mu,
        })
    }
}

impl Serialize for ClassReport {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

struct InputInfo {
    x: Matrix,
    rank: usize,
    col: Subspace,
    /// Index of `<x^T>` in the core.
    class: usize,
    /// `x = b D_U`.
    b: Matrix,
    row: BTreeMap<Matrix, Rational>,
}

/// All inputs with their transition rows, shared by the scans.
struct Scan<'a> {
    core: &'a TransitionCore,
    inputs: Vec<InputInfo>,
    /// All `r x N` matrices for each `r <= min(T, M)`.
    coefficient_blocks: Vec<Vec<Matrix>>,
}

impl<'a> Scan<'a> {
    fn new(core: &'a TransitionCore, limits: &Limits) -> Result<Self> {
        let xs: Vec<Matrix> = all_matrices(core.field(), core.t(), core.m(), limits)?.collect();
        let inputs = xs
            .into_par_iter()
            .map(|x| {
                let class = core
                    .index_of(&Subspace::span_rows(&x))
                    .expect("row space of an input");
                let d = core.entries()[class].representative();
                let b = crate::gf::solve_factor(&x.transpose(), &d.transpose())?.transpose();
                Ok(InputInfo {
                    rank: d.rows(),
                    col: Subspace::span_columns(&x),
                    class,
                    b,
                    row: core.transition_row(&x)?,
                    x,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let k = core.t().min(core.m());
        let coefficient_blocks = (0..=k)
            .map(|r| {
                let lim = Limits {
                    enumeration: limits.core_table,
                    ..*limits
                };
                Ok(all_matrices(core.field(), r, core.n(), &lim)?.collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scan {
            core,
            inputs,
            coefficient_blocks,
        })
    }

    fn prob(info: &InputInfo, y: &Matrix) -> Rational {
        info.row.get(y).cloned().unwrap_or_else(Rational::zero)
    }

    /// Every output `y = b E` with `<y> <= <x>`, paired with `E`.
    fn nested_outputs<'b>(
        &'b self,
        info: &'b InputInfo,
    ) -> impl Iterator<Item = (Matrix, &'b Matrix)> + 'b {
        self.coefficient_blocks[info.rank]
            .iter()
            .map(move |e| (info.b.mul(e).expect("conformable"), e))
    }

    /// Definition form: `P(Y|X)` constant on (row space of X, row space of
    /// Y) classes over nested pairs.
    fn row_space_symmetric_direct(&self) -> Verdict {
        let mut seen: HashMap<(usize, Subspace), (usize, Matrix, Rational)> = HashMap::new();
        for (i, info) in self.inputs.iter().enumerate() {
            for (y, e) in self.nested_outputs(info) {
                let p = Scan::prob(info, &y);
                let key = (info.class, Subspace::span_rows(e));
                match seen.get(&key) {
                    None => {
                        seen.insert(key, (i, y, p));
                    }
                    Some((j, y0, p0)) if *p0 != p => {
                        return Verdict::no(Witness::RowSpace {
                            x: self.inputs[*j].x.clone(),
                            y: y0.clone(),
                            x2: info.x.clone(),
                            y2: y,
                            p: p0.clone(),
                            p2: p,
                        });
                    }
                    _ => {}
                }
            }
        }
        Verdict::yes()
    }

    /// Formula form: `P(Y|X) = P(<Y^T> = V | <X^T> = U) / xi(rank X, rank Y)`.
    fn row_space_symmetric_formula(&self) -> bool {
        let q = self.core.field().q();
        let class_laws: Vec<BTreeMap<Subspace, Rational>> = self
            .core
            .entries()
            .iter()
            .map(|entry| {
                let mut law: BTreeMap<Subspace, Rational> = BTreeMap::new();
                for (e, p) in &entry.dist {
                    *law.entry(Subspace::span_rows(e))
                        .or_insert_with(Rational::zero) += p;
                }
                law
            })
            .collect();
        self.inputs.iter().all(|info| {
            self.nested_outputs(info).all(|(y, e)| {
                let v = Subspace::span_rows(e);
                let law = class_laws[info.class]
                    .get(&v)
                    .cloned()
                    .unwrap_or_else(Rational::zero);
                let count = Rational::from_integer(qcomb::xi(info.rank, v.dim(), q).into());
                Scan::prob(info, &y) * count == law
            })
        })
    }

    fn column_space_law(info: &InputInfo) -> BTreeMap<Subspace, Rational> {
        let mut law: BTreeMap<Subspace, Rational> = BTreeMap::new();
        for (y, p) in &info.row {
            *law.entry(Subspace::span_columns(y))
                .or_insert_with(Rational::zero) += p;
        }
        law
    }

    /// `P(<Y> = V | X)` depends on `X` only through `<X>`.
    fn unique_degradation_by_column_space(&self, laws: &[BTreeMap<Subspace, Rational>]) -> Verdict {
        let mut first: HashMap<&Subspace, usize> = HashMap::new();
        for (i, info) in self.inputs.iter().enumerate() {
            let j = *first.entry(&info.col).or_insert(i);
            if laws[i] != laws[j] {
                let keys: BTreeSet<&Subspace> = laws[i].keys().chain(laws[j].keys()).collect();
                let zero = Rational::zero();
                for v in keys {
                    let (p, p2) = (
                        laws[j].get(v).unwrap_or(&zero),
                        laws[i].get(v).unwrap_or(&zero),
                    );
                    if p != p2 {
                        return Verdict::no(Witness::Degradation {
                            x: self.inputs[j].x.clone(),
                            x2: info.x.clone(),
                            v: v.clone(),
                            p: p.clone(),
                            p2: p2.clone(),
                        });
                    }
                }
            }
        }
        Verdict::yes()
    }

    /// `P(<Y> = V | X)` depends only on `(rank X, dim V)` over all
    /// `V <= <X>`.
    fn unique_degradation_by_dimension(
        &self,
        laws: &[BTreeMap<Subspace, Rational>],
        limits: &Limits,
    ) -> Result<bool> {
        let all = enumerate_projective(self.core.t(), self.core.t(), self.core.field(), limits)?;
        let mut seen: HashMap<(usize, usize), Rational> = HashMap::new();
        for (i, info) in self.inputs.iter().enumerate() {
            for v in &all {
                if !info.col.contains(v)? {
                    continue;
                }
                let p = laws[i].get(v).cloned().unwrap_or_else(Rational::zero);
                match seen.get(&(info.rank, v.dim())) {
                    None => {
                        seen.insert((info.rank, v.dim()), p);
                    }
                    Some(p0) if *p0 != p => return Ok(false),
                    _ => {}
                }
            }
        }
        Ok(true)
    }

    fn unique_degradation(&self, limits: &Limits) -> Result<Verdict> {
        let laws: Vec<_> = self.inputs.iter().map(Scan::column_space_law).collect();
        let verdict = self.unique_degradation_by_column_space(&laws);
        if self.unique_degradation_by_dimension(&laws, limits)? != verdict.holds {
            return Err(Error::Internal(
                "unique-degradation criteria disagree".into(),
            ));
        }
        Ok(verdict)
    }

    fn degraded(&self) -> Verdict {
        // Rows must agree on each input column-space class.
        let mut reps: BTreeMap<&Subspace, usize> = BTreeMap::new();
        for (i, info) in self.inputs.iter().enumerate() {
            let j = *reps.entry(&info.col).or_insert(i);
            if info.row != self.inputs[j].row {
                let rj = &self.inputs[j].row;
                let keys: BTreeSet<&Matrix> = info.row.keys().chain(rj.keys()).collect();
                for y in keys {
                    let (p, p2) = (Scan::prob(&self.inputs[j], y), Scan::prob(info, y));
                    if p != p2 {
                        return Verdict::no(Witness::InputColumnSpace {
                            x: self.inputs[j].x.clone(),
                            x2: info.x.clone(),
                            y: y.clone(),
                            p,
                            p2,
                        });
                    }
                }
            }
        }
        // Reachable outputs with a common column space must have
        // proportional likelihood vectors over the input classes.
        let reps: Vec<&InputInfo> = reps.values().map(|&i| &self.inputs[i]).collect();
        let mut groups: BTreeMap<Subspace, Vec<&Matrix>> = BTreeMap::new();
        let reachable: BTreeSet<&Matrix> = reps.iter().flat_map(|r| r.row.keys()).collect();
        for y in reachable {
            groups.entry(Subspace::span_columns(y)).or_default().push(y);
        }
        for ys in groups.values() {
            let y0 = ys[0];
            let anchor = reps
                .iter()
                .find(|r| r.row.contains_key(y0))
                .expect("reachable");
            let a0 = Scan::prob(anchor, y0);
            for &y in &ys[1..] {
                let a = Scan::prob(anchor, y);
                for r in &reps {
                    let lhs = Scan::prob(r, y) * &a0;
                    let rhs = Scan::prob(r, y0) * &a;
                    if lhs != rhs {
                        return Verdict::no(Witness::OutputRatio {
                            y: y.clone(),
                            y2: y0.clone(),
                            x: r.x.clone(),
                            x2: anchor.x.clone(),
                            lhs,
                            rhs,
                        });
                    }
                }
            }
        }
        Verdict::yes()
    }

    fn rank_symmetric(&self) -> (Verdict, Option<RankTable>) {
        let mut seen: BTreeMap<(usize, usize), (usize, Matrix, Rational)> = BTreeMap::new();
        for (i, info) in self.inputs.iter().enumerate() {
            for (y, e) in self.nested_outputs(info) {
                let p = Scan::prob(info, &y);
                let key = (info.rank, e.rank());
                match seen.get(&key) {
                    None => {
                        seen.insert(key, (i, y, p));
                    }
                    Some((j, y0, p0)) if *p0 != p => {
                        let w = Witness::Rank {
                            x: self.inputs[*j].x.clone(),
                            y: y0.clone(),
                            x2: info.x.clone(),
                            y2: y,
                            p: p0.clone(),
                            p2: p,
                        };
                        return (Verdict::no(w), None);
                    }
                    _ => {}
                }
            }
        }
        (
            Verdict::yes(),
            Some(seen.into_iter().map(|(k, (_, _, p))| (k, p)).collect()),
        )
    }
}

pub fn is_row_space_symmetric(core: &TransitionCore, limits: &Limits) -> Result<Verdict> {
    let scan = Scan::new(core, limits)?;
    row_space_symmetric(&scan)
}

fn row_space_symmetric(scan: &Scan) -> Result<Verdict> {
    let verdict = scan.row_space_symmetric_direct();
    if verdict.holds != scan.row_space_symmetric_formula() {
        return Err(Error::Internal(
            "row-space symmetry criteria disagree".into(),
        ));
    }
    Ok(verdict)
}

pub fn has_unique_subspace_degradation(core: &TransitionCore, limits: &Limits) -> Result<Verdict> {
    Scan::new(core, limits)?.unique_degradation(limits)
}

pub fn is_degraded(core: &TransitionCore, limits: &Limits) -> Result<Verdict> {
    Ok(Scan::new(core, limits)?.degraded())
}

/// On success the verdict comes with the table `mu(rank X, rank Y)`.
pub fn is_rank_symmetric(
    core: &TransitionCore,
    limits: &Limits,
) -> Result<(Verdict, Option<RankTable>)> {
    Ok(Scan::new(core, limits)?.rank_symmetric())
}

/// Any two transfer matrices of equal rank carry equal mass.
pub fn is_uniform_given_rank(spec: &ChannelSpec, limits: &Limits) -> Result<Verdict> {
    let mut first: BTreeMap<usize, (Matrix, Rational)> = BTreeMap::new();
    for h in all_matrices(spec.field(), spec.m(), spec.n(), limits)? {
        let p = spec.mass(&h);
        match first.get(&h.rank()) {
            None => {
                first.insert(h.rank(), (h, p));
            }
            Some((h0, p0)) if *p0 != p => {
                return Ok(Verdict::no(Witness::Mass {
                    h: h0.clone(),
                    h2: h,
                    p: p0.clone(),
                    p2: p,
                }));
            }
            _ => {}
        }
    }
    Ok(Verdict::yes())
}

/// `p_H(H) = p_H(H')` whenever `<H^T> = <H'^T>`; sufficient for a unique
/// subspace degradation.
pub fn has_row_space_invariant_law(spec: &ChannelSpec, limits: &Limits) -> Result<bool> {
    let mut first: HashMap<Subspace, Rational> = HashMap::new();
    for h in all_matrices(spec.field(), spec.m(), spec.n(), limits)? {
        let p = spec.mass(&h);
        if let Some(p0) = first.get(&Subspace::span_rows(&h)) {
            if *p0 != p {
                return Ok(false);
            }
        } else {
            first.insert(Subspace::span_rows(&h), p);
        }
    }
    Ok(true)
}

/// All five class flags, computed from a single scan.
pub fn classify(core: &TransitionCore, limits: &Limits) -> Result<ClassReport> {
    let scan = Scan::new(core, limits)?;
    let rss = row_space_symmetric(&scan)?;
    let usd = scan.unique_degradation(limits)?;
    let deg = scan.degraded();
    let (rs, rank_table) = scan.rank_symmetric();
    let ugr = is_uniform_given_rank(core.spec(), limits)?;
    let mut witnesses = BTreeMap::new();
    for (name, v) in [
        ("row_space_symmetric", &rss),
        ("unique_subspace_degradation", &usd),
        ("degraded", &deg),
        ("rank_symmetric", &rs),
        ("uniform_given_rank", &ugr),
    ] {
        if let Some(w) = &v.witness {
            witnesses.insert(name, w.clone());
        }
    }
    Ok(ClassReport {
        row_space_symmetric: rss.holds,
        unique_subspace_degradation: usd.holds,
        degraded: deg.holds,
        rank_symmetric: rs.holds,
        uniform_given_rank: ugr.holds,
        witnesses,
        rank_table,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub classes: ClassReport,
    pub row_space_invariant_law: bool,
    /// Each violated implication, spelled out. Always empty unless there is
    /// a bug: the implications are theorems.
    pub violations: Vec<String>,
}

/// Evaluates every class flag and checks the known implications between
/// them.
pub fn implication_audit(core: &TransitionCore, limits: &Limits) -> Result<AuditReport> {
    let c = classify(core, limits)?;
    let invariant = has_row_space_invariant_law(core.spec(), limits)?;
    let wide = core.t() >= core.m();
    let rules: [(bool, bool, &str); 8] = [
        (c.rank_symmetric, c.degraded, "rank symmetric => degraded"),
        (
            c.degraded,
            c.unique_subspace_degradation,
            "degraded => unique subspace degradation",
        ),
        (
            c.degraded,
            c.row_space_symmetric,
            "degraded => row-space symmetric",
        ),
        (
            c.uniform_given_rank,
            c.rank_symmetric,
            "uniform given rank => rank symmetric",
        ),
        (
            wide && c.row_space_symmetric,
            c.unique_subspace_degradation,
            "T >= M: row-space symmetric => unique subspace degradation",
        ),
        (
            wide && c.rank_symmetric,
            c.uniform_given_rank,
            "T >= M: rank symmetric => uniform given rank",
        ),
        (
            invariant,
            c.unique_subspace_degradation,
            "row-space-invariant law => unique subspace degradation",
        ),
        (
            c.rank_symmetric,
            c.row_space_symmetric,
            "rank symmetric => row-space symmetric",
        ),
    ];
    let violations = rules
        .iter()
        .filter(|(a, b, _)| *a && !*b)
        .map(|(_, _, s)| s.to_string())
        .collect();
    Ok(AuditReport {
        classes: c,
        row_space_invariant_law: invariant,
        violations,
    })
}
