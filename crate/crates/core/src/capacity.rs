//! Capacities and rate functionals.
//!
//! Every optimizer here is one instance of a reward-augmented
//! Blahut-Arimoto iteration: maximize `sum_i p_i c_i + I(p; W)` over input
//! laws `p`, for a discrete channel `W` and per-input rewards `c`.
//!
//! * Shannon capacity over alpha-type inputs: inputs are row spaces `U`,
//!   outputs are row spaces `V`, and the reward collects the part of
//!   `I(X;Y)` not visible at the row-space level.
//! * Subspace-coding capacity with a unique degradation: inputs and outputs
//!   are ranks, rewards are `R(U)`.
//! * Brute-force subspace coding: inputs and outputs are column spaces, no
//!   reward.

use std::collections::{BTreeMap, HashMap};

use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::channel::{transition_naive, AlphaInput, ChannelSpec, RankJoint, TransitionCore};
use crate::classify::{self, ClassReport};
use crate::error::{Error, Result};
use crate::gf::{all_matrices, checked_pow, Matrix};
use crate::limits::Limits;
use crate::prob::{format_rational, log2_big, log2_ratio, rational_to_f64, Rational, Weight};
use crate::qcomb;
use crate::subspace::{enumerate_projective, matrices_with_column_space, Subspace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaOptions {
    /// Stop once the duality gap `max_i d_i - objective` is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Keep the objective value of every iteration in the outcome.
    pub record_trace: bool,
}

impl Default for BaOptions {
    fn default() -> Self {
        BaOptions {
            tol: 1e-9,
            max_iter: 100_000,
            record_trace: false,
        }
    }
}

/// Discrete memoryless channel with an additive reward per input symbol.
#[derive(Debug, Clone)]
pub struct RewardChannel {
    rows: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
    outputs: usize,
}

impl RewardChannel {
    pub fn new(rows: Vec<Vec<(usize, f64)>>, reward: Vec<f64>, outputs: usize) -> Result<Self> {
        if rows.is_empty() || rows.len() != reward.len() {
            return Err(Error::Invalid(format!(
                "{} rows and {} rewards",
                rows.len(),
                reward.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            let total: f64 = row.iter().map(|&(_, w)| w).sum();
            if (total - 1.0).abs() > 1e-9 || row.iter().any(|&(j, w)| j >= outputs || w < 0.0) {
                return Err(Error::Invalid(format!(
                    "row {i} is not a distribution over {outputs} outputs"
                )));
            }
        }
        Ok(RewardChannel {
            rows,
            reward,
            outputs,
        })
    }

    pub fn inputs(&self) -> usize {
        self.rows.len()
    }

    /// Output law and per-input scores `c_i + D(W_i || q)`.
    fn scores(&self, p: &[f64], negentropy: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut q = vec![0.0; self.outputs];
        for (pi, row) in p.iter().zip(&self.rows) {
            if *pi > 0.0 {
                for &(j, w) in row {
                    q[j] += pi * w;
                }
            }
        }
        let logq: Vec<f64> = q
            .iter()
            .map(|&x| if x > 0.0 { x.log2() } else { f64::NEG_INFINITY })
            .collect();
        let d = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cross: f64 = row
                    .iter()
                    .filter(|&&(_, w)| w > 0.0)
                    .map(|&(j, w)| w * logq[j])
                    .sum();
                self.reward[i] + negentropy[i] - cross
            })
            .collect();
        (q, d)
    }

    /// `sum_i p_i (c_i + D(W_i || pW))`.
    pub fn objective(&self, p: &[f64]) -> f64 {
        let (_, d) = self.scores(p, &self.negentropy());
        p.iter()
            .zip(&d)
            .filter(|(pi, _)| **pi > 0.0)
            .map(|(pi, di)| pi * di)
            .sum()
    }

    fn negentropy(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .filter(|&&(_, w)| w > 0.0)
                    .map(|&(_, w)| w * w.log2())
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaOutcome {
    pub input: Vec<f64>,
    /// Objective at `input`; within `gap` of the optimum.
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

/// Blahut-Arimoto from the uniform input law.
pub fn blahut_arimoto(ch: &RewardChannel, opts: &BaOptions) -> Result<BaOutcome> {
    let n = ch.inputs();
    blahut_arimoto_from(ch, vec![1.0 / n as f64; n], opts)
}

/// Blahut-Arimoto from a given input law. The objective is checked to be
/// nondecreasing at every step.
pub fn blahut_arimoto_from(
    ch: &RewardChannel,
    init: Vec<f64>,
    opts: &BaOptions,
) -> Result<BaOutcome> {
    if init.len() != ch.inputs() {
        return Err(Error::Dimension(format!(
            "{} initial masses for {} inputs",
            init.len(),
            ch.inputs()
        )));
    }
    let negentropy = ch.negentropy();
    let mut p = init;
    let mut previous = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let (_, d) = ch.scores(&p, &negentropy);
        let value: f64 = p
            .iter()
            .zip(&d)
            .filter(|(pi, _)| **pi > 0.0)
            .map(|(pi, di)| pi * di)
            .sum();
        if value < previous - 1e-12 * (1.0 + previous.abs()) {
            return Err(Error::Internal(format!(
                "Blahut-Arimoto objective decreased from {previous} to {value} at iteration {iterations}"
            )));
        }
        previous = value;
        if opts.record_trace {
            trace.push(value);
        }
        let top = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let gap = (top - value).max(0.0);
        if gap <= opts.tol || iterations >= opts.max_iter {
            return Ok(BaOutcome {
                input: p,
                value,
                gap,
                iterations,
                converged: gap <= opts.tol,
                trace,
            });
        }
        let mut total = 0.0;
        for (pi, di) in p.iter_mut().zip(&d) {
            *pi *= (di - top).exp2();
            total += *pi;
        }
        p.iter_mut().for_each(|pi| *pi /= total);
        iterations += 1;
    }
}

/// The alpha-type view of a channel: input row spaces `U` (core order),
/// output row spaces `V`, and `W(V|U)`.
struct RowSpaceModel<'a> {
    core: &'a TransitionCore,
    outputs: Vec<Subspace>,
    /// `W(V|U)`, exact, keyed by output index.
    exact: Vec<BTreeMap<usize, Rational>>,
    channel: RewardChannel,
}

impl<'a> RowSpaceModel<'a> {
    fn new(core: &'a TransitionCore) -> Self {
        let t = core.t();
        let q = core.field().q();
        let mut outputs: Vec<Subspace> = Vec::new();
        let mut index: HashMap<Subspace, usize> = HashMap::new();
        let mut exact = Vec::new();
        let mut rows = Vec::new();
        let mut reward = Vec::new();
        for entry in core.entries() {
            let mut law: BTreeMap<usize, Rational> = BTreeMap::new();
            let mut e_negentropy = 0.0;
            for (e, p) in &entry.dist {
                let pf = rational_to_f64(p);
                e_negentropy += pf * pf.log2();
                let v = Subspace::span_rows(e);
                let next = outputs.len();
                let j = *index.entry(v.clone()).or_insert_with(|| {
                    outputs.push(v);
                    next
                });
                *law.entry(j).or_insert_with(Rational::zero) += p;
            }
            let row: Vec<(usize, f64)> =
                law.iter().map(|(&j, p)| (j, rational_to_f64(p))).collect();
            let v_negentropy: f64 = row.iter().map(|&(_, w)| w * w.log2()).sum();
            let counts: f64 = row
                .iter()
                .map(|&(j, w)| w * log2_big(&qcomb::xi(t, outputs[j].dim(), q)))
                .sum();
            // Only H(E | U, V) and the class sizes of Y are invisible at
            // the row-space level.
            reward.push(e_negentropy - v_negentropy + counts);
            rows.push(row);
            exact.push(law);
        }
        let n = outputs.len();
        RowSpaceModel {
            core,
            outputs,
            exact,
            channel: RewardChannel {
                rows,
                reward,
                outputs: n,
            },
        }
    }

    fn weights<W: Weight>(&self, alpha: &AlphaInput<W>) -> Vec<f64> {
        self.core
            .entries()
            .iter()
            .map(|e| alpha.mass(&e.subspace).to_f64())
            .collect()
    }

    fn alpha(&self, p: &[f64]) -> AlphaInput<f64> {
        let pmf = self
            .core
            .entries()
            .iter()
            .zip(p)
            .map(|(e, &w)| (e.subspace.clone(), w))
            .collect();
        AlphaInput::new(self.core, pmf).expect("normalized")
    }

    /// `I(<X^T>; <Y^T>)`.
    fn subspace_mi(&self, p: &[f64]) -> f64 {
        let mut pv = vec![0.0; self.outputs.len()];
        for (pi, row) in p.iter().zip(&self.channel.rows) {
            for &(j, w) in row {
                pv[j] += pi * w;
            }
        }
        let mut total = 0.0;
        for (pi, row) in p.iter().zip(&self.channel.rows) {
            if *pi > 0.0 {
                for &(j, w) in row {
                    if w > 0.0 {
                        total += pi * w * (w / pv[j]).log2();
                    }
                }
            }
        }
        total
    }
}

/// `I(X;Y)` for the alpha-type input, from one representative per row-space
/// class.
pub fn mi_alpha<W: Weight>(core: &TransitionCore, alpha: &AlphaInput<W>) -> Result<f64> {
    let model = RowSpaceModel::new(core);
    Ok(model.channel.objective(&model.weights(alpha)))
}

/// `J(rank X; rank Y) = sum p(r,s) log2(xi(T,s) / xi(r,s))`.
pub fn j_rank<W: Weight>(joint: &RankJoint<W>, t: usize, q: u32) -> f64 {
    joint
        .pmf
        .iter()
        .filter(|(_, p)| !p.is_zero())
        .map(|(&(r, s), p)| p.to_f64() * log2_ratio(&qcomb::xi(t, s, q), &qcomb::xi(r, s, q)))
        .sum()
}

/// `I(rank X; rank Y)`.
pub fn rank_mi<W: Weight>(joint: &RankJoint<W>) -> f64 {
    let px = joint.marginal_x();
    let py = joint.marginal_y();
    joint
        .pmf
        .iter()
        .filter(|(_, p)| !p.is_zero())
        .map(|(&(r, s), p)| {
            let p = p.to_f64();
            p * (p / (px[&r].to_f64() * py[&s].to_f64())).log2()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateDecomposition {
    pub j: f64,
    /// `(T - M) E[rank H] log2 q`.
    pub linear_term: f64,
    pub epsilon: f64,
}

/// Splits `J` for a full-rank input (`rank X = M`, `T >= M`) into a term
/// linear in `T - M` and the bounded correction `epsilon`.
pub fn full_rank_rate_decomposition<W: Weight>(
    joint: &RankJoint<W>,
    t: usize,
    m: usize,
    q: u32,
) -> Result<RateDecomposition> {
    if t < m {
        return Err(Error::Precondition(format!(
            "needs T >= M, got T={t} M={m}"
        )));
    }
    let full = joint.marginal_x().get(&m).cloned().unwrap_or_else(W::zero);
    if !full.agrees(&W::one(), 1e-12) {
        return Err(Error::Precondition(format!(
            "input rank is not M={m} with probability one"
        )));
    }
    let rank_y = joint.marginal_y();
    let mean: f64 = rank_y.iter().map(|(&s, p)| s as f64 * p.to_f64()).sum();
    let linear_term = (t - m) as f64 * mean * f64::from(q).log2();
    let epsilon = qcomb::epsilon_term(&rank_y, t, m, q)?;
    Ok(RateDecomposition {
        j: j_rank(joint, t, q),
        linear_term,
        epsilon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBounds {
    /// `J + I(<X^T>; <Y^T>)`.
    pub lower: f64,
    /// `lower + sum p(r,s) log2 xi(r,s)`.
    pub upper: f64,
    pub mi: f64,
    pub j: f64,
    pub subspace_mi: f64,
}

/// Lower and upper bounds on `I(X;Y)` from row-space quantities, together
/// with the exact value.
pub fn rate_bounds<W: Weight>(core: &TransitionCore, alpha: &AlphaInput<W>) -> Result<RateBounds> {
    let model = RowSpaceModel::new(core);
    let p = model.weights(alpha);
    let joint = core.rank_joint(alpha)?;
    let q = core.field().q();
    let j = j_rank(&joint, core.t(), q);
    let slack: f64 = joint
        .pmf
        .iter()
        .map(|(&(r, s), w)| w.to_f64() * log2_big(&qcomb::xi(r, s, q)))
        .sum();
    let subspace_mi = model.subspace_mi(&p);
    let lower = j + subspace_mi;
    Ok(RateBounds {
        lower,
        upper: lower + slack,
        mi: model.channel.objective(&p),
        j,
        subspace_mi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    /// Bits per channel use.
    pub value: f64,
    pub achiever: AlphaInput<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
    pub trace: Vec<f64>,
}

/// Rounds to 12 significant digits for reports.
pub fn sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn alpha_json(alpha: &AlphaInput<f64>) -> Value {
    json!(alpha
        .pmf()
        .iter()
        .filter(|(_, p)| **p > 0.0)
        .map(|(u, p)| json!({"U": u, "p": sig12(*p)}))
        .collect::<Vec<_>>())
}

impl CapacityResult {
    pub fn to_json(&self) -> Value {
        json!({
            "value": sig12(self.value),
            "gap": self.gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "achiever": alpha_json(&self.achiever),
        })
    }
}

/// Shannon capacity by Blahut-Arimoto over alpha-type inputs.
///
/// On alphabets of at most 4096 inputs the BA update of the full input law
/// is recomputed at the start and at the end and checked to stay constant
/// on row-space classes.
pub fn shannon_capacity(core: &TransitionCore, opts: &BaOptions) -> Result<CapacityResult> {
    let model = RowSpaceModel::new(core);
    let n = model.channel.inputs();
    let init = vec![1.0 / n as f64; n];
    check_alpha_closure(&model, &init)?;
    let out = blahut_arimoto_from(&model.channel, init, opts)?;
    check_alpha_closure(&model, &out.input)?;
    Ok(CapacityResult {
        value: out.value,
        achiever: model.alpha(&merge_twins(&model, &out.input)),
        iterations: out.iterations,
        gap: out.gap,
        converged: out.converged,
        trace: out.trace,
    })
}

/// Row spaces with the same law of `V` and the same reward are
/// interchangeable in every objective here. Their joint mass is moved to the
/// least of them, so that the reported achiever does not depend on where
/// Blahut-Arimoto happened to split it.
fn merge_twins(model: &RowSpaceModel, p: &[f64]) -> Vec<f64> {
    let entries = model.core.entries();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| entries[a].subspace.cmp(&entries[b].subspace));
    let mut merged = p.to_vec();
    for (k, &i) in order.iter().enumerate() {
        if merged[i] == 0.0 && p[i] == 0.0 {
            continue;
        }
        for &j in &order[k + 1..] {
            let twin = model.exact[i] == model.exact[j]
                && (model.channel.reward[i] - model.channel.reward[j]).abs() <= 1e-12;
            if twin && merged[j] > 0.0 {
                merged[i] += merged[j];
                merged[j] = 0.0;
            }
        }
    }
    merged
}

fn check_alpha_closure(model: &RowSpaceModel, p: &[f64]) -> Result<()> {
    let core = model.core;
    let q = core.field().q();
    let (t, m) = (core.t(), core.m());
    if checked_pow(q, t * m).is_none_or(|c| c > 4096) {
        return Ok(());
    }
    let negentropy = model.channel.negentropy();
    let (pv, d) = model.channel.scores(p, &negentropy);
    let top = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = p
        .iter()
        .zip(&d)
        .map(|(pi, di)| pi * (di - top).exp2())
        .sum();
    let sizes: Vec<f64> = (0..=t.min(m))
        .map(|r| log2_big(&qcomb::xi(t, r, q)).exp2())
        .collect();
    let out_index: HashMap<&Subspace, usize> = model
        .outputs
        .iter()
        .enumerate()
        .map(|(j, v)| (v, j))
        .collect();
    for x in all_matrices(core.field(), t, m, &Limits::default())? {
        let u = core
            .index_of(&Subspace::span_rows(&x))
            .expect("legal row space");
        let r = core.entries()[u].dim();
        let mut dx = 0.0;
        for (y, w) in core.transition_row(&x)? {
            let w = rational_to_f64(&w);
            let j = out_index[&Subspace::span_rows(&y)];
            let py = pv[j] / sizes[y.rank()];
            dx += w * (w / py).log2();
        }
        let updated = p[u] / sizes[r] * (dx - top).exp2() / z;
        let class = p[u] / sizes[r] * (d[u] - top).exp2() / z;
        if (updated - class).abs() > 1e-12 {
            return Err(Error::Internal(format!(
                "Blahut-Arimoto update leaves the alpha-type family at X = {x}"
            )));
        }
    }
    Ok(())
}

/// Full-alphabet reference computation.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveCapacity {
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Input law indexed by `Matrix::to_index`.
    pub input: Vec<f64>,
    pub trace: Vec<f64>,
}

fn naive_channel(spec: &ChannelSpec, limits: &Limits) -> Result<RewardChannel> {
    let table = transition_naive(spec, limits)?;
    let outputs = checked_pow(spec.q(), spec.t() * spec.n())
        .filter(|&c| c <= limits.naive_table)
        .ok_or_else(|| {
            Error::budget(
                "naive output alphabet",
                format!("{}^{}", spec.q(), spec.t() * spec.n()),
                limits.naive_table,
            )
        })?;
    let rows: Vec<Vec<(usize, f64)>> = table
        .inputs()
        .iter()
        .map(|x| {
            table
                .row(x)
                .iter()
                .map(|(y, p)| (y.to_index() as usize, rational_to_f64(p)))
                .collect()
        })
        .collect();
    let n = rows.len();
    RewardChannel::new(rows, vec![0.0; n], outputs as usize)
}

/// Blahut-Arimoto over every `T x M` input matrix.
pub fn shannon_capacity_naive(
    spec: &ChannelSpec,
    opts: &BaOptions,
    limits: &Limits,
) -> Result<NaiveCapacity> {
    let ch = naive_channel(spec, limits)?;
    let out = blahut_arimoto(&ch, opts)?;
    Ok(NaiveCapacity {
        value: out.value,
        gap: out.gap,
        iterations: out.iterations,
        converged: out.converged,
        input: out.input,
        trace: out.trace,
    })
}

/// `I(X;Y)` from the full transition table; `p_x` is indexed by
/// `Matrix::to_index`.
pub fn mi_naive(spec: &ChannelSpec, p_x: &[f64], limits: &Limits) -> Result<f64> {
    let ch = naive_channel(spec, limits)?;
    if p_x.len() != ch.inputs() {
        return Err(Error::Dimension(format!(
            "{} masses for {} inputs",
            p_x.len(),
            ch.inputs()
        )));
    }
    Ok(ch.objective(p_x))
}

/// The law on `T x M` matrices induced by an alpha-type input: uniform on
/// each row-space class.
pub fn matrix_law<W: Weight>(
    core: &TransitionCore,
    alpha: &AlphaInput<W>,
    limits: &Limits,
) -> Result<Vec<f64>> {
    let q = core.field().q();
    all_matrices(core.field(), core.t(), core.m(), limits)?
        .map(|x| {
            let u = Subspace::span_rows(&x);
            let size = log2_big(&qcomb::xi(core.t(), u.dim(), q)).exp2();
            Ok(alpha.mass(&u).to_f64() / size)
        })
        .collect()
}

/// `R(U) = sum_s P(rank Y = s | U) log2(xi(T,s) / xi(dim U, s))`.
pub fn r_of_u(core: &TransitionCore, u: &Subspace) -> Result<f64> {
    let law = core.cond_rank_given_rowspace(u)?;
    Ok(rate_of_rank_law(&law, u.dim(), core.t(), core.field().q()))
}

fn rate_of_rank_law(law: &BTreeMap<usize, Rational>, r: usize, t: usize, q: u32) -> f64 {
    law.iter()
        .map(|(&s, p)| rational_to_f64(p) * log2_ratio(&qcomb::xi(t, s, q), &qcomb::xi(r, s, q)))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CssMode {
    UniqueSdConvex,
    AlphaLowerBound,
    BruteForceExact,
}

impl CssMode {
    pub fn name(self) -> &'static str {
        match self {
            CssMode::UniqueSdConvex => "unique_sd_convex",
            CssMode::AlphaLowerBound => "alpha_lower_bound",
            CssMode::BruteForceExact => "brute_force_exact",
        }
    }
}

/// One candidate input matrix for a column space, with the subspace channel
/// row it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationChoice {
    pub x: Matrix,
    /// `P(<Y> = V | X)` over output column spaces with positive mass.
    pub row: Vec<(Subspace, Rational)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpaceOptions {
    pub column_space: Subspace,
    pub choices: Vec<DegradationChoice>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CssResult {
    pub value: f64,
    pub mode: CssMode,
    /// Set when brute force was over budget and the value is only the
    /// alpha-type lower bound.
    pub lower_bound_only: bool,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Optimal law of `rank X` (rank-based modes).
    pub rank_pmf: Option<BTreeMap<usize, f64>>,
    /// Row space used for each rank (alpha lower bound).
    pub assignment: Option<BTreeMap<usize, Subspace>>,
    /// Input matrix chosen for each column space (brute force).
    pub degradation: Option<Vec<(Subspace, Matrix)>>,
    /// Optimal law of `<X>` (brute force).
    pub column_space_pmf: Option<Vec<(Subspace, f64)>>,
    /// Every candidate per column space (brute force).
    pub options: Vec<ColumnSpaceOptions>,
    /// Number of distinct candidate channels optimized.
    pub candidates: u64,
    pub note: Option<String>,
}

impl CssResult {
    fn zero(mode: CssMode) -> Self {
        CssResult {
            value: 0.0,
            mode,
            lower_bound_only: false,
            gap: 0.0,
            iterations: 0,
            converged: true,
            rank_pmf: None,
            assignment: None,
            degradation: None,
            column_space_pmf: None,
            options: Vec::new(),
            candidates: 0,
            note: None,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "value": sig12(self.value),
            "mode": self.mode.name(),
            "lower_bound_only": self.lower_bound_only,
            "gap": self.gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "candidates": self.candidates,
        });
        if let Some(r) = &self.rank_pmf {
            v["rank_pmf"] = json!(r
                .iter()
                .map(|(k, p)| json!({"rank": k, "p": sig12(*p)}))
                .collect::<Vec<_>>());
        }
        if let Some(a) = &self.assignment {
            v["assignment"] = json!(a
                .iter()
                .map(|(k, u)| json!({"rank": k, "U": u}))
                .collect::<Vec<_>>());
        }
        if let Some(d) = &self.degradation {
            v["degradation"] = json!(d
                .iter()
                .map(|(w, x)| json!({"column_space": w, "X": x.to_nested()}))
                .collect::<Vec<_>>());
        }
        if let Some(c) = &self.column_space_pmf {
            v["column_space_pmf"] = json!(c
                .iter()
                .filter(|(_, p)| *p > 0.0)
                .map(|(w, p)| json!({"column_space": w, "p": sig12(*p)}))
                .collect::<Vec<_>>());
        }
        if !self.options.is_empty() {
            v["options"] = json!(self
                .options
                .iter()
                .map(|o| json!({
                    "column_space": o.column_space,
                    "choices": o.choices.iter().map(|c| json!({
                        "X": c.x.to_nested(),
                        "row": c.row.iter().map(|(s, p)| json!({"V": s, "p": format_rational(p)})).collect::<Vec<_>>(),
                    })).collect::<Vec<_>>(),
                }))
                .collect::<Vec<_>>());
        }
        if let Some(n) = &self.note {
            v["note"] = json!(n);
        }
        v
    }
}

/// Rank-to-rank channel with rewards `R(U(r))`, one row space per rank.
fn rank_channel(core: &TransitionCore, choice: &[usize]) -> Result<RewardChannel> {
    let q = core.field().q();
    let k = core.t().min(core.m()).min(core.n());
    let mut rows = Vec::new();
    let mut reward = Vec::new();
    for &i in choice {
        let entry = &core.entries()[i];
        let law = crate::channel::rank_law(&entry.dist);
        reward.push(rate_of_rank_law(&law, entry.dim(), core.t(), q));
        rows.push(law.iter().map(|(&s, p)| (s, rational_to_f64(p))).collect());
    }
    RewardChannel::new(rows, reward, k + 1)
}

fn rank_result(
    core: &TransitionCore,
    choice: &[usize],
    out: &BaOutcome,
    mode: CssMode,
) -> CssResult {
    let ranks: Vec<usize> = choice.iter().map(|&i| core.entries()[i].dim()).collect();
    CssResult {
        value: out.value,
        gap: out.gap,
        iterations: out.iterations,
        converged: out.converged,
        rank_pmf: Some(
            ranks
                .iter()
                .cloned()
                .zip(out.input.iter().cloned())
                .collect(),
        ),
        assignment: Some(
            ranks
                .into_iter()
                .zip(choice.iter().map(|&i| core.entries()[i].subspace.clone()))
                .collect(),
        ),
        ..CssResult::zero(mode)
    }
}

/// First row space of each dimension `0..=min(T,M)`, in core order.
fn first_of_each_rank(core: &TransitionCore) -> Vec<usize> {
    let mut seen = BTreeMap::new();
    for (i, e) in core.entries().iter().enumerate() {
        seen.entry(e.dim()).or_insert(i);
    }
    seen.into_values().collect()
}

/// Subspace-coding capacity for channels with a unique subspace
/// degradation: a convex problem over the law of `rank X` alone.
pub fn css_unique(core: &TransitionCore, opts: &BaOptions, limits: &Limits) -> Result<CssResult> {
    if !classify::has_unique_subspace_degradation(core, limits)?.holds {
        return Err(Error::Precondition(
            "the subspace degradation is not unique; use the brute-force or alpha-type optimizer"
                .into(),
        ));
    }
    let choice = first_of_each_rank(core);
    let out = blahut_arimoto(&rank_channel(core, &choice)?, opts)?;
    let mut res = rank_result(core, &choice, &out, CssMode::UniqueSdConvex);
    res.candidates = 1;
    Ok(res)
}

/// Best alpha-type subspace-coding rate with one row space per rank, over
/// every such assignment. A lower bound on the subspace-coding capacity,
/// tight when the degradation is unique.
pub fn css_alpha_lower(
    core: &TransitionCore,
    opts: &BaOptions,
    limits: &Limits,
) -> Result<CssResult> {
    css_alpha_lower_from_rank(core, opts, limits, 0)
}

fn css_alpha_lower_from_rank(
    core: &TransitionCore,
    opts: &BaOptions,
    limits: &Limits,
    min_rank: usize,
) -> Result<CssResult> {
    // Row spaces with the same rank law give the same rank channel and
    // reward; keep one of each.
    let mut per_rank: BTreeMap<usize, Vec<(usize, BTreeMap<usize, Rational>)>> = BTreeMap::new();
    for (i, e) in core.entries().iter().enumerate() {
        if e.dim() < min_rank {
            continue;
        }
        let law = crate::channel::rank_law(&e.dist);
        let slot = per_rank.entry(e.dim()).or_default();
        if !slot.iter().any(|(_, l)| *l == law) {
            slot.push((i, law));
        }
    }
    let radices: Vec<usize> = per_rank.values().map(Vec::len).collect();
    let total = radices
        .iter()
        .try_fold(1u64, |acc, &r| acc.checked_mul(r as u64))
        .unwrap_or(u64::MAX);
    if total > limits.degradations {
        return Err(Error::budget(
            "rank-to-row-space assignments",
            total,
            limits.degradations,
        ));
    }
    let candidates: Vec<&Vec<(usize, BTreeMap<usize, Rational>)>> = per_rank.values().collect();
    let outcomes = (0..total)
        .into_par_iter()
        .map(|mut code| {
            let choice: Vec<usize> = candidates
                .iter()
                .map(|c| {
                    let pick = c[(code % c.len() as u64) as usize].0;
                    code /= c.len() as u64;
                    pick
                })
                .collect();
            let out = blahut_arimoto(&rank_channel(core, &choice)?, opts)?;
            Ok((choice, out))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<&(Vec<usize>, BaOutcome)> = None;
    for o in &outcomes {
        if best.is_none_or(|b| o.1.value > b.1.value) {
            best = Some(o);
        }
    }
    let (choice, out) = best.expect("at least the trivial assignment");
    let mut res = rank_result(core, choice, out, CssMode::AlphaLowerBound);
    res.candidates = total;
    res.converged = outcomes.iter().all(|(_, o)| o.converged);
    Ok(res)
}

/// Exact subspace-coding capacity by enumerating deterministic
/// degradations: one input matrix per column space. Falls back to the
/// alpha-type lower bound, flagged, when the enumeration is over budget.
pub fn css_bruteforce(
    core: &TransitionCore,
    opts: &BaOptions,
    limits: &Limits,
) -> Result<CssResult> {
    match bruteforce(core, opts, limits) {
        Err(Error::Budget {
            what,
            needed,
            limit,
        }) => {
            let mut res = css_alpha_lower(core, opts, limits)?;
            res.lower_bound_only = true;
            res.note = Some(format!(
                "brute force over budget ({what}: {needed} > {limit}); value is a lower bound"
            ));
            Ok(res)
        }
        other => other,
    }
}

fn bruteforce(core: &TransitionCore, opts: &BaOptions, limits: &Limits) -> Result<CssResult> {
    let (t, m) = (core.t(), core.m());
    let field = core.field();
    let inputs = checked_pow(field.q(), t * m).unwrap_or(u64::MAX);
    if inputs > limits.enumeration {
        return Err(Error::budget("input matrices", inputs, limits.enumeration));
    }
    let column_spaces = enumerate_projective(t.min(m), t, field, limits)?;
    let mut out_index: BTreeMap<Subspace, usize> = BTreeMap::new();
    let mut options = Vec::new();
    // Distinct rows per column space, as (first matrix, row).
    let mut distinct: Vec<Vec<(Matrix, Vec<(usize, f64)>)>> = Vec::new();
    for w in &column_spaces {
        let mut choices = Vec::new();
        let mut rows: Vec<(Matrix, BTreeMap<Subspace, Rational>)> = Vec::new();
        let mut candidates = matrices_with_column_space(w, m, limits)?;
        // Among inputs inducing the same row, the least matrix represents it.
        candidates.sort();
        for x in candidates {
            let mut law: BTreeMap<Subspace, Rational> = BTreeMap::new();
            for (y, p) in core.transition_row(&x)? {
                *law.entry(Subspace::span_columns(&y))
                    .or_insert_with(Rational::zero) += p;
            }
            for v in law.keys() {
                let next = out_index.len();
                out_index.entry(v.clone()).or_insert(next);
            }
            choices.push(DegradationChoice {
                x: x.clone(),
                row: law.clone().into_iter().collect(),
            });
            if !rows.iter().any(|(_, l)| *l == law) {
                rows.push((x, law));
            }
        }
        options.push(ColumnSpaceOptions {
            column_space: w.clone(),
            choices,
        });
        distinct.push(
            rows.into_iter()
                .map(|(x, law)| {
                    (
                        x,
                        law.iter()
                            .map(|(v, p)| (out_index[v], rational_to_f64(p)))
                            .collect(),
                    )
                })
                .collect(),
        );
    }
    let total = distinct
        .iter()
        .try_fold(1u64, |acc, d| acc.checked_mul(d.len() as u64))
        .unwrap_or(u64::MAX);
    if total > limits.degradations {
        return Err(Error::budget(
            "deterministic degradations",
            total,
            limits.degradations,
        ));
    }
    let outputs = out_index.len();
    let outcomes = (0..total)
        .into_par_iter()
        .map(|mut code| {
            let mut picks = Vec::with_capacity(distinct.len());
            let mut rows = Vec::with_capacity(distinct.len());
            for d in &distinct {
                let k = (code % d.len() as u64) as usize;
                code /= d.len() as u64;
                picks.push(k);
                rows.push(d[k].1.clone());
            }
            let n = rows.len();
            let out = blahut_arimoto(&RewardChannel::new(rows, vec![0.0; n], outputs)?, opts)?;
            Ok((picks, out))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<&(Vec<usize>, BaOutcome)> = None;
    for o in &outcomes {
        if best.is_none_or(|b| o.1.value > b.1.value) {
            best = Some(o);
        }
    }
    let (picks, out) = best.expect("at least one degradation");
    let degradation = column_spaces
        .iter()
        .zip(picks)
        .zip(&distinct)
        .map(|((w, &k), d)| (w.clone(), d[k].0.clone()))
        .collect();
    let column_space_pmf = column_spaces
        .iter()
        .cloned()
        .zip(out.input.iter().cloned())
        .collect();
    Ok(CssResult {
        value: out.value,
        gap: out.gap,
        iterations: out.iterations,
        converged: outcomes.iter().all(|(_, o)| o.converged),
        degradation: Some(degradation),
        column_space_pmf: Some(column_space_pmf),
        options,
        candidates: total,
        ..CssResult::zero(CssMode::BruteForceExact)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantRankBest {
    pub subspace: Subspace,
    pub value: f64,
}

/// `argmax_U R(U)`; ties go to the smallest dimension, then core order.
pub fn constant_rank_best(core: &TransitionCore) -> Result<ConstantRankBest> {
    let mut best: Option<ConstantRankBest> = None;
    for e in core.entries() {
        let value = r_of_u(core, &e.subspace)?;
        if best.as_ref().is_none_or(|b| value > b.value + 1e-12) {
            best = Some(ConstantRankBest {
                subspace: e.subspace.clone(),
                value,
            });
        }
    }
    Ok(best.expect("the trivial row space is always present"))
}

/// Largest rank carried with positive probability.
pub fn rank_star(rank_pmf: &BTreeMap<usize, Rational>) -> usize {
    rank_pmf
        .iter()
        .filter(|(_, p)| !p.is_zero())
        .map(|(&r, _)| r)
        .max()
        .unwrap_or(0)
}

/// `(T-M) sum_{k>r} Pr{rank H >= k} - r(M-r) + log_q xi~(r,r)`: a lower
/// bound, in units of `log2 q`, on `R(F^M) - R(V)` for `dim V = r <
/// rank*(H)`.
pub fn theta(
    rank_pmf: &BTreeMap<usize, Rational>,
    t: usize,
    m: usize,
    r: usize,
    q: u32,
) -> Result<f64> {
    if t < m {
        return Err(Error::Precondition(format!(
            "needs T >= M, got T={t} M={m}"
        )));
    }
    if r > m {
        return Err(Error::Precondition(format!("r={r} exceeds M={m}")));
    }
    let tail = |k: usize| -> f64 {
        rank_pmf
            .iter()
            .filter(|(&s, _)| s >= k)
            .map(|(_, p)| rational_to_f64(p))
            .sum()
    };
    let sum: f64 = (r + 1..=m).map(tail).sum();
    let log_q = f64::from(q).log2();
    let xi_tilde = (log2_big(&qcomb::xi(r, r, q)) - (r * r) as f64 * log_q) / log_q;
    Ok((t - m) as f64 * sum - (r * (m - r)) as f64 + xi_tilde)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LargeTDiagnostic {
    pub rank_star: usize,
    /// `(r, theta)` for every `r < rank*`.
    pub theta: Vec<(usize, f64)>,
    pub theta_all_positive: bool,
    /// `R(F^M)`.
    pub full_space_rate: f64,
    /// Best alpha-type subspace-coding rate using ranks `>= rank*` only.
    pub confined: f64,
    /// Same without the rank restriction.
    pub unconstrained: f64,
    pub confined_matches: bool,
}

/// Large-`T` behaviour at the given `T`: is `theta` positive below
/// `rank*`, and does restricting inputs to rank at least `rank*` lose
/// anything?
pub fn large_t_diagnostic(
    core: &TransitionCore,
    opts: &BaOptions,
    limits: &Limits,
) -> Result<LargeTDiagnostic> {
    let (t, m) = (core.t(), core.m());
    let q = core.field().q();
    let law = core.spec().rank_pmf();
    let star = rank_star(&law);
    let theta = (0..star)
        .map(|r| Ok((r, theta(&law, t, m, r, q)?)))
        .collect::<Result<Vec<_>>>()?;
    let full_space_rate = r_of_u(core, &Subspace::full(core.field(), m))?;
    let confined = css_alpha_lower_from_rank(core, opts, limits, star)?.value;
    let unconstrained = css_alpha_lower(core, opts, limits)?.value;
    Ok(LargeTDiagnostic {
        rank_star: star,
        theta_all_positive: theta.iter().all(|&(_, th)| th > 0.0),
        theta,
        full_space_rate,
        confined,
        unconstrained,
        confined_matches: (confined - unconstrained).abs() <= 2.0 * opts.tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Chain {
    /// `<X^T> -> rank X -> rank Y -> <Y^T>`.
    Long,
    /// `<X^T> -> rank Y -> <Y^T>`.
    Short,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovVerdict {
    pub chain: Chain,
    pub holds: bool,
    pub max_violation: f64,
    /// Input law on row spaces at which the chain was tested.
    pub context: Vec<(Subspace, f64)>,
}

impl MarkovVerdict {
    pub fn to_json(&self) -> Value {
        json!({
            "chain": self.chain,
            "holds": self.holds,
            "max_violation": self.max_violation,
            "context": self.context.iter().filter(|(_, p)| *p > 0.0).map(|(u, p)| json!({"U": u, "p": sig12(*p)})).collect::<Vec<_>>(),
        })
    }
}

/// Tests the factorization characterizing the chain, for every `(U, V)`.
/// Exact for rational inputs; floats use `tol`.
pub fn markov_check<W: Weight>(
    core: &TransitionCore,
    alpha: &AlphaInput<W>,
    chain: Chain,
    tol: f64,
) -> Result<MarkovVerdict> {
    let model = RowSpaceModel::new(core);
    let nv = model.outputs.len();
    let a: Vec<W> = core
        .entries()
        .iter()
        .map(|e| alpha.mass(&e.subspace))
        .collect();
    let w: Vec<Vec<W>> = model
        .exact
        .iter()
        .map(|row| {
            let mut dense = vec![W::zero(); nv];
            for (&j, p) in row {
                dense[j] = W::from_rational(p);
            }
            dense
        })
        .collect();
    let dims_u: Vec<usize> = core.entries().iter().map(|e| e.dim()).collect();
    let dims_v: Vec<usize> = model.outputs.iter().map(Subspace::dim).collect();
    let top = dims_u.iter().chain(&dims_v).cloned().max().unwrap_or(0) + 1;
    let add = |acc: &mut W, v: W| *acc = acc.clone() + v;

    let mut p_v = vec![W::zero(); nv];
    let mut p_rx = vec![W::zero(); top];
    let mut p_ry = vec![W::zero(); top];
    let mut p_rr = vec![vec![W::zero(); top]; top];
    let mut p_u_ry = vec![vec![W::zero(); top]; a.len()];
    for (i, ai) in a.iter().enumerate() {
        add(&mut p_rx[dims_u[i]], ai.clone());
        for j in 0..nv {
            let joint = ai.clone() * w[i][j].clone();
            add(&mut p_v[j], joint.clone());
            add(&mut p_ry[dims_v[j]], joint.clone());
            add(&mut p_rr[dims_u[i]][dims_v[j]], joint.clone());
            add(&mut p_u_ry[i][dims_v[j]], joint);
        }
    }
    let mut max_violation: f64 = 0.0;
    let mut holds = true;
    for (i, ai) in a.iter().enumerate() {
        let (r, _) = (dims_u[i], ());
        for j in 0..nv {
            let s = dims_v[j];
            let joint = ai.clone() * w[i][j].clone();
            let (lhs, rhs) = match chain {
                Chain::Long => (
                    p_rx[r].clone() * p_ry[s].clone() * joint,
                    ai.clone() * p_rr[r][s].clone() * p_v[j].clone(),
                ),
                Chain::Short => (
                    p_ry[s].clone() * joint,
                    p_u_ry[i][s].clone() * p_v[j].clone(),
                ),
            };
            max_violation = max_violation.max(lhs.distance(&rhs));
            holds &= lhs.agrees(&rhs, tol);
        }
    }
    let context = core
        .entries()
        .iter()
        .zip(&a)
        .map(|(e, p)| (e.subspace.clone(), p.to_f64()))
        .collect();
    Ok(MarkovVerdict {
        chain,
        holds,
        max_violation,
        context,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CapacityVerdict {
    CEqualsCss,
    CExceedsCss,
    Inconclusive,
}

impl CapacityVerdict {
    pub fn name(self) -> &'static str {
        match self {
            CapacityVerdict::CEqualsCss => "C_EQUALS_CSS",
            CapacityVerdict::CExceedsCss => "C_EXCEEDS_CSS",
            CapacityVerdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CssRequest {
    /// Convex program when the degradation is unique, otherwise brute
    /// force with the alpha-type fallback.
    Auto,
    Unique,
    Alpha,
    BruteForce,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub ba: BaOptions,
    pub css: CssRequest,
    pub limits: Limits,
    /// Achiever masses below this are dropped before the Markov checks.
    pub prune: f64,
    /// Tolerance of the Markov factorization on float achievers.
    pub markov_tol: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            ba: BaOptions::default(),
            css: CssRequest::Auto,
            limits: Limits::default(),
            prune: 1e-6,
            markov_tol: 1e-6,
        }
    }
}

/// Subspace-coding capacity in the requested mode.
pub fn subspace_capacity(
    core: &TransitionCore,
    classes: &ClassReport,
    opts: &ReportOptions,
) -> Result<CssResult> {
    match opts.css {
        CssRequest::Unique => css_unique(core, &opts.ba, &opts.limits),
        CssRequest::Alpha => css_alpha_lower(core, &opts.ba, &opts.limits),
        CssRequest::BruteForce => css_bruteforce(core, &opts.ba, &opts.limits),
        CssRequest::Auto if classes.unique_subspace_degradation => {
            css_unique(core, &opts.ba, &opts.limits)
        }
        CssRequest::Auto => css_bruteforce(core, &opts.ba, &opts.limits),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    pub capacity: CapacityResult,
    pub css: CssResult,
    pub bounds: RateBounds,
    pub classes: ClassReport,
    pub markov: Vec<MarkovVerdict>,
    pub constant_rank: ConstantRankBest,
    pub large_t: Option<LargeTDiagnostic>,
    pub verdict: CapacityVerdict,
    pub reason: String,
}

impl CapacityReport {
    pub fn to_json(&self) -> Value {
        json!({
            "capacity": self.capacity.to_json(),
            "css": self.css.to_json(),
            "bounds": self.bounds,
            "classes": self.classes.to_json(),
            "markov": self.markov.iter().map(MarkovVerdict::to_json).collect::<Vec<_>>(),
            "constant_rank_best": self.constant_rank,
            "large_t": self.large_t,
            "verdict": self.verdict.name(),
            "reason": self.reason,
        })
    }
}

/// Drops masses below `threshold` and renormalizes.
pub fn prune(
    alpha: &AlphaInput<f64>,
    core: &TransitionCore,
    threshold: f64,
) -> Result<AlphaInput<f64>> {
    let kept: BTreeMap<Subspace, f64> = alpha
        .pmf()
        .iter()
        .filter(|(_, p)| **p >= threshold)
        .map(|(u, p)| (u.clone(), *p))
        .collect();
    let total: f64 = kept.values().sum();
    AlphaInput::new(
        core,
        kept.into_iter().map(|(u, p)| (u, p / total)).collect(),
    )
}

/// C, C_SS, bounds, classes and Markov checks, with a verdict licensed by
/// a theorem: equality when the channel is degraded, or when it is
/// row-space symmetric and the long chain holds at the capacity achiever;
/// strict excess only when the computed gap exceeds ten times the
/// tolerance against an exact C_SS.
pub fn capacity_report(spec: &ChannelSpec, opts: &ReportOptions) -> Result<CapacityReport> {
    let core = TransitionCore::new(spec, &opts.limits)?;
    let classes = classify::classify(&core, &opts.limits)?;
    let capacity = shannon_capacity(&core, &opts.ba)?;
    let css = subspace_capacity(&core, &classes, opts)?;
    let bounds = rate_bounds(&core, &capacity.achiever)?;
    let pruned = prune(&capacity.achiever, &core, opts.prune)?;
    let markov = vec![
        markov_check(&core, &pruned, Chain::Long, opts.markov_tol)?,
        markov_check(&core, &pruned, Chain::Short, opts.markov_tol)?,
    ];
    let constant_rank = constant_rank_best(&core)?;
    let large_t = if core.t() >= core.m() {
        Some(large_t_diagnostic(&core, &opts.ba, &opts.limits)?)
    } else {
        None
    };
    let tol = opts.ba.tol;
    let (verdict, reason) = if spec.is_zero_channel() {
        (
            CapacityVerdict::CEqualsCss,
            "H = 0: both capacities vanish".to_string(),
        )
    } else if classes.degraded {
        (CapacityVerdict::CEqualsCss, "degraded channel".to_string())
    } else if classes.row_space_symmetric && markov[0].holds {
        (
            CapacityVerdict::CEqualsCss,
            "row-space symmetric and <X^T> -> rank X -> rank Y -> <Y^T> holds at the capacity achiever".to_string(),
        )
    } else if !css.lower_bound_only && capacity.value - (css.value + css.gap) > 10.0 * tol {
        (
            CapacityVerdict::CExceedsCss,
            format!(
                "C - C_SS = {:.3e} exceeds 10 x tolerance",
                capacity.value - css.value
            ),
        )
    } else {
        (
            CapacityVerdict::Inconclusive,
            "no sufficient condition verified and no numeric separation".to_string(),
        )
    };
    Ok(CapacityReport {
        capacity,
        css,
        bounds,
        classes,
        markov,
        constant_rank,
        large_t,
        verdict,
        reason,
    })
}
