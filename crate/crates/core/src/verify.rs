//! Oracle cross-checks: fast computations against brute-force ones on
//! fixtures and seeded random channels.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::capacity::{
    capacity_report, shannon_capacity, shannon_capacity_naive, BaOptions, CapacityVerdict,
    ReportOptions,
};
use crate::channel::{
    generate, random_channel, random_row_space_invariant, ChannelSpec, Family, TransitionCore,
};
use crate::classify::implication_audit;
use crate::error::Result;
use crate::fixtures;
use crate::gf::{all_matrices, Field};
use crate::limits::Limits;
use crate::prob::Rational;
use crate::qcomb::{count_superspaces, gaussian_binomial, xi2};
use crate::subspace::{enumerate_grassmannian, Subspace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random channels for the transition and capacity comparisons.
    pub random_channels: usize,
    /// Random channels for the implication audit.
    pub audit_channels: usize,
    pub ba: BaOptions,
    pub limits: Limits,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            random_channels: 50,
            audit_channels: 1000,
            ba: BaOptions::default(),
            limits: Limits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// First failure, with what is needed to reproduce it.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Value {
        json!({"seed": self.seed, "passed": self.passed(), "checks": self.checks})
    }
}

/// Collects the first failure over a batch of independent cases.
fn check(name: &'static str, outcomes: Vec<Result<Option<String>>>) -> Result<Check> {
    let cases = outcomes.len();
    let mut failure = None;
    for o in outcomes {
        if let Some(msg) = o? {
            failure.get_or_insert(msg);
        }
    }
    Ok(Check {
        name,
        passed: failure.is_none(),
        cases,
        failure,
    })
}

fn fail_if(bad: bool, msg: impl FnOnce() -> String) -> Option<String> {
    bad.then(msg)
}

pub fn counting_identities(limits: &Limits) -> Result<Vec<Check>> {
    let mut sums = Vec::new();
    for q in [2u32, 3, 5] {
        for m in 0..=4 {
            for n in 0..=4 {
                let total: BigUint = (0..=m.min(n)).map(|r| xi2(m, n, r, q)).sum();
                let expected = BigUint::from(q).pow((m * n) as u32);
                sums.push(Ok(fail_if(total != expected, || {
                    format!("sum_r xi2({m},{n},r,{q}) = {total}")
                })));
            }
        }
    }
    let mut grassmannians = Vec::new();
    let mut superspaces = Vec::new();
    for q in [2u32, 3] {
        let field = Field::new(q)?;
        for t in 0..=4 {
            let layers: Vec<Vec<Subspace>> = (0..=t)
                .map(|r| enumerate_grassmannian(r, t, field, limits))
                .collect::<Result<_>>()?;
            for (r, layer) in layers.iter().enumerate() {
                let expected = gaussian_binomial(t, r, q);
                grassmannians.push(Ok(fail_if(BigUint::from(layer.len()) != expected, || {
                    format!(
                        "|Gr({r}, F_{q}^{t})| = {} but the Gaussian binomial is {expected}",
                        layer.len()
                    )
                })));
            }
            if q == 3 && t == 4 {
                continue;
            }
            for s in 0..=t {
                let Some(base) = layers[s].first() else {
                    continue;
                };
                for r in s..=t {
                    let mut found = 0usize;
                    for u in &layers[r] {
                        found += usize::from(u.contains(base)?);
                    }
                    let expected = count_superspaces(t, s, r, q)?;
                    superspaces.push(Ok(fail_if(BigUint::from(found) != expected, || {
                        format!(
                            "F_{q}^{t}: {found} of dim {r} contain {base}, formula says {expected}"
                        )
                    })));
                }
            }
        }
    }
    Ok(vec![
        check("rank counts sum to q^(mn)", sums)?,
        check("Grassmannian sizes", grassmannians)?,
        check("superspace counts", superspaces)?,
    ])
}

fn fixture_set() -> Vec<(&'static str, ChannelSpec)> {
    vec![
        ("table1", fixtures::table1()),
        ("table2", fixtures::table2()),
        ("example6", fixtures::example6()),
        ("example9", fixtures::example9()),
        ("zero", fixtures::zero()),
    ]
}

/// Random channels over F_2 with `T, M, N <= 2`.
pub fn random_small_channels(seed: u64, count: usize) -> Result<Vec<ChannelSpec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = Field::new(2)?;
    (0..count)
        .map(|_| {
            let (t, m, n) = (
                rng.gen_range(1..=2),
                rng.gen_range(1..=2),
                rng.gen_range(1..=2),
            );
            random_channel(field, t, m, n, 6, &mut rng)
        })
        .collect()
}

fn reproducer(seed: u64, index: usize, spec: &ChannelSpec) -> String {
    format!(
        "seed {seed}, case {index}: {}",
        spec.to_json().replace('\n', " ")
    )
}

/// Every `P(Y|X)` from the core table against the direct sum over `H`.
pub fn transition_check(spec: &ChannelSpec, limits: &Limits) -> Result<Option<String>> {
    let core = TransitionCore::new(spec, limits)?;
    let table = crate::channel::transition_naive(spec, limits)?;
    for x in table.inputs() {
        for y in all_matrices(spec.field(), spec.t(), spec.n(), limits)? {
            let fast = core.p_y_given_x(x, &y)?;
            let slow = table.get(x, &y);
            if fast != slow {
                return Ok(Some(format!(
                    "P(Y={y} | X={x}): core {fast}, direct {slow}"
                )));
            }
        }
    }
    Ok(None)
}

fn capacity_check(spec: &ChannelSpec, opts: &VerifyOptions) -> Result<Option<String>> {
    let fast = shannon_capacity(&TransitionCore::new(spec, &opts.limits)?, &opts.ba)?;
    let slow = shannon_capacity_naive(spec, &opts.ba, &opts.limits)?;
    Ok(fail_if(
        (fast.value - slow.value).abs() > 2.0 * opts.ba.tol,
        || {
            format!(
                "alpha-type C = {}, full-alphabet C = {}",
                fast.value, slow.value
            )
        },
    ))
}

/// Channels for the implication audit: a mix of sparse random laws,
/// row-space-invariant laws and the rank-based families, `T, M, N <= 2`.
pub fn audit_channels(seed: u64, count: usize, limits: &Limits) -> Result<Vec<ChannelSpec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let field = Field::new(if rng.gen_bool(0.75) { 2 } else { 3 })?;
            let (t, m, n) = (
                rng.gen_range(1..=2),
                rng.gen_range(1..=2),
                rng.gen_range(1..=2),
            );
            match i % 4 {
                0 => random_channel(field, t, m, n, 6, &mut rng),
                1 => random_row_space_invariant(field, t, m, n, &mut rng, limits),
                _ => {
                    let mut weights: BTreeMap<usize, u64> = BTreeMap::new();
                    for r in 0..=m.min(n) {
                        weights.insert(r, rng.gen_range(0..=3));
                    }
                    let top = m.min(n);
                    *weights.get_mut(&top).expect("present") += 1;
                    let total: u64 = weights.values().sum();
                    let rank_pmf = weights
                        .into_iter()
                        .filter(|(_, w)| *w > 0)
                        .map(|(r, w)| (r, Rational::new(w.into(), total.into())))
                        .collect();
                    let family = if i % 4 == 2 {
                        Family::UniformGivenRank(rank_pmf)
                    } else {
                        Family::CustomRankDist {
                            rank_pmf,
                            seed: rng.gen(),
                        }
                    };
                    generate(&family, field, t, m, n, limits)
                }
            }
        })
        .collect()
}

/// Runs the whole suite. Failures are reported in the result; an `Err`
/// means a computation could not run at all.
pub fn run(opts: &VerifyOptions) -> Result<VerifyReport> {
    let limits = &opts.limits;
    let mut checks = counting_identities(limits)?;

    let mut transition_cases: Vec<(String, ChannelSpec)> = fixture_set()
        .into_iter()
        .map(|(name, spec)| (format!("fixture {name}"), spec))
        .collect();
    for (i, spec) in random_small_channels(opts.seed, opts.random_channels)?
        .into_iter()
        .enumerate()
    {
        transition_cases.push((reproducer(opts.seed, i, &spec), spec));
    }
    let outcomes = transition_cases
        .par_iter()
        .map(|(label, spec)| Ok(transition_check(spec, limits)?.map(|m| format!("{label}: {m}"))))
        .collect();
    checks.push(check("core transitions match direct sums", outcomes)?);

    let mut capacity_cases: Vec<(String, ChannelSpec)> = Vec::new();
    for (name, spec) in fixture_set() {
        if spec.m() == 2 && spec.n() == 2 {
            capacity_cases.push((format!("fixture {name} at T=2"), spec.with_t(2)?));
        }
    }
    let field = Field::new(2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    for i in 0..opts.random_channels.min(20) {
        let spec = random_channel(field, 2, 2, 2, 6, &mut rng)?;
        capacity_cases.push((reproducer(opts.seed.wrapping_add(1), i, &spec), spec));
    }
    let outcomes = capacity_cases
        .par_iter()
        .map(|(label, spec)| Ok(capacity_check(spec, opts)?.map(|m| format!("{label}: {m}"))))
        .collect();
    checks.push(check(
        "alpha-type capacity matches full-alphabet capacity",
        outcomes,
    )?);

    let audit_seed = opts.seed.wrapping_add(2);
    let channels = audit_channels(audit_seed, opts.audit_channels, limits)?;
    let outcomes = channels
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let report = implication_audit(&TransitionCore::new(spec, limits)?, limits)?;
            Ok(report
                .violations
                .first()
                .map(|v| format!("{v} ({})", reproducer(audit_seed, i, spec))))
        })
        .collect();
    checks.push(check("class implications", outcomes)?);

    let report_opts = ReportOptions {
        ba: opts.ba,
        limits: opts.limits,
        ..ReportOptions::default()
    };
    let expected = [
        ("table1", CapacityVerdict::CEqualsCss),
        ("table2", CapacityVerdict::CEqualsCss),
        ("example6", CapacityVerdict::CExceedsCss),
        ("zero", CapacityVerdict::CEqualsCss),
    ];
    let outcomes = expected
        .iter()
        .map(|(name, verdict)| {
            let spec = fixture_set()
                .into_iter()
                .find(|(n, _)| n == name)
                .expect("listed")
                .1;
            let got = capacity_report(&spec, &report_opts)?.verdict;
            Ok(fail_if(got != *verdict, || {
                format!(
                    "{name}: verdict {} instead of {}",
                    got.name(),
                    verdict.name()
                )
            }))
        })
        .collect();
    checks.push(check("fixture verdicts", outcomes)?);

    Ok(VerifyReport {
        seed: opts.seed,
        checks,
    })
}
