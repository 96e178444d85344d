//! Acceptance suite: twelve criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines always print.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use locap::capacity::*;
use locap::channel::{
    generate, image_distribution, random_channel, AlphaInput, ChannelSpec, Family, RankJoint,
    TransitionCore,
};
use locap::classify::{classify, implication_audit};
use locap::fixtures;
use locap::prob::{rational, Rational};
use locap::verify::{
    self, audit_channels, counting_identities, random_small_channels, transition_check,
    VerifyOptions,
};
use locap::{Field, Limits, Matrix, Subspace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lim() -> Limits {
    Limits::default()
}

fn core(spec: &ChannelSpec) -> TransitionCore {
    TransitionCore::new(spec, &lim()).unwrap()
}

fn f2() -> Field {
    Field::new(2).unwrap()
}

fn line(v: [u32; 2]) -> Subspace {
    Subspace::span_rows(&Matrix::from_rows(f2(), &[v]).unwrap())
}

fn counting() -> Outcome {
    let start = Instant::now();
    let checks = counting_identities(&lim()).unwrap();
    let elapsed = start.elapsed();
    for c in &checks {
        ensure(c.passed, || format!("{}: {:?}", c.name, c.failure))?;
    }
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    let cases: usize = checks.iter().map(|c| c.cases).sum();
    Ok(format!("{cases} identities in {elapsed:.2?}"))
}

fn transitions() -> Outcome {
    let start = Instant::now();
    let mut specs = vec![fixtures::table1(), fixtures::table2(), fixtures::example9()];
    specs.extend(random_small_channels(2024, 50).unwrap());
    for (i, spec) in specs.iter().enumerate() {
        if let Some(msg) = transition_check(spec, &lim()).unwrap() {
            return Err(format!("channel {i}: {msg}"));
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{} channels, every (X, Y), exact, {elapsed:.2?}",
        specs.len()
    ))
}

fn table2() -> Outcome {
    let spec = fixtures::table2();
    let core = core(&spec);
    let classes = classify(&core, &lim()).unwrap();
    ensure(!classes.unique_subspace_degradation, || {
        "unique subspace degradation reported".into()
    })?;
    let c = shannon_capacity(&core, &BaOptions::default()).unwrap();
    let css = subspace_capacity(&core, &classes, &ReportOptions::default()).unwrap();
    ensure((c.value - 1.0).abs() <= 1e-6, || format!("C = {}", c.value))?;
    ensure(
        (css.value - 1.0).abs() <= 1e-6 && !css.lower_bound_only,
        || format!("C_SS = {}", css.value),
    )?;
    let p0 = c.achiever.mass(&Subspace::trivial(f2(), 2));
    let p2 = c.achiever.mass(&line([0, 1]));
    ensure((p0 - 0.5).abs() <= 1e-4 && (p2 - 0.5).abs() <= 1e-4, || {
        format!("p0 = {p0}, p2 = {p2}")
    })?;
    Ok(format!(
        "C = {:.9}, C_SS = {:.9} ({}), p0 = {p0:.6}, p2 = {p2:.6}",
        c.value,
        css.value,
        css.mode.name()
    ))
}

fn table1() -> Outcome {
    let core = core(&fixtures::table1());
    let classes = classify(&core, &lim()).unwrap();
    ensure(classes.degraded, || "not degraded".into())?;
    ensure(!classes.rank_symmetric, || "rank symmetric".into())?;
    let opts = BaOptions {
        tol: 1e-9,
        ..BaOptions::default()
    };
    let c = shannon_capacity(&core, &opts).unwrap();
    let css = css_unique(&core, &opts, &lim()).unwrap();
    let gap = (c.value - css.value).abs();
    ensure(gap <= 2e-9, || format!("|C - C_SS| = {gap:e}"))?;
    Ok(format!(
        "degraded, not rank symmetric, C = {:.9}, |C - C_SS| = {gap:.1e}",
        c.value
    ))
}

fn example9() -> Outcome {
    let core = core(&fixtures::example9());
    let classes = classify(&core, &lim()).unwrap();
    ensure(classes.rank_symmetric, || "not rank symmetric".into())?;
    ensure(!classes.uniform_given_rank, || "uniform given rank".into())?;
    Ok(format!(
        "rank symmetric, not uniform given rank (T = {} < M = {})",
        core.t(),
        core.m()
    ))
}

fn random_alpha(core: &TransitionCore, rng: &mut ChaCha8Rng) -> AlphaInput<Rational> {
    let mut weights: Vec<i64> = core.entries().iter().map(|_| rng.gen_range(0..5)).collect();
    weights[core.entries().len() - 1] += 1;
    let total: i64 = weights.iter().sum();
    let pmf = core
        .entries()
        .iter()
        .zip(weights)
        .map(|(e, w)| (e.subspace.clone(), rational(w, total)))
        .collect();
    AlphaInput::new(core, pmf).unwrap()
}

fn single_use_rank_rate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut specs = vec![
        fixtures::table1(),
        fixtures::table2(),
        fixtures::example6(),
        fixtures::example9(),
        fixtures::zero(),
    ];
    for _ in 0..50 {
        specs.push(random_channel(f2(), 1, 2, 2, 6, &mut rng).unwrap());
    }
    let mut worst: f64 = 0.0;
    for spec in &specs {
        let core = core(spec);
        for _ in 0..4 {
            let alpha = random_alpha(&core, &mut rng);
            let j = j_rank(&core.rank_joint(&alpha).unwrap(), 1, 2);
            ensure(j == 0.0, || format!("J = {j}"))?;
            let b = rate_bounds(&core, &alpha).unwrap();
            let oracle =
                mi_naive(spec, &matrix_law(&core, &alpha, &lim()).unwrap(), &lim()).unwrap();
            worst = worst
                .max((b.mi - b.subspace_mi).abs())
                .max((oracle - b.subspace_mi).abs());
        }
    }
    ensure(worst <= 1e-9, || {
        format!("max |I(X;Y) - I(U;V)| = {worst:e}")
    })?;
    Ok(format!(
        "{} channels x 4 inputs: J = 0 exactly, max |I(X;Y) - I(U;V)| = {worst:.1e}",
        specs.len()
    ))
}

/// `prod_{i<r} (q^m - q^i)`, as a float: independent of the library's
/// big-integer combinatorics.
fn full_rank_count(m: usize, r: usize, q: u32) -> f64 {
    (0..r)
        .map(|i| f64::from(q).powi(m as i32) - f64::from(q).powi(i as i32))
        .product()
}

fn full_rank_decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut max_eps: f64 = 0.0;
    let mut max_oracle: f64 = 0.0;
    for _ in 0..200 {
        let q = [2, 3, 5][rng.gen_range(0..3)];
        let field = Field::new(q).unwrap();
        let m = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=3);
        let t = m + rng.gen_range(0..=8);
        let spec = random_channel(field, t, m, n, 6, &mut rng).unwrap();
        // Full-rank X has row space F^M, represented by the identity.
        let law = image_distribution(&spec, &Matrix::identity(field, m)).unwrap();
        let mut joint: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
        for (e, p) in law {
            *joint.entry((m, e.rank())).or_insert_with(|| rational(0, 1)) += p;
        }
        let joint = RankJoint { pmf: joint };
        let d = full_rank_rate_decomposition(&joint, t, m, q).unwrap();
        ensure(d.epsilon >= -1e-12 && d.epsilon < 1.8, || {
            format!("epsilon = {} (q={q} T={t} M={m})", d.epsilon)
        })?;
        ensure((d.j - d.linear_term - d.epsilon).abs() <= 1e-12, || {
            format!(
                "J - linear - epsilon = {:e}",
                d.j - d.linear_term - d.epsilon
            )
        })?;
        let oracle: f64 = joint
            .pmf
            .iter()
            .map(|(&(_, s), p)| {
                locap::prob::rational_to_f64(p)
                    * (full_rank_count(t, s, q) / full_rank_count(m, s, q)).log2()
            })
            .sum();
        max_oracle = max_oracle.max((oracle - d.j).abs() / oracle.abs().max(1.0));
        max_eps = max_eps.max(d.epsilon);
    }
    ensure(max_oracle <= 1e-12, || {
        format!("J differs from the product-formula oracle by {max_oracle:e}")
    })?;
    Ok(format!(
        "200 channels, epsilon <= {max_eps:.4}, J vs oracle {max_oracle:.1e}"
    ))
}

fn sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pairs = 0;
    for spec in random_small_channels(88, 120).unwrap() {
        let core = core(&spec);
        let alpha = random_alpha(&core, &mut rng);
        let b = rate_bounds(&core, &alpha).unwrap();
        ensure(b.lower <= b.mi + 1e-9 && b.mi <= b.upper + 1e-9, || {
            format!("{b:?} on {}", spec.to_json())
        })?;
        pairs += 1;
    }
    let mut fixtures_checked = 0;
    for spec in [
        fixtures::table1(),
        fixtures::table2(),
        fixtures::example6(),
        fixtures::example9(),
        fixtures::zero(),
    ] {
        let core = core(&spec);
        if !classify(&core, &lim()).unwrap().row_space_symmetric {
            continue;
        }
        let c = shannon_capacity(&core, &BaOptions::default()).unwrap();
        let inputs = [
            AlphaInput::<Rational>::uniform(&core),
            random_alpha(&core, &mut rng),
        ];
        let mut gaps: Vec<f64> = inputs
            .iter()
            .map(|a| {
                rate_bounds(&core, a)
                    .map(|b| (b.mi - b.lower).abs())
                    .unwrap()
            })
            .collect();
        gaps.push(
            rate_bounds(&core, &c.achiever)
                .map(|b| (b.mi - b.lower).abs())
                .unwrap(),
        );
        let worst = gaps.iter().cloned().fold(0.0, f64::max);
        ensure(worst <= 1e-9, || {
            format!("lower bound off by {worst:e} on a row-space-symmetric fixture")
        })?;
        fixtures_checked += 1;
    }
    Ok(format!("{pairs} random pairs sandwiched; lower = mi on {fixtures_checked} row-space-symmetric fixtures"))
}

fn ba_consistency() -> Outcome {
    let opts = BaOptions {
        record_trace: true,
        ..BaOptions::default()
    };
    let mut specs: Vec<ChannelSpec> = [
        fixtures::table1(),
        fixtures::table2(),
        fixtures::example6(),
        fixtures::example9(),
        fixtures::zero(),
    ]
    .iter()
    .map(|s| s.with_t(2).unwrap())
    .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        specs.push(random_channel(f2(), 2, 2, 2, 6, &mut rng).unwrap());
    }
    let mut worst: f64 = 0.0;
    let mut drop: f64 = 0.0;
    for spec in &specs {
        let fast = shannon_capacity(&core(spec), &opts).unwrap();
        let slow = shannon_capacity_naive(spec, &opts, &lim()).unwrap();
        for trace in [&fast.trace, &slow.trace] {
            drop = trace.windows(2).map(|w| w[0] - w[1]).fold(drop, f64::max);
        }
        worst = worst.max((fast.value - slow.value).abs());
    }
    ensure(worst <= 2e-9, || {
        format!("max |C_alpha - C_naive| = {worst:e}")
    })?;
    // Exact arithmetic would give drop <= 0; allow double rounding only.
    ensure(drop <= 1e-13, || format!("objective decreased by {drop:e}"))?;
    Ok(format!(
        "{} channels at T = M = N = 2, max |C_alpha - C_naive| = {worst:.1e}, largest step down {drop:.1e} (rounding)",
        specs.len()
    ))
}

fn degraded_family() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let opts = BaOptions::default();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let mut w: Vec<i64> = (0..3).map(|_| rng.gen_range(0..4)).collect();
        w[2] += 1;
        let total: i64 = w.iter().sum();
        let rank_pmf = w
            .iter()
            .enumerate()
            .filter(|(_, x)| **x > 0)
            .map(|(r, x)| (r, rational(*x, total)))
            .collect();
        let spec = generate(
            &Family::UniformGivenRank(rank_pmf),
            f2(),
            2 + i % 2,
            2,
            2,
            &lim(),
        )
        .unwrap();
        let core = core(&spec);
        let c = shannon_capacity(&core, &opts).unwrap();
        let css = css_unique(&core, &opts, &lim()).unwrap();
        worst = worst.max((c.value - css.value).abs());
    }
    ensure(worst <= 2e-9, || format!("max |C - C_SS| = {worst:e}"))?;
    let channels = audit_channels(2025, 1000, &lim()).unwrap();
    for (i, spec) in channels.iter().enumerate() {
        let report = implication_audit(&core(spec), &lim()).unwrap();
        ensure(report.violations.is_empty(), || {
            format!("channel {i}: {:?}", report.violations)
        })?;
    }
    Ok(format!(
        "20 uniform-given-rank channels, max |C - C_SS| = {worst:.1e}; 1000 audited, no violations"
    ))
}

fn css_below_c() -> Outcome {
    let opts = BaOptions::default();
    let mut worst = f64::NEG_INFINITY;
    let specs = [
        fixtures::table1(),
        fixtures::table2(),
        fixtures::example6(),
        fixtures::example9(),
        fixtures::zero(),
    ];
    for spec in &specs {
        let core = core(spec);
        let brute = css_bruteforce(&core, &opts, &lim()).unwrap();
        ensure(!brute.lower_bound_only, || "brute force fell back".into())?;
        let c = shannon_capacity(&core, &opts).unwrap();
        worst = worst.max(brute.value - c.value);
    }
    ensure(worst <= 2e-9, || format!("C_SS - C = {worst:e}"))?;
    Ok(format!(
        "{} LOC2 fixtures, max C_SS - C = {worst:.1e}",
        specs.len()
    ))
}

fn verify_suite() -> Outcome {
    let start = Instant::now();
    let report = verify::run(&VerifyOptions::default()).unwrap();
    let elapsed = start.elapsed();
    for c in &report.checks {
        ensure(c.passed, || format!("{}: {:?}", c.name, c.failure))?;
    }
    ensure(elapsed < Duration::from_secs(300), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{} checks passed in {elapsed:.2?}",
        report.checks.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("counting identities", counting),
        ("transition oracle equivalence", transitions),
        ("two-line fixture: C = C_SS = 1 bit", table2),
        ("erasure fixture: degraded, C = C_SS", table1),
        ("rank symmetric without uniform given rank", example9),
        (
            "single use: J = 0 and I(X;Y) = I(U;V)",
            single_use_rank_rate,
        ),
        ("full-rank J decomposition", full_rank_decomposition),
        ("rate bound sandwich and tightness", sandwich),
        ("alpha-type vs full-alphabet Blahut-Arimoto", ba_consistency),
        (
            "uniform given rank: C = C_SS; implication audit",
            degraded_family,
        ),
        ("C_SS <= C", css_below_c),
        ("verification suite", verify_suite),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
