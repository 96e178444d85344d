//! `locap`: classify linear operator channels and compute their capacities.
//!
//! Exit codes: 0 success, 2 bad input, 3 budget exceeded, 4 an optimizer
//! did not converge (results are still written, with their gap), 5 a
//! verification or internal consistency check failed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use locap::capacity::{
    capacity_report, css_alpha_lower, css_bruteforce, css_unique, full_rank_rate_decomposition,
    rate_bounds, shannon_capacity, BaOptions, CssRequest, ReportOptions,
};
use locap::channel::{generate, AlphaInput, ChannelSpec, Family, TransitionCore};
use locap::classify::classify;
use locap::prob::{parse_rational, Rational};
use locap::verify::{self, VerifyOptions};
use locap::{Error, Field, Limits, Subspace};

#[derive(Parser)]
#[command(
    name = "locap",
    version,
    about = "Capacity and structure of linear operator channels Y = XH over F_q"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Blahut-Arimoto stopping gap, in bits.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, global = true, default_value_t = 100_000)]
    max_iter: usize,
    /// Cap every enumeration budget at this many items.
    #[arg(long, global = true)]
    budget: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Subspace-coding optimizer.
    #[arg(long, global = true, value_enum, default_value_t = Mode::Auto)]
    mode: Mode,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Auto,
    Unique,
    Alpha,
    Bruteforce,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    IidUniform,
    FullRankUniform,
    UniformGivenRank,
    CustomRankDist,
}

#[derive(Subcommand)]
enum Command {
    /// Symmetry and degradation classes, with witnesses for failures.
    Classify { input: PathBuf },
    /// Shannon capacity over alpha-type inputs.
    Capacity { input: PathBuf },
    /// Subspace-coding capacity.
    Css { input: PathBuf },
    /// Row-space bounds on I(X;Y) at the uniform and capacity-achieving inputs.
    Bounds { input: PathBuf },
    /// Everything above plus Markov checks and a verdict on C vs C_SS.
    Report { input: PathBuf },
    /// Write a channel from a standard family.
    Gen {
        #[arg(value_enum)]
        kind: Kind,
        #[arg(long)]
        q: u32,
        #[arg(long = "T", default_value_t = 1)]
        t: usize,
        #[arg(long = "M")]
        m: usize,
        #[arg(long = "N")]
        n: Option<usize>,
        /// Rank law such as "0:1/4,2:3/4" (rank-based kinds).
        #[arg(long)]
        rank_pmf: Option<String>,
    },
    /// Cross-check fast computations against brute-force oracles.
    Verify {
        #[arg(long, default_value_t = 50)]
        channels: usize,
        #[arg(long, default_value_t = 1000)]
        audit: usize,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Budget { .. } => 3,
            Error::NotConverged { .. } => 4,
            Error::Internal(_) => 5,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_failure(message: String) -> Failure {
    Failure { code: 2, message }
}

/// A finished command: its JSON document, CSV rows, and exit status.
struct Output {
    json: Value,
    rows: Vec<[String; 4]>,
    status: u8,
}

fn converged_status(converged: bool) -> u8 {
    if converged {
        0
    } else {
        4
    }
}

fn row(quantity: &str, value: impl ToString, mode: &str, gap: Option<f64>) -> [String; 4] {
    [
        quantity.to_string(),
        value.to_string(),
        mode.to_string(),
        gap.map(|g| format!("{g:e}")).unwrap_or_default(),
    ]
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("locap: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let c = &cli.common;
    if !(c.tol > 0.0) {
        return Err(input_failure("--tol must be positive".into()));
    }
    if c.budget == Some(0) {
        return Err(input_failure("--budget must be positive".into()));
    }
    if let Some(jobs) = c.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| input_failure(format!("--jobs: {e}")))?;
    }
    let limits = c.budget.map_or_else(Limits::default, Limits::uniform);
    let ba = BaOptions {
        tol: c.tol,
        max_iter: c.max_iter,
        record_trace: false,
    };
    let report_opts = ReportOptions {
        ba,
        limits,
        css: match c.mode {
            Mode::Auto => CssRequest::Auto,
            Mode::Unique => CssRequest::Unique,
            Mode::Alpha => CssRequest::Alpha,
            Mode::Bruteforce => CssRequest::BruteForce,
        },
        ..ReportOptions::default()
    };

    let (name, input, output) = match &cli.command {
        Command::Classify { input } => (
            "classify",
            Some(input),
            with_spec(input, |s| cmd_classify(s, &limits))?,
        ),
        Command::Capacity { input } => (
            "capacity",
            Some(input),
            with_spec(input, |s| cmd_capacity(s, &ba, &limits))?,
        ),
        Command::Css { input } => (
            "css",
            Some(input),
            with_spec(input, |s| cmd_css(s, &report_opts))?,
        ),
        Command::Bounds { input } => (
            "bounds",
            Some(input),
            with_spec(input, |s| cmd_bounds(s, &ba, &limits))?,
        ),
        Command::Report { input } => (
            "report",
            Some(input),
            with_spec(input, |s| cmd_report(s, &report_opts))?,
        ),
        Command::Gen {
            kind,
            q,
            t,
            m,
            n,
            rank_pmf,
        } => {
            let spec = cmd_gen(
                *kind,
                *q,
                *t,
                *m,
                n.unwrap_or(*m),
                rank_pmf.as_deref(),
                c.seed,
                &limits,
            )?;
            let text = spec.to_json();
            match &c.out {
                Some(path) => fs::write(path, &text)
                    .map_err(|e| input_failure(format!("{}: {e}", path.display())))?,
                None => print!("{text}"),
            }
            return Ok(0);
        }
        Command::Verify { channels, audit } => {
            let opts = VerifyOptions {
                seed: c.seed,
                random_channels: *channels,
                audit_channels: *audit,
                ba,
                limits,
            };
            ("verify", None, cmd_verify(&opts)?)
        }
    };

    let mut doc = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "tolerance": c.tol,
        "result": output.json,
    });
    if let Some(path) = input {
        doc["input"] = json!(path.display().to_string());
        doc["input_sha256"] = json!(sha256_file(path)?);
    }
    let text = match c.format {
        Format::Json => serde_json::to_string_pretty(&doc).expect("serializable") + "\n",
        Format::Csv => {
            let mut s = String::from("quantity,value,mode,gap\n");
            for r in &output.rows {
                s.push_str(&r.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(","));
                s.push('\n');
            }
            s
        }
    };
    match &c.out {
        Some(path) => {
            fs::write(path, text).map_err(|e| input_failure(format!("{}: {e}", path.display())))?
        }
        None => print!("{text}"),
    }
    Ok(output.status)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| input_failure(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn with_spec(
    path: &Path,
    f: impl FnOnce(&ChannelSpec) -> Result<Output, Failure>,
) -> Result<Output, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| input_failure(format!("{}: {e}", path.display())))?;
    let spec = ChannelSpec::from_json(&text)
        .map_err(|e| input_failure(format!("{}: {e}", path.display())))?;
    f(&spec)
}

fn cmd_classify(spec: &ChannelSpec, limits: &Limits) -> Result<Output, Failure> {
    let core = TransitionCore::new(spec, limits)?;
    let report = classify(&core, limits)?;
    let rows = vec![
        row(
            "row_space_symmetric",
            report.row_space_symmetric,
            "exact",
            None,
        ),
        row(
            "unique_subspace_degradation",
            report.unique_subspace_degradation,
            "exact",
            None,
        ),
        row("degraded", report.degraded, "exact", None),
        row("rank_symmetric", report.rank_symmetric, "exact", None),
        row(
            "uniform_given_rank",
            report.uniform_given_rank,
            "exact",
            None,
        ),
    ];
    Ok(Output {
        json: report.to_json(),
        rows,
        status: 0,
    })
}

fn cmd_capacity(spec: &ChannelSpec, ba: &BaOptions, limits: &Limits) -> Result<Output, Failure> {
    let result = shannon_capacity(&TransitionCore::new(spec, limits)?, ba)?;
    let rows = vec![row("C", result.value, "alpha_type_ba", Some(result.gap))];
    Ok(Output {
        json: result.to_json(),
        rows,
        status: converged_status(result.converged),
    })
}

fn cmd_css(spec: &ChannelSpec, opts: &ReportOptions) -> Result<Output, Failure> {
    let core = TransitionCore::new(spec, &opts.limits)?;
    let result = match opts.css {
        CssRequest::Unique => css_unique(&core, &opts.ba, &opts.limits)?,
        CssRequest::Alpha => css_alpha_lower(&core, &opts.ba, &opts.limits)?,
        CssRequest::BruteForce => css_bruteforce(&core, &opts.ba, &opts.limits)?,
        CssRequest::Auto => {
            let classes = classify(&core, &opts.limits)?;
            locap::capacity::subspace_capacity(&core, &classes, opts)?
        }
    };
    let rows = vec![row(
        "C_SS",
        result.value,
        result.mode.name(),
        Some(result.gap),
    )];
    Ok(Output {
        json: result.to_json(),
        rows,
        status: converged_status(result.converged),
    })
}

fn cmd_bounds(spec: &ChannelSpec, ba: &BaOptions, limits: &Limits) -> Result<Output, Failure> {
    let core = TransitionCore::new(spec, limits)?;
    let uniform = AlphaInput::<Rational>::uniform(&core);
    let at_uniform = rate_bounds(&core, &uniform)?;
    let capacity = shannon_capacity(&core, ba)?;
    let at_achiever = rate_bounds(&core, &capacity.achiever)?;
    let mut json = json!({
        "uniform": at_uniform,
        "achiever": at_achiever,
        "capacity": capacity.to_json(),
    });
    let mut rows = Vec::new();
    for (label, b) in [("uniform", &at_uniform), ("achiever", &at_achiever)] {
        rows.push(row(&format!("lower_{label}"), b.lower, "exact_input", None));
        rows.push(row(&format!("mi_{label}"), b.mi, "exact_input", None));
        rows.push(row(&format!("upper_{label}"), b.upper, "exact_input", None));
    }
    if spec.t() >= spec.m() {
        let full = AlphaInput::<Rational>::point(&core, &Subspace::full(spec.field(), spec.m()))?;
        let d =
            full_rank_rate_decomposition(&core.rank_joint(&full)?, spec.t(), spec.m(), spec.q())?;
        rows.push(row("j_full_rank", d.j, "exact_input", None));
        rows.push(row("epsilon_full_rank", d.epsilon, "exact_input", None));
        json["full_rank_decomposition"] = json!(d);
    }
    Ok(Output {
        json,
        rows,
        status: converged_status(capacity.converged),
    })
}

fn cmd_report(spec: &ChannelSpec, opts: &ReportOptions) -> Result<Output, Failure> {
    let report = capacity_report(spec, opts)?;
    let mut rows = vec![
        row(
            "C",
            report.capacity.value,
            "alpha_type_ba",
            Some(report.capacity.gap),
        ),
        row(
            "C_SS",
            report.css.value,
            report.css.mode.name(),
            Some(report.css.gap),
        ),
        row(
            "lower_bound",
            report.bounds.lower,
            "at_capacity_achiever",
            None,
        ),
        row(
            "upper_bound",
            report.bounds.upper,
            "at_capacity_achiever",
            None,
        ),
        row(
            "constant_rank_best",
            report.constant_rank.value,
            "exact_input",
            None,
        ),
    ];
    rows.push(row("verdict", report.verdict.name(), "", None));
    let converged = report.capacity.converged && report.css.converged;
    Ok(Output {
        json: report.to_json(),
        rows,
        status: converged_status(converged),
    })
}

fn parse_rank_pmf(text: &str) -> Result<BTreeMap<usize, Rational>, Failure> {
    text.split(',')
        .map(|part| {
            let (r, p) = part.split_once(':').ok_or_else(|| {
                input_failure(format!("--rank-pmf entry '{part}' is not rank:mass"))
            })?;
            let r = r
                .trim()
                .parse()
                .map_err(|_| input_failure(format!("--rank-pmf rank '{r}'")))?;
            let p =
                parse_rational(p).ok_or_else(|| input_failure(format!("--rank-pmf mass '{p}'")))?;
            Ok((r, p))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    kind: Kind,
    q: u32,
    t: usize,
    m: usize,
    n: usize,
    rank_pmf: Option<&str>,
    seed: u64,
    limits: &Limits,
) -> Result<ChannelSpec, Failure> {
    let field = Field::new(q)?;
    let ranks = || -> Result<BTreeMap<usize, Rational>, Failure> {
        parse_rank_pmf(rank_pmf.ok_or_else(|| input_failure("this kind needs --rank-pmf".into()))?)
    };
    let family = match kind {
        Kind::IidUniform => Family::IidUniform,
        Kind::FullRankUniform => Family::FullRankUniform,
        Kind::UniformGivenRank => Family::UniformGivenRank(ranks()?),
        Kind::CustomRankDist => Family::CustomRankDist {
            rank_pmf: ranks()?,
            seed,
        },
    };
    Ok(generate(&family, field, t, m, n, limits)?)
}

fn cmd_verify(opts: &VerifyOptions) -> Result<Output, Failure> {
    let report = verify::run(opts)?;
    let rows = report
        .checks
        .iter()
        .map(|c| {
            row(
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                &format!("{} cases", c.cases),
                None,
            )
        })
        .collect();
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!(
            "locap verify: {} failed: {}",
            c.name,
            c.failure.as_deref().unwrap_or("")
        );
    }
    Ok(Output {
        json: report.to_json(),
        rows,
        status: if report.passed() { 0 } else { 5 },
    })
}
