//! `bolic`: batch front-end for the metric toolkit.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bolic::cache;
use bolic::chain::Chain0;
use bolic::constants::{estimate_constants, parse_rational, EstimateConfig, EstimationMode};
use bolic::metric::MetricContext;
use bolic::table::export_ball;
use bolic::verify::{run_suite, Suite, VerificationReport, VerifyConfig};
use bolic::{par, Error, GroupElement};
use clap::{Parser, Subcommand};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::Serialize;

use config::{Arith, CommonArgs, RunConfig};

const WORD_HELP: &str = "\
Words are products of generator labels. Free groups use a, b, c, ...; free
products use one letter per cyclic factor. A label may carry an inverse
suffix (a' or a^-1) or a power (a^3, a^{-2}). Labels may be concatenated
(abab) or separated by spaces, '*' or '.'. The identity is written 1.";

#[derive(Debug, Parser)]
#[command(name = "bolic", version, about = "Exact evaluation and verification of a bicombing-based metric on hyperbolic groups", after_help = WORD_HELP)]
struct Cli {
    /// JSON run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = machine default)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate r, s, d-hat or the chains f, f-bar for given words
    #[command(after_help = WORD_HELP)]
    Eval(EvalArgs),
    /// Estimate the constants of the construction and write a record
    Estimate(EstimateArgs),
    /// Run verification suites and write a report
    Verify(VerifyArgs),
    /// Write the ball of a given radius as a table model
    ExportBall(ExportArgs),
    /// Inspect or clear the memo cache
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// r(A, B)
    #[arg(long, num_args = 2, value_names = ["A", "B"], action = clap::ArgAction::Append)]
    r: Vec<String>,
    /// s(A, B) = (r(A,B) + r(B,A)) / 2
    #[arg(long, num_args = 2, value_names = ["A", "B"], action = clap::ArgAction::Append)]
    s: Vec<String>,
    /// d-hat(A, B); needs C2 from --c2 or --constants
    #[arg(long, num_args = 2, value_names = ["A", "B"], action = clap::ArgAction::Append)]
    dhat: Vec<String>,
    /// chain f(B, A)
    #[arg(long, num_args = 2, value_names = ["B", "A"], action = clap::ArgAction::Append)]
    f: Vec<String>,
    /// chain f-bar(B, A)
    #[arg(long, num_args = 2, value_names = ["B", "A"], action = clap::ArgAction::Append)]
    fbar: Vec<String>,
    /// Also print a k-digit decimal rendering (display only)
    #[arg(long, value_name = "K")]
    decimal: Option<usize>,
}

#[derive(Debug, clap::Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    radius: Option<u32>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Safety margin added to the empirical C2 (default 1)
    #[arg(long)]
    c2_margin: Option<String>,
    /// Output file (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// structural, r-properties, metric, bolic or all (repeatable)
    #[arg(long, value_delimiter = ',')]
    suite: Vec<String>,
    #[arg(long)]
    radius: Option<u32>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed of the estimation run when no --constants record is given (default seed + 1)
    #[arg(long)]
    estimate_seed: Option<u64>,
    /// Report JSON (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of the four-point decay bins
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct ExportArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    radius: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum CacheAction {
    /// List cache files and their entry counts
    Inspect {
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Delete every cache file
    Clear {
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
}

/// Failures that are not library errors.
enum Failure {
    Lib(Error),
    PropertyFailed(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::FitFailure(_) | Error::InvariantViolation(_) | Error::NonDecreasingRecursion(_) => 1,
        Error::Configuration(_) | Error::Domain(_) | Error::Format { .. } => 2,
        Error::BudgetExceeded(_) | Error::OutOfLoadedBall(_) | Error::Io(_) => 3,
    }
}

fn error_name(e: &Error) -> &'static str {
    match e {
        Error::OutOfLoadedBall(_) => "OutOfLoadedBall",
        Error::BudgetExceeded(_) => "BudgetExceeded",
        Error::Format { .. } => "Format",
        Error::Domain(_) => "Domain",
        Error::Configuration(_) => "Configuration",
        Error::NonDecreasingRecursion(_) => "NonDecreasingRecursion",
        Error::FitFailure(_) => "FitFailure",
        Error::InvariantViolation(_) => "InvariantViolation",
        Error::Io(_) => "Io",
    }
}

fn report_error(kind: &str, message: &str, code: u8) -> ExitCode {
    let obj = serde_json::json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{obj}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return report_error("Usage", e.to_string().trim(), 2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => report_error(error_name(&e), &e.to_string(), exit_code(&e)),
        Err(Failure::PropertyFailed(n)) => {
            report_error("PropertyFailure", &format!("{n} propert{} failed", if n == 1 { "y" } else { "ies" }), 1)
        }
    }
}

fn base_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = base_config(&cli)?;
    let workers = cfg.workers.unwrap_or(0);
    match cli.command {
        Command::Eval(args) => {
            cfg.apply(&args.common);
            let cfg = cfg.resolve()?;
            par::with_workers(workers, || eval(&cfg, &args))
        }
        Command::Estimate(args) => {
            cfg.apply(&args.common);
            set(&mut cfg.radius, args.radius);
            set(&mut cfg.budget, args.budget);
            set(&mut cfg.seed, args.seed);
            if args.c2_margin.is_some() {
                cfg.c2_margin = args.c2_margin.clone();
            }
            let cfg = cfg.resolve()?;
            par::with_workers(workers, || estimate(&cfg, args.out.as_deref()))
        }
        Command::Verify(args) => {
            cfg.apply(&args.common);
            set(&mut cfg.radius, args.radius);
            set(&mut cfg.budget, args.budget);
            set(&mut cfg.seed, args.seed);
            let cfg = cfg.resolve()?;
            par::with_workers(workers, || verify(&cfg, &args))
        }
        Command::ExportBall(args) => {
            cfg.apply(&args.common);
            let cfg = cfg.resolve()?;
            let model = cfg.model()?;
            let table = export_ball(&model, args.radius)?;
            write_file(&args.out, &table.to_json()?)?;
            println!("wrote {} elements of radius {} to {}", table.elements.len(), args.radius, args.out.display());
            Ok(())
        }
        Command::Cache { action } => {
            let (dir, clear) = match action {
                CacheAction::Inspect { cache_dir } => (cache_dir, false),
                CacheAction::Clear { cache_dir } => (cache_dir, true),
            };
            let dir = dir
                .or(cfg.cache_dir)
                .or_else(|| std::env::var_os(cache::CACHE_DIR_ENV).map(PathBuf::from))
                .ok_or_else(|| Error::Configuration(format!("no cache directory (use --cache-dir or {})", cache::CACHE_DIR_ENV)))?;
            if clear {
                let n = cache::clear(&dir)?;
                println!("removed {n} cache file{}", if n == 1 { "" } else { "s" });
            } else {
                let mut summaries = Vec::new();
                for path in cache::list(&dir)? {
                    summaries.push(cache::inspect(&path)?);
                }
                println!("{}", to_json(&summaries)?);
            }
            Ok(())
        }
    }
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?)
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(Error::from)?;
    }
    let mut body = text.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    std::fs::write(path, body).map_err(Error::from)?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Loads the memo cache for `ctx` when a cache directory is configured.
fn open_cache(cfg: &RunConfig, ctx: &MetricContext) -> CliResult<Option<PathBuf>> {
    let Some(dir) = &cfg.cache_dir else { return Ok(None) };
    if !ctx.model().supports_equivariant_reduction() {
        return Ok(None);
    }
    let path = cache::cache_path(dir, ctx);
    if path.exists() {
        cache::load(ctx, &path)?;
    }
    Ok(Some(path))
}

fn element(ctx: &MetricContext, text: &str) -> CliResult<GroupElement> {
    let m = ctx.model();
    Ok(m.normalize(&m.parse_word(text)?)?)
}

fn render_value(q: &BigRational, decimal: Option<usize>) -> String {
    match decimal {
        Some(k) => format!("{q}  (~{:.*}, display only)", k, q.to_f64().unwrap_or(f64::NAN)),
        None => q.to_string(),
    }
}

fn render_chain(ctx: &MetricContext, z: &Chain0, decimal: Option<usize>) -> Vec<String> {
    let mut terms: Vec<(String, String)> =
        z.iter().map(|(g, q)| (ctx.model().format(g), render_value(q, decimal))).collect();
    terms.sort();
    terms.into_iter().map(|(w, q)| format!("  {q} {w}")).collect()
}

fn eval(cfg: &RunConfig, args: &EvalArgs) -> CliResult<()> {
    let (ctx, _) = cfg.context()?;
    let cache_path = open_cache(cfg, &ctx)?;
    let float = cfg.arith() == Arith::Float;
    let mut lines = Vec::new();
    let pairs = |v: &[String]| v.chunks(2).map(|p| (p[0].clone(), p[1].clone())).collect::<Vec<_>>();

    for (a, b) in pairs(&args.r) {
        let (x, y) = (element(&ctx, &a)?, element(&ctx, &b)?);
        let v = if float { ctx.r_value_f64(&x, &y)?.to_string() } else { render_value(&ctx.r_value(&x, &y)?, args.decimal) };
        lines.push(format!("r({a}, {b}) = {v}"));
    }
    for (a, b) in pairs(&args.s) {
        let (x, y) = (element(&ctx, &a)?, element(&ctx, &b)?);
        let v = if float { ctx.s_value_f64(&x, &y)?.to_string() } else { render_value(&ctx.s_value(&x, &y)?, args.decimal) };
        lines.push(format!("s({a}, {b}) = {v}"));
    }
    for (a, b) in pairs(&args.dhat) {
        let (x, y) = (element(&ctx, &a)?, element(&ctx, &b)?);
        let v = if float { ctx.dhat_f64(&x, &y)?.to_string() } else { render_value(&ctx.dhat(&x, &y)?, args.decimal) };
        lines.push(format!("dhat({a}, {b}) = {v}"));
    }
    for (b, a) in pairs(&args.f) {
        let z = ctx.f_chain(&element(&ctx, &b)?, &element(&ctx, &a)?)?;
        lines.push(format!("f({b}, {a}) ="));
        lines.extend(render_chain(&ctx, &z, args.decimal));
    }
    for (b, a) in pairs(&args.fbar) {
        let z = ctx.fbar_chain(&element(&ctx, &b)?, &element(&ctx, &a)?)?;
        lines.push(format!("fbar({b}, {a}) ="));
        lines.extend(render_chain(&ctx, &z, args.decimal));
    }
    if lines.is_empty() {
        return Err(Error::Configuration("nothing to evaluate (use --r, --s, --dhat, --f or --fbar)".into()).into());
    }
    if let Some(path) = cache_path {
        cache::save(&ctx, &path)?;
    }
    let mut stdout = std::io::stdout().lock();
    for line in lines {
        writeln!(stdout, "{line}").map_err(Error::from)?;
    }
    Ok(())
}

fn estimate_config(cfg: &RunConfig, seed: u64) -> CliResult<EstimateConfig> {
    let mut est = EstimateConfig::new(cfg.radius.unwrap_or(8), cfg.budget.unwrap_or(200), seed);
    if cfg.c2.as_deref() == Some("formula") {
        est.mode = EstimationMode::Formula;
    }
    if let Some(m) = &cfg.c2_margin {
        est.c2_margin = parse_rational(m)?;
    }
    Ok(est)
}

fn estimate(cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let (mut ctx, _) = cfg.context()?;
    let cache_path = open_cache(cfg, &ctx)?;
    let est = estimate_config(cfg, cfg.seed.unwrap_or(0))?;
    let mut rec = estimate_constants(&mut ctx, &est)?;
    let mut resolved = cfg.clone();
    resolved.radius = Some(est.radius);
    resolved.budget = Some(est.budget);
    resolved.seed = Some(est.seed);
    rec.run_config = Some(resolved.to_value());
    if let Some(path) = cache_path {
        cache::save(&ctx, &path)?;
    }
    emit(out, &rec.to_json_string()?)
}

#[derive(Serialize)]
struct VerifyOutput {
    version: u32,
    run_config: serde_json::Value,
    pass: bool,
    reports: Vec<VerificationReport>,
}

fn verify(cfg: &RunConfig, args: &VerifyArgs) -> CliResult<()> {
    let mut suites = Vec::new();
    let names = if args.suite.is_empty() { vec!["all".to_string()] } else { args.suite.clone() };
    for name in &names {
        if name == "all" {
            suites.extend([Suite::Structural, Suite::RProperties, Suite::Metric, Suite::Bolic]);
        } else {
            suites.push(Suite::parse(name)?);
        }
    }
    suites.dedup();

    let (mut ctx, mut rec) = cfg.context()?;
    let cache_path = open_cache(cfg, &ctx)?;
    let radius = cfg.radius.unwrap_or(8);
    let budget = cfg.budget.unwrap_or(200);
    let seed = cfg.seed.unwrap_or(0);
    let mut resolved = cfg.clone();
    resolved.radius = Some(radius);
    resolved.budget = Some(budget);
    resolved.seed = Some(seed);

    if rec.is_none() && suites.iter().any(|s| *s != Suite::Structural) {
        let est_seed = args.estimate_seed.unwrap_or(seed.wrapping_add(1));
        let mut est = estimate_config(cfg, est_seed)?;
        est.radius = radius;
        est.budget = budget;
        rec = Some(estimate_constants(&mut ctx, &est)?);
    }

    let vcfg = VerifyConfig::new(radius, budget, seed);
    let mut reports = Vec::new();
    for suite in suites {
        reports.push(run_suite(&ctx, suite, rec.as_ref(), &vcfg)?);
    }
    if let Some(path) = cache_path {
        cache::save(&ctx, &path)?;
    }

    let failed: usize = reports.iter().map(|r| r.failures().len()).sum();
    for r in &reports {
        for p in &r.properties {
            let status = if p.pass { "PASS" } else { "FAIL" };
            eprintln!("{status} {}/{} samples={} max_defect={} threshold={}", r.suite.name(), p.id, p.samples, p.max_defect, p.threshold);
        }
    }
    if let Some(path) = &args.csv {
        let csv = reports
            .iter()
            .find(|r| !r.decay_bins.is_empty())
            .map(VerificationReport::decay_csv)
            .unwrap_or_else(|| bolic::verify::DECAY_CSV_HEADER.to_string());
        write_file(path, &csv)?;
    }
    let out = VerifyOutput { version: bolic::verify::REPORT_VERSION, run_config: resolved.to_value(), pass: failed == 0, reports };
    emit(args.out.as_deref(), &to_json(&out)?)?;
    if failed > 0 {
        return Err(Failure::PropertyFailed(failed));
    }
    Ok(())
}
