//! Command-line front end for the equiaffine hypersurface laboratory.
//!
//! Subcommands:
//!
//! * `check`    — evaluate the structure-identity residual suite on a point
//!   sample of an immersion and pass/fail it against the identity tolerance;
//! * `classify` — run the full classifier on a point sample and fold the
//!   per-point verdicts;
//! * `family`   — generate a built-in model family as an `.sdl` chart or, if
//!   it needs quadrature profiles, a JSON bundle;
//! * `scan`     — classify every built-in family and verify the expected
//!   verdicts.
//!
//! Exit codes: `0` success, `1` tolerance failure or unexpected verdict,
//! `2` input error, `3` numerical failure during evaluation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use equiaffine::blaschke::blaschke_point_with;
use equiaffine::classify::{Classifier, SampleClassification, Verdict};
use equiaffine::curvature::{curvature_pack, structure_residuals, StructureResiduals};
use equiaffine::dsl::ImmersionSpec;
use equiaffine::error::Error;
use equiaffine::families::{build_family, emit_bundle, load_bundle, FamilyId, ProfileTable};
use equiaffine::report::{check_report, classification_report, Json, ReportConfig};
use equiaffine::sample::{halton_points, INTERIOR_MARGIN};
use equiaffine::tolerance::Tolerances;

#[derive(Parser)]
#[command(
    name = "equiaffine",
    version,
    about = "Equiaffine hypersurface laboratory: structure checks and model classification"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the equiaffine structure identities on a sample of points.
    Check(RunArgs),
    /// Classify an immersion among the recognised model families.
    Classify(RunArgs),
    /// Generate a built-in family chart (.sdl, or a JSON bundle when the
    /// family needs quadrature profiles).
    Family(FamilyArgs),
    /// Classify every built-in family and verify the expected verdicts.
    Scan(ScanArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// Path to an .sdl spec or a JSON bundle produced by `family`.
    #[arg(long, value_name = "PATH", conflicts_with = "family")]
    spec: Option<PathBuf>,
    /// Generate a built-in family instead of reading a spec
    /// (ellipsoid, hyperboloid, paraboloid, calabi, lorentz, w1..w6).
    #[arg(long, value_name = "ID")]
    family: Option<String>,
    /// Chart dimension for generated families.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Curvature parameter for families that take one.
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Named family constant, repeatable: --const c1=2.5
    #[arg(long = "const", value_name = "NAME=VALUE")]
    consts: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Number of quasi-random sample points.
    #[arg(long, default_value_t = 25)]
    points: usize,
    /// Jet truncation order (4 disables the commutator cross-check).
    #[arg(long, default_value_t = equiaffine::DEFAULT_ORDER)]
    order: usize,
    /// Sample seed; a fixed seed reproduces the report byte for byte.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Scale factor applied to the default tolerance ladder.
    #[arg(long, default_value_t = 1.0)]
    tol: f64,
    /// Also write the JSON report to this path.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct FamilyArgs {
    /// Family identifier (ellipsoid, hyperboloid, paraboloid, calabi,
    /// lorentz, w1..w6).
    #[arg(long, value_name = "ID")]
    id: String,
    /// Chart dimension.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Curvature parameter for families that take one.
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Named family constant, repeatable: --const c1=2.5
    #[arg(long = "const", value_name = "NAME=VALUE")]
    consts: Vec<String>,
    /// Write the artifact here instead of stdout.
    #[arg(long, value_name = "PATH")]
    emit: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// Chart dimension for every generated family.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Sample points per family.
    #[arg(long, default_value_t = 9)]
    points: usize,
    /// Jet truncation order.
    #[arg(long, default_value_t = equiaffine::DEFAULT_ORDER)]
    order: usize,
    /// Sample seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Scale factor applied to the default tolerance ladder.
    #[arg(long, default_value_t = 1.0)]
    tol: f64,
    /// Also write the JSON report to this path.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Full JSON report.
    Json,
    /// Short human-readable summary.
    Text,
}

// ---------------------------------------------------------------------------
// error handling and exit codes
// ---------------------------------------------------------------------------

enum AppError {
    /// Bad arguments, unreadable/invalid input files: exit 2.
    Input(String),
    /// Evaluation failed numerically: exit 3.
    Numerical(String),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Input(m) | AppError::Numerical(m) => f.write_str(m),
        }
    }
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Input(_) => 2,
            AppError::Numerical(_) => 3,
        }
    }
}

impl From<Error> for AppError {
    fn from(e: Error) -> Self {
        match &e {
            Error::Parse { .. }
            | Error::Dimension(_)
            | Error::Parameter(_)
            | Error::UnsupportedShape(_) => AppError::Input(e.to_string()),
            _ => AppError::Numerical(e.to_string()),
        }
    }
}

fn input(msg: impl Into<String>) -> AppError {
    AppError::Input(msg.into())
}

fn read_file(path: &Path) -> Result<String, AppError> {
    fs::read_to_string(path)
        .map_err(|e| input(format!("cannot read `{}`: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), AppError> {
    fs::write(path, content)
        .map_err(|e| input(format!("cannot write `{}`: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// source resolution
// ---------------------------------------------------------------------------

struct Source {
    spec: ImmersionSpec,
    profiles: ProfileTable,
    /// Spec path or family id, for the report config.
    label: String,
    family: Option<FamilyId>,
    params: Vec<(String, f64)>,
    sample_box: Vec<(f64, f64)>,
}

fn parse_consts(raw: &[String]) -> Result<Vec<(String, f64)>, AppError> {
    raw.iter()
        .map(|s| {
            let (name, value) = s
                .split_once('=')
                .ok_or_else(|| input(format!("--const expects NAME=VALUE, got `{s}`")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| input(format!("--const {name}: `{value}` is not a number")))?;
            Ok((name.trim().to_string(), v))
        })
        .collect()
}

fn resolve_source(src: &SourceArgs) -> Result<Source, AppError> {
    match (&src.spec, &src.family) {
        (None, None) => Err(input("one of --spec or --family is required")),
        (Some(path), None) => {
            if src.c.is_some() || !src.consts.is_empty() {
                return Err(input(
                    "--c and --const configure generated families; they do not \
                     apply to --spec inputs",
                ));
            }
            let text = read_file(path)?;
            let (spec, profiles) = if text.trim_start().starts_with('{') {
                load_bundle(&text)?
            } else {
                (ImmersionSpec::parse(&text)?, ProfileTable::new())
            };
            let sample_box = spec
                .domain_hint()
                .iter()
                .map(|h| h.unwrap_or((-0.5, 0.5)))
                .collect();
            Ok(Source {
                label: path.display().to_string(),
                spec,
                profiles,
                family: None,
                params: Vec::new(),
                sample_box,
            })
        }
        (None, Some(family)) => {
            let id = FamilyId::parse(family)?;
            let consts = parse_consts(&src.consts)?;
            let build = build_family(id, src.n, src.c, &consts)?;
            Ok(Source {
                label: id.name().to_string(),
                spec: build.spec,
                profiles: build.profiles,
                family: Some(id),
                params: build.params,
                sample_box: build.sample_box,
            })
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    }
}

fn validated_run(args: &RunArgs, source: &Source) -> Result<(), AppError> {
    if args.points == 0 {
        return Err(input("--points must be at least 1"));
    }
    if args.order < 4 {
        return Err(input(format!(
            "--order must be at least 4 (got {}); 5 enables the commutator \
             cross-check",
            args.order
        )));
    }
    if !(args.tol > 0.0) {
        return Err(input(format!("--tol must be positive, got {}", args.tol)));
    }
    // Validate the jet space up front so an oversized order is an input
    // error, not a mid-run numerical one.
    equiaffine::jet_space(source.spec.chart_dim(), args.order)
        .map_err(|e| input(e.to_string()))?;
    Ok(())
}

fn config_for(cmd: &str, args: &RunArgs, source: &Source) -> ReportConfig {
    ReportConfig {
        command: cmd.to_string(),
        spec: Some(source.label.clone()),
        family: source.family.map(|f| f.name().to_string()),
        n: source.spec.chart_dim(),
        order: args.order,
        seed: args.seed,
        points: args.points,
        tolerance_scale: args.tol,
        params: source.params.clone(),
    }
}

fn emit_outputs(
    json: &Json,
    report: &Option<PathBuf>,
    format: Format,
    text: &str,
) -> Result<(), AppError> {
    if let Some(path) = report {
        write_file(path, &json.render())?;
    }
    match format {
        Format::Json => print!("{}", json.render()),
        Format::Text => println!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

fn run_check(args: &RunArgs) -> Result<u8, AppError> {
    let source = resolve_source(&args.source)?;
    validated_run(args, &source)?;
    let tols = Tolerances::default().scaled(args.tol);
    let points = halton_points(&source.sample_box, args.points, args.seed, INTERIOR_MARGIN)?;

    let mut suites: Vec<StructureResiduals<f64>> = Vec::with_capacity(points.len());
    for p in &points {
        let bp = blaschke_point_with(&source.spec, p, args.order, &source.profiles)?;
        let cp = curvature_pack(&bp)?;
        suites.push(structure_residuals(&bp, &cp)?);
    }
    let sup = suites.iter().map(|s| s.sup()).fold(0.0f64, f64::max);
    let pass = sup < tols.identity;

    let config = config_for("check", args, &source);
    let json = check_report(&config, &points, &suites, pass, tols.identity);
    let worst = suites
        .iter()
        .map(|s| s.worst())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one point");
    let text = format!(
        "check {} (n={}, order={}, seed={}, points={})\n\
         sup residual {:.3e} against threshold {:.1e} (worst identity: {})\n\
         {}",
        source.label,
        source.spec.chart_dim(),
        args.order,
        args.seed,
        args.points,
        sup,
        tols.identity,
        worst.0,
        if pass { "PASS" } else { "FAIL" }
    );
    emit_outputs(&json, &args.report, args.format, &text)?;
    Ok(if pass { 0 } else { 1 })
}

fn classify_summary(source: &Source, args: &RunArgs, sample: &SampleClassification<f64>) -> String {
    let mut tally: Vec<(String, usize)> = Vec::new();
    for r in &sample.records {
        let name = r.verdict.name();
        match tally.iter_mut().find(|(n, _)| *n == name) {
            Some((_, c)) => *c += 1,
            None => tally.push((name, 1)),
        }
    }
    tally.sort();
    let tally_line = tally
        .iter()
        .map(|(n, c)| format!("{n} x{c}"))
        .collect::<Vec<_>>()
        .join(", ");
    let mut out = format!(
        "classify {} (n={}, order={}, seed={}, points={})\n\
         per-point: {}\n\
         verdict: {}  [{}]",
        source.label,
        source.spec.chart_dim(),
        args.order,
        args.seed,
        args.points,
        tally_line,
        sample.verdict,
        sample.evidence
    );
    if sample.verdict == Verdict::Unclassified {
        for r in sample
            .records
            .iter()
            .filter(|r| r.verdict == Verdict::Unclassified)
            .take(3)
        {
            out.push_str(&format!(
                "\n  at {:?}: {}",
                r.point.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
                r.evidence
            ));
        }
    }
    out
}

fn run_classify(args: &RunArgs) -> Result<u8, AppError> {
    let source = resolve_source(&args.source)?;
    validated_run(args, &source)?;
    let points = halton_points(&source.sample_box, args.points, args.seed, INTERIOR_MARGIN)?;

    let classifier: Classifier<f64> = Classifier::new(&source.spec)
        .with_profiles(&source.profiles)
        .with_order(args.order)
        .with_tolerances(Tolerances::default().scaled(args.tol));
    let sample = classifier.classify_sample(&points)?;

    let config = config_for("classify", args, &source);
    let json = classification_report(&config, &sample);
    let text = classify_summary(&source, args, &sample);
    emit_outputs(&json, &args.report, args.format, &text)?;

    let ok = match source.family {
        Some(id) => sample.verdict == id.expected_verdict(),
        None => sample.verdict != Verdict::Unclassified,
    };
    Ok(if ok { 0 } else { 1 })
}

fn run_family(args: &FamilyArgs) -> Result<u8, AppError> {
    let id = FamilyId::parse(&args.id)?;
    let consts = parse_consts(&args.consts)?;
    let build = build_family(id, args.n, args.c, &consts)?;
    let (artifact, kind) = if build.has_profiles() {
        (emit_bundle(&build)?, "bundle")
    } else {
        (build.spec.print(), "sdl")
    };
    match &args.emit {
        Some(path) => {
            write_file(path, &artifact)?;
            println!(
                "wrote {} {} for `{}` (n={}) to {}",
                kind,
                if kind == "bundle" { "(spec + profiles)" } else { "chart" },
                id.name(),
                args.n,
                path.display()
            );
        }
        None => print!("{artifact}"),
    }
    Ok(0)
}

fn run_scan(args: &ScanArgs) -> Result<u8, AppError> {
    if args.points == 0 {
        return Err(input("--points must be at least 1"));
    }
    if args.order < 4 {
        return Err(input("--order must be at least 4"));
    }
    if !(args.tol > 0.0) {
        return Err(input("--tol must be positive"));
    }

    let mut rows = Vec::new();
    let mut all_ok = true;
    for id in FamilyId::all() {
        let build = build_family(id, args.n, None, &[]).map_err(AppError::from)?;
        let points = halton_points(&build.sample_box, args.points, args.seed, INTERIOR_MARGIN)?;
        let classifier: Classifier<f64> = Classifier::new(&build.spec)
            .with_profiles(&build.profiles)
            .with_order(args.order)
            .with_tolerances(Tolerances::default().scaled(args.tol));
        let sample = classifier.classify_sample(&points)?;
        let expected = id.expected_verdict();
        let ok = sample.verdict == expected;
        all_ok &= ok;
        rows.push((id, expected, sample));
    }

    let mut families = Vec::new();
    let mut text = format!(
        "scan (n={}, order={}, seed={}, points={} per family)\n",
        args.n, args.order, args.seed, args.points
    );
    for (id, expected, sample) in &rows {
        let ok = sample.verdict == *expected;
        families.push(
            Json::object()
                .push("family", Json::Str(id.name().to_string()))
                .push("expected", Json::Str(expected.name()))
                .push("verdict", Json::Str(sample.verdict.name()))
                .push("agree", Json::Bool(ok))
                .push("evidence", Json::Str(sample.evidence.clone())),
        );
        text.push_str(&format!(
            "  {:<12} expected {:<16} got {:<16} {}\n",
            id.name(),
            expected.name(),
            sample.verdict.name(),
            if ok { "ok" } else { "MISMATCH" }
        ));
    }
    text.push_str(if all_ok { "PASS" } else { "FAIL" });

    let config = Json::object()
        .push("command", Json::Str("scan".into()))
        .push("n", Json::UInt(args.n as u64))
        .push("order", Json::UInt(args.order as u64))
        .push("seed", Json::UInt(args.seed))
        .push("points", Json::UInt(args.points as u64))
        .push("tolerance_scale", Json::Float(args.tol));
    let json = Json::object()
        .push("config", config)
        .push("families", Json::Array(families))
        .push(
            "verdict",
            Json::object()
                .push("name", Json::Str(if all_ok { "Pass" } else { "Fail" }.into()))
                .push(
                    "evidence",
                    Json::Str(format!(
                        "{} of {} families match",
                        rows.iter().filter(|(_, e, s)| s.verdict == *e).count(),
                        rows.len()
                    )),
                ),
        );
    if let Some(path) = &args.report {
        write_file(path, &json.render())?;
    }
    match args.format {
        Format::Json => print!("{}", json.render()),
        Format::Text => println!("{text}"),
    }
    Ok(if all_ok { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Check(args) => run_check(args),
        Cmd::Classify(args) => run_classify(args),
        Cmd::Family(args) => run_family(args),
        Cmd::Scan(args) => run_scan(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code())
        }
    }
}
