//! `linfty`: solve profiles, scan residuals and inclusions, and run
//! nonuniqueness demos from the command line.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 configuration or domain
//! error, 3 numerical failure.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use linfty_core::inclusion::{scan_inclusion, DetMode, SetSpec};
use linfty_core::ode::{self, DEFAULT_TOL, DEFAULT_T_MIN};
use linfty_core::solutions::{eikonal_map, identity_map, mu_map, power_map, trig_map};
use linfty_core::verify::{
    inclusion_report, nonuniqueness_demo, residual_report, sample_punctured_ball, DemoOptions,
    Problem, Report, SampleSet, Tolerances, DEFAULT_BOUNDARY_TOL, DEFAULT_DISTINCTNESS,
};
use linfty_core::{Error, MapModel, Operator};

#[derive(Parser, Debug)]
#[command(
    name = "linfty",
    version,
    about = "Verification harness for vectorial L-infinity systems"
)]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Worker threads (falls back to LINFTY_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the eikonal profile ODE and write it as CSV.
    Profile(ProfileArgs),
    /// Evaluate an operator on a solution family over sampled points.
    Residual(ResidualArgs),
    /// Build several solutions of one Dirichlet problem and certify them.
    Demo(DemoArgs),
    /// Scan Du against an inclusion set.
    Inclusion(InclusionArgs),
}

#[derive(Args, Debug)]
struct ProfileArgs {
    #[arg(long)]
    a: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_T_MIN)]
    t_min: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value = "profile.csv")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct Sampling {
    #[arg(long, default_value_t = 10)]
    shells: usize,
    #[arg(long, default_value_t = 36)]
    per_shell: usize,
    #[arg(long, default_value_t = 0.01)]
    r_min: f64,
    #[arg(long, default_value_t = 0.99)]
    r_max: f64,
}

#[derive(Args, Debug, Clone)]
struct FamilyParams {
    /// Eikonal levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    a: Vec<f64>,
    /// Power-map exponents, comma separated.
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// Linear-system parameters, comma separated.
    #[arg(long, value_delimiter = ',')]
    mu: Vec<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OpArg {
    InfinityLaplacian,
    QInfinity,
    Linear,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Eikonal,
    Power,
    Mu,
    Identity,
    Trig,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SetArg {
    L,
    K,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum DetModeArg {
    Positive,
    Nonzero,
}

#[derive(Args, Debug)]
struct ResidualArgs {
    #[arg(long = "op", value_enum)]
    op: OpArg,
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[command(flatten)]
    params: FamilyParams,
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    sampling: Sampling,
    /// Bound on the normalised residual.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value = "residual.json")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct DemoArgs {
    #[arg(long, value_enum)]
    problem: OpArg,
    #[command(flatten)]
    params: FamilyParams,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_BOUNDARY_TOL)]
    boundary_tol: f64,
    /// Required pairwise sup-distance between solutions.
    #[arg(long, default_value_t = DEFAULT_DISTINCTNESS)]
    delta: f64,
    #[arg(long, default_value = "demo.json")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct InclusionArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[command(flatten)]
    params: FamilyParams,
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, ignore_case = true)]
    set: SetArg,
    /// Level of the set; defaults to the family's own level.
    #[arg(long = "level")]
    level: Option<f64>,
    #[arg(long, value_enum, default_value_t = DetModeArg::Nonzero)]
    det_mode: DetModeArg,
    /// Equality tolerance; defaults by evaluator provenance.
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long, default_value = "inclusion.json")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Pass,
    Fail,
}

enum Failure {
    Config(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::Dimension(_) => Failure::Config(e.to_string()),
            Error::SingularityReached { .. } | Error::Numerical(_) => {
                Failure::Numeric(e.to_string())
            }
        }
    }
}

type CmdResult = std::result::Result<Outcome, Failure>;

fn config(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads(cli.threads) {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Profile(args) => cmd_profile(args),
        Command::Residual(args) => cmd_residual(args, cli.seed),
        Command::Demo(args) => cmd_demo(args, cli.seed),
        Command::Inclusion(args) => cmd_inclusion(args, cli.seed),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn configure_threads(flag: Option<usize>) -> std::result::Result<(), String> {
    let requested =
        match flag {
            Some(n) => Some(n),
            None => match std::env::var("LINFTY_THREADS") {
                Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                    format!("LINFTY_THREADS must be a positive integer, got {v:?}")
                })?),
                Err(_) => None,
            },
        };
    if let Some(n) = requested {
        if n == 0 {
            return Err("thread count must be positive".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("could not start the thread pool: {e}"))?;
    }
    Ok(())
}

fn create(path: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| config(format!("cannot write {}: {e}", path.display())))
}

fn write_report(report: &Report, path: &Path, format: Format) -> std::result::Result<(), Failure> {
    match format {
        Format::Json => {
            let json = report.to_json()?;
            std::fs::write(path, json + "\n")
                .map_err(|e| config(format!("cannot write {}: {e}", path.display())))
        }
        Format::Csv => Ok(report.write_csv(create(path)?)?),
    }
}

fn verdict_line(report: &Report) -> String {
    let word = if report.verdict.pass { "PASS" } else { "FAIL" };
    let mut line = format!("{word} {} {} n={}", report.operator, report.map, report.n);
    if let Some(first) = report.verdict.failures.first() {
        line.push_str(&format!(" ({first})"));
    }
    line
}

fn outcome(report: &Report) -> Outcome {
    if report.verdict.pass {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

fn single(name: &str, values: &[f64]) -> std::result::Result<f64, Failure> {
    match values {
        [v] => Ok(*v),
        [] => Err(config(format!("--{name} is required"))),
        _ => Err(config(format!(
            "--{name} takes a single value for this command"
        ))),
    }
}

fn build_map(
    family: FamilyArg,
    params: &FamilyParams,
    n: usize,
) -> std::result::Result<Box<dyn MapModel>, Failure> {
    Ok(match family {
        FamilyArg::Eikonal => Box::new(eikonal_map(single("a", &params.a)?, n)?),
        FamilyArg::Power => Box::new(power_map(single("gamma", &params.gamma)?, n)?),
        FamilyArg::Mu => Box::new(mu_map(single("mu", &params.mu)?, n)?),
        FamilyArg::Identity => Box::new(identity_map(n)),
        FamilyArg::Trig => {
            if n != 2 {
                return Err(config("the trig map lives in n = 2"));
            }
            Box::new(trig_map())
        }
    })
}

fn samples(n: usize, s: &Sampling, seed: u64) -> std::result::Result<SampleSet, Failure> {
    Ok(sample_punctured_ball(
        n,
        s.shells,
        s.per_shell,
        s.r_min,
        s.r_max,
        seed,
    )?)
}

fn cmd_profile(args: &ProfileArgs) -> CmdResult {
    let sol = ode::solve_profile_maximal(args.a, args.n, args.t_min, args.tol)?;
    sol.write_csv(create(&args.out)?)?;
    let t_lo = sol.t_lo();
    println!(
        "OK profile a={} n={} grid={} t_lo={:.6e} g(t_lo)={:.6e} max_ode_residual={:.3e} out={}",
        args.a,
        args.n,
        sol.len(),
        t_lo,
        sol.g_at(t_lo)?,
        sol.max_midpoint_residual(),
        args.out.display()
    );
    if let Some(t) = sol.singularity() {
        eprintln!(
            "note: the profile blows up (g -> -inf) at t = {t:.10e} > t_min = {:e}; the CSV covers [{t_lo:.6e}, 1]",
            args.t_min
        );
    }
    Ok(Outcome::Pass)
}

fn cmd_residual(args: &ResidualArgs, seed: u64) -> CmdResult {
    let op = match args.op {
        OpArg::InfinityLaplacian => Operator::InfinityLaplacian,
        OpArg::QInfinity => Operator::QInfinity,
        OpArg::Linear => Operator::Linear {
            mu: single("mu", &args.params.mu)?,
        },
    };
    let map = build_map(args.family, &args.params, args.n)?;
    let pts = samples(args.n, &args.sampling, seed)?;
    let tol = Tolerances {
        residual: args.tol,
        ..Tolerances::default()
    };
    let report = residual_report(op, map.as_ref(), &pts, &tol)?;
    write_report(&report, &args.out, args.format)?;
    println!("{}", verdict_line(&report));
    if let Some(agg) = &report.aggregates {
        println!(
            "points={} counted={} excluded={} failed={} max={:.3e} mean={:.3e} p99={:.3e} out={}",
            report.samples.count,
            agg.counted,
            agg.excluded,
            agg.failed,
            agg.max,
            agg.mean,
            agg.p99,
            args.out.display()
        );
    }
    Ok(outcome(&report))
}

fn cmd_demo(args: &DemoArgs, seed: u64) -> CmdResult {
    let problem = match args.problem {
        OpArg::InfinityLaplacian => Problem::InfinityLaplacian {
            a: args.params.a.clone(),
        },
        OpArg::QInfinity => Problem::QInfinity {
            gamma: args.params.gamma.clone(),
        },
        OpArg::Linear => Problem::Linear {
            mu: single("mu", &args.params.mu)?,
        },
    };
    let pts = samples(args.n, &args.sampling, seed)?;
    let opts = DemoOptions {
        tolerances: Tolerances {
            residual: args.tol,
            ..Tolerances::default()
        },
        boundary_tol: args.boundary_tol,
        distinctness: args.delta,
        ..DemoOptions::default()
    };
    let report = nonuniqueness_demo(&problem, args.n, &pts, &opts)?;
    write_report(&report, &args.out, args.format)?;
    println!("{}", verdict_line(&report));
    println!(
        "{:<28} {:>6} {:>12} {:>12} {:>10}",
        "solution", "pass", "max resid", "outer dev", "|u| @1e-3"
    );
    for m in &report.members {
        let max = m.aggregates.as_ref().map_or(f64::NAN, |a| a.max);
        let (outer, inner) = m
            .boundary
            .as_ref()
            .map_or((f64::NAN, None), |b| (b.outer_deviation, b.inner_magnitude));
        println!(
            "{:<28} {:>6} {:>12.3e} {:>12.3e} {:>10}",
            m.map,
            if m.verdict.pass { "yes" } else { "no" },
            max,
            outer,
            inner.map_or("undefined".to_string(), |v| format!("{v:.3e}"))
        );
    }
    for d in &report.distinctness {
        println!(
            "distance {} vs {}: {:.4e} ({})",
            d.first,
            d.second,
            d.sup_distance,
            if d.passed {
                "distinct"
            } else {
                "not certified"
            }
        );
    }
    println!("report: {}", args.out.display());
    Ok(outcome(&report))
}

fn cmd_inclusion(args: &InclusionArgs, seed: u64) -> CmdResult {
    let map = build_map(args.family, &args.params, args.n)?;
    let p = &args.params;
    let level = match (args.level, args.set, args.family) {
        (Some(a), _, _) => a,
        (None, SetArg::K, FamilyArg::Power) => {
            linfty_core::solutions::power_dilation_level(single("gamma", &p.gamma)?, args.n)
        }
        (None, SetArg::K, FamilyArg::Mu) => {
            let g = linfty_core::solutions::mu_exponent(single("mu", &p.mu)?, args.n)?;
            linfty_core::solutions::power_dilation_level(g, args.n)
        }
        // otherwise --a names the level (for eikonal maps it is also the family parameter)
        (None, _, _) if !p.a.is_empty() => single("a", &p.a)?,
        (None, _, FamilyArg::Identity) => args.n as f64,
        _ => {
            return Err(config(
                "no default level for this family and set; pass --a or --level",
            ))
        }
    };
    let set = match args.set {
        SetArg::L => SetSpec::L { a: level },
        SetArg::K => SetSpec::K {
            a: level,
            det_mode: match args.det_mode {
                DetModeArg::Positive => DetMode::Positive,
                DetModeArg::Nonzero => DetMode::Nonzero,
            },
        },
    };
    // surface precondition violations (non-square, level out of range) as config errors
    let (n, big_n) = map.dims();
    if n != big_n {
        return Err(config("inclusion sets are defined for n = N"));
    }
    linfty_core::inclusion::test_membership(&linfty_core::Matrix::identity(n, n), set, 0.0)?;

    let pts = samples(args.n, &args.sampling, seed)?;
    let scan = scan_inclusion(map.as_ref(), &pts.points, set, args.tol);
    let report = inclusion_report(map.as_ref(), &pts, scan);
    write_report(&report, &args.out, args.format)?;
    println!("{}", verdict_line(&report));
    if let Some(scan) = &report.inclusion {
        let worst: Vec<String> = scan
            .worst
            .iter()
            .map(|(k, v)| format!("{k}={v:.3e}"))
            .collect();
        println!(
            "set={} a={} members={}/{} errors={} worst[{}] out={}",
            set.name(),
            level,
            scan.members,
            scan.points.len(),
            scan.errors,
            worst.join(" "),
            args.out.display()
        );
    }
    Ok(outcome(&report))
}
