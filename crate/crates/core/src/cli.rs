//! `mafd`: single solves, convergence studies and verification suites.
//!
//! Exit codes: `0` success, `1` usage or configuration error, `2` a solve did
//! not converge or a check failed, `3` a verification suite crashed.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::checks::{self, Check};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, MeshFunction, Rect, Region};
use crate::measures::DiracSpread;
use crate::operator::{is_discrete_convex, EpsilonSign, OperatorConfig};
use crate::poisson::{PoissonConfig, PoissonMethod};
use crate::problems::{format_h, problem_by_name, run_convergence_study, Problem, PROBLEM_NAMES};
use crate::solvers::{solve, InitialGuess, Method, SolverConfig};
use crate::stencil::enumerate_bases;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "mafd", version, about = "Wide-stencil finite differences for det D²u = ν")]
pub struct Cli {
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one problem on one grid.
    Solve(SolveArgs),
    /// Solve one problem on a sequence of grids and tabulate errors.
    Study(StudyArgs),
    /// Run property suites and write a JSON report.
    Verify(VerifyArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum MethodArg {
    Basic,
    Precond,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SignArg {
    Plus,
    Minus,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum PoissonArg {
    Fast,
    Iterative,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SpreadArg {
    Nearest,
    Bilinear,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    MeasureConvergence,
    Contraction,
    LaplacianNorm,
    Ellipticity,
}

#[derive(Args, Debug, Clone)]
pub struct SchemeArgs {
    #[arg(long, value_enum, default_value = "precond")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 50.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 2)]
    pub stencil_width: u32,
    #[arg(long, default_value_t = crate::operator::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value = "plus")]
    pub epsilon_sign: SignArg,
    /// `exact`, `extension`, or `file:PATH` (CSV as written by `solve`).
    #[arg(long, default_value = "exact")]
    pub init: String,
    #[arg(long, value_enum, default_value = "fast")]
    pub poisson: PoissonArg,
    #[arg(long, default_value_t = 1e-12)]
    pub poisson_tol: f64,
    #[arg(long, value_enum, default_value = "nearest")]
    pub dirac_spread: SpreadArg,
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    #[arg(long, default_value = "two_dirac")]
    pub problem: String,
    /// Mesh width: `1/2^k`, `1/n` or a decimal.
    #[arg(long)]
    pub h: String,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Record wall-clock times (makes outputs run-dependent).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug, Clone)]
pub struct StudyArgs {
    #[arg(long, default_value = "two_dirac")]
    pub problem: String,
    /// Comma-separated mesh widths.
    #[arg(long, default_value = "")]
    pub h_list: String,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    /// Suites to run; all of them when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub suite: Vec<Suite>,
    /// Comma-separated mesh widths; each suite has its own default.
    #[arg(long, alias = "h-list")]
    pub h: Option<String>,
    /// Problem for the measure-convergence suite.
    #[arg(long, default_value = "smooth_radial")]
    pub problem: String,
    /// `x_min,x_max,y_min,y_max` for the measure-convergence suite.
    #[arg(long = "box")]
    pub test_box: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Parses `1/2^k`, `1/n` or a decimal into a positive mesh width.
pub fn parse_h(text: &str) -> Result<f64> {
    let bad = || Error::Config(format!("cannot parse mesh width '{text}'"));
    let t = text.trim();
    let h = if let Some(den) = t.strip_prefix("1/") {
        let n: f64 = match den.strip_prefix("2^") {
            Some(k) => {
                let k: u32 = k.parse().map_err(|_| bad())?;
                if k > 30 {
                    return Err(bad());
                }
                f64::from(1u32 << k)
            }
            None => den.parse::<u64>().map_err(|_| bad())? as f64,
        };
        1.0 / n
    } else {
        t.parse::<f64>().map_err(|_| bad())?
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("mesh width must be positive, got '{text}'")));
    }
    Ok(h)
}

pub fn parse_h_list(text: &str) -> Result<Vec<f64>> {
    text.split(',').filter(|s| !s.trim().is_empty()).map(parse_h).collect()
}

fn parse_box(text: &str) -> Result<Rect> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("cannot parse box '{text}'")))?;
    match v[..] {
        [x_min, x_max, y_min, y_max] if x_min <= x_max && y_min <= y_max => Ok(Rect { x_min, x_max, y_min, y_max }),
        _ => Err(Error::Config(format!("box must be x_min,x_max,y_min,y_max, got '{text}'"))),
    }
}

fn problem(name: &str) -> Result<Problem> {
    problem_by_name(name).ok_or_else(|| {
        Error::Config(format!("unknown problem '{name}' (known: {})", PROBLEM_NAMES.join(", ")))
    })
}

impl SchemeArgs {
    pub fn method(&self) -> Method {
        match self.method {
            MethodArg::Basic => Method::Basic,
            MethodArg::Precond => Method::Preconditioned,
        }
    }

    pub fn operator(&self) -> Result<OperatorConfig> {
        if self.stencil_width == 0 {
            return Err(Error::Config("stencil width must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        Ok(OperatorConfig {
            stencil: enumerate_bases(self.stencil_width),
            epsilon: self.epsilon,
            epsilon_sign: match self.epsilon_sign {
                SignArg::Plus => EpsilonSign::Plus,
                SignArg::Minus => EpsilonSign::Minus,
            },
        })
    }

    pub fn poisson(&self) -> Result<PoissonConfig> {
        let cfg = PoissonConfig {
            method: match self.poisson {
                PoissonArg::Fast => PoissonMethod::FastDiagonalization,
                PoissonArg::Iterative => PoissonMethod::Iterative,
            },
            rel_tol: self.poisson_tol,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Solver settings; a `file:` initial guess is read against `grid`.
    pub fn solver(&self, grid: Option<&Arc<Grid>>) -> Result<SolverConfig> {
        let initial_guess = match self.init.as_str() {
            "exact" => InitialGuess::ExactRestriction,
            "extension" => InitialGuess::BoundaryExtension,
            other => match other.strip_prefix("file:") {
                Some(path) => {
                    let grid = grid.ok_or_else(|| Error::Config("file initial guess needs a single grid".into()))?;
                    InitialGuess::Custom(MeshFunction::read_csv(grid, &fs::read_to_string(path)?)?)
                }
                None => return Err(Error::Config(format!("unknown initial guess '{other}'"))),
            },
        };
        let cfg = SolverConfig {
            method: self.method(),
            mu: self.mu,
            tol: self.tol,
            max_iter: self.max_iter,
            initial_guess,
            dirac_spread: match self.dirac_spread {
                SpreadArg::Nearest => DiracSpread::Nearest,
                SpreadArg::Bilinear => DiracSpread::Bilinear,
            },
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn describe(&self) -> serde_json::Value {
        json!({
            "method": match self.method { MethodArg::Basic => "basic", MethodArg::Precond => "precond" },
            "mu": self.mu,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "stencil_width": self.stencil_width,
            "epsilon": self.epsilon,
            "init": self.init,
        })
    }
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn to_json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s.into_bytes()
}

pub fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let problem = problem(&args.problem)?;
    let h = parse_h(&args.h)?;
    let grid = problem.grid(h)?;
    let cfg = args.scheme.solver(Some(&grid))?;
    let opcfg = args.scheme.operator()?;
    let pcfg = args.scheme.poisson()?;

    let mut summary = json!({
        "schema": SCHEMA_VERSION,
        "problem": problem.name,
        "h": h,
        "h_label": format_h(h),
        "config": args.scheme.describe(),
    });
    let fields = summary.as_object_mut().expect("object literal");
    let code = match solve(&problem, &grid, &cfg, &opcfg, &pcfg) {
        Ok(res) => {
            let max_error = problem
                .exact_restriction(&grid)
                .map(|u| res.solution.max_norm_diff(&u, Region::Interior).expect("same grid"));
            let mut buf = Vec::new();
            res.solution.write_csv(&mut buf)?;
            write_file(&args.out, "solution.csv", &buf)?;
            buf.clear();
            res.write_history_csv(&mut buf)?;
            write_file(&args.out, "history.csv", &buf)?;
            fields.insert("iterations".into(), json!(res.iterations));
            fields.insert("converged".into(), json!(res.converged));
            fields.insert("final_residual".into(), json!(res.final_residual()));
            fields.insert("max_error".into(), json!(max_error));
            fields.insert("discrete_convex".into(), json!(is_discrete_convex(&res.solution, &opcfg.stencil)));
            if args.timing {
                fields.insert("wall_time_ms".into(), json!(res.wall_time.as_secs_f64() * 1e3));
            }
            println!(
                "{} h={} iterations={} converged={} residual={:.3e} max_error={}",
                problem.name,
                format_h(h),
                res.iterations,
                res.converged,
                res.final_residual(),
                max_error.map_or("n/a".into(), |e| format!("{e:.4e}")),
            );
            if res.converged {
                0
            } else {
                2
            }
        }
        Err(e @ Error::NonFinite { .. }) => {
            eprintln!("solve diverged: {e}");
            fields.insert("converged".into(), json!(false));
            fields.insert("failure".into(), json!(e.to_string()));
            2
        }
        Err(e) => return Err(e),
    };
    write_file(&args.out, "summary.json", &to_json_bytes(&summary))?;
    Ok(code)
}

pub fn cmd_study(args: &StudyArgs) -> Result<i32> {
    let problem = problem(&args.problem)?;
    let h_list = parse_h_list(&args.h_list)?;
    if h_list.is_empty() {
        return Err(Error::Config("study needs a non-empty --h-list".into()));
    }
    let cfg = args.scheme.solver(None)?;
    let table = run_convergence_study(&problem, &h_list, &cfg, &args.scheme.operator()?, &args.scheme.poisson()?)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf, args.timing)?;
    write_file(&args.out, "study.csv", &buf)?;
    let text = table.to_text(args.scheme.mu);
    write_file(&args.out, "study.txt", text.as_bytes())?;
    print!("{text}");
    for row in table.rows.iter().filter(|r| r.failure.is_some()) {
        eprintln!("h={}: {}", format_h(row.h), row.failure.as_deref().unwrap_or_default());
    }
    Ok(if table.all_converged() { 0 } else { 2 })
}

fn grids(h_list: &[f64]) -> Result<Vec<Arc<Grid>>> {
    h_list.iter().map(|&h| Grid::new(GridSpec::unit_square(h))).collect()
}

fn default_box(problem: &str) -> Rect {
    match problem {
        "two_dirac" => Rect { x_min: 0.05, x_max: 0.45, y_min: 0.3, y_max: 0.7 },
        _ => Rect { x_min: 0.2, x_max: 0.6, y_min: 0.1, y_max: 0.7 },
    }
}

fn run_suite(suite: Suite, args: &VerifyArgs, h_override: &Option<Vec<f64>>) -> Result<Vec<Check>> {
    let h_for = |default: &[f64]| h_override.clone().unwrap_or_else(|| default.to_vec());
    let opcfg = args.scheme.operator()?;
    let pcfg = args.scheme.poisson()?;
    match suite {
        Suite::LaplacianNorm => Ok(vec![checks::laplacian_norm(&grids(&h_for(&[1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0]))?, &pcfg)?]),
        Suite::Contraction => grids(&h_for(&[1.0 / 32.0]))?
            .iter()
            .map(|g| checks::contraction(args.scheme.method(), args.scheme.mu, g, &opcfg, &pcfg, args.trials, args.seed))
            .collect(),
        Suite::Ellipticity => Ok(grids(&h_for(&[1.0 / 16.0]))?
            .iter()
            .map(|g| checks::ellipticity(g, &opcfg.stencil, args.trials, args.seed))
            .collect()),
        Suite::MeasureConvergence => {
            let problem = problem(&args.problem)?;
            let b = match &args.test_box {
                Some(text) => parse_box(text)?,
                None => default_box(problem.name),
            };
            let hs = h_for(&[1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]);
            let grids = hs.iter().map(|&h| problem.grid(h)).collect::<Result<Vec<_>>>()?;
            Ok(vec![checks::measure_convergence(&problem, &b, &grids, &opcfg, args.rel_tol)?])
        }
    }
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let suites = if args.suite.is_empty() {
        vec![Suite::MeasureConvergence, Suite::Contraction, Suite::LaplacianNorm, Suite::Ellipticity]
    } else {
        args.suite.clone()
    };
    let h_override = args.h.as_deref().map(parse_h_list).transpose()?;
    if h_override.as_ref().is_some_and(|h| h.is_empty()) {
        return Err(Error::Config("--h must list at least one mesh width".into()));
    }
    args.scheme.operator()?;
    args.scheme.poisson()?;

    let mut report = Vec::new();
    let mut crash = None;
    for suite in suites {
        match run_suite(suite, args, &h_override) {
            Ok(found) => report.extend(found),
            Err(e) => {
                crash = Some(format!("{suite:?}: {e}"));
                break;
            }
        }
    }
    for c in &report {
        println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    let passed = crash.is_none() && report.iter().all(|c| c.passed);
    let doc = json!({
        "schema": SCHEMA_VERSION,
        "seed": args.seed,
        "passed": passed,
        "crash": crash,
        "checks": report,
    });
    write_file(&args.out, "verify.json", &to_json_bytes(&doc))?;
    Ok(match (&crash, passed) {
        (Some(msg), _) => {
            eprintln!("suite crashed: {msg}");
            3
        }
        (None, true) => 0,
        (None, false) => 2,
    })
}

pub fn run(cli: &Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Study(a) => cmd_study(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn main() -> i32 {
    main_from(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_width_forms() {
        assert_eq!(parse_h("1/2^5").unwrap(), 1.0 / 32.0);
        assert_eq!(parse_h("1/40").unwrap(), 0.025);
        assert_eq!(parse_h("0.125").unwrap(), 0.125);
        for bad in ["", "1/0", "1/2^x", "-0.1", "abc", "1/2^40"] {
            assert!(parse_h(bad).is_err(), "{bad}");
        }
        assert_eq!(parse_h_list("1/8, 1/16,").unwrap(), vec![0.125, 0.0625]);
    }

    #[test]
    fn boxes_parse_in_order() {
        let b = parse_box("0.2,0.6,0.1,0.7").unwrap();
        assert_eq!((b.x_min, b.x_max, b.y_min, b.y_max), (0.2, 0.6, 0.1, 0.7));
        assert!(parse_box("0.6,0.2,0,1").is_err());
        assert!(parse_box("0,1,0").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_from(["mafd", "frobnicate"]), 1);
        assert_eq!(main_from(["mafd", "solve"]), 1);
        assert_eq!(main_from(["mafd", "--help"]), 0);
    }
}
