//! The `chadc` command line.
//!
//! Exit codes: 0 success, 1 user error (usage, parse, type, unsupported
//! construct), 2 runtime evaluation error, 3 failed rule (a bench rule or an
//! oracle comparison). Machine-readable output goes to stdout, diagnostics
//! to stderr.

pub mod json;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::bench::{self, AnyMode, BenchError, Family, Rule};
use crate::chad::{self, ChadError, TransformError};
use crate::eval::{eval, EvalError};
use crate::hoc::HocError;
use crate::lang::{parse, pretty_in, typecheck_program, ParseError, Program, Term, TypeError};
use crate::oracle::{self, OracleError};

#[derive(Parser, Debug)]
#[command(name = "chadc", version, about = "Typecheck, run and differentiate programs of the CHAD source language")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Parse and typecheck a program; prints its type.
    Check { program: PathBuf },
    /// Evaluate a program at a point; prints its value and cost.
    Run {
        program: PathBuf,
        #[arg(long)]
        point: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient of a program at a point; prints one entry per input.
    Grad {
        program: PathBuf,
        #[arg(long, default_value = "monadic")]
        mode: AnyMode,
        #[arg(long)]
        point: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transform a program; prints a summary, or the derivative term with --print.
    Transform {
        program: PathBuf,
        #[arg(long, default_value = "monadic")]
        mode: AnyMode,
        #[arg(long)]
        print: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a mode's gradient with the forward-mode and finite-difference oracles.
    CompareOracle {
        program: PathBuf,
        #[arg(long, default_value = "monadic")]
        mode: AnyMode,
        /// Defaults to a fixed pseudo-random point.
        #[arg(long)]
        point: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure a program family over a size sweep and check a cost rule.
    Bench {
        #[arg(long)]
        family: Family,
        #[arg(long, default_value = "monadic")]
        mode: AnyMode,
        /// `a..b`: powers of two, or every integer for the doubling rule.
        #[arg(long)]
        sizes: String,
        /// Defaults to the rule expected for the family and mode.
        #[arg(long)]
        rule: Option<Rule>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    User(String),
    Runtime(String),
    Rule(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Rule(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::User(m) | CliError::Runtime(m) | CliError::Rule(m) => m,
        }
    }
}

type R<X> = Result<X, CliError>;

fn user(e: impl ToString) -> CliError {
    CliError::User(e.to_string())
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> CliError {
        runtime(e)
    }
}

impl From<TransformError> for CliError {
    fn from(e: TransformError) -> CliError {
        user(e)
    }
}

impl From<TypeError> for CliError {
    fn from(e: TypeError) -> CliError {
        user(e)
    }
}

impl From<ChadError> for CliError {
    fn from(e: ChadError) -> CliError {
        match e {
            ChadError::Eval(e) => runtime(e),
            _ => user(e),
        }
    }
}

impl From<HocError> for CliError {
    fn from(e: HocError) -> CliError {
        match e {
            HocError::Chad(e) => e.into(),
            HocError::Malformed(_) => runtime(e),
            _ => user(e),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> CliError {
        match e {
            OracleError::Eval(e) => runtime(e),
            _ => user(e),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> CliError {
        match e {
            BenchError::SizeOutOfRange { .. } | BenchError::BadSizes(_) => user(e),
            BenchError::Hoc(e) => e.into(),
            _ => runtime(e),
        }
    }
}

fn load(path: &Path) -> R<Program> {
    let src = std::fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    let p = parse(&src).map_err(|e: ParseError| user(format!("{}:{e}", path.display())))?;
    typecheck_program(&p).map_err(|e| user(format!("{}: {e}", path.display())))?;
    Ok(p)
}

fn emit(stdout: &mut dyn Write, out: Option<&Path>, text: &str) -> R<()> {
    match out {
        Some(path) => std::fs::write(path, format!("{text}\n")).map_err(|e| user(format!("{}: {e}", path.display()))),
        None => writeln!(stdout, "{text}").map_err(runtime),
    }
}

fn node_count(t: &Term) -> usize {
    let mut n = 0;
    t.walk(&mut |_| n += 1);
    n
}

fn dispatch(cmd: Cmd, stdout: &mut dyn Write) -> R<()> {
    match cmd {
        Cmd::Check { program } => {
            let p = load(&program)?;
            let ty = typecheck_program(&p)?;
            emit(stdout, None, &json!({ "type": ty.to_string() }).to_string())
        }
        Cmd::Run { program, point, out } => {
            let p = load(&program)?;
            let ty = typecheck_program(&p)?;
            let pt = json::decode_point(&p.ctx, point.as_deref()).map_err(user)?;
            let (v, cost) = eval(&pt, &p.body)?;
            emit(stdout, out.as_deref(), &json!({ "value": json::encode_value(&ty, &v), "cost": cost }).to_string())
        }
        Cmd::Grad { program, mode, point, seed, out } => {
            let p = load(&program)?;
            let ty = typecheck_program(&p)?;
            let pt = json::decode_point(&p.ctx, point.as_deref()).map_err(user)?;
            let (v, _) = eval(&pt, &p.body)?;
            let seed = json::decode_seed(&ty, &v, seed.as_deref()).map_err(user)?;
            let g = mode.grad(&p.ctx, &p.body, &pt, &seed)?;
            let dense = chad::densify_gradient(&p.ctx, &pt, &g.env).map_err(runtime)?;
            emit(stdout, out.as_deref(), &json::encode_gradient(&p.ctx, &dense, &pt).to_string())
        }
        Cmd::Transform { program, mode, print, out } => {
            let p = load(&program)?;
            let d = mode.transform(&p)?;
            let text = if print {
                pretty_in(&d.ctx, &d.term)
            } else {
                json!({
                    "mode": mode.name(),
                    "source_type": d.source_ty.to_string(),
                    "type": d.ty.to_string(),
                    "source_nodes": node_count(&p.body),
                    "nodes": node_count(&d.term),
                })
                .to_string()
            };
            emit(stdout, out.as_deref(), &text)
        }
        Cmd::CompareOracle { program, mode, point, out } => {
            let p = load(&program)?;
            let pt = match point {
                Some(s) => json::decode_point(&p.ctx, Some(&s)).map_err(user)?,
                None => oracle::random_point(&p.ctx, bench::POINT_SEED)?,
            };
            let fw = oracle::grad_forward(&p.ctx, &p.body, &pt)?;
            let fd = oracle::grad_fd(&p.ctx, &p.body, &pt)?;
            let g = mode.grad(&p.ctx, &p.body, &pt, &crate::cotangent::CotValue::Real(1.0))?;
            let dense = chad::densify_gradient(&p.ctx, &pt, &g.env).map_err(runtime)?;
            let (ef, ed) = (oracle::max_rel_err(&dense, &fw), oracle::max_rel_err(&dense, &fd));
            let pass = ef <= oracle::FORWARD_TOL && ed <= oracle::FD_TOL;
            let report = json!({
                "mode": mode.name(),
                "gradient": dense,
                "forward": fw,
                "fd": fd,
                "err_forward": ef,
                "err_fd": ed,
                "pass": pass,
            });
            emit(stdout, out.as_deref(), &report.to_string())?;
            if pass {
                Ok(())
            } else {
                Err(CliError::Rule(format!("{mode} disagrees with the oracles (forward {ef:e}, fd {ed:e})")))
            }
        }
        Cmd::Bench { family, mode, sizes, rule, out } => {
            let (lo, hi) = sizes
                .split_once("..")
                .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
                .ok_or_else(|| user(format!("--sizes: expected `a..b`, got `{sizes}`")))?;
            let rule = rule.unwrap_or_else(|| Rule::default_for(family, mode));
            let sweep = rule.sweep(lo, hi)?;
            let report = bench::regression_check(family, mode, &sweep, rule)?;
            emit(stdout, out.as_deref(), &report.to_json())?;
            if report.pass {
                Ok(())
            } else {
                Err(CliError::Rule(format!("{family} under {mode} fails {rule}")))
            }
        }
    }
}

/// Runs `chadc` with `args` (including the program name); returns the exit code.
pub fn main_with(args: impl IntoIterator<Item = OsString>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    match dispatch(cli.cmd, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.code()
        }
    }
}
