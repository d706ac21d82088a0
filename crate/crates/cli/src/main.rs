//! `weinstein` — batch front-end for the torsion experiments.
//!
//! Exit codes: 0 pass, 1 a check failed, 2 bad configuration, 3 solver failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};
use weinstein::field::ScalarField;
use weinstein::grid::Mesh;
use weinstein::rigidity::{run_experiment, Experiment};
use weinstein::{Error, RunConfig};

#[derive(Parser)]
#[command(name = "weinstein", version, about = "Torsion solves and rigidity checks for the Weinstein operator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the torsion problem and write the field and report.
    Solve(Common),
    /// Solve and run the configured checks; exit 1 if any fails.
    Verify(Common),
    /// Repeat `verify` over a list of values of one scalar config field.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted config path: params.a, grid.h, domain.radius, domain.aspect, solver.tol.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = LogLevel::Info)]
    log_level: LogLevel,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogLevel {
    Info,
    Debug,
}

const EXIT_CHECK: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Solve(c) | Command::Verify(c) => c,
        Command::Sweep { common, .. } => common,
    };
    env_logger::Builder::new()
        .filter_level(match common.log_level {
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
        })
        .init();
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let cfg = match load_config(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("weinstein-out"));
    let code = match &cli.command {
        Command::Solve(_) => single(&cfg, &out, false),
        Command::Verify(_) => single(&cfg, &out, true),
        Command::Sweep { param, values, .. } => sweep(&cfg, &out, param, values),
    };
    ExitCode::from(code)
}

fn load_config(path: &Path) -> Result<RunConfig, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}

enum Outcome {
    Done(Box<Experiment>),
    SolverFailed { best: Option<ScalarField>, error: Error },
}

fn execute(cfg: &RunConfig) -> Result<Outcome, Error> {
    match run_experiment(cfg) {
        Ok(e) => Ok(Outcome::Done(Box::new(e))),
        Err(error @ (Error::NoConvergence { .. } | Error::BreakdownDetected { .. })) => {
            let best_values = match &error {
                Error::NoConvergence { best, .. } | Error::BreakdownDetected { best, .. } => best.clone(),
                _ => unreachable!(),
            };
            let best = Mesh::half(&cfg.domain, cfg.grid.h)
                .ok()
                .and_then(|m| ScalarField::new(m.into(), best_values).ok());
            Ok(Outcome::SolverFailed { best, error })
        }
        Err(e) => Err(e),
    }
}

/// Write `u.csv`, `report.json`, `residuals.csv`; returns the exit code.
fn persist(cfg: &RunConfig, outcome: &Outcome, dir: &Path, verify: bool) -> Result<u8, Error> {
    fs::create_dir_all(dir)?;
    let config = serde_json::to_value(cfg).map_err(|e| Error::Io(e.to_string()))?;
    let (field, doc, residuals, code) = match outcome {
        Outcome::Done(e) => {
            let report = serde_json::to_value(&e.report).map_err(|e| Error::Io(e.to_string()))?;
            let pass = e.report.all_pass();
            let doc = json!({"config": config, "converged": true, "all_pass": pass, "report": report});
            let code = if verify && !pass { EXIT_CHECK } else { 0 };
            (Some(&e.field), doc, e.report.residuals_csv(), code)
        }
        Outcome::SolverFailed { best, error } => {
            let doc = json!({"config": config, "converged": false, "error": error.to_string(), "report": Value::Null});
            (best.as_ref(), doc, "check,value,tolerance,pass\n".to_string(), EXIT_SOLVER)
        }
    };
    if let Some(u) = field {
        let f = fs::File::create(dir.join("u.csv"))?;
        u.write_csv(std::io::BufWriter::new(f))?;
    }
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("report.json"), text + "\n")?;
    fs::write(dir.join("residuals.csv"), residuals)?;
    Ok(code)
}

fn single(cfg: &RunConfig, out: &Path, verify: bool) -> u8 {
    let outcome = match execute(cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                Error::Io(_) => EXIT_SOLVER,
                _ => EXIT_CONFIG,
            };
        }
    };
    if let Outcome::SolverFailed { error, .. } = &outcome {
        eprintln!("error: {error}");
    }
    if let Outcome::Done(e) = &outcome {
        for c in &e.report.checks {
            log::info!("{:<24} {:>12.4e} {:?} {:.4e}  {}", c.check, c.value, c.relation, c.tolerance, if c.pass { "pass" } else { "FAIL" });
        }
    }
    match persist(cfg, &outcome, out, verify) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: writing {}: {e}", out.display());
            EXIT_SOLVER
        }
    }
}

fn parse_values(list: &str) -> Result<Vec<f64>, Error> {
    let vals: Vec<f64> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Error::Config(format!("bad sweep value {s:?}"))))
        .collect::<Result<_, _>>()?;
    if vals.is_empty() {
        return Err(Error::Config("empty sweep value list".into()));
    }
    Ok(vals)
}

fn sweep(base: &RunConfig, out: &Path, param: &str, values: &str) -> u8 {
    let configs = match parse_values(values).and_then(|v| {
        v.into_iter()
            .map(|x| base.with_value(param, x).map(|c| (x, c)))
            .collect::<Result<Vec<_>, _>>()
    }) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    // one experiment per worker, merged in value order
    let results: Vec<(f64, Result<Outcome, Error>)> = configs
        .par_iter()
        .map(|(x, c)| (*x, execute(c)))
        .collect();
    let mut summary = String::from("value,serrin_defect,p_constancy_deviation,p_integral,max_error_vs_explicit,converged,all_pass\n");
    let mut code = 0;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for (i, ((x, res), (_, cfg))) in results.iter().zip(&configs).enumerate() {
        let dir = out.join(format!("run_{i:03}"));
        let outcome = match res {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: value {x}: {e}");
                return EXIT_CONFIG;
            }
        };
        let c = match persist(cfg, outcome, &dir, true) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: writing {}: {e}", dir.display());
                return EXIT_SOLVER;
            }
        };
        code = code.max(c);
        match outcome {
            Outcome::Done(e) => {
                let r = &e.report;
                summary.push_str(&format!(
                    "{x},{},{},{},{},true,{}\n",
                    opt(r.boundary_gradient_cv),
                    opt(r.p_constancy_deviation),
                    opt(r.identity_residuals.get("p_integral").copied()),
                    opt(r.max_error_vs_explicit),
                    r.all_pass()
                ));
            }
            Outcome::SolverFailed { .. } => summary.push_str(&format!("{x},,,,,false,false\n")),
        }
    }
    if let Err(e) = fs::write(out.join("sweep_summary.csv"), summary) {
        eprintln!("error: writing summary: {e}");
        return EXIT_SOLVER;
    }
    code
}
