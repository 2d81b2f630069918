//! `sasd`: generate planted instances, solve and refine them, inspect a
//! kernel estimate in shift space, and run the recovery grid.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sasd::datagen::{make_instance, shift_coherence, InstanceSpec};
use sasd::experiment::{
    run_grid, solve_instance, summarize, write_grid_csv, write_rate_matrix, ExperimentConfig, RefineSummary, Solver,
    SolveConfig,
};
use sasd::io::{read_instance, read_json_config, read_kernel, write_instance, write_json};
use sasd::refine::{refine_loop, relative_residual, RefineMeta};
use sasd::shiftspace::{diagnose, max_shift};
use sasd::Error;

/// Environment variable holding the grid worker count.
const THREADS_ENV: &str = "SASD_THREADS";

#[derive(Parser)]
#[command(name = "sasd", version, about = "Short-and-sparse blind deconvolution on the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Curvilinear,
    Argd,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Curvilinear => Solver::Curvilinear,
            SolverArg::Argd => Solver::Argd,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted instance (JSON header plus `.bin` sidecar).
    Gen {
        /// Instance description: `{p0, n, theta, family, seed}`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimise from the data-driven start, optionally followed by refinement.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        #[arg(long)]
        refine: bool,
        /// Result JSON; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Refine a given kernel estimate against an instance.
    Refine {
        #[arg(long)]
        instance: PathBuf,
        /// Kernel estimate of length `3 p0 - 2` (`.json` array or raw f64 LE).
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shift-space report for a kernel estimate.
    Diagnose {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        /// Shift set for `d_alpha`, comma separated. Defaults to the support
        /// of `x0` visible in the `2 p0 - 1` shift window.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        tau: Option<Vec<i64>>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the `(p0, theta)` success-rate grid.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; falls back to the config's `output`, then `.`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        Error::Json(j) if j.is_io() => 3,
        Error::Invalid { .. }
        | Error::Dimension(_)
        | Error::Format(_)
        | Error::Json(_)
        | Error::NotNormalized { .. }
        | Error::NotTangent { .. } => 2,
        _ => 1,
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> sasd::Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

fn solve_config(path: Option<&Path>) -> sasd::Result<SolveConfig> {
    path.map_or_else(|| Ok(SolveConfig::default()), read_json_config)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn threads() -> sasd::Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(Error::Invalid {
                field: "SASD_THREADS",
                reason: format!("expected a positive integer, got {v:?}"),
            }),
        },
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> sasd::Result<()> {
    match cli.command {
        Command::Gen { config, seed, out } => {
            let mut spec: InstanceSpec = read_json_config(&config)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let inst = make_instance(&spec)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let meta = write_instance(&out, &inst)?;
            println!(
                "wrote {} (p0 = {}, n = {}, theta = {}, family = {}, seed = {}, |supp x0| = {}, mu = {:.4})",
                out.display(),
                spec.p0,
                spec.n,
                spec.theta,
                spec.family.name(),
                spec.seed,
                meta.support_size,
                meta.mu
            );
        }
        Command::Solve {
            instance,
            config,
            solver,
            refine,
            out,
        } => {
            let inst = read_instance(&instance)?;
            let mut cfg = solve_config(config.as_deref())?;
            if let Some(s) = solver {
                cfg.solver = s.into();
            }
            let report = solve_instance(&inst, &cfg, refine)?;
            eprintln!(
                "{}: status {}, {} iterations, max_corr {:.6}, success {}",
                cfg.solver.as_str(),
                report.status.as_str(),
                report.iterations,
                report.max_corr,
                report.success
            );
            if let Some(path) = &out {
                report.trace.write_csv(BufWriter::new(File::create(with_suffix(path, "trace.csv"))?))?;
                if let Some(r) = &report.refine {
                    r.trace.write_csv(BufWriter::new(File::create(with_suffix(path, "refine.csv"))?))?;
                }
            }
            emit(&report, out.as_deref())?;
        }
        Command::Refine {
            instance,
            kernel,
            config,
            out,
        } => {
            let inst = read_instance(&instance)?;
            let a = read_kernel(&kernel)?;
            let cfg = solve_config(config.as_deref())?;
            let a0 = inst.a0.as_slice();
            let meta = RefineMeta {
                theta: inst.spec.theta,
                mu: Some(shift_coherence(a0, inst.spec.n)?),
                a0: Some(a0.to_vec()),
            };
            let r = refine_loop(a.as_slice(), &inst.y, &cfg.refine, &meta)?;
            let summary = RefineSummary {
                residual: relative_residual(&r.a, r.x.values(), &inst.y)?,
                final_err: r.trace.records.last().and_then(|rec| rec.err_a),
                x_support: r.x.support().to_vec(),
                a_hat: r.a,
                trace: r.trace,
            };
            eprintln!("refine: residual {:.3e}, final error {:?}", summary.residual, summary.final_err);
            if let Some(path) = &out {
                summary.trace.write_csv(BufWriter::new(File::create(with_suffix(path, "refine.csv"))?))?;
            }
            emit(&summary, out.as_deref())?;
        }
        Command::Diagnose {
            instance,
            kernel,
            tau,
            config,
            top_k,
            out,
        } => {
            let inst = read_instance(&instance)?;
            let a = read_kernel(&kernel)?;
            let cfg = solve_config(config.as_deref())?;
            let spec = &inst.spec;
            let lambda = cfg.minimize.resolve(spec.n, spec.p0, spec.theta)?.lambda;
            let tau = tau.unwrap_or_else(|| {
                let n = spec.n as i64;
                let x0 = inst.x0.values();
                let m = max_shift(spec.p0);
                (-m..=m).filter(|l| x0[l.rem_euclid(n) as usize] != 0.0).collect()
            });
            let report = diagnose(a.as_slice(), inst.a0.as_slice(), &tau, spec.theta, lambda, spec.n, top_k)?;
            emit(&report, out.as_deref())?;
        }
        Command::Grid { config, seed, out } => {
            let mut cfg: ExperimentConfig = read_json_config(&config)?;
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            cfg.validate()?;
            let dir = out
                .or_else(|| cfg.output.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir)?;
            let rows = run_grid(&cfg, threads()?)?;
            let mut csv = BufWriter::new(File::create(dir.join("grid.csv"))?);
            write_grid_csv(&rows, &mut csv)?;
            csv.flush()?;
            let summary = summarize(&cfg, &rows);
            write_json(&dir.join("summary.json"), &summary)?;
            let mut matrix = BufWriter::new(File::create(dir.join("success_rate.csv"))?);
            write_rate_matrix(&summary, &mut matrix)?;
            matrix.flush()?;
            for c in &summary.cells {
                eprintln!(
                    "p0 = {:>5}  theta = {:<10.4e} success {}/{}{}",
                    c.p0,
                    c.theta,
                    c.successes,
                    c.trials,
                    if c.errors > 0 { format!(" ({} errors)", c.errors) } else { String::new() }
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
