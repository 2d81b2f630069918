//! Single-instance solves and the `(p0, theta)` phase-transition grid.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{derive_seed, make_instance, shift_coherence, InstanceSpec, KernelFamily, PlantedInstance, PRNG_TAG};
use crate::error::{Error, Result};
use crate::minimize::{
    accelerated_rgd, curvilinear_search, init_a0, MinimizeConfig, MinimizeOutcome, MinimizeTrace, Resolved, Status,
};
use crate::objective::ObjectiveContext;
use crate::refine::{refine_loop, relative_residual, RefineConfig, RefineMeta, RefineTrace};
use crate::shiftspace::max_shift_correlation;

/// Threshold in the success predicate `max_l |<s_l[a0], a>| > 0.95`.
pub const SUCCESS_THRESHOLD: f64 = 0.95;

pub fn is_success(max_corr: f64) -> bool {
    max_corr > SUCCESS_THRESHOLD
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Curvilinear,
    Argd,
}

impl Solver {
    pub fn as_str(&self) -> &'static str {
        match self {
            Solver::Curvilinear => "curvilinear",
            Solver::Argd => "argd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub solver: Solver,
    pub minimize: MinimizeConfig,
    pub refine: RefineConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            solver: Solver::Argd,
            minimize: MinimizeConfig::default(),
            refine: RefineConfig::default(),
        }
    }
}

/// Runs the chosen first-phase solver from the data-driven initial point.
pub fn minimize_instance(inst: &PlantedInstance, solver: Solver, cfg: &MinimizeConfig) -> Result<(MinimizeOutcome, Resolved)> {
    let spec = &inst.spec;
    let resolved = cfg.resolve(spec.n, spec.p0, spec.theta)?;
    let ctx = ObjectiveContext::new(&inst.y, spec.p(), resolved.surrogate()?)?;
    let a = init_a0(&ctx, spec.p0, cfg.window_offset, cfg.init)?;
    let out = match solver {
        Solver::Curvilinear => curvilinear_search(&a, &ctx, cfg, &resolved)?,
        Solver::Argd => accelerated_rgd(&a, &ctx, cfg, &resolved)?,
    };
    Ok((out, resolved))
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineSummary {
    pub a_hat: Vec<f64>,
    pub x_support: Vec<usize>,
    pub residual: f64,
    pub final_err: Option<f64>,
    pub trace: RefineTrace,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub solver: Solver,
    pub status: Status,
    pub iterations: usize,
    pub phi: f64,
    pub lambda: f64,
    pub max_corr: f64,
    pub best_shift: i64,
    pub success: bool,
    pub a_min: Vec<f64>,
    pub trace: MinimizeTrace,
    pub refine: Option<RefineSummary>,
}

pub fn solve_instance(inst: &PlantedInstance, cfg: &SolveConfig, refine: bool) -> Result<SolveReport> {
    let (out, resolved) = minimize_instance(inst, cfg.solver, &cfg.minimize)?;
    let a0 = inst.a0.as_slice();
    let (best_shift, max_corr) = max_shift_correlation(&out.a, a0)?;
    let refine = if refine {
        let meta = RefineMeta {
            theta: inst.spec.theta,
            mu: Some(shift_coherence(a0, inst.spec.n)?),
            a0: Some(a0.to_vec()),
        };
        let r = refine_loop(&out.a, &inst.y, &cfg.refine, &meta)?;
        Some(RefineSummary {
            residual: relative_residual(&r.a, r.x.values(), &inst.y)?,
            final_err: r.trace.records.last().and_then(|rec| rec.err_a),
            x_support: r.x.support().to_vec(),
            a_hat: r.a,
            trace: r.trace,
        })
    } else {
        None
    };
    Ok(SolveReport {
        solver: cfg.solver,
        status: out.status(),
        iterations: out.iterations(),
        phi: out.phi,
        lambda: resolved.lambda,
        max_corr,
        best_shift,
        success: is_success(max_corr),
        a_min: out.a,
        trace: out.trace,
        refine,
    })
}

/// Either an explicit list of sparsity rates or `count` log-spaced values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaGrid {
    List(Vec<f64>),
    LogSpaced { min: f64, max: f64, count: usize },
}

impl ThetaGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            ThetaGrid::List(v) => v.clone(),
            ThetaGrid::LogSpaced { min, max, count } => match count {
                0 => Vec::new(),
                1 => vec![*min],
                _ => {
                    let (lo, hi) = (min.ln(), max.ln());
                    (0..*count)
                        .map(|i| (lo + (hi - lo) * i as f64 / (*count - 1) as f64).exp())
                        .collect()
                }
            },
        }
    }
}

/// Signal length: fixed, or proportional to `p0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalLength {
    Fixed(usize),
    PerP0 { per_p0: usize },
}

impl SignalLength {
    pub fn for_p0(&self, p0: usize) -> usize {
        match *self {
            SignalLength::Fixed(n) => n,
            SignalLength::PerP0 { per_p0 } => per_p0.saturating_mul(p0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p0: Vec<usize>,
    pub theta: ThetaGrid,
    pub trials: usize,
    pub n: SignalLength,
    #[serde(default = "default_family")]
    pub family: KernelFamily,
    #[serde(default = "default_solver")]
    pub solver: Solver,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub minimize: MinimizeConfig,
    /// Wall-clock times break byte-identical reruns, so they are opt-in.
    #[serde(default)]
    pub record_runtime: bool,
    #[serde(default)]
    pub output: Option<String>,
}

/// Cap on log-spaced grid points and trials, so a typo cannot exhaust memory.
pub const MAX_GRID_AXIS: usize = 10_000;

fn default_family() -> KernelFamily {
    KernelFamily::Generic
}

fn default_solver() -> Solver {
    Solver::Argd
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.trials > MAX_GRID_AXIS {
            return Err(Error::invalid("trials", format!("must lie in 1..={MAX_GRID_AXIS}")));
        }
        if self.p0.is_empty() {
            return Err(Error::invalid("p0", "grid is empty"));
        }
        if let ThetaGrid::LogSpaced { count, .. } = self.theta {
            if count > MAX_GRID_AXIS {
                return Err(Error::invalid("theta", format!("count {count} exceeds {MAX_GRID_AXIS}")));
            }
        }
        let thetas = self.theta.values();
        if thetas.is_empty() {
            return Err(Error::invalid("theta", "grid is empty"));
        }
        if let ThetaGrid::LogSpaced { min, max, .. } = self.theta {
            if !(min > 0.0 && max >= min) {
                return Err(Error::invalid("theta", format!("log-spaced range [{min}, {max}] is invalid")));
            }
        }
        for &theta in &thetas {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(Error::invalid("theta", format!("must lie strictly between 0 and 1, got {theta}")));
            }
        }
        for &p0 in &self.p0 {
            let n = self.n.for_p0(p0);
            if p0 < 2 || n < p0.saturating_mul(3) - 2 {
                return Err(Error::invalid("n", format!("n = {n} is too short for p0 = {p0}")));
            }
        }
        self.minimize.validate()
    }

    /// All `(p0, theta, trial)` cells in output order.
    pub fn tasks(&self) -> Vec<(usize, f64, usize)> {
        let mut p0s = self.p0.clone();
        p0s.sort_unstable();
        p0s.dedup();
        let mut thetas = self.theta.values();
        thetas.sort_by(f64::total_cmp);
        thetas.dedup();
        let mut out = Vec::new();
        for &p0 in &p0s {
            for &theta in &thetas {
                for trial in 0..self.trials {
                    out.push((p0, theta, trial));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub p0: usize,
    pub theta: f64,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub max_corr: Option<f64>,
    pub iters: usize,
    pub runtime_ms: Option<f64>,
    pub mu_measured: Option<f64>,
    pub status: String,
}

pub fn run_trial(cfg: &ExperimentConfig, p0: usize, theta: f64, trial: usize) -> CellResult {
    let seed = derive_seed(cfg.base_seed, p0, theta, trial);
    let clock = Instant::now();
    let spec = InstanceSpec {
        p0,
        n: cfg.n.for_p0(p0),
        theta,
        family: cfg.family,
        seed,
    };
    let attempt = || -> Result<(f64, usize, f64, Status)> {
        let inst = make_instance(&spec)?;
        let mu = shift_coherence(inst.a0.as_slice(), spec.n)?;
        let (out, _) = minimize_instance(&inst, cfg.solver, &cfg.minimize)?;
        let (_, corr) = max_shift_correlation(&out.a, inst.a0.as_slice())?;
        Ok((corr, out.iterations(), mu, out.status()))
    };
    let result = attempt();
    let runtime = cfg.record_runtime.then(|| clock.elapsed().as_secs_f64() * 1e3);
    match result {
        Ok((corr, iters, mu, status)) => CellResult {
            p0,
            theta,
            trial,
            seed,
            success: is_success(corr),
            max_corr: Some(corr),
            iters,
            runtime_ms: runtime,
            mu_measured: Some(mu),
            status: status.as_str().into(),
        },
        Err(e) => CellResult {
            p0,
            theta,
            trial,
            seed,
            success: false,
            max_corr: None,
            iters: 0,
            runtime_ms: runtime,
            mu_measured: None,
            status: format!("error: {e}"),
        },
    }
}

/// Runs every trial, in parallel on `threads` workers when given, and
/// returns rows sorted by `(p0, theta, trial)`.
pub fn run_grid(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let tasks = cfg.tasks();
    let work = || -> Vec<CellResult> {
        tasks
            .par_iter()
            .map(|&(p0, theta, trial)| run_trial(cfg, p0, theta, trial))
            .collect()
    };
    let mut rows = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?
            .install(work),
        None => work(),
    };
    rows.sort_by(|a, b| {
        a.p0.cmp(&b.p0)
            .then(a.theta.total_cmp(&b.theta))
            .then(a.trial.cmp(&b.trial))
    });
    Ok(rows)
}

pub const GRID_CSV_VERSION: u32 = 1;
pub const GRID_COLUMNS: &str = "p0,theta,trial,seed,success,max_corr,iters,runtime_ms,mu_measured,status";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn write_grid_csv<W: Write>(rows: &[CellResult], mut w: W) -> std::io::Result<()> {
    writeln!(w, "# sasd-grid v{GRID_CSV_VERSION} prng={PRNG_TAG}")?;
    writeln!(w, "{GRID_COLUMNS}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.p0,
            r.theta,
            r.trial,
            r.seed,
            r.success,
            opt(r.max_corr),
            r.iters,
            opt(r.runtime_ms),
            opt(r.mu_measured),
            csv_field(&r.status)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub p0: usize,
    pub theta: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub format: String,
    pub version: u32,
    pub prng: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
}

pub fn summarize(cfg: &ExperimentConfig, rows: &[CellResult]) -> GridSummary {
    let mut cells: Vec<CellSummary> = Vec::new();
    for r in rows {
        let same = cells
            .last()
            .is_some_and(|c| c.p0 == r.p0 && c.theta.to_bits() == r.theta.to_bits());
        if !same {
            cells.push(CellSummary {
                p0: r.p0,
                theta: r.theta,
                trials: 0,
                successes: 0,
                success_rate: 0.0,
                errors: 0,
            });
        }
        let c = cells.last_mut().expect("pushed above");
        c.trials += 1;
        c.successes += usize::from(r.success);
        c.errors += usize::from(r.max_corr.is_none());
    }
    for c in &mut cells {
        c.success_rate = c.successes as f64 / c.trials as f64;
    }
    GridSummary {
        format: "sasd-grid-summary".into(),
        version: GRID_CSV_VERSION,
        prng: PRNG_TAG.into(),
        config: cfg.clone(),
        cells,
    }
}

/// Plot-ready success-rate matrix: one row per `p0`, one column per `theta`.
pub fn write_rate_matrix<W: Write>(summary: &GridSummary, mut w: W) -> std::io::Result<()> {
    let mut p0s: Vec<usize> = summary.cells.iter().map(|c| c.p0).collect();
    p0s.dedup();
    let mut thetas: Vec<f64> = summary.cells.iter().map(|c| c.theta).collect();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    write!(w, "p0")?;
    for t in &thetas {
        write!(w, ",{t}")?;
    }
    writeln!(w)?;
    for p0 in p0s {
        write!(w, "{p0}")?;
        for t in &thetas {
            let rate = summary
                .cells
                .iter()
                .find(|c| c.p0 == p0 && c.theta.to_bits() == t.to_bits())
                .map_or(String::new(), |c| c.success_rate.to_string());
            write!(w, ",{rate}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
