//! Subcommand orchestration: solve, verify, sweep and mms.

use crate::config::{Check, Format, RunConfig};
use crate::output::{write_run, Entry, GridRecord, RunRecord, Timing};
use crate::profiles::{self, Problem};
use anyhow::{bail, Context, Result};
use plap_core::calculus::GradVMode;
use plap_core::grid::{Params, SpaceTimeField};
use plap_core::solver::{required_substeps, solve_substepped};
use plap_core::verifier::{self as v, Comparison, EstimateReport, ReportContext};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Verify,
    Sweep,
    Mms,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
            Command::Mms => "mms",
        }
    }

    fn default_levels(self) -> u32 {
        match self {
            Command::Mms => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub levels: Option<u32>,
    pub jobs: Option<usize>,
}

#[derive(Debug)]
pub struct Summary {
    pub entries: Vec<Entry>,
    pub files: Vec<PathBuf>,
}

impl Summary {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.report.pass)
    }
}

/// Failure after which the reports computed so far were still written.
#[derive(Debug, thiserror::Error)]
#[error("{source:#}")]
pub struct RunFailure {
    pub source: anyhow::Error,
    pub partial: Option<Summary>,
}

const EXACT_RATE_TARGET: f64 = 4.0;
const EXACT_RATE_HALF_WIDTH: f64 = 0.8;
/// Errors below this (relative to the solution size) count as exact
/// reproduction; rates are meaningless there.
const REPRODUCTION_FLOOR: f64 = 1e-11;

struct Solved {
    level: u32,
    epsilon: f64,
    field: SpaceTimeField,
    problem: Problem,
}

struct Session<'a> {
    config: &'a RunConfig,
    entries: Vec<Entry>,
    grids: Vec<GridRecord>,
    timings: Vec<Timing>,
    extra: Vec<(String, String)>,
}

impl<'a> Session<'a> {
    fn new(config: &'a RunConfig) -> Self {
        Session {
            config,
            entries: Vec::new(),
            grids: Vec::new(),
            timings: Vec::new(),
            extra: Vec::new(),
        }
    }

    fn push(&mut self, report: EstimateReport, grid_levels: Vec<u32>, epsilons: Vec<f64>) {
        let series_id = format!("{:03}-{}", self.entries.len(), report.name);
        self.entries.push(Entry {
            series_id,
            grid_levels,
            epsilons,
            report,
        });
    }

    /// Solves every `(level, ε)` pair in parallel; results keep input order.
    fn solve_all(&mut self, runs: &[(u32, f64)]) -> Result<Vec<Solved>> {
        let config = self.config;
        let results: Vec<(Result<(Solved, GridRecord)>, f64)> = runs
            .par_iter()
            .map(|&(level, epsilon)| {
                let start = Instant::now();
                let outcome = solve_one(config, level, epsilon);
                (outcome, start.elapsed().as_secs_f64())
            })
            .collect();
        let mut solved = Vec::with_capacity(results.len());
        for ((level, epsilon), (result, seconds)) in runs.iter().zip(results) {
            self.timings.push(Timing {
                phase: format!("solve level {level} epsilon {epsilon}"),
                seconds,
            });
            let (s, record) = result?;
            self.grids.push(record);
            solved.push(s);
        }
        Ok(solved)
    }

    fn finish(self, command: Command, dir: &Path, format: Format, status: &str) -> Result<Summary> {
        let files = write_run(
            dir,
            format,
            &RunRecord {
                command: command.name(),
                config: self.config,
                entries: &self.entries,
                grids: &self.grids,
                timings: &self.timings,
                status,
                extra: &self.extra,
            },
        )?;
        Ok(Summary {
            entries: self.entries,
            files,
        })
    }
}

fn solve_one(config: &RunConfig, level: u32, epsilon: f64) -> Result<(Solved, GridRecord)> {
    let mut cfg = config.clone();
    cfg.params = config.params.with_epsilon(epsilon);
    let grid = cfg.grid_at_level(level)?;
    let problem = profiles::build(&cfg, &grid)?;
    let substeps = required_substeps(&cfg.params, &grid);
    let record = GridRecord {
        level,
        epsilon,
        nx: grid.nx().to_vec(),
        nt: grid.nt(),
        h: grid.h().to_vec(),
        dt: grid.dt(),
        substeps,
    };
    let field = solve_substepped(&problem.data, &grid, substeps)
        .with_context(|| format!("solve at level {level}, epsilon {epsilon}"))?;
    let solved = Solved {
        level,
        epsilon,
        field,
        problem,
    };
    Ok((solved, record))
}

/// Runs `command`, writing reports and the manifest to the output
/// directory. Reports finished before an error are still written.
pub fn run(command: Command, config: &RunConfig, options: &Options) -> Result<Summary, RunFailure> {
    let dir = options.out.clone().unwrap_or_else(|| config.output.dir.clone());
    let format = options.format.unwrap_or(config.output.format);
    let levels = options.levels.unwrap_or(command.default_levels()).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.unwrap_or(0))
        .build()
        .map_err(|e| RunFailure {
            source: e.into(),
            partial: None,
        })?;

    let mut session = Session::new(config);
    let result = pool.install(|| match command {
        Command::Solve => solve_cmd(&mut session, levels),
        Command::Verify => verify_cmd(&mut session, levels),
        Command::Sweep => sweep_cmd(&mut session, true),
        Command::Mms => mms_cmd(&mut session, levels),
    });
    match result {
        Ok(()) => session.finish(command, &dir, format, "complete").map_err(|source| RunFailure {
            source,
            partial: None,
        }),
        Err(source) => {
            let partial = session.finish(command, &dir, format, "error").ok();
            Err(RunFailure { source, partial })
        }
    }
}

fn solution_dump(field: &SpaceTimeField) -> String {
    let grid = field.grid();
    let last = grid.nt() - 1;
    let mut out = format!("# t = {}\n", grid.time(last));
    for s in 0..grid.n_space() {
        let x = grid.point(s);
        if grid.dim() == 1 {
            out.push_str(&format!("{} {}\n", x[0], field.value(last, s)));
        } else {
            out.push_str(&format!("{} {} {}\n", x[0], x[1], field.value(last, s)));
        }
    }
    out
}

/// Error against the closed-form solution on each level, with a rate check
/// when the time step follows the stability limit.
fn error_table(session: &mut Session, solved: &[Solved], name: &str) -> Result<()> {
    let Some(exact) = solved[0].problem.exact.clone() else {
        return Ok(());
    };
    let series: Vec<(f64, f64)> = solved
        .iter()
        .map(|s| {
            let err = v::max_error(&s.field, |x, t| exact.value(x, t));
            (s.field.grid().h_max(), err)
        })
        .collect();
    let params = session.config.params;
    let finest = solved.last().unwrap().field.grid();
    let ctx = ReportContext::new(Some(&params), Some(finest));
    let scale = solved
        .iter()
        .flat_map(|s| s.field.values().iter())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let worst = series.iter().fold(0.0f64, |m, s| m.max(s.1));
    let report = if worst <= REPRODUCTION_FLOOR * scale {
        EstimateReport::new(name, Comparison::AtMost, worst, REPRODUCTION_FLOOR * scale, 0.0, ctx)
            .with_history("h", &series)
    } else if series.len() >= 2 && session.config.grid.nt.is_none() {
        v::rate_report(name, &series, EXACT_RATE_TARGET, EXACT_RATE_HALF_WIDTH, ctx)?
    } else {
        let last = series.last().unwrap().1;
        EstimateReport::new(name, Comparison::Informational, last, 0.0, 0.0, ctx)
            .with_history("h", &series)
    };
    let levels = solved.iter().map(|s| s.level).collect();
    session.push(report, levels, vec![params.epsilon]);
    Ok(())
}

fn solve_cmd(session: &mut Session, levels: u32) -> Result<()> {
    let eps = session.config.params.epsilon;
    let runs: Vec<(u32, f64)> = (0..levels).map(|l| (l, eps)).collect();
    let solved = session.solve_all(&runs)?;
    session
        .extra
        .push(("solution.dat".into(), solution_dump(&solved.last().unwrap().field)));
    error_table(session, &solved, "exact_error")
}

fn mms_cmd(session: &mut Session, levels: u32) -> Result<()> {
    if session.config.data.mms.is_none() {
        bail!("mms needs `data.mms` set to a manufactured field");
    }
    let eps = session.config.params.epsilon;
    let runs: Vec<(u32, f64)> = (0..levels).map(|l| (l, eps)).collect();
    let solved = session.solve_all(&runs)?;
    error_table(session, &solved, "mms_error")
}

fn identity_report(ledger: &v::IdentityLedger, ctx: ReportContext) -> EstimateReport {
    EstimateReport::new(
        "identity_terms",
        Comparison::Informational,
        ledger.relative_residual(),
        0.0,
        0.0,
        ctx,
    )
    .detail("term_i", ledger.term_i)
    .detail("term_ii", ledger.term_ii)
    .detail("term_iii", ledger.term_iii)
    .detail("term_iv", ledger.term_iv)
    .detail("term_v", ledger.term_v)
    .detail("residual", ledger.residual)
}

fn verify_cmd(session: &mut Session, levels: u32) -> Result<()> {
    let config = session.config;
    let params = config.params;
    let eps = params.epsilon;
    let runs: Vec<(u32, f64)> = (0..levels).map(|l| (l, eps)).collect();
    let solved = session.solve_all(&runs)?;
    let mut identity_levels = Vec::new();

    for s in &solved {
        let u = &s.field;
        let grid = u.grid();
        let at = |r: EstimateReport| (r, vec![s.level], vec![eps]);
        for check in &config.verify.checks {
            let report = match check {
                Check::MaxPrinciple => Some(at(v::check_max_principle(u, eps)?)),
                Check::VepsEvolution => Some(at(v::check_veps_evolution(u, &params)?)),
                Check::ElementaryInequality => {
                    Some(at(v::check_elementary_inequality(u, eps, GradVMode::ChainRule)?))
                }
                Check::MirandaTalenti => {
                    let c = config.cutoff_function(grid)?;
                    Some(at(v::check_miranda_talenti(u, &c)?))
                }
                Check::Identity => {
                    let c = config.cutoff_function(grid)?;
                    let ledger = v::fundamental_identity(u, &c, &params)?;
                    identity_levels.push((grid.h_max(), ledger));
                    let ctx = ReportContext::new(Some(&params), Some(grid)).with_cutoff(&c);
                    Some(at(identity_report(&ledger, ctx)))
                }
                Check::TimeDerivative => {
                    let c = config.cutoff_function(grid)?;
                    Some(at(v::check_time_derivative_bound(u, &c, &params)?))
                }
                Check::WeakTimeDerivative => {
                    let c = config.cutoff_function(grid)?;
                    Some(at(v::check_weak_time_derivative(u, &c, &params)?))
                }
                Check::GradientBound | Check::SecondDerivative | Check::EpsilonConvergence => None,
            };
            if let Some((r, l, e)) = report {
                session.push(r, l, e);
            }
        }
    }
    if identity_levels.len() >= 2 {
        let ctx = ReportContext::new(Some(&params), Some(solved.last().unwrap().field.grid()));
        let r = v::identity_refinement_report(&identity_levels, ctx)?;
        session.push(r, (0..levels).collect(), vec![eps]);
    }
    if config.verify.checks.iter().any(|c| c.is_sweep()) {
        sweep_cmd(session, false)?;
    }
    Ok(())
}

/// Solves once per ε of the sweep. The ε-convergence report is always
/// emitted by the `sweep` command; inside `verify` only when selected.
fn sweep_cmd(session: &mut Session, standalone: bool) -> Result<()> {
    let config = session.config;
    let Some(sweep) = &config.sweep else {
        bail!("no [sweep] section in the configuration");
    };
    let runs: Vec<(u32, f64)> = sweep.epsilons.iter().map(|&e| (0, e)).collect();
    let solved = session.solve_all(&runs)?;
    let eps: Vec<f64> = solved.iter().map(|s| s.epsilon).collect();
    let checks = &config.verify.checks;

    if (standalone || checks.contains(&Check::EpsilonConvergence)) && solved.len() >= 3 {
        let refs: Vec<(f64, &SpaceTimeField)> = solved.iter().map(|s| (s.epsilon, &s.field)).collect();
        let r = v::epsilon_convergence(&refs, &config.compact())?;
        session.push(r, vec![0], eps.clone());
    }
    if checks.contains(&Check::SecondDerivative) {
        let refs: Vec<(f64, &SpaceTimeField)> = solved.iter().map(|s| (s.epsilon, &s.field)).collect();
        let c = config.cutoff_function(solved[0].field.grid())?;
        let r = v::check_second_derivative_bound(
            &refs,
            &c,
            config.params.p,
            config.verify.second_derivative_mode,
        )?;
        session.push(r, vec![0], eps.clone());
    }
    if checks.contains(&Check::GradientBound) {
        let refs: Vec<&SpaceTimeField> = solved.iter().map(|s| &s.field).collect();
        let r = v::check_gradient_interior_bound(&refs, &config.interior_boxes())?;
        session.push(r, vec![0], eps.clone());
    }
    if standalone && checks.contains(&Check::TimeDerivative) {
        for s in &solved {
            let params = Params {
                epsilon: s.epsilon,
                ..config.params
            };
            let c = config.cutoff_function(s.field.grid())?;
            let r = v::check_time_derivative_bound(&s.field, &c, &params)?;
            session.push(r, vec![0], vec![s.epsilon]);
        }
    }
    Ok(())
}
