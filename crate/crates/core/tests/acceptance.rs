//! Acceptance suite. Runs every exit criterion, prints one line per
//! criterion and exits non-zero if any of them fails.

use plap_core::calculus::{CutoffFunction, GradVMode, SliceView};
use plap_core::grid::{Params, SpaceTimeField, SpaceTimeGrid};
use plap_core::references::exact_1d_mode;
use plap_core::solver::{cfl_grid, required_substeps, solve, solve_substepped, ProblemData};
use plap_core::verifier::{
    check_elementary_inequality, check_max_principle, check_miranda_talenti,
    check_second_derivative_bound, check_time_derivative_bound, check_weak_time_derivative,
    convergence_ratios, epsilon_convergence, fundamental_identity, identity_refinement_report,
    max_error, rate_report, InteriorBox, ReportContext, SweepMode,
};
use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

const HORIZON: f64 = 0.1;

// criterion 1: ratio window per halving
const EXACT_RATE_TARGET: f64 = 4.0;
const EXACT_RATE_HALF_WIDTH: f64 = 0.8;
// criterion 2: excess halves within 30%
const EXCESS_HALVING: (f64, f64) = (2.0 * 0.7, 2.0 * 1.3);
// criterion 3
const MT_MIN_RATIO: f64 = 3.0;
const MT_FINEST_MAX: f64 = 1e-2;
// criterion 7
const WEAK_RATE_TARGET: f64 = 4.0;
const WEAK_RATE_HALF_WIDTH: f64 = 0.3 * 4.0;
// criterion 10
const STENCIL_EXACTNESS: f64 = 1e-12;

struct Outcome {
    pass: bool,
    summary: String,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Outcome {
            pass,
            summary: summary.into(),
        }
    }
}

/// Elementary-inequality tallies over every solution produced by the suite.
#[derive(Default)]
struct Tally {
    runs: usize,
    nodes: f64,
    violations: f64,
}

impl Tally {
    fn record(&mut self, solution: &SpaceTimeField, epsilon: f64) {
        let r = check_elementary_inequality(solution, epsilon, GradVMode::ChainRule)
            .expect("elementary inequality");
        self.runs += 1;
        self.nodes += r.details["nodes_evaluated"];
        self.violations += r.lhs;
    }
}

fn sine_data(params: Params) -> ProblemData {
    let initial: plap_core::solver::SpatialFn = if params.dim == 1 {
        Arc::new(|x| (PI * x[0]).sin())
    } else {
        Arc::new(|x| (PI * x[0]).sin() * (PI * x[1]).sin())
    };
    ProblemData::new(params, initial, Arc::new(|_, _| 0.0))
}

/// Unit box, `2(nx-1)` stored intervals in time, CFL substeps in between.
fn solve_sine(p: f64, epsilon: f64, dim: usize, nx: usize, tally: &mut Tally) -> SpaceTimeField {
    let params = Params::new(p, epsilon, dim, HORIZON).unwrap();
    let (lo, hi, n) = (vec![0.0; dim], vec![1.0; dim], vec![nx; dim]);
    let grid = SpaceTimeGrid::new(&lo, &hi, &n, HORIZON, 2 * (nx - 1) + 1).unwrap();
    let u = solve_substepped(&sine_data(params), &grid, required_substeps(&params, &grid))
        .expect("solve");
    tally.record(&u, epsilon);
    u
}

/// Cutoff in the lower-left quadrant, away from the critical point at the
/// centre of the box.
fn quadrant_cutoff(grid: &SpaceTimeGrid) -> CutoffFunction {
    let center = if grid.dim() == 2 { [0.3, 0.35] } else { [0.3, 0.0] };
    CutoffFunction::inside(grid, center, 0.2, 0.05, 0.04).unwrap()
}

fn fmt_series(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn exact_solution_convergence(tally: &mut Tally) -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for p in [1.5, 2.0, 2.5] {
        let reference = exact_1d_mode(PI, p).unwrap();
        let params = Params::new(p, 0.0, 1, HORIZON).unwrap();
        let data = ProblemData::from_reference(params, &reference);
        let series: Vec<(f64, f64)> = [33, 65, 129]
            .iter()
            .map(|&nx| {
                let grid = cfl_grid(&params, &[0.0], &[1.0], &[nx]).unwrap();
                let u = solve(&data, &grid).unwrap();
                tally.record(&u, 0.0);
                (grid.h_max(), max_error(&u, |x, t| reference.evaluate(x, t)))
            })
            .collect();
        let r = rate_report(
            "exact_1d",
            &series,
            EXACT_RATE_TARGET,
            EXACT_RATE_HALF_WIDTH,
            ReportContext::default(),
        )
        .unwrap();
        let errors: Vec<f64> = series.iter().map(|s| s.1).collect();
        pass &= r.pass;
        lines.push(format!(
            "p={p}: ratios {}",
            fmt_series(&convergence_ratios(&errors))
        ));
    }
    Outcome::new(pass, lines.join("; "))
}

fn maximum_principle(tally: &mut Tally) -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for p in [1.3, 2.0, 2.5] {
        for eps in [0.1, 0.01] {
            let reports: Vec<_> = [33, 65]
                .iter()
                .map(|&nx| check_max_principle(&solve_sine(p, eps, 2, nx, tally), eps).unwrap())
                .collect();
            let excess: Vec<f64> = reports.iter().map(|r| r.details["excess"]).collect();
            let halving = excess[0] / excess[1];
            let ok = reports.iter().all(|r| r.pass)
                && halving >= EXCESS_HALVING.0
                && halving <= EXCESS_HALVING.1;
            pass &= ok;
            lines.push(format!(
                "p={p} eps={eps}: excess {} halving {halving:.2}",
                fmt_series(&excess)
            ));
        }
    }
    Outcome::new(pass, lines.join("; "))
}

fn miranda_talenti() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    type Planar = fn(f64, f64) -> f64;
    let fields: [(&str, Planar); 2] =
        [("xy", |x, y| x * y), ("x^2-y^2", |x, y| x * x - y * y)];
    for (name, f) in fields {
        let residuals: Vec<f64> = [33, 65, 129]
            .iter()
            .map(|&nx| {
                let grid =
                    SpaceTimeGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[nx, nx], 1.0, 5).unwrap();
                let field = SpaceTimeField::from_fn(grid.clone(), |x, _| f(x[0], x[1]));
                let cutoff = CutoffFunction::inside(&grid, [0.5, 0.5], 0.46, 0.5, 0.4).unwrap();
                check_miranda_talenti(&field, &cutoff).unwrap().details["relative_residual"]
            })
            .collect();
        let ratios = convergence_ratios(&residuals);
        let ok = ratios.iter().all(|&r| r >= MT_MIN_RATIO)
            && *residuals.last().unwrap() < MT_FINEST_MAX;
        pass &= ok;
        lines.push(format!(
            "f={name}: residuals {} ratios {}",
            fmt_series(&residuals),
            fmt_series(&ratios)
        ));
    }
    Outcome::new(pass, lines.join("; "))
}

fn identity(tally: &mut Tally) -> Outcome {
    let params = Params::new(1.5, 0.05, 2, HORIZON).unwrap();
    let levels: Vec<_> = [33, 65, 129]
        .iter()
        .map(|&nx| {
            let u = solve_sine(params.p, params.epsilon, 2, nx, tally);
            let cutoff = quadrant_cutoff(u.grid());
            let ledger = fundamental_identity(&u, &cutoff, &params).unwrap();
            (u.grid().h_max(), ledger)
        })
        .collect();
    let refinement = identity_refinement_report(&levels, ReportContext::default()).unwrap();
    let rel: Vec<f64> = levels.iter().map(|l| l.1.relative_residual()).collect();

    let heat = Params::new(2.0, 0.05, 2, HORIZON).unwrap();
    let u = solve_sine(2.0, heat.epsilon, 2, 33, tally);
    let ledger = fundamental_identity(&u, &quadrant_cutoff(u.grid()), &heat).unwrap();
    let zeros = ledger.term_ii == 0.0 && ledger.term_iv == 0.0;
    Outcome::new(
        refinement.pass && zeros,
        format!(
            "p=1.5 relative residuals {}; p=2 (II)={:e} (IV)={:e}",
            fmt_series(&rel),
            ledger.term_ii,
            ledger.term_iv
        ),
    )
}

fn second_derivative_bound(tally: &mut Tally) -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    let cases = [
        (2, 1.3),
        (2, 1.5),
        (2, 2.0),
        (2, 2.5),
        (1, 1.1),
        (1, 3.5),
    ];
    for (dim, p) in cases {
        let sweep: Vec<(f64, SpaceTimeField)> = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&eps| (eps, solve_sine(p, eps, dim, 65, tally)))
            .collect();
        let refs: Vec<(f64, &SpaceTimeField)> = sweep.iter().map(|(e, u)| (*e, u)).collect();
        let cutoff = quadrant_cutoff(sweep[0].1.grid());
        let r = check_second_derivative_bound(&refs, &cutoff, p, SweepMode::Assertion).unwrap();
        pass &= r.pass;
        let ratios: Vec<f64> = r.history.iter().map(|l| l.value).collect();
        lines.push(format!("{dim}D p={p}: {}", fmt_series(&ratios)));
    }
    Outcome::new(pass, lines.join("; "))
}

fn time_derivative_bound(tally: &mut Tally) -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for p in [1.3, 1.5, 1.9] {
        for eps in [0.1, 0.05] {
            let params = Params::new(p, eps, 2, HORIZON).unwrap();
            let u = solve_sine(p, eps, 2, 65, tally);
            let r = check_time_derivative_bound(&u, &quadrant_cutoff(u.grid()), &params).unwrap();
            pass &= r.pass;
            lines.push(format!("p={p} eps={eps}: {:.3e} <= {:.3e}", r.lhs, r.rhs));
        }
    }
    Outcome::new(pass, lines.join("; "))
}

fn weak_time_derivative() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for p in [1.5, 2.0, 2.5] {
        let reference = exact_1d_mode(PI, p).unwrap();
        let params = Params::new(p, 0.0, 1, HORIZON).unwrap();
        let series: Vec<(f64, f64)> = [33, 65, 129]
            .iter()
            .map(|&nx| {
                let grid =
                    SpaceTimeGrid::new(&[0.0], &[1.0], &[nx], HORIZON, 2 * (nx - 1) + 1).unwrap();
                let u = SpaceTimeField::from_fn(grid.clone(), |x, t| reference.evaluate(x, t));
                let phi = CutoffFunction::inside(&grid, [0.4, 0.0], 0.3, 0.05, 0.045).unwrap();
                let r = check_weak_time_derivative(&u, &phi, &params).unwrap();
                (grid.h_max(), (r.lhs - r.rhs).abs())
            })
            .collect();
        let r = rate_report(
            "weak_pairing",
            &series,
            WEAK_RATE_TARGET,
            WEAK_RATE_HALF_WIDTH,
            ReportContext::default(),
        )
        .unwrap();
        pass &= r.pass;
        let errors: Vec<f64> = series.iter().map(|s| s.1).collect();
        lines.push(format!(
            "p={p}: ratios {}",
            fmt_series(&convergence_ratios(&errors))
        ));
    }
    Outcome::new(pass, lines.join("; "))
}

fn epsilon_limit(tally: &mut Tally) -> Outcome {
    let compact = InteriorBox {
        space_margin: 0.25,
        time_lo: 0.02,
        time_hi: HORIZON,
    };
    let mut pass = true;
    let mut lines = Vec::new();
    for p in [1.5, 2.0] {
        let runs: Vec<(f64, SpaceTimeField)> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&eps| (eps, solve_sine(p, eps, 2, 65, tally)))
            .collect();
        let refs: Vec<(f64, &SpaceTimeField)> = runs.iter().map(|(e, u)| (*e, u)).collect();
        let r = epsilon_convergence(&refs, &compact).unwrap();
        let d: Vec<f64> = r.history.iter().map(|l| l.value).collect();
        let ok = if p == 2.0 {
            d.iter().all(|&x| x == 0.0)
        } else {
            r.pass
        };
        pass &= ok;
        lines.push(format!("p={p}: distances {}", fmt_series(&d)));
    }
    Outcome::new(pass, lines.join("; "))
}

fn elementary_inequality(tally: &Tally) -> Outcome {
    Outcome::new(
        tally.violations == 0.0 && tally.nodes > 0.0,
        format!(
            "{} violations at {} nodes over {} runs",
            tally.violations, tally.nodes, tally.runs
        ),
    )
}

fn stencil_exactness() -> Outcome {
    type Poly = ([f64; 6], &'static str);
    // monomial basis of c0 + c1 x + c2 y + c3 x² + c4 xy + c5 y²; the
    // stencils are linear in the field
    let polys: [Poly; 6] = [
        ([1.0, 0.0, 0.0, 0.0, 0.0, 0.0], "1"),
        ([0.0, 1.0, 0.0, 0.0, 0.0, 0.0], "x"),
        ([0.0, 0.0, 1.0, 0.0, 0.0, 0.0], "y"),
        ([0.0, 0.0, 0.0, 1.0, 0.0, 0.0], "x^2"),
        ([0.0, 0.0, 0.0, 0.0, 1.0, 0.0], "xy"),
        ([0.0, 0.0, 0.0, 0.0, 0.0, 1.0], "y^2"),
    ];
    // Second differences carry rounding of order eps_mach |f| / h², so the
    // absolute bound is checked at the coarsest suite resolution.
    let grids = [
        SpaceTimeGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[33, 33], 1.0, 2).unwrap(),
        SpaceTimeGrid::new(&[0.0, 0.0], &[1.0, 1.5], &[33, 41], 1.0, 2).unwrap(),
        SpaceTimeGrid::new(&[0.0], &[1.0], &[33], 1.0, 2).unwrap(),
    ];
    let mut worst = 0.0f64;
    let mut nodes = 0usize;
    for grid in &grids {
        let dim = grid.dim();
        for (c, _) in polys.iter() {
            if dim == 1 && (c[2] != 0.0 || c[4] != 0.0 || c[5] != 0.0) {
                continue;
            }
            let f = SpaceTimeField::from_fn(grid.clone(), |x, _| {
                c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] * x[0] + c[4] * x[0] * x[1]
                    + c[5] * x[1] * x[1]
            });
            let view = SliceView::of_field(&f, 0);
            for s in grid.nodes_with_margin(1) {
                let x = grid.point(s);
                let g = view.gradient(s).unwrap();
                let h = view.hessian(s).unwrap();
                let exact_g = [
                    c[1] + 2.0 * c[3] * x[0] + c[4] * x[1],
                    c[2] + c[4] * x[0] + 2.0 * c[5] * x[1],
                ];
                let errs = [
                    g[0] - exact_g[0],
                    if dim == 2 { g[1] - exact_g[1] } else { 0.0 },
                    h.xx - 2.0 * c[3],
                    if dim == 2 { h.xy - c[4] } else { 0.0 },
                    if dim == 2 { h.yy - 2.0 * c[5] } else { 0.0 },
                ];
                worst = errs.iter().fold(worst, |m, e| m.max(e.abs()));
                nodes += 1;
            }
        }
    }
    Outcome::new(
        worst <= STENCIL_EXACTNESS,
        format!("max abs error {worst:.2e} over {nodes} node evaluations"),
    )
}

fn main() -> ExitCode {
    let mut tally = Tally::default();
    let start = Instant::now();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, outcome: Outcome| {
        println!(
            "[{:>6.1}s] {} {name}: {}",
            start.elapsed().as_secs_f64(),
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.summary
        );
        results.push((name, outcome));
    };
    run("1 exact 1D convergence", exact_solution_convergence(&mut tally));
    run("2 maximum principle", maximum_principle(&mut tally));
    run("3 Miranda-Talenti", miranda_talenti());
    run("4 differentiated-equation identity", identity(&mut tally));
    run("5 second-derivative bound", second_derivative_bound(&mut tally));
    run("6 time-derivative bound", time_derivative_bound(&mut tally));
    run("7 weak time derivative", weak_time_derivative());
    run("8 epsilon convergence", epsilon_limit(&mut tally));
    run("9 elementary inequality", elementary_inequality(&tally));
    run("10 stencil exactness", stencil_exactness());
    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(n, _)| *n)
        .collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
