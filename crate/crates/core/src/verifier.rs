//! Numerical checks of the identities and estimates satisfied by solutions of
//! the regularized equation.
//!
//! Every check returns an [`EstimateReport`] whose `pass` flag is a pure
//! function of `(comparison, lhs, rhs, tolerance)`. Integrals are trapezoidal
//! sums restricted to the support of the cutoff, which must sit at least
//! [`SUPPORT_MARGIN_CELLS`] cells inside the box, so no boundary stencil is
//! ever evaluated.

use crate::calculus::{
    dot, norm_sq, operator_value, CalculusError, CriticalPointPolicy, CutoffFunction,
    DerivativeBundle, GradVMode, SliceView,
};
use crate::grid::{GridError, Params, Region, SpaceTimeField, SpaceTimeGrid};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Slack constant for discretization tolerances `C_TOL · h`. Fixed from the
/// largest normalized residual (2.16) on the `p = 2` heat runs at 33 and 65
/// nodes per axis.
pub const C_TOL: f64 = 2.5;

/// Relative slack `C · h` for the gradient maximum principle.
pub const MAX_PRINCIPLE_SLACK: f64 = 1.0;

pub const SUPPORT_MARGIN_CELLS: usize = 2;

/// Relative floor below which residual scales count as zero.
pub const RESIDUAL_FLOOR: f64 = 1e-6;

/// `last <= GROWTH_FACTOR * median` in the ε-sweep boundedness test.
pub const GROWTH_FACTOR: f64 = 1.5;

/// Lower and upper exponent for which the second-derivative bound is
/// asserted in two dimensions.
pub const SECOND_DERIVATIVE_WINDOW: (f64, f64) = (6.0 / 5.0, 14.0 / 5.0);

/// Coefficient of the `∫∫ ξ ξ_t V` term in the differentiated-equation
/// identity.
pub const TIME_TERM_COEFFICIENT: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error("grid too coarse: {0}")]
    TooCoarse(String),
    #[error("epsilon must be positive for this check")]
    ZeroEpsilon,
    #[error("p = {p} is outside the admissible range {range}")]
    ExponentOutOfRange { p: f64, range: String },
    #[error("need at least {need} {what}, got {got}")]
    TooFew {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("inputs do not match: {0}")]
    Mismatch(String),
}

/// How `lhs` and `rhs` are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `lhs <= rhs + tolerance`
    AtMost,
    /// `lhs < rhs + tolerance`
    StrictlyBelow,
    /// `lhs >= rhs - tolerance`
    AtLeast,
    /// `|lhs - rhs| <= tolerance`
    Within,
    /// Reported only; always passes.
    Informational,
}

impl Comparison {
    pub fn evaluate(self, lhs: f64, rhs: f64, tolerance: f64) -> bool {
        match self {
            Comparison::AtMost => lhs <= rhs + tolerance,
            Comparison::StrictlyBelow => lhs < rhs + tolerance,
            Comparison::AtLeast => lhs >= rhs - tolerance,
            Comparison::Within => (lhs - rhs).abs() <= tolerance,
            Comparison::Informational => true,
        }
    }

    fn margin(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Comparison::Within => (lhs - rhs).abs(),
            Comparison::AtLeast => lhs - rhs,
            _ => rhs - lhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportContext {
    pub p: Option<f64>,
    pub epsilon: Option<f64>,
    pub h: Option<f64>,
    pub dt: Option<f64>,
    pub cutoff: Option<String>,
}

impl ReportContext {
    pub fn new(params: Option<&Params>, grid: Option<&SpaceTimeGrid>) -> Self {
        ReportContext {
            p: params.map(|p| p.p),
            epsilon: params.map(|p| p.epsilon),
            h: grid.map(|g| g.h_max()),
            dt: grid.map(|g| g.dt()),
            cutoff: None,
        }
    }

    pub fn with_cutoff(mut self, cutoff: &CutoffFunction) -> Self {
        self.cutoff = Some(cutoff.id.clone());
        self
    }
}

/// One level of a refinement or ε-sweep series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    /// `"h"` or `"epsilon"`.
    pub abscissa_name: String,
    pub abscissa: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub comparison: Comparison,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub context: ReportContext,
    #[serde(default)]
    pub details: BTreeMap<String, f64>,
    #[serde(default)]
    pub history: Vec<LevelRecord>,
}

impl EstimateReport {
    pub fn new(
        name: impl Into<String>,
        comparison: Comparison,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
        context: ReportContext,
    ) -> Self {
        EstimateReport {
            name: name.into(),
            comparison,
            lhs,
            rhs,
            margin: comparison.margin(lhs, rhs),
            tolerance,
            pass: comparison.evaluate(lhs, rhs, tolerance),
            context,
            details: BTreeMap::new(),
            history: Vec::new(),
        }
    }

    pub fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    pub fn with_history(mut self, name: &str, points: &[(f64, f64)]) -> Self {
        self.history = points
            .iter()
            .enumerate()
            .map(|(level, &(abscissa, value))| LevelRecord {
                level,
                abscissa_name: name.to_string(),
                abscissa,
                value,
            })
            .collect();
        self
    }

    /// Recomputes `pass` from the stored numbers.
    pub fn recomputed_pass(&self) -> bool {
        self.comparison.evaluate(self.lhs, self.rhs, self.tolerance)
    }
}

/// The five integrals of the differentiated-equation identity
/// `(I) + (II) = (III) + (IV) + (V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityLedger {
    /// `∫∫ ξ² |D²u|²`
    pub term_i: f64,
    /// `(p-2)/2 ∫∫ ξ² <∇u, ∇v> Δu / V`
    pub term_ii: f64,
    /// `∫∫ ξ ξ_t V`
    pub term_iii: f64,
    /// `(2-p) ∫∫ ξ <∇u, ∇v> <∇u, ∇ξ> / V`
    pub term_iv: f64,
    /// `-∫∫ ξ <∇v, ∇ξ>`
    pub term_v: f64,
    pub residual: f64,
}

impl IdentityLedger {
    pub fn from_terms(term_i: f64, term_ii: f64, term_iii: f64, term_iv: f64, term_v: f64) -> Self {
        IdentityLedger {
            term_i,
            term_ii,
            term_iii,
            term_iv,
            term_v,
            residual: (term_i + term_ii) - (term_iii + term_iv + term_v),
        }
    }

    /// `|residual| / |(I)|`, zero when every term vanishes.
    pub fn relative_residual(&self) -> f64 {
        if self.residual == 0.0 {
            0.0
        } else {
            self.residual.abs() / self.term_i.abs()
        }
    }
}

/// Space-time sub-box: nodes at least `space_margin` from the spatial
/// boundary with `time_lo <= t <= time_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteriorBox {
    pub space_margin: f64,
    pub time_lo: f64,
    pub time_hi: f64,
}

impl InteriorBox {
    /// Distance of the box to the parabolic boundary.
    pub fn distance(&self) -> f64 {
        self.space_margin.min(self.time_lo)
    }

    /// Node indices of the box, each at least one cell inside the spatial
    /// boundary.
    pub fn region(&self, grid: &SpaceTimeGrid) -> Result<Region, VerifyError> {
        let mut space = [0..=0, 0..=0];
        for (axis, range) in space.iter_mut().enumerate().take(grid.dim()) {
            let lo = grid.box_lo()[axis] + self.space_margin;
            let hi = grid.box_hi()[axis] - self.space_margin;
            let h = grid.h()[axis];
            let n = grid.nx()[axis];
            let first = (((lo - grid.box_lo()[axis]) / h - 1e-9).ceil().max(1.0)) as usize;
            let last = (((hi - grid.box_lo()[axis]) / h + 1e-9).floor() as usize).min(n - 2);
            if first > last {
                return Err(VerifyError::TooCoarse(format!(
                    "sub-box with margin {} has no nodes on axis {axis}",
                    self.space_margin
                )));
            }
            *range = first..=last;
        }
        let dt = grid.dt();
        let first = ((self.time_lo / dt - 1e-9).ceil().max(0.0)) as usize;
        let last = ((self.time_hi / dt + 1e-9).floor() as usize).min(grid.nt() - 1);
        if first > last {
            return Err(VerifyError::TooCoarse(format!(
                "time window [{}, {}] has no levels",
                self.time_lo, self.time_hi
            )));
        }
        Ok(Region {
            time: first..=last,
            space,
        })
    }
}

fn region_nodes(grid: &SpaceTimeGrid, region: &Region) -> impl Iterator<Item = (usize, usize)> {
    let dim = grid.dim();
    let nx0 = grid.nx()[0];
    let (t, sx, sy) = (
        region.time.clone(),
        region.space[0].clone(),
        region.space[1].clone(),
    );
    t.flat_map(move |k| {
        let sx = sx.clone();
        sy.clone().flat_map(move |j| {
            sx.clone()
                .map(move |i| (k, if dim == 1 { i } else { i + nx0 * j }))
        })
    })
}

/// Node block enclosing the cutoff support, widened by `extra` cells in
/// space and kept off the boundary nodes. The outermost nodes carry
/// `ξ = 0`, so trapezoidal sums over the block equal sums over the whole
/// grid.
fn support_region(
    grid: &SpaceTimeGrid,
    cutoff: &CutoffFunction,
    margin: usize,
    extra: usize,
) -> Result<Region, VerifyError> {
    cutoff.check_support(grid, margin)?;
    let mut space = [0..=0, 0..=0];
    for (axis, range) in space.iter_mut().enumerate().take(grid.dim()) {
        let h = grid.h()[axis];
        let lo = grid.box_lo()[axis];
        let c = cutoff.space_center[axis];
        let r = cutoff.space_radius;
        // stencils need one neighbour on each side
        let first = (((c - r - lo) / h).floor() as usize).saturating_sub(extra).max(1);
        let last = (((c + r - lo) / h).ceil() as usize + extra).min(grid.nx()[axis] - 2);
        *range = first..=last;
    }
    let dt = grid.dt();
    let first = ((cutoff.time_center - cutoff.time_radius) / dt).floor().max(0.0) as usize;
    let last = (((cutoff.time_center + cutoff.time_radius) / dt).ceil() as usize).min(grid.nt() - 1);
    Ok(Region {
        time: first..=last,
        space,
    })
}

fn bundle_at(
    field: &SpaceTimeField,
    slice: usize,
    space: usize,
    epsilon: f64,
) -> DerivativeBundle {
    let view = SliceView::of_field(field, slice);
    DerivativeBundle::from_parts(
        field.grid().dim(),
        view.gradient_unchecked(space),
        view.hessian_unchecked(space),
        epsilon,
    )
}

/// Gradient maximum principle: the largest `V = |∇u|² + ε²` over interior
/// and terminal nodes against the largest value over nodes next to the
/// parabolic boundary (the initial slice and the first interior ring).
pub fn check_max_principle(
    solution: &SpaceTimeField,
    epsilon: f64,
) -> Result<EstimateReport, VerifyError> {
    let grid = solution.grid();
    let eps2 = epsilon * epsilon;
    let mut interior_max = f64::NEG_INFINITY;
    let mut boundary_max = f64::NEG_INFINITY;
    let evaluable: Vec<usize> = grid.nodes_with_margin(1).collect();
    if evaluable.is_empty() {
        return Err(VerifyError::TooCoarse(
            "no node admits a central gradient".into(),
        ));
    }
    for k in 0..grid.nt() {
        let view = SliceView::of_field(solution, k);
        for &s in &evaluable {
            let v = norm_sq(&view.gradient_unchecked(s)) + eps2;
            if k == 0 || grid.cells_from_boundary(s) == 1 {
                boundary_max = boundary_max.max(v);
            }
            if k > 0 {
                interior_max = interior_max.max(v);
            }
        }
    }
    let h = grid.h_max();
    let tolerance = MAX_PRINCIPLE_SLACK * h * boundary_max;
    let mut ctx = ReportContext::new(None, Some(grid));
    ctx.epsilon = Some(epsilon);
    Ok(EstimateReport::new(
        "max_principle",
        Comparison::AtMost,
        interior_max,
        boundary_max,
        tolerance,
        ctx,
    )
    .detail("excess", interior_max - boundary_max)
    .detail("relative_excess", (interior_max - boundary_max) / boundary_max))
}

/// Residual of the evolution equation satisfied by `V = |∇u|² + ε²`:
///
/// ```text
/// V_t = ΔV - 2|D²u|² - (p-2)/V² <∇u,∇V>² + (p-2)/V { ½|∇V|² + u_ν u_μ V_νμ }
/// ```
///
/// with every derivative of `V` taken by stencils of the nodal `V` field.
/// `lhs` is the L² norm of the residual over nodes two cells inside and away
/// from the first and last time level, relative to the L² norm of the
/// largest term (floored at [`RESIDUAL_FLOOR`] `· sup V`).
pub fn check_veps_evolution(
    solution: &SpaceTimeField,
    params: &Params,
) -> Result<EstimateReport, VerifyError> {
    let grid = solution.grid();
    let Params { p, epsilon, .. } = *params;
    if grid.nt() < 3 {
        return Err(VerifyError::TooCoarse("need three time levels".into()));
    }
    let inner: Vec<usize> = grid.nodes_with_margin(2).collect();
    if inner.is_empty() {
        return Err(VerifyError::TooCoarse(
            "no node two cells inside the box".into(),
        ));
    }
    // nodal V wherever a central gradient exists
    let n = grid.n_space();
    let mut v_values = vec![0.0; grid.n_total()];
    for k in 0..grid.nt() {
        let view = SliceView::of_field(solution, k);
        for s in grid.nodes_with_margin(1) {
            v_values[k * n + s] = norm_sq(&view.gradient_unchecked(s)) + epsilon * epsilon;
        }
    }
    let v_field = SpaceTimeField::from_values(grid.clone(), v_values)?;

    let mut res_sq = vec![0.0; grid.n_total()];
    let mut ref_sq = vec![0.0; grid.n_total()];
    for k in 1..grid.nt() - 1 {
        let u = SliceView::of_field(solution, k);
        let vv = SliceView::of_field(&v_field, k);
        for &s in &inner {
            let gu = u.gradient_unchecked(s);
            let hu = u.hessian_unchecked(s);
            let big_v = v_field.value(k, s);
            let gv = vv.gradient_unchecked(s);
            let hv = vv.hessian_unchecked(s);
            let v_t = v_field.time_derivative(k, s);
            let lap_v = hv.trace();
            let ug = dot(&gu, &gv);
            let rhs = lap_v - 2.0 * hu.frobenius_sq() - (p - 2.0) / (big_v * big_v) * ug * ug
                + (p - 2.0) / big_v * (0.5 * norm_sq(&gv) + hv.quad(&gu, &gu));
            res_sq[k * n + s] = (v_t - rhs).powi(2);
            let largest = v_t.abs().max(lap_v.abs()).max(2.0 * hu.frobenius_sq());
            ref_sq[k * n + s] = largest * largest;
        }
    }
    let mut space = [0..=0, 0..=0];
    for (axis, r) in space.iter_mut().enumerate().take(grid.dim()) {
        *r = 2..=grid.nx()[axis] - 3;
    }
    let region = Region {
        time: 1..=grid.nt() - 2,
        space,
    };
    let res = grid.integrate(&region, |k, s| res_sq[k * n + s])?.sqrt();
    let volume = grid.integrate(&region, |_, _| 1.0)?;
    let v_sup = v_field.values().iter().fold(0.0f64, |m, v| m.max(*v));
    let floor = RESIDUAL_FLOOR * v_sup * volume.sqrt();
    let scale = grid.integrate(&region, |k, s| ref_sq[k * n + s])?.sqrt();
    let relative = if res == 0.0 { 0.0 } else { res / scale.max(floor) };
    let h = grid.h_max();
    Ok(EstimateReport::new(
        "veps_evolution",
        Comparison::Within,
        relative,
        0.0,
        C_TOL * h,
        ReportContext::new(Some(params), Some(grid)),
    )
    .detail("residual_l2", res)
    .detail("scale_l2", scale))
}

/// Interior gradient bound `sup_D |∇u| <= C ||u||_∞ (1 + dist(D)^-2)`.
///
/// For each solution the implied constant is the largest ratio over the
/// sub-boxes. The check passes when the implied constants of all solutions
/// agree within a factor of two.
pub fn check_gradient_interior_bound(
    solutions: &[&SpaceTimeField],
    boxes: &[InteriorBox],
) -> Result<EstimateReport, VerifyError> {
    if boxes.len() < 2 {
        return Err(VerifyError::TooFew {
            what: "sub-boxes",
            need: 2,
            got: boxes.len(),
        });
    }
    if solutions.is_empty() {
        return Err(VerifyError::TooFew {
            what: "solutions",
            need: 1,
            got: 0,
        });
    }
    let mut dists: Vec<f64> = boxes.iter().map(InteriorBox::distance).collect();
    dists.sort_by(f64::total_cmp);
    if dists.windows(2).any(|w| w[0] == w[1]) {
        return Err(VerifyError::Mismatch(
            "sub-boxes must have distinct distances to the parabolic boundary".into(),
        ));
    }
    let mut per_solution = Vec::with_capacity(solutions.len());
    let mut details = BTreeMap::new();
    for (j, sol) in solutions.iter().enumerate() {
        let grid = sol.grid();
        let sup_u = sol.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut implied = 0.0f64;
        for (b, bx) in boxes.iter().enumerate() {
            let region = bx.region(grid)?;
            let sup_grad = region_nodes(grid, &region)
                .map(|(k, s)| norm_sq(&SliceView::of_field(sol, k).gradient_unchecked(s)).sqrt())
                .fold(0.0, f64::max);
            let d = bx.distance();
            let allowed = sup_u * (1.0 + 1.0 / (d * d));
            let c = if sup_grad == 0.0 { 0.0 } else { sup_grad / allowed };
            details.insert(format!("implied_c[{j}][{b}]"), c);
            implied = implied.max(c);
        }
        per_solution.push(implied);
    }
    let max_c = per_solution.iter().copied().fold(0.0, f64::max);
    let min_c = per_solution.iter().copied().fold(f64::INFINITY, f64::min);
    let grid = solutions[0].grid();
    let mut report = EstimateReport::new(
        "gradient_interior_bound",
        Comparison::AtMost,
        max_c,
        2.0 * min_c,
        0.0,
        ReportContext::new(None, Some(grid)),
    );
    report.details = details;
    let pts: Vec<(f64, f64)> = per_solution
        .iter()
        .enumerate()
        .map(|(j, &c)| (j as f64, c))
        .collect();
    Ok(report.with_history("solution", &pts))
}

/// `∫∫ |Δ(ξf)|²` against `∫∫ |D²(ξf)|²` with both computed from stencils of
/// the nodal product `ξf`.
pub fn check_miranda_talenti(
    field: &SpaceTimeField,
    cutoff: &CutoffFunction,
) -> Result<EstimateReport, VerifyError> {
    let grid = field.grid();
    let region = support_region(grid, cutoff, 1, 1)?;
    let n = grid.n_space();
    let mut product = vec![0.0; grid.n_total()];
    for k in region.time.clone() {
        let t = grid.time(k);
        for s in 0..n {
            let xi = cutoff.eval(&grid.point(s), t).xi;
            if xi != 0.0 {
                product[k * n + s] = xi * field.value(k, s);
            }
        }
    }
    let prod = SpaceTimeField::from_values(grid.clone(), product)?;
    let hessian = |k: usize, s: usize| SliceView::of_field(&prod, k).hessian_unchecked(s);
    let lap_sq = grid.integrate(&region, |k, s| hessian(k, s).trace().powi(2))?;
    let hess_sq = grid.integrate(&region, |k, s| hessian(k, s).frobenius_sq())?;
    let diff = (lap_sq - hess_sq).abs();
    let relative = if diff == 0.0 { 0.0 } else { diff / hess_sq.max(f64::MIN_POSITIVE) };
    let h = grid.h_max();
    Ok(EstimateReport::new(
        "miranda_talenti",
        Comparison::Within,
        lap_sq,
        hess_sq,
        C_TOL * h * hess_sq,
        ReportContext::new(None, Some(grid)).with_cutoff(cutoff),
    )
    .detail("relative_residual", relative))
}

/// The five terms of the identity obtained by differentiating the
/// regularized equation in space and testing with `ξ² ∇u`, with
/// `∇v = 2 D²u ∇u`.
pub fn fundamental_identity(
    solution: &SpaceTimeField,
    cutoff: &CutoffFunction,
    params: &Params,
) -> Result<IdentityLedger, VerifyError> {
    if params.epsilon <= 0.0 {
        return Err(VerifyError::ZeroEpsilon);
    }
    let grid = solution.grid();
    let region = support_region(grid, cutoff, SUPPORT_MARGIN_CELLS, 0)?;
    let p = params.p;
    let eps = params.epsilon;
    let mut sums = [0.0; 5];
    for (term, sum) in sums.iter_mut().enumerate() {
        *sum = grid.integrate(&region, |k, s| {
            let c = cutoff.eval(&grid.point(s), grid.time(k));
            if c.xi == 0.0 {
                return 0.0;
            }
            let b = bundle_at(solution, k, s, eps);
            let big_v = b.reg_grad_sq;
            match term {
                0 => c.xi * c.xi * b.hess.frobenius_sq(),
                1 => c.xi * c.xi * dot(&b.grad, &b.grad_v) * b.lap / big_v,
                2 => c.xi * c.xi_t * big_v,
                3 => c.xi * dot(&b.grad, &b.grad_v) * dot(&b.grad, &c.grad) / big_v,
                _ => c.xi * dot(&b.grad_v, &c.grad),
            }
        })?;
    }
    Ok(IdentityLedger::from_terms(
        sums[0],
        (p - 2.0) / 2.0 * sums[1] + 0.0,
        TIME_TERM_COEFFICIENT * sums[2],
        (2.0 - p) * sums[3] + 0.0,
        -sums[4],
    ))
}

/// Monotone decay of the relative identity residual over a refinement
/// sequence `(h, ledger)`, coarse to fine.
pub fn identity_refinement_report(
    levels: &[(f64, IdentityLedger)],
    context: ReportContext,
) -> Result<EstimateReport, VerifyError> {
    if levels.len() < 2 {
        return Err(VerifyError::TooFew {
            what: "refinement levels",
            need: 2,
            got: levels.len(),
        });
    }
    let rel: Vec<(f64, f64)> = levels
        .iter()
        .map(|(h, l)| (*h, l.relative_residual()))
        .collect();
    let worst = rel
        .windows(2)
        .map(|w| if w[0].1 == 0.0 { 1.0 } else { w[1].1 / w[0].1 })
        .fold(0.0, f64::max);
    let all_zero = rel.iter().all(|r| r.1 == 0.0);
    let (cmp, lhs) = if all_zero {
        (Comparison::AtMost, 0.0)
    } else {
        (Comparison::StrictlyBelow, worst)
    };
    Ok(
        EstimateReport::new("fundamental_identity", cmp, lhs, 1.0, 0.0, context)
            .detail("finest_relative_residual", rel.last().map_or(0.0, |r| r.1))
            .with_history("h", &rel),
    )
}

/// Assertion or exploration for the second-derivative bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Assertion,
    Exploration,
}

/// Exponents for which the second-derivative bound is asserted: all `p > 1`
/// in one dimension, the open window `(6/5, 14/5)` in two.
pub fn second_derivative_bound_admits(p: f64, dim: usize) -> bool {
    p > 1.0
        && (dim == 1 || (p > SECOND_DERIVATIVE_WINDOW.0 && p < SECOND_DERIVATIVE_WINDOW.1))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Ratio `∫∫ ξ²|D²u|² / ∫∫_{ξ≠0} (u² + |∇u|²)` along a sweep of decreasing
/// `ε` (given as `(ε, solution)` pairs). In assertion mode the last ratio
/// must not exceed [`GROWTH_FACTOR`] times the median.
pub fn check_second_derivative_bound(
    sweep: &[(f64, &SpaceTimeField)],
    cutoff: &CutoffFunction,
    p: f64,
    mode: SweepMode,
) -> Result<EstimateReport, VerifyError> {
    if sweep.len() < 2 {
        return Err(VerifyError::TooFew {
            what: "sweep entries",
            need: 2,
            got: sweep.len(),
        });
    }
    let grid = sweep[0].1.grid();
    if mode == SweepMode::Assertion && !second_derivative_bound_admits(p, grid.dim()) {
        return Err(VerifyError::ExponentOutOfRange {
            p,
            range: "(6/5, 14/5) in two dimensions".into(),
        });
    }
    check_common_grid(sweep.iter().map(|(_, s)| *s))?;
    let region = support_region(grid, cutoff, SUPPORT_MARGIN_CELLS, 0)?;
    let mut ratios = Vec::with_capacity(sweep.len());
    let mut details = BTreeMap::new();
    for (j, (eps, sol)) in sweep.iter().enumerate() {
        let xi_at = |k: usize, s: usize| cutoff.eval(&grid.point(s), grid.time(k)).xi;
        let main = grid.integrate(&region, |k, s| {
            let xi = xi_at(k, s);
            if xi == 0.0 {
                return 0.0;
            }
            xi * xi * SliceView::of_field(sol, k).hessian_unchecked(s).frobenius_sq()
        })?;
        let majorant = grid.integrate(&region, |k, s| {
            if xi_at(k, s) == 0.0 {
                return 0.0;
            }
            let g = SliceView::of_field(sol, k).gradient_unchecked(s);
            sol.value(k, s).powi(2) + norm_sq(&g)
        })?;
        let ratio = if main == 0.0 { 0.0 } else { main / majorant };
        details.insert(format!("main[{j}]"), main);
        details.insert(format!("majorant[{j}]"), majorant);
        ratios.push((*eps, ratio));
    }
    let values: Vec<f64> = ratios.iter().map(|r| r.1).collect();
    let last = *values.last().unwrap();
    let bound = GROWTH_FACTOR * median(&values);
    let cmp = match mode {
        SweepMode::Assertion => Comparison::AtMost,
        SweepMode::Exploration => Comparison::Informational,
    };
    let mut ctx = ReportContext::new(None, Some(grid)).with_cutoff(cutoff);
    ctx.p = Some(p);
    let mut report = EstimateReport::new("second_derivative_bound", cmp, last, bound, 0.0, ctx);
    report.details = details;
    Ok(report.with_history("epsilon", &ratios))
}

/// `∫∫ ξ² u_t² <= 4 ||V||²_∞ { ∫∫ |∇ξ|² + (1/p) ∫∫ ξ |ξ_t| }` for `1 < p < 2`,
/// with `||V||_∞` the maximum over the support of `ξ` and `u_t` from
/// central time differences.
pub fn check_time_derivative_bound(
    solution: &SpaceTimeField,
    cutoff: &CutoffFunction,
    params: &Params,
) -> Result<EstimateReport, VerifyError> {
    let p = params.p;
    if !(p > 1.0 && p < 2.0) {
        return Err(VerifyError::ExponentOutOfRange {
            p,
            range: "(1, 2)".into(),
        });
    }
    let grid = solution.grid();
    let region = support_region(grid, cutoff, SUPPORT_MARGIN_CELLS, 0)?;
    let eps2 = params.epsilon * params.epsilon;
    let mut v_sup = 0.0f64;
    for (k, s) in region_nodes(grid, &region) {
        if cutoff.eval(&grid.point(s), grid.time(k)).xi > 0.0 {
            let g = SliceView::of_field(solution, k).gradient_unchecked(s);
            v_sup = v_sup.max(norm_sq(&g) + eps2);
        }
    }
    let lhs = grid.integrate(&region, |k, s| {
        let xi = cutoff.eval(&grid.point(s), grid.time(k)).xi;
        if xi == 0.0 {
            0.0
        } else {
            xi * xi * solution.time_derivative(k, s).powi(2)
        }
    })?;
    let grad_xi = grid.integrate(&region, |k, s| {
        norm_sq(&cutoff.eval(&grid.point(s), grid.time(k)).grad)
    })?;
    let xi_xit = grid.integrate(&region, |k, s| {
        let c = cutoff.eval(&grid.point(s), grid.time(k));
        c.xi * c.xi_t.abs()
    })?;
    let bracket = grad_xi + xi_xit / p;
    let rhs = 4.0 * v_sup * v_sup * bracket;
    let h = grid.h_max();
    Ok(EstimateReport::new(
        "time_derivative_bound",
        Comparison::AtMost,
        lhs,
        rhs,
        C_TOL * h,
        ReportContext::new(Some(params), Some(grid)).with_cutoff(cutoff),
    )
    .detail("v_sup", v_sup)
    .detail("rhs_linear_in_v", 4.0 * v_sup * bracket))
}

/// `∫∫ u φ_t` against `-∫∫ φ U`, `U` the operator field from stencils.
pub fn check_weak_time_derivative(
    solution: &SpaceTimeField,
    test_function: &CutoffFunction,
    params: &Params,
) -> Result<EstimateReport, VerifyError> {
    let grid = solution.grid();
    let region = support_region(grid, test_function, SUPPORT_MARGIN_CELLS, 0)?;
    let lhs = grid.integrate(&region, |k, s| {
        let c = test_function.eval(&grid.point(s), grid.time(k));
        solution.value(k, s) * c.xi_t
    })?;
    let mut op_err = None;
    let rhs = -grid.integrate(&region, |k, s| {
        let phi = test_function.eval(&grid.point(s), grid.time(k)).xi;
        if phi == 0.0 {
            return 0.0;
        }
        let view = SliceView::of_field(solution, k);
        let g = view.gradient_unchecked(s);
        let hs = view.hessian_unchecked(s);
        match operator_value(
            grid.dim(),
            &g,
            &hs,
            params.p,
            params.epsilon,
            CriticalPointPolicy::Fallback,
        ) {
            Some(u) => phi * u,
            None => {
                op_err.get_or_insert(s);
                0.0
            }
        }
    })?;
    if let Some(space) = op_err {
        return Err(CalculusError::CriticalPoint {
            space,
            point: grid.point(space),
            grad_sq: 0.0,
        }
        .into());
    }
    let scale = lhs.abs().max(rhs.abs());
    let h = grid.h_max();
    Ok(EstimateReport::new(
        "weak_time_derivative",
        Comparison::Within,
        lhs,
        rhs,
        C_TOL * h * scale,
        ReportContext::new(Some(params), Some(grid)).with_cutoff(test_function),
    ))
}

fn check_common_grid<'a>(
    mut fields: impl Iterator<Item = &'a SpaceTimeField>,
) -> Result<(), VerifyError> {
    let Some(first) = fields.next() else {
        return Ok(());
    };
    if fields.any(|f| f.grid() != first.grid()) {
        return Err(VerifyError::Mismatch("solutions live on different grids".into()));
    }
    Ok(())
}

/// Sup-norm distance of each `u^{ε_j}` to the smallest-ε solution over a
/// compact sub-box. Passes when the distances strictly decrease (or all
/// vanish).
pub fn epsilon_convergence(
    solutions: &[(f64, &SpaceTimeField)],
    compact: &InteriorBox,
) -> Result<EstimateReport, VerifyError> {
    if solutions.len() < 3 {
        return Err(VerifyError::TooFew {
            what: "solutions",
            need: 3,
            got: solutions.len(),
        });
    }
    check_common_grid(solutions.iter().map(|(_, s)| *s))?;
    if solutions.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return Err(VerifyError::Mismatch(
            "epsilon values must strictly decrease".into(),
        ));
    }
    let (eps_last, last) = *solutions.last().unwrap();
    let grid = last.grid();
    let region = compact.region(grid)?;
    let dists: Vec<(f64, f64)> = solutions[..solutions.len() - 1]
        .iter()
        .map(|(eps, sol)| {
            let d = region_nodes(grid, &region)
                .map(|(k, s)| (sol.value(k, s) - last.value(k, s)).abs())
                .fold(0.0, f64::max);
            (*eps, d)
        })
        .collect();
    let worst_step = dists
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    let all_zero = dists.iter().all(|d| d.1 == 0.0);
    let (cmp, lhs) = if all_zero {
        (Comparison::AtMost, 0.0)
    } else {
        (Comparison::StrictlyBelow, worst_step)
    };
    let mut ctx = ReportContext::new(None, Some(grid));
    ctx.epsilon = Some(eps_last);
    Ok(EstimateReport::new("epsilon_convergence", cmp, lhs, 0.0, 0.0, ctx).with_history("epsilon", &dists))
}

/// Counts nodes where `|∇v|² <= 4|D²u|² v` fails. In chain-rule mode the
/// inequality is Cauchy–Schwarz and only rounding can break it, so
/// `lhs <= rhs (1 + 16 ε_mach)` is used; direct mode reports the largest
/// relative excess without asserting.
pub fn check_elementary_inequality(
    solution: &SpaceTimeField,
    epsilon: f64,
    mode: GradVMode,
) -> Result<EstimateReport, VerifyError> {
    let grid = solution.grid();
    let margin = match mode {
        GradVMode::ChainRule => 1,
        GradVMode::Direct => 2,
    };
    let nodes: Vec<usize> = grid.nodes_with_margin(margin).collect();
    let mut evaluated = 0usize;
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..grid.nt() {
        let view = SliceView::of_field(solution, k);
        for &s in &nodes {
            let b = view.bundle(s, epsilon, mode)?;
            let (l, r) = b.elementary_inequality();
            evaluated += 1;
            if l > r * (1.0 + 16.0 * f64::EPSILON) {
                violations += 1;
            }
            let scale = r.max(f64::MIN_POSITIVE);
            worst = worst.max((l - r) / scale);
        }
    }
    let cmp = match mode {
        GradVMode::ChainRule => Comparison::AtMost,
        GradVMode::Direct => Comparison::Informational,
    };
    let mut ctx = ReportContext::new(None, Some(grid));
    ctx.epsilon = Some(epsilon);
    Ok(EstimateReport::new(
        "elementary_inequality",
        cmp,
        violations as f64,
        0.0,
        0.0,
        ctx,
    )
    .detail("nodes_evaluated", evaluated as f64)
    .detail("worst_relative_excess", worst))
}

/// Successive ratios `e_j / e_{j+1}` of an error sequence.
pub fn convergence_ratios(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| w[0] / w[1]).collect()
}

/// Convergence-rate report: every successive ratio must lie within
/// `target ± half_width`.
pub fn rate_report(
    name: &str,
    series: &[(f64, f64)],
    target: f64,
    half_width: f64,
    context: ReportContext,
) -> Result<EstimateReport, VerifyError> {
    if series.len() < 2 {
        return Err(VerifyError::TooFew {
            what: "refinement levels",
            need: 2,
            got: series.len(),
        });
    }
    let errors: Vec<f64> = series.iter().map(|s| s.1).collect();
    let ratios = convergence_ratios(&errors);
    let worst = ratios
        .iter()
        .copied()
        .max_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
        .unwrap();
    let mut report =
        EstimateReport::new(name, Comparison::Within, worst, target, half_width, context)
            .with_history("h", series);
    for (j, r) in ratios.iter().enumerate() {
        report.details.insert(format!("ratio[{j}]"), *r);
    }
    Ok(report)
}

/// Largest nodal deviation from a closed-form field.
pub fn max_error<F: Fn(&crate::grid::Point, f64) -> f64>(
    solution: &SpaceTimeField,
    exact: F,
) -> f64 {
    let grid = solution.grid();
    let mut worst = 0.0f64;
    for k in 0..grid.nt() {
        let t = grid.time(k);
        for s in 0..grid.n_space() {
            worst = worst.max((solution.value(k, s) - exact(&grid.point(s), t)).abs());
        }
    }
    worst
}
