//! Explicit Euler time stepping of the regularized equation
//! `u_t = Δu + (p-2) <∇u, D²u ∇u> / (|∇u|² + ε²) + f` with Dirichlet lateral
//! data imposed at the nodes.

use crate::calculus::{operator_value, CalculusError, CriticalPointPolicy, SliceView};
use crate::grid::{GridError, Params, Point, SpaceTimeField, SpaceTimeGrid};
use crate::references::{Manufactured, ReferenceSolution};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

pub type SpatialFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(&Point, f64) -> f64 + Send + Sync>;

/// Safety factor applied to the explicit diffusion limit.
pub const CFL_SAFETY: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error("time step {dt:e} exceeds the stability limit {limit:e}")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("non-finite value after step {step} (t = {time})")]
    Blowup { step: usize, time: f64 },
    #[error("initial value {initial} and lateral value {lateral} disagree at {point:?}")]
    IncompatibleData {
        point: Point,
        initial: f64,
        lateral: f64,
    },
    #[error("problem dimension {params} does not match grid dimension {grid}")]
    DimensionMismatch { params: usize, grid: usize },
    #[error("manufactured gradient vanishes at {point:?}, t = {time} with epsilon = 0")]
    DegenerateManufactured { point: Point, time: f64 },
}

/// Initial data, lateral data, optional source and parameters.
#[derive(Clone)]
pub struct ProblemData {
    pub initial: SpatialFn,
    pub lateral: SpaceTimeFn,
    pub forcing: Option<SpaceTimeFn>,
    pub params: Params,
    pub policy: CriticalPointPolicy,
}

impl fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemData")
            .field("params", &self.params)
            .field("forcing", &self.forcing.is_some())
            .field("policy", &self.policy)
            .finish()
    }
}

impl ProblemData {
    pub fn new(params: Params, initial: SpatialFn, lateral: SpaceTimeFn) -> Self {
        ProblemData {
            initial,
            lateral,
            forcing: None,
            params,
            policy: CriticalPointPolicy::Fallback,
        }
    }

    /// Initial and lateral data taken from a closed-form field.
    pub fn from_field(params: Params, field: Arc<dyn Manufactured>) -> Self {
        let f0 = field.clone();
        ProblemData::new(
            params,
            Arc::new(move |x| f0.value(x, 0.0)),
            Arc::new(move |x, t| field.value(x, t)),
        )
    }

    pub fn from_reference(params: Params, reference: &ReferenceSolution) -> Self {
        Self::from_field(params, reference.field.clone())
    }

    pub fn with_forcing(mut self, forcing: SpaceTimeFn) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn with_params(&self, params: Params) -> Self {
        ProblemData {
            params,
            ..self.clone()
        }
    }

    /// Checks dimension agreement and that initial and lateral data agree on
    /// the boundary at `t = 0`.
    pub fn check(&self, grid: &SpaceTimeGrid) -> Result<(), SolverError> {
        self.params.validate()?;
        if self.params.dim != grid.dim() {
            return Err(SolverError::DimensionMismatch {
                params: self.params.dim,
                grid: grid.dim(),
            });
        }
        for s in (0..grid.n_space()).filter(|&s| grid.is_spatial_boundary(s)) {
            let x = grid.point(s);
            let a = (self.initial)(&x);
            let b = (self.lateral)(&x, 0.0);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(SolverError::IncompatibleData {
                    point: x,
                    initial: a,
                    lateral: b,
                });
            }
        }
        Ok(())
    }
}

/// `dt = 0.9 h_min² / (2 n max(1, p-1))`.
pub fn cfl_dt(params: &Params, grid: &SpaceTimeGrid) -> f64 {
    let h = grid.h_min();
    CFL_SAFETY * h * h / (2.0 * grid.dim() as f64 * (params.p - 1.0).max(1.0))
}

/// Smallest number of internal steps per grid time level that respects
/// [`cfl_dt`].
pub fn required_substeps(params: &Params, grid: &SpaceTimeGrid) -> usize {
    (grid.dt() / cfl_dt(params, grid)).ceil().max(1.0) as usize
}

/// Grid with `T/(nt-1)` the largest uniform step below [`cfl_dt`].
pub fn cfl_grid(
    params: &Params,
    box_lo: &[f64],
    box_hi: &[f64],
    nx: &[usize],
) -> Result<SpaceTimeGrid, SolverError> {
    let probe = SpaceTimeGrid::new(box_lo, box_hi, nx, params.horizon, 2)?;
    Ok(SpaceTimeGrid::with_max_dt(
        box_lo,
        box_hi,
        nx,
        params.horizon,
        cfl_dt(params, &probe),
    )?)
}

/// One explicit Euler step of size `dt` from time `t`, written into `next`.
/// Interior nodes get `u + dt (operator + forcing)`, lateral nodes the
/// lateral data at `t + dt`.
pub fn step_explicit_into(
    state: &[f64],
    next: &mut [f64],
    t: f64,
    dt: f64,
    data: &ProblemData,
    grid: &SpaceTimeGrid,
) -> Result<(), SolverError> {
    let view = SliceView::new(grid, state);
    let Params { p, epsilon, .. } = data.params;
    let t_next = t + dt;
    for (s, out) in next.iter_mut().enumerate() {
        let x = grid.point(s);
        if grid.is_spatial_boundary(s) {
            *out = (data.lateral)(&x, t_next);
            continue;
        }
        let grad = view.gradient_unchecked(s);
        let hess = view.hessian_unchecked(s);
        let op = operator_value(grid.dim(), &grad, &hess, p, epsilon, data.policy).ok_or(
            CalculusError::CriticalPoint {
                space: s,
                point: x,
                grad_sq: grad[0] * grad[0] + grad[1] * grad[1],
            },
        )?;
        let source = data.forcing.as_ref().map_or(0.0, |f| f(&x, t));
        *out = state[s] + dt * (op + source);
    }
    Ok(())
}

/// Allocating variant of [`step_explicit_into`] that also checks stability
/// and finiteness. `step` labels the blow-up error.
pub fn step_explicit(
    state: &[f64],
    t: f64,
    dt: f64,
    step: usize,
    data: &ProblemData,
    grid: &SpaceTimeGrid,
) -> Result<Vec<f64>, SolverError> {
    check_dt(dt, &data.params, grid)?;
    let mut next = vec![0.0; state.len()];
    step_explicit_into(state, &mut next, t, dt, data, grid)?;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::Blowup {
            step,
            time: t + dt,
        });
    }
    Ok(next)
}

fn check_dt(dt: f64, params: &Params, grid: &SpaceTimeGrid) -> Result<(), SolverError> {
    let limit = cfl_dt(params, grid);
    if dt > limit * (1.0 + 1e-12) {
        return Err(SolverError::StepTooLarge { dt, limit });
    }
    Ok(())
}

/// Time history on every level of `grid`, stepping with the grid's `dt`.
pub fn solve(data: &ProblemData, grid: &SpaceTimeGrid) -> Result<SpaceTimeField, SolverError> {
    solve_substepped(data, grid, 1)
}

/// Time history on every level of `grid`, taking `substeps` internal Euler
/// steps of size `dt / substeps` between stored levels.
pub fn solve_substepped(
    data: &ProblemData,
    grid: &SpaceTimeGrid,
    substeps: usize,
) -> Result<SpaceTimeField, SolverError> {
    data.check(grid)?;
    let substeps = substeps.max(1);
    let dt = grid.dt() / substeps as f64;
    check_dt(dt, &data.params, grid)?;

    let n = grid.n_space();
    let mut values = Vec::with_capacity(grid.n_total());
    let mut state: Vec<f64> = (0..n).map(|s| (data.initial)(&grid.point(s))).collect();
    if state.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::Blowup { step: 0, time: 0.0 });
    }
    values.extend_from_slice(&state);
    let mut next = vec![0.0; n];
    let mut step = 0;
    for k in 1..grid.nt() {
        let t0 = grid.time(k - 1);
        for j in 0..substeps {
            step += 1;
            let t = t0 + j as f64 * dt;
            step_explicit_into(&state, &mut next, t, dt, data, grid)?;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::Blowup {
                    step,
                    time: t + dt,
                });
            }
            std::mem::swap(&mut state, &mut next);
        }
        // land the lateral data exactly on the stored level
        for s in (0..n).filter(|&s| grid.is_spatial_boundary(s)) {
            state[s] = (data.lateral)(&grid.point(s), grid.time(k));
        }
        values.extend_from_slice(&state);
    }
    Ok(SpaceTimeField::from_values(grid.clone(), values)?)
}

/// Solve with the fewest substeps the stability limit allows.
pub fn solve_auto(data: &ProblemData, grid: &SpaceTimeGrid) -> Result<SpaceTimeField, SolverError> {
    solve_substepped(data, grid, required_substeps(&data.params, grid))
}

/// Source `f = u_t - operator(u)` that makes `manufactured` an exact solution
/// of the forced equation.
pub fn mms_forcing(
    manufactured: Arc<dyn Manufactured>,
    params: &Params,
    grid: &SpaceTimeGrid,
) -> Result<SpaceTimeFn, SolverError> {
    params.validate()?;
    if params.epsilon == 0.0 {
        for k in 0..grid.nt() {
            let t = grid.time(k);
            for s in 0..grid.n_space() {
                let x = grid.point(s);
                let g = manufactured.gradient(&x, t);
                if g[0] * g[0] + g[1] * g[1] < crate::calculus::CRITICAL_THRESHOLD {
                    return Err(SolverError::DegenerateManufactured { point: x, time: t });
                }
            }
        }
    }
    let Params {
        p, epsilon, dim, ..
    } = *params;
    Ok(Arc::new(move |x: &Point, t: f64| {
        let g = manufactured.gradient(x, t);
        let h = manufactured.hessian(x, t);
        let op = operator_value(dim, &g, &h, p, epsilon, CriticalPointPolicy::Fallback)
            .unwrap_or(f64::NAN);
        manufactured.time_derivative(x, t) - op
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::references::{exact_1d_mode, Affine, SaddlePlusTime};
    use std::f64::consts::PI;

    fn params(p: f64, eps: f64, dim: usize, t: f64) -> Params {
        Params::new(p, eps, dim, t).unwrap()
    }

    #[test]
    fn cfl_examples() {
        let g1 = SpaceTimeGrid::new(&[0.0], &[1.0], &[11], 1.0, 2).unwrap();
        let g2 = SpaceTimeGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[11, 11], 1.0, 2).unwrap();
        assert!((cfl_dt(&params(2.0, 0.0, 1, 1.0), &g1) - 0.0045).abs() < 1e-15);
        assert!((cfl_dt(&params(3.0, 0.0, 2, 1.0), &g2) - 0.001125).abs() < 1e-15);
        assert_eq!(
            cfl_dt(&params(1.5, 0.0, 2, 1.0), &g2),
            cfl_dt(&params(2.0, 0.0, 2, 1.0), &g2)
        );
    }

    #[test]
    fn solve_refuses_large_steps() {
        let pr = params(2.0, 0.0, 1, 1.0);
        let g = SpaceTimeGrid::new(&[0.0], &[1.0], &[11], 1.0, 11).unwrap();
        let data = ProblemData::new(pr, Arc::new(|_| 0.0), Arc::new(|_, _| 0.0));
        assert!(matches!(solve(&data, &g), Err(SolverError::StepTooLarge { .. })));
        assert!(solve_auto(&data, &g).is_ok());
    }

    #[test]
    fn affine_data_is_stationary() {
        let aff = Arc::new(Affine {
            slope: [0.7, -1.3],
            offset: 0.2,
        });
        for p in [1.2, 2.0, 3.5] {
            let pr = params(p, 0.05, 2, 0.1);
            let g = cfl_grid(&pr, &[0.0, 0.0], &[1.0, 1.0], &[9, 9]).unwrap();
            let data = ProblemData::from_field(pr, aff.clone());
            let u = solve(&data, &g).unwrap();
            let first = u.slice(0).to_vec();
            for k in 0..g.nt() {
                for (a, b) in u.slice(k).iter().zip(&first) {
                    assert!((a - b).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn constant_data_stays_constant() {
        let pr = params(1.5, 0.0, 2, 0.05);
        let g = cfl_grid(&pr, &[0.0, 0.0], &[1.0, 1.0], &[9, 9]).unwrap();
        let data = ProblemData::new(pr, Arc::new(|_| 2.5), Arc::new(|_, _| 2.5));
        let u = solve(&data, &g).unwrap();
        assert!(u.values().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn p_two_step_is_heat_step_for_every_epsilon() {
        let g = SpaceTimeGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[9, 9], 0.01, 2).unwrap();
        let init: Vec<f64> = (0..g.n_space())
            .map(|s| {
                let x = g.point(s);
                (PI * x[0]).sin() * (2.0 * x[1]).cos() + x[0] * x[1]
            })
            .collect();
        let dt = 1e-3;
        let base = ProblemData::new(
            params(2.0, 0.0, 2, 0.01),
            Arc::new(|_| 0.0),
            Arc::new(|_, _| 0.0),
        );
        let heat = step_explicit(&init, 0.0, dt, 1, &base, &g).unwrap();
        let view = SliceView::new(&g, &init);
        for s in g.nodes_with_margin(1) {
            assert_eq!(heat[s], init[s] + dt * view.laplacian(s).unwrap());
        }
        for eps in [1e-3, 0.1, 2.0] {
            let d = base.with_params(params(2.0, eps, 2, 0.01));
            assert_eq!(step_explicit(&init, 0.0, dt, 1, &d, &g).unwrap(), heat);
        }
    }

    #[test]
    fn one_dimensional_step_matches_scaled_heat_step() {
        let p = 2.5;
        let pr = params(p, 0.0, 1, 0.1);
        let g = SpaceTimeGrid::new(&[0.0], &[1.0], &[65], 0.1, 2).unwrap();
        let init: Vec<f64> = (0..65).map(|s| (PI * g.point(s)[0]).sin()).collect();
        let data = ProblemData::new(
            pr,
            Arc::new(|x| (PI * x[0]).sin()),
            Arc::new(|_, _| 0.0),
        );
        let dt = cfl_dt(&pr, &g);
        let next = step_explicit(&init, 0.0, dt, 1, &data, &g).unwrap();
        for s in 1..64 {
            let x = g.point(s)[0];
            // exact u_xx = -pi^2 sin(pi x); stencil error O(h^2)
            let oracle = init[s] + dt * (p - 1.0) * (-PI * PI * (PI * x).sin());
            assert!((next[s] - oracle).abs() < dt * 5e-3, "node {s}");
        }
        assert_eq!(next[0], 0.0);
        assert_eq!(next[64], 0.0);
    }

    #[test]
    fn blowup_is_reported_with_step() {
        let pr = params(2.0, 0.0, 1, 1.0);
        let g = SpaceTimeGrid::new(&[0.0], &[1.0], &[5], 1.0, 2).unwrap();
        let data = ProblemData::new(pr, Arc::new(|_| 0.0), Arc::new(|_, _| 0.0))
            .with_forcing(Arc::new(|_, t| if t > 0.05 { f64::INFINITY } else { 0.0 }));
        match solve_auto(&data, &g) {
            Err(SolverError::Blowup { step, .. }) => assert!(step > 1),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn incompatible_data_rejected() {
        let pr = params(2.0, 0.0, 1, 1.0);
        let g = SpaceTimeGrid::new(&[0.0], &[1.0], &[5], 1.0, 2).unwrap();
        let data = ProblemData::new(pr, Arc::new(|_| 1.0), Arc::new(|_, _| 0.0));
        assert!(matches!(
            solve_auto(&data, &g),
            Err(SolverError::IncompatibleData { .. })
        ));
        let wrong_dim = ProblemData::new(params(2.0, 0.0, 2, 1.0), Arc::new(|_| 0.0), Arc::new(|_, _| 0.0));
        assert!(matches!(
            solve_auto(&wrong_dim, &g),
            Err(SolverError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn solve_is_deterministic() {
        let pr = params(1.5, 0.05, 2, 0.02);
        let g = cfl_grid(&pr, &[0.0, 0.0], &[1.0, 1.0], &[11, 11]).unwrap();
        let data = ProblemData::new(
            pr,
            Arc::new(|x| (PI * x[0]).sin() * (PI * x[1]).sin()),
            Arc::new(|_, _| 0.0),
        );
        let a = solve(&data, &g).unwrap();
        let b = solve(&data, &g).unwrap();
        assert!(a
            .values()
            .iter()
            .zip(b.values())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn forcing_vanishes_for_exact_solution() {
        let r = exact_1d_mode(PI, 1.7).unwrap();
        let pr = params(1.7, 0.0, 1, 0.1);
        let g = SpaceTimeGrid::new(&[0.0], &[1.0], &[17], 0.1, 5).unwrap();
        let f = mms_forcing(r.field.clone(), &pr, &g);
        // sin has a critical point at x = 1/2
        assert!(matches!(f, Err(SolverError::DegenerateManufactured { .. })));
        let f = mms_forcing(r.field.clone(), &pr.with_epsilon(0.0), &SpaceTimeGrid::new(&[0.0], &[0.4], &[9], 0.1, 5).unwrap()).unwrap();
        for x in [0.05, 0.2, 0.33] {
            assert!(f(&[x, 0.0], 0.04).abs() < 1e-12);
        }
    }

    #[test]
    fn saddle_forcing_matches_symbolic_oracle() {
        let p = 3.0;
        let pr = params(p, 0.0, 2, 0.5);
        let g = SpaceTimeGrid::new(&[0.5, 0.5], &[1.5, 1.5], &[5, 5], 0.5, 3).unwrap();
        let f = mms_forcing(Arc::new(SaddlePlusTime), &pr, &g).unwrap();
        for x in [[0.7, 1.2], [1.4, 0.6], [1.0, 1.0]] {
            let oracle = 1.0 - (p - 2.0) * 2.0 * (x[0] * x[0] - x[1] * x[1]) / (x[0] * x[0] + x[1] * x[1]);
            assert!((f(&x, 0.3) - oracle).abs() < 1e-14);
        }
        let at_origin = SpaceTimeGrid::new(&[-1.0, -1.0], &[1.0, 1.0], &[5, 5], 0.5, 3).unwrap();
        assert!(mms_forcing(Arc::new(SaddlePlusTime), &pr, &at_origin).is_err());
    }

    #[test]
    fn saddle_mms_is_reproduced_exactly() {
        // quadratic in space and linear in time: stencils and Euler are exact
        let pr = params(3.0, 0.0, 2, 0.05);
        let g = cfl_grid(&pr, &[0.5, 0.5], &[1.5, 1.5], &[9, 9]).unwrap();
        let m: Arc<dyn Manufactured> = Arc::new(SaddlePlusTime);
        let data = ProblemData::from_field(pr, m.clone())
            .with_forcing(mms_forcing(m.clone(), &pr, &g).unwrap());
        let u = solve(&data, &g).unwrap();
        let exact = SpaceTimeField::from_fn(g, |x, t| m.value(x, t));
        assert!(u.max_abs_diff(&exact) < 1e-12);
    }
}
