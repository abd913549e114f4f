//! Second-order central stencils, the regularized normalized p-Laplacian and
//! analytic cutoff functions.

use crate::grid::{Point, SpaceTimeField, SpaceTimeGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Spatial vector; the second component is zero in one dimension.
pub type Vector = [f64; 2];

/// Below this squared gradient an unregularized operator evaluation is
/// treated as a critical point.
pub const CRITICAL_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalculusError {
    #[error("node {space} at {point:?} is {cells} cell(s) from the boundary, stencil needs {required}")]
    TooCloseToBoundary {
        space: usize,
        point: Point,
        cells: usize,
        required: usize,
    },
    #[error("vanishing gradient (|grad u|^2 = {grad_sq:e}) at node {space}, {point:?} with epsilon = 0")]
    CriticalPoint {
        space: usize,
        point: Point,
        grad_sq: f64,
    },
    #[error("cutoff support {detail}")]
    CutoffSupport { detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymMatrix {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymMatrix {
    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// `|A|^2 = sum_ij a_ij^2`.
    pub fn frobenius_sq(&self) -> f64 {
        self.xx * self.xx + 2.0 * self.xy * self.xy + self.yy * self.yy
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        [
            self.xx * v[0] + self.xy * v[1],
            self.xy * v[0] + self.yy * v[1],
        ]
    }

    /// `<v, A w>`.
    pub fn quad(&self, v: &Vector, w: &Vector) -> f64 {
        dot(v, &self.apply(w))
    }

    pub fn scaled(&self, s: f64) -> SymMatrix {
        SymMatrix {
            xx: s * self.xx,
            xy: s * self.xy,
            yy: s * self.yy,
        }
    }

    /// `trace(A B)` for symmetric `A`, `B`.
    pub fn contract(&self, other: &SymMatrix) -> f64 {
        self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy
    }
}

pub fn dot(a: &Vector, b: &Vector) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm_sq(a: &Vector) -> f64 {
    dot(a, a)
}

/// How `grad v` is formed, `v = |grad u|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradVMode {
    /// `grad v = 2 D^2u grad u`.
    #[default]
    ChainRule,
    /// Central differences of the nodal field `v`.
    Direct,
}

/// Behaviour of the unregularized operator where the gradient vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalPointPolicy {
    Reject,
    /// Substitute a unit-bounded direction for `grad u / |grad u|`: `eta = 0`
    /// in two dimensions, `|eta| = 1` in one dimension.
    #[default]
    Fallback,
}

/// Pointwise derivatives of `u` at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBundle {
    pub dim: usize,
    pub grad: Vector,
    pub hess: SymMatrix,
    /// Trace of `hess`.
    pub lap: f64,
    /// `v = |grad u|^2`.
    pub grad_sq: f64,
    /// `V = |grad u|^2 + epsilon^2`.
    pub reg_grad_sq: f64,
    /// `grad v`.
    pub grad_v: Vector,
}

impl DerivativeBundle {
    pub fn from_parts(dim: usize, grad: Vector, hess: SymMatrix, epsilon: f64) -> Self {
        let grad_sq = norm_sq(&grad);
        let hg = hess.apply(&grad);
        DerivativeBundle {
            dim,
            grad,
            hess,
            lap: hess.trace(),
            grad_sq,
            reg_grad_sq: grad_sq + epsilon * epsilon,
            grad_v: [2.0 * hg[0], 2.0 * hg[1]],
        }
    }

    /// `|grad v|^2 <= 4 |D^2u|^2 v`, evaluated as `(lhs, rhs)`.
    pub fn elementary_inequality(&self) -> (f64, f64) {
        (
            norm_sq(&self.grad_v),
            4.0 * self.hess.frobenius_sq() * self.grad_sq,
        )
    }
}

/// `Δu + (p-2) <grad u, D^2u grad u> / (|grad u|^2 + ε^2)`.
///
/// Returns `None` only when `epsilon == 0`, the gradient is below
/// [`CRITICAL_THRESHOLD`] and the policy is [`CriticalPointPolicy::Reject`].
pub fn operator_value(
    dim: usize,
    grad: &Vector,
    hess: &SymMatrix,
    p: f64,
    epsilon: f64,
    policy: CriticalPointPolicy,
) -> Option<f64> {
    let lap = hess.trace();
    let grad_sq = norm_sq(grad);
    let denom = grad_sq + epsilon * epsilon;
    if epsilon == 0.0 && grad_sq < CRITICAL_THRESHOLD {
        return match policy {
            CriticalPointPolicy::Reject => None,
            CriticalPointPolicy::Fallback if dim == 1 => Some((p - 1.0) * hess.xx),
            CriticalPointPolicy::Fallback => Some(lap),
        };
    }
    Some(lap + (p - 2.0) * hess.quad(grad, grad) / denom)
}

/// Operator value from a bundle. Errors carry no location; see
/// [`SliceView::operator`] for the located variant.
pub fn normalized_p_laplacian(
    bundle: &DerivativeBundle,
    p: f64,
    epsilon: f64,
    policy: CriticalPointPolicy,
) -> Result<f64, CalculusError> {
    operator_value(bundle.dim, &bundle.grad, &bundle.hess, p, epsilon, policy).ok_or(
        CalculusError::CriticalPoint {
            space: usize::MAX,
            point: [f64::NAN; 2],
            grad_sq: bundle.grad_sq,
        },
    )
}

/// One spatial slice of nodal values together with its grid.
#[derive(Debug, Clone, Copy)]
pub struct SliceView<'a> {
    pub grid: &'a SpaceTimeGrid,
    pub values: &'a [f64],
}

impl<'a> SliceView<'a> {
    pub fn new(grid: &'a SpaceTimeGrid, values: &'a [f64]) -> Self {
        debug_assert_eq!(values.len(), grid.n_space());
        SliceView { grid, values }
    }

    pub fn of_field(field: &'a SpaceTimeField, slice: usize) -> Self {
        SliceView {
            grid: field.grid(),
            values: field.slice(slice),
        }
    }

    fn require(&self, space: usize, cells: usize) -> Result<(), CalculusError> {
        let have = self.grid.cells_from_boundary(space);
        if have < cells {
            return Err(CalculusError::TooCloseToBoundary {
                space,
                point: self.grid.point(space),
                cells: have,
                required: cells,
            });
        }
        Ok(())
    }

    fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            1
        } else {
            self.grid.nx()[0]
        }
    }

    /// Central difference along each axis. Unchecked; the node must be
    /// interior.
    pub fn gradient_unchecked(&self, space: usize) -> Vector {
        let mut g = [0.0; 2];
        for (axis, gi) in g.iter_mut().enumerate().take(self.grid.dim()) {
            let st = self.stride(axis);
            let h = self.grid.h()[axis];
            *gi = (self.values[space + st] - self.values[space - st]) / (2.0 * h);
        }
        g
    }

    /// Second central differences on the diagonal, four-point cross stencil
    /// off the diagonal. Unchecked; the node must be interior.
    pub fn hessian_unchecked(&self, space: usize) -> SymMatrix {
        let u = self.values;
        let h = self.grid.h();
        let sx = self.stride(0);
        let xx = (u[space + sx] - 2.0 * u[space] + u[space - sx]) / (h[0] * h[0]);
        if self.grid.dim() == 1 {
            return SymMatrix { xx, xy: 0.0, yy: 0.0 };
        }
        let sy = self.stride(1);
        let yy = (u[space + sy] - 2.0 * u[space] + u[space - sy]) / (h[1] * h[1]);
        let xy = (u[space + sx + sy] - u[space + sx - sy] - u[space - sx + sy]
            + u[space - sx - sy])
            / (4.0 * h[0] * h[1]);
        SymMatrix { xx, xy, yy }
    }

    pub fn gradient(&self, space: usize) -> Result<Vector, CalculusError> {
        self.require(space, 1)?;
        Ok(self.gradient_unchecked(space))
    }

    pub fn hessian(&self, space: usize) -> Result<SymMatrix, CalculusError> {
        self.require(space, 1)?;
        Ok(self.hessian_unchecked(space))
    }

    pub fn laplacian(&self, space: usize) -> Result<f64, CalculusError> {
        Ok(self.hessian(space)?.trace())
    }

    /// Derivative bundle at `space`. Chain-rule mode needs one cell of
    /// clearance, direct mode two.
    pub fn bundle(
        &self,
        space: usize,
        epsilon: f64,
        mode: GradVMode,
    ) -> Result<DerivativeBundle, CalculusError> {
        match mode {
            GradVMode::ChainRule => self.require(space, 1)?,
            GradVMode::Direct => self.require(space, 2)?,
        }
        let mut b = DerivativeBundle::from_parts(
            self.grid.dim(),
            self.gradient_unchecked(space),
            self.hessian_unchecked(space),
            epsilon,
        );
        if mode == GradVMode::Direct {
            let v_at = |s: usize| norm_sq(&self.gradient_unchecked(s));
            let mut gv = [0.0; 2];
            for (axis, g) in gv.iter_mut().enumerate().take(self.grid.dim()) {
                let st = self.stride(axis);
                *g = (v_at(space + st) - v_at(space - st)) / (2.0 * self.grid.h()[axis]);
            }
            b.grad_v = gv;
        }
        Ok(b)
    }

    /// Regularized normalized p-Laplacian at an interior node.
    pub fn operator(
        &self,
        space: usize,
        p: f64,
        epsilon: f64,
        policy: CriticalPointPolicy,
    ) -> Result<f64, CalculusError> {
        self.require(space, 1)?;
        let grad = self.gradient_unchecked(space);
        let hess = self.hessian_unchecked(space);
        operator_value(self.grid.dim(), &grad, &hess, p, epsilon, policy).ok_or_else(|| {
            CalculusError::CriticalPoint {
                space,
                point: self.grid.point(space),
                grad_sq: norm_sq(&grad),
            }
        })
    }
}

pub fn gradient(
    field: &SpaceTimeField,
    slice: usize,
    space: usize,
) -> Result<Vector, CalculusError> {
    SliceView::of_field(field, slice).gradient(space)
}

pub fn hessian(
    field: &SpaceTimeField,
    slice: usize,
    space: usize,
) -> Result<SymMatrix, CalculusError> {
    SliceView::of_field(field, slice).hessian(space)
}

pub fn derive_bundle(
    field: &SpaceTimeField,
    slice: usize,
    space: usize,
    epsilon: f64,
    mode: GradVMode,
) -> Result<DerivativeBundle, CalculusError> {
    SliceView::of_field(field, slice).bundle(space, epsilon, mode)
}

/// Smooth bump `B(s) = exp(1 - 1/(1-s))` for `s < 1`, zero otherwise, with
/// its first two derivatives.
fn bump(s: f64) -> (f64, f64, f64) {
    if s >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let q = 1.0 / (1.0 - s);
    let b = (1.0 - q).exp();
    let d1 = -b * q * q;
    let d2 = b * (q.powi(4) - 2.0 * q.powi(3));
    (b, d1, d2)
}

/// Values of a cutoff and its derivatives at one space-time point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CutoffValue {
    pub xi: f64,
    pub grad: Vector,
    pub hess: SymMatrix,
    pub xi_t: f64,
}

/// Product bump `ξ(x,t) = B(|x-c|²/r²) B((t-t_c)²/ρ²)`, `0 <= ξ <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffFunction {
    pub id: String,
    pub dim: usize,
    pub space_center: Point,
    pub space_radius: f64,
    pub time_center: f64,
    pub time_radius: f64,
}

impl CutoffFunction {
    /// Builds a cutoff whose support lies strictly inside the grid's box
    /// times `(0, T)`.
    pub fn inside(
        grid: &SpaceTimeGrid,
        space_center: Point,
        space_radius: f64,
        time_center: f64,
        time_radius: f64,
    ) -> Result<Self, CalculusError> {
        let cutoff = CutoffFunction {
            id: format!(
                "bump(c={:?},r={},tc={},rho={})",
                &space_center[..grid.dim()],
                space_radius,
                time_center,
                time_radius
            ),
            dim: grid.dim(),
            space_center,
            space_radius,
            time_center,
            time_radius,
        };
        cutoff.check_support(grid, 0)?;
        Ok(cutoff)
    }

    /// Checks that the support stays at least `margin_cells` cells from the
    /// spatial boundary and strictly inside `(0, T)`.
    pub fn check_support(
        &self,
        grid: &SpaceTimeGrid,
        margin_cells: usize,
    ) -> Result<(), CalculusError> {
        if !(self.space_radius > 0.0) || !(self.time_radius > 0.0) {
            return Err(CalculusError::CutoffSupport {
                detail: format!(
                    "radii must be positive (space {}, time {})",
                    self.space_radius, self.time_radius
                ),
            });
        }
        if self.dim != grid.dim() {
            return Err(CalculusError::CutoffSupport {
                detail: format!("dimension {} does not match grid {}", self.dim, grid.dim()),
            });
        }
        for axis in 0..grid.dim() {
            let margin = margin_cells as f64 * grid.h()[axis];
            let lo = self.space_center[axis] - self.space_radius;
            let hi = self.space_center[axis] + self.space_radius;
            if !(lo > grid.box_lo()[axis] + margin) || !(hi < grid.box_hi()[axis] - margin) {
                return Err(CalculusError::CutoffSupport {
                    detail: format!(
                        "[{lo}, {hi}] on axis {axis} is not inside [{}, {}] with a margin of {margin_cells} cell(s)",
                        grid.box_lo()[axis],
                        grid.box_hi()[axis]
                    ),
                });
            }
        }
        let t_lo = self.time_center - self.time_radius;
        let t_hi = self.time_center + self.time_radius;
        if !(t_lo > 0.0) || !(t_hi < grid.horizon()) {
            return Err(CalculusError::CutoffSupport {
                detail: format!(
                    "time interval [{t_lo}, {t_hi}] is not strictly inside (0, {})",
                    grid.horizon()
                ),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &Point, t: f64) -> CutoffValue {
        let r2 = self.space_radius * self.space_radius;
        let mut d = [0.0; 2];
        for (axis, di) in d.iter_mut().enumerate().take(self.dim) {
            *di = x[axis] - self.space_center[axis];
        }
        let s = norm_sq(&d) / r2;
        let tau = (t - self.time_center).powi(2) / (self.time_radius * self.time_radius);
        let (bx, bx1, bx2) = bump(s);
        let (bt, bt1, _) = bump(tau);
        if bx == 0.0 || bt == 0.0 {
            return CutoffValue::default();
        }
        // grad s = 2 d / r^2, D^2 s = 2 I / r^2
        let gs = [2.0 * d[0] / r2, 2.0 * d[1] / r2];
        let space_grad = [bx1 * gs[0], bx1 * gs[1]];
        let diag = 2.0 * bx1 / r2;
        let mut space_hess = SymMatrix {
            xx: bx2 * gs[0] * gs[0] + diag,
            xy: bx2 * gs[0] * gs[1],
            yy: bx2 * gs[1] * gs[1] + diag,
        };
        if self.dim == 1 {
            space_hess.xy = 0.0;
            space_hess.yy = 0.0;
        }
        let dtau = 2.0 * (t - self.time_center) / (self.time_radius * self.time_radius);
        CutoffValue {
            xi: bx * bt,
            grad: [space_grad[0] * bt, space_grad[1] * bt],
            hess: space_hess.scaled(bt),
            xi_t: bx * bt1 * dtau,
        }
    }

    /// True where `ξ(x, t) > 0`.
    pub fn supports(&self, x: &Point, t: f64) -> bool {
        self.eval(x, t).xi > 0.0
    }
}
