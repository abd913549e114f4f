//! Closed-form fields used as oracles: exact solutions, manufactured fields
//! and the radial form of the operator.

use crate::calculus::{SymMatrix, Vector};
use crate::grid::{Params, Point};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("radial reduction is singular at r = 0")]
    SingularRadius,
    #[error("invalid reference parameter: {0}")]
    InvalidParam(String),
}

/// A smooth space-time field with closed-form derivatives.
pub trait Manufactured: Send + Sync {
    fn value(&self, x: &Point, t: f64) -> f64;
    fn time_derivative(&self, x: &Point, t: f64) -> f64;
    fn gradient(&self, x: &Point, t: f64) -> Vector;
    fn hessian(&self, x: &Point, t: f64) -> SymMatrix;
}

/// Parameter set on which a reference solves the equation exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamConstraint {
    pub dim: usize,
    /// Exact only for the unregularized equation.
    pub needs_zero_epsilon: bool,
    /// Exact only at this exponent.
    pub p: Option<f64>,
}

impl ParamConstraint {
    pub fn admits(&self, params: &Params) -> bool {
        params.dim == self.dim
            && (!self.needs_zero_epsilon || params.epsilon == 0.0)
            && self.p.is_none_or(|p| p == params.p)
    }
}

#[derive(Clone)]
pub struct ReferenceSolution {
    pub field: Arc<dyn Manufactured>,
    pub description: String,
    pub valid_params: ParamConstraint,
}

impl fmt::Debug for ReferenceSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReferenceSolution")
            .field("description", &self.description)
            .field("valid_params", &self.valid_params)
            .finish()
    }
}

impl ReferenceSolution {
    pub fn evaluate(&self, x: &Point, t: f64) -> f64 {
        self.field.value(x, t)
    }

    /// `u_t` minus the unregularized operator, both from the closed-form
    /// derivatives.
    pub fn residual(&self, x: &Point, t: f64, p: f64) -> f64 {
        let g = self.field.gradient(x, t);
        let h = self.field.hessian(x, t);
        let op = crate::calculus::operator_value(
            self.valid_params.dim,
            &g,
            &h,
            p,
            0.0,
            crate::calculus::CriticalPointPolicy::Fallback,
        )
        .unwrap_or(f64::NAN);
        self.field.time_derivative(x, t) - op
    }
}

/// `e^{-(p-1) k² t} sin(k x)` in one dimension.
#[derive(Debug, Clone, Copy)]
pub struct SineMode1d {
    pub k: f64,
    pub p: f64,
}

impl SineMode1d {
    fn rate(&self) -> f64 {
        (self.p - 1.0) * self.k * self.k
    }
}

impl Manufactured for SineMode1d {
    fn value(&self, x: &Point, t: f64) -> f64 {
        (-self.rate() * t).exp() * (self.k * x[0]).sin()
    }
    fn time_derivative(&self, x: &Point, t: f64) -> f64 {
        -self.rate() * self.value(x, t)
    }
    fn gradient(&self, x: &Point, t: f64) -> Vector {
        [self.k * (-self.rate() * t).exp() * (self.k * x[0]).cos(), 0.0]
    }
    fn hessian(&self, x: &Point, t: f64) -> SymMatrix {
        SymMatrix {
            xx: -self.k * self.k * self.value(x, t),
            xy: 0.0,
            yy: 0.0,
        }
    }
}

pub fn exact_1d_mode(k: f64, p: f64) -> Result<ReferenceSolution, ReferenceError> {
    if !(k > 0.0) || !(p > 1.0) {
        return Err(ReferenceError::InvalidParam(format!(
            "need k > 0 and p > 1, got k = {k}, p = {p}"
        )));
    }
    Ok(ReferenceSolution {
        field: Arc::new(SineMode1d { k, p }),
        description: format!("exp(-(p-1) k^2 t) sin(k x), k = {k}, p = {p}"),
        valid_params: ParamConstraint {
            dim: 1,
            needs_zero_epsilon: true,
            p: Some(p),
        },
    })
}

/// `e^{-2π²t} sin(πx) sin(πy)`, the heat-equation product mode.
#[derive(Debug, Clone, Copy)]
pub struct HeatProduct2d;

impl Manufactured for HeatProduct2d {
    fn value(&self, x: &Point, t: f64) -> f64 {
        (-2.0 * PI * PI * t).exp() * (PI * x[0]).sin() * (PI * x[1]).sin()
    }
    fn time_derivative(&self, x: &Point, t: f64) -> f64 {
        -2.0 * PI * PI * self.value(x, t)
    }
    fn gradient(&self, x: &Point, t: f64) -> Vector {
        let a = PI * (-2.0 * PI * PI * t).exp();
        [
            a * (PI * x[0]).cos() * (PI * x[1]).sin(),
            a * (PI * x[0]).sin() * (PI * x[1]).cos(),
        ]
    }
    fn hessian(&self, x: &Point, t: f64) -> SymMatrix {
        let a = PI * PI * (-2.0 * PI * PI * t).exp();
        let (sx, cx) = (PI * x[0]).sin_cos();
        let (sy, cy) = (PI * x[1]).sin_cos();
        SymMatrix {
            xx: -a * sx * sy,
            xy: a * cx * cy,
            yy: -a * sx * sy,
        }
    }
}

pub fn heat_product_2d() -> ReferenceSolution {
    ReferenceSolution {
        field: Arc::new(HeatProduct2d),
        description: "exp(-2 pi^2 t) sin(pi x) sin(pi y)".into(),
        valid_params: ParamConstraint {
            dim: 2,
            needs_zero_epsilon: false,
            p: Some(2.0),
        },
    }
}

/// `a·x + b`, stationary for every `p` and `ε`.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub slope: Vector,
    pub offset: f64,
}

impl Manufactured for Affine {
    fn value(&self, x: &Point, _t: f64) -> f64 {
        self.slope[0] * x[0] + self.slope[1] * x[1] + self.offset
    }
    fn time_derivative(&self, _x: &Point, _t: f64) -> f64 {
        0.0
    }
    fn gradient(&self, _x: &Point, _t: f64) -> Vector {
        self.slope
    }
    fn hessian(&self, _x: &Point, _t: f64) -> SymMatrix {
        SymMatrix::default()
    }
}

/// `|x - c|² + 2(p + n - 2) t`; exact for `ε = 0` away from `x = c`.
#[derive(Debug, Clone, Copy)]
pub struct RadialQuadratic {
    pub center: Point,
    pub dim: usize,
    pub p: f64,
}

impl Manufactured for RadialQuadratic {
    fn value(&self, x: &Point, t: f64) -> f64 {
        let r2: f64 = (0..self.dim).map(|a| (x[a] - self.center[a]).powi(2)).sum();
        r2 + self.time_derivative(x, t) * t
    }
    fn time_derivative(&self, _x: &Point, _t: f64) -> f64 {
        2.0 * (self.p + self.dim as f64 - 2.0)
    }
    fn gradient(&self, x: &Point, _t: f64) -> Vector {
        let mut g = [0.0; 2];
        for (axis, gi) in g.iter_mut().enumerate().take(self.dim) {
            *gi = 2.0 * (x[axis] - self.center[axis]);
        }
        g
    }
    fn hessian(&self, _x: &Point, _t: f64) -> SymMatrix {
        SymMatrix {
            xx: 2.0,
            xy: 0.0,
            yy: if self.dim == 2 { 2.0 } else { 0.0 },
        }
    }
}

/// `x² - y² + t`, a manufactured field (not a solution).
#[derive(Debug, Clone, Copy)]
pub struct SaddlePlusTime;

impl Manufactured for SaddlePlusTime {
    fn value(&self, x: &Point, t: f64) -> f64 {
        x[0] * x[0] - x[1] * x[1] + t
    }
    fn time_derivative(&self, _x: &Point, _t: f64) -> f64 {
        1.0
    }
    fn gradient(&self, x: &Point, _t: f64) -> Vector {
        [2.0 * x[0], -2.0 * x[1]]
    }
    fn hessian(&self, _x: &Point, _t: f64) -> SymMatrix {
        SymMatrix {
            xx: 2.0,
            xy: 0.0,
            yy: -2.0,
        }
    }
}

/// `e^{-t} sin(πx) sin(πy) + x`, a smooth manufactured field.
#[derive(Debug, Clone, Copy)]
pub struct DecayingSineTilt;

impl Manufactured for DecayingSineTilt {
    fn value(&self, x: &Point, t: f64) -> f64 {
        (-t).exp() * (PI * x[0]).sin() * (PI * x[1]).sin() + x[0]
    }
    fn time_derivative(&self, x: &Point, t: f64) -> f64 {
        -(-t).exp() * (PI * x[0]).sin() * (PI * x[1]).sin()
    }
    fn gradient(&self, x: &Point, t: f64) -> Vector {
        let a = PI * (-t).exp();
        [
            a * (PI * x[0]).cos() * (PI * x[1]).sin() + 1.0,
            a * (PI * x[0]).sin() * (PI * x[1]).cos(),
        ]
    }
    fn hessian(&self, x: &Point, t: f64) -> SymMatrix {
        let a = PI * PI * (-t).exp();
        let (sx, cx) = (PI * x[0]).sin_cos();
        let (sy, cy) = (PI * x[1]).sin_cos();
        SymMatrix {
            xx: -a * sx * sy,
            xy: a * cx * cy,
            yy: -a * sx * sy,
        }
    }
}

/// First and second radial derivatives of a radial profile at some `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialProfile {
    pub u_r: f64,
    pub u_rr: f64,
}

/// `(p-1) u_rr + (n-1) u_r / r`, the operator on a radial field.
pub fn radial_operator_reduction(
    profile: RadialProfile,
    r: f64,
    p: f64,
    dim: usize,
) -> Result<f64, ReferenceError> {
    if r == 0.0 {
        return Err(ReferenceError::SingularRadius);
    }
    Ok((p - 1.0) * profile.u_rr + (dim as f64 - 1.0) * profile.u_r / r)
}
