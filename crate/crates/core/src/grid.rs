//! Space-time tensor grids over an axis-aligned box, node classification and
//! trapezoidal quadrature.
//!
//! Spatial nodes are stored x-fastest: the flat index of node `(i, j)` is
//! `i + nx[0] * j`. A field holds one spatial slice per time level, slices
//! stored contiguously.

use serde::{Deserialize, Serialize};
use std::ops::RangeInclusive;
use thiserror::Error;

/// Spatial points are always two-component; in one dimension the second
/// component is zero and ignored.
pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("degenerate box along axis {axis}: lo = {lo}, hi = {hi}")]
    DegenerateAxis { axis: usize, lo: f64, hi: f64 },
    #[error("axis {axis} needs at least 3 nodes, got {nodes}")]
    TooFewNodes { axis: usize, nodes: usize },
    #[error("need at least 2 time levels, got {0}")]
    TooFewTimeLevels(usize),
    #[error("node (slice {slice}, space {space}) out of range")]
    NodeOutOfRange { slice: usize, space: usize },
    #[error("empty quadrature region")]
    EmptyRegion,
    #[error("field has {got} values, grid needs {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Problem parameters: exponent, regularization, dimension and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub p: f64,
    pub epsilon: f64,
    pub dim: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl Params {
    pub fn new(p: f64, epsilon: f64, dim: usize, horizon: f64) -> Result<Self, GridError> {
        let params = Params {
            p,
            epsilon,
            dim,
            horizon,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(GridError::InvalidParam {
                name: "p",
                reason: format!("must be a finite number > 1, got {}", self.p),
            });
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(GridError::InvalidParam {
                name: "epsilon",
                reason: format!("must be finite and >= 0, got {}", self.epsilon),
            });
        }
        if !(self.dim == 1 || self.dim == 2) {
            return Err(GridError::InvalidParam {
                name: "dim",
                reason: format!("must be 1 or 2, got {}", self.dim),
            });
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(GridError::InvalidParam {
                name: "T",
                reason: format!("must be finite and > 0, got {}", self.horizon),
            });
        }
        Ok(())
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Params { epsilon, ..self }
    }
}

/// Class of a space-time node with respect to the parabolic boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Interior,
    Initial,
    Lateral,
    /// `t = T` with `x` interior. Not part of the parabolic boundary.
    TerminalInterior,
}

impl NodeClass {
    pub fn is_parabolic_boundary(self) -> bool {
        matches!(self, NodeClass::Initial | NodeClass::Lateral)
    }
}

/// Node-centred tensor grid over `box_lo..box_hi` times `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
    nx: Vec<usize>,
    h: Vec<f64>,
    nt: usize,
    dt: f64,
    horizon: f64,
}

impl SpaceTimeGrid {
    pub fn new(
        box_lo: &[f64],
        box_hi: &[f64],
        nx: &[usize],
        horizon: f64,
        nt: usize,
    ) -> Result<Self, GridError> {
        let dim = box_lo.len();
        if !(dim == 1 || dim == 2) || box_hi.len() != dim || nx.len() != dim {
            return Err(GridError::InvalidParam {
                name: "dim",
                reason: format!(
                    "box_lo, box_hi and nx must all have length 1 or 2 (got {}, {}, {})",
                    box_lo.len(),
                    box_hi.len(),
                    nx.len()
                ),
            });
        }
        let mut h = Vec::with_capacity(dim);
        for axis in 0..dim {
            let (lo, hi) = (box_lo[axis], box_hi[axis]);
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(GridError::DegenerateAxis { axis, lo, hi });
            }
            if nx[axis] < 3 {
                return Err(GridError::TooFewNodes {
                    axis,
                    nodes: nx[axis],
                });
            }
            h.push((hi - lo) / (nx[axis] - 1) as f64);
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(GridError::InvalidParam {
                name: "T",
                reason: format!("must be finite and > 0, got {horizon}"),
            });
        }
        if nt < 2 {
            return Err(GridError::TooFewTimeLevels(nt));
        }
        Ok(SpaceTimeGrid {
            box_lo: box_lo.to_vec(),
            box_hi: box_hi.to_vec(),
            nx: nx.to_vec(),
            h,
            nt,
            dt: horizon / (nt - 1) as f64,
            horizon,
        })
    }

    /// Grid whose time step is the largest uniform step `T/(nt-1)` not
    /// exceeding `max_dt`.
    pub fn with_max_dt(
        box_lo: &[f64],
        box_hi: &[f64],
        nx: &[usize],
        horizon: f64,
        max_dt: f64,
    ) -> Result<Self, GridError> {
        if !(max_dt > 0.0) {
            return Err(GridError::InvalidParam {
                name: "dt",
                reason: format!("must be > 0, got {max_dt}"),
            });
        }
        let steps = (horizon / max_dt).ceil().max(1.0) as usize;
        Self::new(box_lo, box_hi, nx, horizon, steps + 1)
    }

    /// Same box and time levels with `nx` replaced.
    pub fn with_nodes(&self, nx: &[usize], nt: usize) -> Result<Self, GridError> {
        Self::new(&self.box_lo, &self.box_hi, nx, self.horizon, nt)
    }

    pub fn dim(&self) -> usize {
        self.nx.len()
    }

    pub fn box_lo(&self) -> &[f64] {
        &self.box_lo
    }

    pub fn box_hi(&self) -> &[f64] {
        &self.box_hi
    }

    pub fn nx(&self) -> &[usize] {
        &self.nx
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn h_min(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of spatial nodes per slice.
    pub fn n_space(&self) -> usize {
        self.nx.iter().product()
    }

    pub fn n_total(&self) -> usize {
        self.n_space() * self.nt
    }

    pub fn time(&self, slice: usize) -> f64 {
        if slice + 1 == self.nt {
            self.horizon
        } else {
            slice as f64 * self.dt
        }
    }

    /// Per-axis node indices of a flat spatial index.
    pub fn axis_indices(&self, space: usize) -> [usize; 2] {
        let nx0 = self.nx[0];
        if self.dim() == 1 {
            [space, 0]
        } else {
            [space % nx0, space / nx0]
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        if self.dim() == 1 {
            idx[0]
        } else {
            idx[0] + self.nx[0] * idx[1]
        }
    }

    pub fn point(&self, space: usize) -> Point {
        let idx = self.axis_indices(space);
        let mut x = [0.0; 2];
        for axis in 0..self.dim() {
            x[axis] = if idx[axis] + 1 == self.nx[axis] {
                self.box_hi[axis]
            } else {
                self.box_lo[axis] + idx[axis] as f64 * self.h[axis]
            };
        }
        x
    }

    /// Smallest number of cells separating the node from the spatial boundary.
    pub fn cells_from_boundary(&self, space: usize) -> usize {
        let idx = self.axis_indices(space);
        (0..self.dim())
            .map(|axis| idx[axis].min(self.nx[axis] - 1 - idx[axis]))
            .min()
            .unwrap_or(0)
    }

    pub fn is_spatial_boundary(&self, space: usize) -> bool {
        self.cells_from_boundary(space) == 0
    }

    pub fn classify(&self, slice: usize, space: usize) -> Result<NodeClass, GridError> {
        if slice >= self.nt || space >= self.n_space() {
            return Err(GridError::NodeOutOfRange { slice, space });
        }
        Ok(if slice == 0 {
            NodeClass::Initial
        } else if self.is_spatial_boundary(space) {
            NodeClass::Lateral
        } else if slice + 1 == self.nt {
            NodeClass::TerminalInterior
        } else {
            NodeClass::Interior
        })
    }

    /// Spatial nodes at least `margin` cells from the boundary.
    pub fn nodes_with_margin(&self, margin: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_space()).filter(move |&s| self.cells_from_boundary(s) >= margin)
    }

    /// Region covering every node of the grid.
    pub fn full_region(&self) -> Region {
        let mut space = [0..=0, 0..=0];
        for (range, &n) in space.iter_mut().zip(&self.nx) {
            *range = 0..=n - 1;
        }
        Region {
            time: 0..=self.nt - 1,
            space,
        }
    }

    /// Tensor-product trapezoidal rule over `region` of nodal values given by
    /// `integrand(slice, space)`.
    pub fn integrate<F>(&self, region: &Region, mut integrand: F) -> Result<f64, GridError>
    where
        F: FnMut(usize, usize) -> f64,
    {
        region.validate(self)?;
        let tw = trapezoid_weights(&region.time, self.dt);
        let xw = trapezoid_weights(&region.space[0], self.h[0]);
        let yw = if self.dim() == 2 {
            trapezoid_weights(&region.space[1], self.h[1])
        } else {
            vec![1.0]
        };
        let mut total = 0.0;
        for (kt, slice) in region.time.clone().enumerate() {
            let mut slice_sum = 0.0;
            for (jy, j) in region.space[1].clone().enumerate() {
                let mut row = 0.0;
                for (ix, i) in region.space[0].clone().enumerate() {
                    let space = self.flat_index([i, j]);
                    row += xw[ix] * integrand(slice, space);
                }
                slice_sum += yw[jy] * row;
            }
            total += tw[kt] * slice_sum;
        }
        Ok(total)
    }

    /// Spatial trapezoidal rule over one slice.
    pub fn integrate_slice<F>(&self, region: &Region, mut integrand: F) -> Result<f64, GridError>
    where
        F: FnMut(usize) -> f64,
    {
        let mut single = region.clone();
        single.time = 0..=0;
        single.validate(self)?;
        let xw = trapezoid_weights(&region.space[0], self.h[0]);
        let yw = if self.dim() == 2 {
            trapezoid_weights(&region.space[1], self.h[1])
        } else {
            vec![1.0]
        };
        let mut total = 0.0;
        for (jy, j) in region.space[1].clone().enumerate() {
            for (ix, i) in region.space[0].clone().enumerate() {
                total += yw[jy] * xw[ix] * integrand(self.flat_index([i, j]));
            }
        }
        Ok(total)
    }
}

/// Axis-aligned block of nodes, inclusive index ranges per axis. In one
/// dimension `space[1]` is `0..=0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub time: RangeInclusive<usize>,
    pub space: [RangeInclusive<usize>; 2],
}

impl Region {
    fn validate(&self, grid: &SpaceTimeGrid) -> Result<(), GridError> {
        if self.time.is_empty() || *self.time.end() >= grid.nt {
            return Err(GridError::EmptyRegion);
        }
        for axis in 0..2 {
            let limit = if axis < grid.dim() { grid.nx[axis] } else { 1 };
            let r = &self.space[axis];
            if r.is_empty() || *r.end() >= limit {
                return Err(GridError::EmptyRegion);
            }
        }
        Ok(())
    }
}

fn trapezoid_weights(range: &RangeInclusive<usize>, step: f64) -> Vec<f64> {
    let n = range.end() - range.start() + 1;
    if n == 1 {
        // A single node has zero measure along this axis.
        return vec![0.0];
    }
    let mut w = vec![step; n];
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    w
}

/// Nodal values on every node of a space-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: SpaceTimeGrid,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn from_values(grid: SpaceTimeGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.n_total() {
            return Err(GridError::ShapeMismatch {
                expected: grid.n_total(),
                got: values.len(),
            });
        }
        Ok(SpaceTimeField { grid, values })
    }

    /// Samples `f(x, t)` at every node.
    pub fn from_fn<F: Fn(&Point, f64) -> f64>(grid: SpaceTimeGrid, f: F) -> Self {
        let n_space = grid.n_space();
        let mut values = Vec::with_capacity(grid.n_total());
        for k in 0..grid.nt() {
            let t = grid.time(k);
            values.extend((0..n_space).map(|s| f(&grid.point(s), t)));
        }
        SpaceTimeField { grid, values }
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.n_space();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn value(&self, slice: usize, space: usize) -> f64 {
        self.values[slice * self.grid.n_space() + space]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        SpaceTimeField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Central difference in time, second-order one-sided at `t = 0` and `t = T`.
    pub fn time_derivative(&self, slice: usize, space: usize) -> f64 {
        let nt = self.grid.nt();
        let dt = self.grid.dt();
        let u = |k: usize| self.value(k, space);
        if nt == 2 {
            return (u(1) - u(0)) / dt;
        }
        if slice == 0 {
            (-3.0 * u(0) + 4.0 * u(1) - u(2)) / (2.0 * dt)
        } else if slice + 1 == nt {
            (3.0 * u(nt - 1) - 4.0 * u(nt - 2) + u(nt - 3)) / (2.0 * dt)
        } else {
            (u(slice + 1) - u(slice - 1)) / (2.0 * dt)
        }
    }

    /// Trapezoidal integral of the field over `region`.
    pub fn quadrature(&self, region: &Region) -> Result<f64, GridError> {
        self.grid.integrate(region, |k, s| self.value(k, s))
    }

    pub fn max_abs_diff(&self, other: &SpaceTimeField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
