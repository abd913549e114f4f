//! Named initial/lateral data and manufactured fields.

use crate::config::{DataSpec, MmsField, Profile, RunConfig};
use plap_core::grid::{Params, Point, SpaceTimeGrid};
use plap_core::references::{Affine, DecayingSineTilt, Manufactured, RadialQuadratic, SaddlePlusTime};
use plap_core::solver::{mms_forcing, ProblemData, SolverError};
use plap_core::{SymMatrix, Vector};
use std::f64::consts::PI;
use std::sync::Arc;

/// Problem data plus the closed-form solution, when one exists for the
/// configured parameters.
pub struct Problem {
    pub data: ProblemData,
    pub exact: Option<Arc<dyn Manufactured>>,
}

/// `e^{-λ t} Π sin(kπ x_i)`, exact for the sine profiles when the box ends
/// sit on zeros of the sine.
#[derive(Debug, Clone, Copy)]
struct SineDecay {
    k: f64,
    dim: usize,
    rate: f64,
}

impl SineDecay {
    fn factors(&self, x: &Point) -> ([f64; 2], [f64; 2]) {
        let mut s = [1.0; 2];
        let mut c = [0.0; 2];
        for axis in 0..self.dim {
            let (sa, ca) = (self.k * PI * x[axis]).sin_cos();
            s[axis] = sa;
            c[axis] = ca;
        }
        (s, c)
    }
}

impl Manufactured for SineDecay {
    fn value(&self, x: &Point, t: f64) -> f64 {
        let (s, _) = self.factors(x);
        (-self.rate * t).exp() * s[0] * s[1]
    }
    fn time_derivative(&self, x: &Point, t: f64) -> f64 {
        -self.rate * self.value(x, t)
    }
    fn gradient(&self, x: &Point, t: f64) -> Vector {
        let (s, c) = self.factors(x);
        let a = self.k * PI * (-self.rate * t).exp();
        if self.dim == 1 {
            [a * c[0], 0.0]
        } else {
            [a * c[0] * s[1], a * s[0] * c[1]]
        }
    }
    fn hessian(&self, x: &Point, t: f64) -> SymMatrix {
        let (s, c) = self.factors(x);
        let a = (self.k * PI).powi(2) * (-self.rate * t).exp();
        if self.dim == 1 {
            SymMatrix {
                xx: -a * s[0],
                xy: 0.0,
                yy: 0.0,
            }
        } else {
            SymMatrix {
                xx: -a * s[0] * s[1],
                xy: a * c[0] * c[1],
                yy: -a * s[0] * s[1],
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Constant(f64);

impl Manufactured for Constant {
    fn value(&self, _x: &Point, _t: f64) -> f64 {
        self.0
    }
    fn time_derivative(&self, _x: &Point, _t: f64) -> f64 {
        0.0
    }
    fn gradient(&self, _x: &Point, _t: f64) -> Vector {
        [0.0; 2]
    }
    fn hessian(&self, _x: &Point, _t: f64) -> SymMatrix {
        SymMatrix::default()
    }
}

fn padded(v: &Option<Vec<f64>>, default: [f64; 2]) -> [f64; 2] {
    match v {
        Some(v) => {
            let mut out = [0.0; 2];
            out[..v.len()].copy_from_slice(v);
            out
        }
        None => default,
    }
}

fn sine_is_exact(spec: &DataSpec, params: &Params, lo: &[f64], hi: &[f64]) -> bool {
    let k = spec.mode.unwrap_or(1.0);
    let on_zero = |x: f64| (k * PI * x).sin().abs() < 1e-12;
    let ends = lo.iter().chain(hi).all(|&x| on_zero(x));
    // ε drops out at p = 2; in one dimension the unregularized flow is linear
    let flow = params.p == 2.0 || (params.dim == 1 && params.epsilon == 0.0);
    ends && flow
}

pub fn build(config: &RunConfig, grid: &SpaceTimeGrid) -> Result<Problem, SolverError> {
    let params = config.params;
    let spec = &config.data;
    let dim = params.dim;
    if let Some(field) = spec.mms {
        let manufactured: Arc<dyn Manufactured> = match field {
            MmsField::SaddlePlusTime => Arc::new(SaddlePlusTime),
            MmsField::DecayingSineTilt => Arc::new(DecayingSineTilt),
        };
        let forcing = mms_forcing(manufactured.clone(), &params, grid)?;
        return Ok(Problem {
            data: ProblemData::from_field(params, manufactured.clone()).with_forcing(forcing),
            exact: Some(manufactured),
        });
    }
    let profile = spec.profile.expect("validated configuration has data");
    let (field, exact): (Arc<dyn Manufactured>, bool) = match profile {
        Profile::Affine => (
            Arc::new(Affine {
                slope: padded(&spec.slope, if dim == 1 { [1.0, 0.0] } else { [1.0, 0.5] }),
                offset: spec.offset.unwrap_or(0.0),
            }),
            true,
        ),
        Profile::Constant => (Arc::new(Constant(spec.value.unwrap_or(1.0))), true),
        Profile::RadialQuadratic => {
            let mid = |axis: usize| match (config.grid.lo.get(axis), config.grid.hi.get(axis)) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                _ => 0.0,
            };
            let center = padded(&spec.center, [mid(0), mid(1)]);
            (
                Arc::new(RadialQuadratic { center, dim, p: params.p }),
                params.epsilon == 0.0,
            )
        }
        Profile::SineMode1d | Profile::SineProduct2d => {
            let k = spec.mode.unwrap_or(1.0);
            // 1D: (p-1) k²π²; 2D (exact only at p = 2): 2 k²π²
            let speed = if dim == 1 { params.p - 1.0 } else { 2.0 };
            let field = SineDecay {
                k,
                dim,
                rate: speed * k * k * PI * PI,
            };
            let exact = sine_is_exact(spec, &params, &config.grid.lo, &config.grid.hi);
            if !exact {
                // lateral data frozen at the initial values
                let f0 = field;
                let data = ProblemData::new(
                    params,
                    Arc::new(move |x| f0.value(x, 0.0)),
                    Arc::new(move |x, _| f0.value(x, 0.0)),
                );
                return Ok(Problem { data, exact: None });
            }
            (Arc::new(field), true)
        }
    };
    Ok(Problem {
        data: ProblemData::from_field(params, field.clone()),
        exact: exact.then_some(field),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn config(profile: &str, dim: usize, p: f64, eps: f64) -> RunConfig {
        let (lo, hi, nx) = if dim == 1 {
            ("[0.0]", "[1.0]", "[17]")
        } else {
            ("[0.0, 0.0]", "[1.0, 1.0]", "[9, 9]")
        };
        RunConfig::from_toml(&format!(
            "[params]\np = {p:?}\nepsilon = {eps:?}\ndim = {dim}\nT = 0.05\n\
             [grid]\nlo = {lo}\nhi = {hi}\nnx = {nx}\n[data]\nprofile = \"{profile}\"\n"
        ))
        .unwrap()
    }

    #[test]
    fn exact_fields_solve_their_equation() {
        let cases = [
            ("sine-mode-1d", 1, 1.5, 0.0),
            ("sine-mode-1d", 1, 2.0, 0.3),
            ("sine-product-2d", 2, 2.0, 0.1),
            ("affine", 2, 3.0, 0.1),
            ("constant", 1, 1.2, 0.0),
            ("radial-quadratic", 2, 1.7, 0.0),
        ];
        for (profile, dim, p, eps) in cases {
            let c = config(profile, dim, p, eps);
            let g = c.base_grid().unwrap();
            let problem = build(&c, &g).unwrap();
            let exact = problem.exact.unwrap_or_else(|| panic!("{profile} should be exact"));
            let x = if dim == 1 { [0.3, 0.0] } else { [0.3, 0.7] };
            let op = plap_core::calculus::operator_value(
                dim,
                &exact.gradient(&x, 0.02),
                &exact.hessian(&x, 0.02),
                p,
                eps,
                plap_core::CriticalPointPolicy::Fallback,
            )
            .unwrap();
            let r = exact.time_derivative(&x, 0.02) - op;
            assert!(r.abs() < 1e-10, "{profile}: residual {r}");
        }
    }

    #[test]
    fn regularized_sine_has_no_exact_solution() {
        let c = config("sine-product-2d", 2, 1.5, 0.1);
        let g = c.base_grid().unwrap();
        let problem = build(&c, &g).unwrap();
        assert!(problem.exact.is_none());
        assert_eq!((problem.data.lateral)(&[0.0, 0.4], 0.03), 0.0);
    }

    #[test]
    fn mms_fields_get_forcing() {
        let mut c = config("affine", 2, 1.5, 0.1);
        c.data.profile = None;
        c.data.mms = Some(MmsField::DecayingSineTilt);
        c.validate().unwrap();
        let g = c.base_grid().unwrap();
        let problem = build(&c, &g).unwrap();
        assert!(problem.data.forcing.is_some() && problem.exact.is_some());
    }
}
