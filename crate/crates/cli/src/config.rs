//! Run configuration, read from TOML.
//!
//! ```toml
//! [params]
//! p = 1.5
//! epsilon = 0.05
//! dim = 2
//! T = 0.1
//!
//! [grid]
//! lo = [0.0, 0.0]
//! hi = [1.0, 1.0]
//! nx = [33, 33]
//! nt = 65            # stored time levels; omit for one level per CFL step
//!
//! [data]
//! profile = "sine-product-2d"
//!
//! [cutoff]
//! center = [0.3, 0.35]
//! radius = 0.2
//! time_center = 0.05
//! time_radius = 0.04
//!
//! [verify]
//! checks = ["max-principle", "identity"]
//!
//! [sweep]
//! epsilons = [0.2, 0.1, 0.05, 0.025]
//!
//! [output]
//! dir = "out"
//! format = "json"
//! ```

use plap_core::calculus::CutoffFunction;
use plap_core::grid::{Params, SpaceTimeGrid};
use plap_core::verifier::{second_derivative_bound_admits, InteriorBox, SweepMode};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: Params,
    pub grid: GridSpec,
    pub data: DataSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<CutoffSpec>,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nx: Vec<usize>,
    /// Stored time levels. The solver substeps between them as the
    /// stability limit requires.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nt: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Affine,
    #[serde(rename = "sine-mode-1d")]
    SineMode1d,
    #[serde(rename = "sine-product-2d")]
    SineProduct2d,
    RadialQuadratic,
    Constant,
}

impl Profile {
    pub const ALL: [Profile; 5] = [
        Profile::Affine,
        Profile::SineMode1d,
        Profile::SineProduct2d,
        Profile::RadialQuadratic,
        Profile::Constant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Affine => "affine",
            Profile::SineMode1d => "sine-mode-1d",
            Profile::SineProduct2d => "sine-product-2d",
            Profile::RadialQuadratic => "radial-quadratic",
            Profile::Constant => "constant",
        }
    }

    fn dims(self) -> &'static [usize] {
        match self {
            Profile::SineMode1d => &[1],
            Profile::SineProduct2d => &[2],
            _ => &[1, 2],
        }
    }
}

/// Manufactured fields driven by a computed forcing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MmsField {
    SaddlePlusTime,
    DecayingSineTilt,
}

impl MmsField {
    pub fn name(self) -> &'static str {
        match self {
            MmsField::SaddlePlusTime => "saddle-plus-time",
            MmsField::DecayingSineTilt => "decaying-sine-tilt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mms: Option<MmsField>,
    /// Wavenumber of the sine profiles, in multiples of π.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    pub time_center: f64,
    pub time_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    MaxPrinciple,
    VepsEvolution,
    GradientBound,
    MirandaTalenti,
    Identity,
    SecondDerivative,
    TimeDerivative,
    WeakTimeDerivative,
    EpsilonConvergence,
    ElementaryInequality,
}

impl Check {
    pub fn needs_cutoff(self) -> bool {
        matches!(
            self,
            Check::MirandaTalenti
                | Check::Identity
                | Check::SecondDerivative
                | Check::TimeDerivative
                | Check::WeakTimeDerivative
        )
    }

    /// Checks that consume an ε-sweep rather than one solution.
    pub fn is_sweep(self) -> bool {
        matches!(
            self,
            Check::SecondDerivative | Check::EpsilonConvergence | Check::GradientBound
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default = "default_mode")]
    pub second_derivative_mode: SweepMode,
    /// Sub-boxes for the interior gradient bound, by distance to the
    /// parabolic boundary.
    #[serde(default = "default_box_distances")]
    pub box_distances: Vec<f64>,
    /// Compact subset for ε-convergence.
    #[serde(default = "default_compact")]
    pub compact: InteriorBox,
}

fn default_mode() -> SweepMode {
    SweepMode::Assertion
}

fn default_box_distances() -> Vec<f64> {
    vec![0.25, 0.125]
}

fn default_compact() -> InteriorBox {
    InteriorBox {
        space_margin: 0.25,
        time_lo: 0.02,
        time_hi: f64::MAX,
    }
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            checks: Vec::new(),
            second_derivative_mode: default_mode(),
            box_distances: default_box_distances(),
            compact: default_compact(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: Format,
}

fn default_dir() -> PathBuf {
    PathBuf::from("plap-out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: default_dir(),
            format: Format::default(),
        }
    }
}

/// One invalid field, addressed by its dotted TOML path.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
}

impl ConfigError {
    pub fn fields(&self) -> &[FieldError] {
        match self {
            ConfigError::Invalid(errors) => errors,
            _ => &[],
        }
    }
}

struct Diagnostics(Vec<FieldError>);

impl Diagnostics {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError {
            field: field.into(),
            message: message.into(),
        });
    }

    fn require(&mut self, ok: bool, field: &str, message: impl FnOnce() -> String) {
        if !ok {
            self.push(field, message());
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut d = Diagnostics(Vec::new());
        let dim = self.params.dim;
        if let Err(e) = self.params.validate() {
            let field = match &e {
                plap_core::grid::GridError::InvalidParam { name, .. } => format!("params.{name}"),
                _ => "params".into(),
            };
            d.push(field, e.to_string());
        }
        let g = &self.grid;
        for (name, len) in [("lo", g.lo.len()), ("hi", g.hi.len()), ("nx", g.nx.len())] {
            d.require(len == dim, &format!("grid.{name}"), || {
                format!("needs {dim} entries for dim = {dim}, got {len}")
            });
        }
        if g.lo.len() == dim && g.hi.len() == dim && g.nx.len() == dim {
            if let Err(e) = SpaceTimeGrid::new(&g.lo, &g.hi, &g.nx, self.params.horizon.max(1e-300), 2)
            {
                d.push("grid", e.to_string());
            }
        }
        if let Some(nt) = g.nt {
            d.require(nt >= 3, "grid.nt", || format!("needs at least 3 levels, got {nt}"));
        }

        self.validate_data(&mut d);
        self.validate_cutoff(&mut d);
        self.validate_checks(&mut d);

        if d.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(d.0))
        }
    }

    fn validate_data(&self, d: &mut Diagnostics) {
        let dim = self.params.dim;
        let data = &self.data;
        match (data.profile, data.mms) {
            (None, None) => d.push("data", "set either `profile` or `mms`"),
            (Some(_), Some(_)) => d.push("data", "`profile` and `mms` are mutually exclusive"),
            (Some(profile), None) => {
                d.require(profile.dims().contains(&dim), "data.profile", || {
                    format!("`{}` is not defined for dim = {dim}", profile.name())
                });
            }
            (None, Some(field)) => {
                d.require(dim == 2, "data.mms", || {
                    format!("`{}` is a two-dimensional field", field.name())
                });
            }
        }
        if let Some(slope) = &data.slope {
            d.require(slope.len() == dim, "data.slope", || {
                format!("needs {dim} entries, got {}", slope.len())
            });
        }
        if let Some(center) = &data.center {
            d.require(center.len() == dim, "data.center", || {
                format!("needs {dim} entries, got {}", center.len())
            });
        }
        if let Some(k) = data.mode {
            d.require(k > 0.0 && k.is_finite(), "data.mode", || {
                format!("must be positive, got {k}")
            });
        }
    }

    fn validate_cutoff(&self, d: &mut Diagnostics) {
        let needed = self.verify.checks.iter().any(|c| c.needs_cutoff());
        match &self.cutoff {
            None if needed => d.push("cutoff", "required by the selected checks"),
            None => {}
            Some(c) => {
                if c.center.len() != self.params.dim {
                    d.push(
                        "cutoff.center",
                        format!("needs {} entries, got {}", self.params.dim, c.center.len()),
                    );
                } else if let Ok(grid) = self.base_grid() {
                    if let Err(e) = self.cutoff_function(&grid) {
                        d.push("cutoff", e.to_string());
                    }
                }
            }
        }
    }

    fn validate_checks(&self, d: &mut Diagnostics) {
        let v = &self.verify;
        let p = self.params.p;
        if v.checks.contains(&Check::SecondDerivative)
            && v.second_derivative_mode == SweepMode::Assertion
            && !second_derivative_bound_admits(p, self.params.dim)
        {
            d.push(
                "params.p",
                format!(
                    "p = {p} is outside (6/5, 14/5), where the second-derivative bound \
                     can only be explored (set verify.second_derivative_mode = \"exploration\")"
                ),
            );
        }
        if v.checks.contains(&Check::TimeDerivative) {
            d.require(p > 1.0 && p < 2.0, "params.p", || {
                format!("the time-derivative bound needs 1 < p < 2, got {p}")
            });
        }
        if v.checks.contains(&Check::Identity) {
            d.require(self.params.epsilon > 0.0, "params.epsilon", || {
                "the identity check needs epsilon > 0".into()
            });
        }
        if v.checks.contains(&Check::GradientBound) {
            d.require(v.box_distances.len() >= 2, "verify.box_distances", || {
                format!("needs at least 2 sub-boxes, got {}", v.box_distances.len())
            });
            let mut sorted = v.box_distances.clone();
            sorted.sort_by(f64::total_cmp);
            d.require(
                sorted.windows(2).all(|w| w[0] < w[1]) && sorted.iter().all(|&x| x > 0.0),
                "verify.box_distances",
                || "distances must be positive and distinct".into(),
            );
        }
        if v.checks.iter().any(|c| c.is_sweep()) && self.sweep.is_none() {
            d.push("sweep", "required by the selected checks");
        }
        if let Some(sweep) = &self.sweep {
            let e = &sweep.epsilons;
            let min = if v.checks.contains(&Check::EpsilonConvergence) { 3 } else { 2 };
            d.require(e.len() >= min, "sweep.epsilons", || {
                format!("needs at least {min} values, got {}", e.len())
            });
            d.require(
                e.windows(2).all(|w| w[1] < w[0]) && e.iter().all(|&x| x >= 0.0),
                "sweep.epsilons",
                || "values must be non-negative and strictly decreasing".into(),
            );
        }
    }

    /// Grid at refinement level 0.
    pub fn base_grid(&self) -> Result<SpaceTimeGrid, plap_core::grid::GridError> {
        self.grid_at_level(0)
    }

    /// Grid with `2^level` times as many cells per axis and stored levels.
    pub fn grid_at_level(&self, level: u32) -> Result<SpaceTimeGrid, plap_core::grid::GridError> {
        let factor = 1usize << level;
        let nx: Vec<usize> = self.grid.nx.iter().map(|&n| (n - 1) * factor + 1).collect();
        let nt = match self.grid.nt {
            Some(nt) => (nt - 1) * factor + 1,
            None => {
                // one stored level per stable step
                let probe = SpaceTimeGrid::new(&self.grid.lo, &self.grid.hi, &nx, self.params.horizon, 2)?;
                let dt = plap_core::solver::cfl_dt(&self.params, &probe);
                (self.params.horizon / dt).ceil() as usize + 1
            }
        };
        SpaceTimeGrid::new(&self.grid.lo, &self.grid.hi, &nx, self.params.horizon, nt)
    }

    pub fn cutoff_function(
        &self,
        grid: &SpaceTimeGrid,
    ) -> Result<CutoffFunction, plap_core::calculus::CalculusError> {
        let c = self
            .cutoff
            .as_ref()
            .ok_or_else(|| plap_core::calculus::CalculusError::CutoffSupport {
                detail: "no cutoff configured".into(),
            })?;
        let mut center = [0.0; 2];
        center[..c.center.len()].copy_from_slice(&c.center);
        CutoffFunction::inside(grid, center, c.radius, c.time_center, c.time_radius)
    }

    /// Interior boxes for the gradient bound. Time offsets scale with the
    /// horizon so both distances shrink together.
    pub fn interior_boxes(&self) -> Vec<InteriorBox> {
        let t = self.params.horizon;
        self.verify
            .box_distances
            .iter()
            .map(|&d| InteriorBox {
                space_margin: d,
                time_lo: d * t,
                time_hi: t,
            })
            .collect()
    }

    pub fn compact(&self) -> InteriorBox {
        let mut c = self.verify.compact;
        c.time_hi = c.time_hi.min(self.params.horizon);
        c
    }
}
