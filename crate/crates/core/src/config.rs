//! Run configuration shared by the library driver and the command line.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AxisymDomain;
use crate::params::WeinsteinParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    /// Max-norm error against the closed-form ball solution.
    ExplicitError,
    /// Boundary-gradient mean against `R / (a + 1 + k)` on balls.
    BoundaryGradientMean,
    /// Coefficient of variation of `|u_nu|` on the boundary.
    SerrinConstancy,
    DivergenceVolume,
    DirichletEnergy,
    Pohozaev,
    PIntegral,
    Flux,
    AxisDerivative,
    Positivity,
    PSubharmonicity,
    PConstancy,
    MeanMonotonicity,
    /// Randomised exact check of the curvature-dimension inequality.
    CdExactness,
}

impl CheckName {
    pub const ALL: [CheckName; 14] = [
        CheckName::ExplicitError,
        CheckName::BoundaryGradientMean,
        CheckName::SerrinConstancy,
        CheckName::DivergenceVolume,
        CheckName::DirichletEnergy,
        CheckName::Pohozaev,
        CheckName::PIntegral,
        CheckName::Flux,
        CheckName::AxisDerivative,
        CheckName::Positivity,
        CheckName::PSubharmonicity,
        CheckName::PConstancy,
        CheckName::MeanMonotonicity,
        CheckName::CdExactness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::ExplicitError => "explicit_error",
            CheckName::BoundaryGradientMean => "boundary_gradient_mean",
            CheckName::SerrinConstancy => "serrin_constancy",
            CheckName::DivergenceVolume => "divergence_volume",
            CheckName::DirichletEnergy => "dirichlet_energy",
            CheckName::Pohozaev => "pohozaev",
            CheckName::PIntegral => "p_integral",
            CheckName::Flux => "flux",
            CheckName::AxisDerivative => "axis_derivative",
            CheckName::Positivity => "positivity",
            CheckName::PSubharmonicity => "p_subharmonicity",
            CheckName::PConstancy => "p_constancy",
            CheckName::MeanMonotonicity => "mean_monotonicity",
            CheckName::CdExactness => "cd_exactness",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    20_000
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

fn all_checks() -> Vec<CheckName> {
    CheckName::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: WeinsteinParams,
    pub domain: AxisymDomain,
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "all_checks")]
    pub checks: Vec<CheckName>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn new(params: WeinsteinParams, domain: AxisymDomain, h: f64) -> Self {
        Self {
            params,
            domain,
            grid: GridConfig { h },
            solver: SolverConfig::default(),
            checks: all_checks(),
            output_dir: None,
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.params.validate().map_err(cfg)?;
        self.domain.validate(self.params.k).map_err(cfg)?;
        if !(self.grid.h > 0.0 && self.grid.h.is_finite()) {
            return Err(Error::Config(format!("grid.h must be positive, got {}", self.grid.h)));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol <= 1e-2) {
            return Err(Error::Config(format!("solver.tol must be in (0, 1e-2], got {}", self.solver.tol)));
        }
        if self.solver.max_iter == 0 {
            return Err(Error::Config("solver.max_iter must be positive".into()));
        }
        Ok(())
    }

    /// Set a scalar by dotted path: `params.a`, `grid.h`, `domain.radius`,
    /// `domain.aspect` (ellipsoid semi-axes `R, R * aspect, ..`, `R` taken
    /// from the current radius or first semi-axis), `solver.tol`.
    pub fn with_value(&self, path: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match path {
            "params.a" => c.params.a = value,
            "grid.h" => c.grid.h = value,
            "solver.tol" => c.solver.tol = value,
            "domain.radius" => match &mut c.domain {
                AxisymDomain::Ball { radius, .. } => *radius = value,
                _ => return Err(Error::Config("domain.radius needs a ball".into())),
            },
            "domain.aspect" => {
                let (center, r) = match &c.domain {
                    AxisymDomain::Ball { center, radius } => (center.clone(), *radius),
                    AxisymDomain::Ellipsoid { center, semi_axes } => (center.clone(), semi_axes[0]),
                    AxisymDomain::Box { .. } => return Err(Error::Config("domain.aspect needs a ball or ellipsoid".into())),
                };
                let mut semi = vec![r * value; center.len() + 1];
                semi[0] = r;
                c.domain = AxisymDomain::ellipsoid(center, semi);
            }
            _ => return Err(Error::Config(format!("unknown sweep path {path}"))),
        }
        c.validate()?;
        Ok(c)
    }
}
