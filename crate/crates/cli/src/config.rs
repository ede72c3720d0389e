//! TOML experiment configuration.
//!
//! Every section is optional and falls back to the defaults below; unknown
//! keys are rejected.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use viscolab::entire::{constant_family, growth_rhs, BoundaryFamily};
use viscolab::operators::{
    hamiltonian_library, Coefficient, EllipticityPair, HamiltonianFamily, HamiltonianH, OperatorF, OperatorKind,
};
use viscolab::solver::{Method, ProblemSpec, ScalarFn, SolveOptions};
use viscolab::uniqueness::{CounterexampleField, Sign};

use crate::error::{schema, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    VerifyBarrier,
    Solve,
    Entire,
    Uniqueness,
    CheckHamiltonian,
    Oracle,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::VerifyBarrier => "verify-barrier",
            Self::Solve => "solve",
            Self::Entire => "entire",
            Self::Uniqueness => "uniqueness",
            Self::CheckHamiltonian => "check-hamiltonian",
            Self::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Dirichlet data for `solve`.
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub barrier: BarrierConfig,
    #[serde(default)]
    pub entire: EntireConfig,
    #[serde(default)]
    pub uniqueness: UniquenessConfig,
    #[serde(default)]
    pub hamiltonian_check: HamiltonianCheckConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            out: None,
            problem: ProblemConfig::default(),
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            boundary: BoundaryConfig::default(),
            barrier: BarrierConfig::default(),
            entire: EntireConfig::default(),
            uniqueness: UniquenessConfig::default(),
            hamiltonian_check: HamiltonianCheckConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Schema {
            key: "config".into(),
            message: e.message().to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    Laplacian,
    PucciPlus { lambda: f64, big_lambda: f64 },
    PucciMinus { lambda: f64, big_lambda: f64 },
    WeightedTrace { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    Constant { value: f64 },
    /// `f = −(1 + |x|^ρ)`.
    Growth { rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub operator: OperatorConfig,
    pub hamiltonian: HamiltonianFamily<f64>,
    /// Use `−H` in place of `H`.
    pub negate_hamiltonian: bool,
    pub sigma0: f64,
    pub s: f64,
    pub source: SourceConfig,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            operator: OperatorConfig::Laplacian,
            hamiltonian: HamiltonianFamily::Prototype {
                c1: Coefficient::constant(0.0),
                cm: Coefficient::constant(1.0),
                m: 2.0,
            },
            negate_hamiltonian: false,
            sigma0: 0.1,
            s: 3.0,
            source: SourceConfig::Constant { value: 0.0 },
        }
    }
}

fn core(section: &str) -> impl Fn(viscolab::Error) -> CliError + '_ {
    move |e| match e {
        viscolab::Error::InvalidParameter { name, reason } => schema(format!("{section}.{name}"), reason),
        other => CliError::Numerical(other),
    }
}

impl ProblemConfig {
    pub fn hamiltonian(&self) -> Result<HamiltonianH<f64>, CliError> {
        let h = hamiltonian_library(self.hamiltonian.clone(), self.sigma0).map_err(core("problem.hamiltonian"))?;
        Ok(if self.negate_hamiltonian { h.negated() } else { h })
    }

    pub fn operator(&self) -> Result<OperatorF<f64>, CliError> {
        let pair = |l: f64, b: f64| EllipticityPair::new(l, b).map_err(core("problem.operator"));
        Ok(match self.operator {
            OperatorConfig::Laplacian => OperatorF::laplacian(),
            OperatorConfig::PucciPlus { lambda, big_lambda } => OperatorF::pucci_plus(pair(lambda, big_lambda)?),
            OperatorConfig::PucciMinus { lambda, big_lambda } => OperatorF::pucci_minus(pair(lambda, big_lambda)?),
            OperatorConfig::WeightedTrace { c } => OperatorF::new(OperatorKind::WeightedTrace(c), pair(c, c)?),
        })
    }

    pub fn build(&self) -> Result<ProblemSpec<f64>, CliError> {
        let f: ScalarFn<f64> = match self.source {
            SourceConfig::Constant { value } => Arc::new(move |_| value),
            SourceConfig::Growth { rho } => {
                if !(rho >= 0.0) {
                    return Err(schema("problem.source.rho", "must be nonnegative"));
                }
                growth_rhs(rho)
            }
        };
        ProblemSpec::new(self.operator()?, self.hamiltonian()?, self.s, f).map_err(core("problem"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub h: f64,
    pub radius: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            h: 0.02,
            radius: 1.0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(1..=2).contains(&self.dim) {
            return Err(schema("grid.dim", "must be 1 or 2"));
        }
        if !(self.h > 0.0) {
            return Err(schema("grid.h", "must be positive"));
        }
        if !(self.radius > 0.0) {
            return Err(schema("grid.radius", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Newton,
            tol: 1e-8,
            max_iter: 400,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> Result<SolveOptions<f64>, CliError> {
        if !(self.tol > 0.0) {
            return Err(schema("solver.tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(schema("solver.max_iter", "must be positive"));
        }
        Ok(SolveOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            method: self.method,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    Constant {
        value: f64,
    },
    /// `α e^{±√2 x_axis} + 1`.
    Counterexample {
        alpha: f64,
        #[serde(default = "plus")]
        sign: Sign,
        #[serde(default)]
        axis: usize,
    },
}

fn plus() -> Sign {
    Sign::Plus
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self::Constant { value: 0.0 }
    }
}

impl BoundaryConfig {
    pub fn family(&self, key: &str, dim: usize) -> Result<BoundaryFamily<f64>, CliError> {
        match *self {
            Self::Constant { value } => Ok(constant_family(value)),
            Self::Counterexample { alpha, sign, axis } => {
                let field = CounterexampleField::new(alpha, sign, axis, dim).map_err(|e| match e {
                    viscolab::Error::InvalidParameter { name, reason } => schema(format!("{key}.{name}"), reason),
                    other => schema(key.to_string(), other.to_string()),
                })?;
                Ok(field.boundary_family())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierConfig {
    pub s: f64,
    pub m: f64,
    pub n: usize,
    pub lambda: f64,
    pub big_lambda: f64,
    pub gamma1: f64,
    pub gamma: f64,
    pub delta: f64,
    pub radius: f64,
    pub h: f64,
    /// Multiplies `C_R`; values below 1 falsify the inequality.
    pub c_r_scale: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            s: 3.0,
            m: 2.0,
            n: 1,
            lambda: 1.0,
            big_lambda: 1.0,
            gamma1: 0.0,
            gamma: 1.0,
            delta: 1.0,
            radius: 1.0,
            h: 0.01,
            c_r_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalBoundConfig {
    pub r: f64,
    #[serde(default)]
    pub center: Vec<f64>,
    /// ABP constant; fitted on constant sources when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abp_c: Option<f64>,
    #[serde(default = "one")]
    pub delta_hat: f64,
    #[serde(default = "half")]
    pub r_max: f64,
    #[serde(default = "one")]
    pub c0_scale: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntireConfig {
    pub k_max: usize,
    pub boundary: BoundaryConfig,
    /// Second boundary family; its solutions are compared on `B_1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_boundary: Option<BoundaryConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilization_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_bound: Option<LocalBoundConfig>,
    /// Tabulate the growth profile with this `ρ`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_rho: Option<f64>,
}

impl Default for EntireConfig {
    fn default() -> Self {
        Self {
            k_max: 8,
            boundary: BoundaryConfig::default(),
            reference_boundary: None,
            stabilization_threshold: None,
            local_bound: None,
            growth_rho: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniquenessConfig {
    pub k_max: usize,
    pub boundary_a: BoundaryConfig,
    pub boundary_b: BoundaryConfig,
    /// Radii ignored by the monotonicity check.
    pub skip: usize,
    /// For `s ≤ m`: the centre separation must stay above 0.9 times this.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_separation: Option<f64>,
}

impl Default for UniquenessConfig {
    fn default() -> Self {
        Self {
            k_max: 8,
            boundary_a: BoundaryConfig::Constant { value: 0.0 },
            boundary_b: BoundaryConfig::Constant { value: 50.0 },
            skip: 2,
            expected_separation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HamiltonianCheckConfig {
    pub family: HamiltonianFamily<f64>,
    pub negate: bool,
    pub sigma0: f64,
    pub dim: usize,
    pub samples: usize,
}

impl Default for HamiltonianCheckConfig {
    fn default() -> Self {
        Self {
            family: ProblemConfig::default().hamiltonian,
            negate: false,
            sigma0: 0.1,
            dim: 2,
            samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub s: Vec<f64>,
    pub samples: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            s: vec![1.5, 2.0, 2.5, 3.0, 4.0],
            samples: 2001,
        }
    }
}
