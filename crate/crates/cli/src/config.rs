//! TOML experiment configuration.
//!
//! Every section is optional; absent sections take the defaults below.
//! Unknown keys are rejected, and errors carry the offending key path.

use std::path::Path;

use grazing_lab::densities::DensityModel;
use grazing_lab::dsmc::SolverConfig;
use grazing_lab::dualpairs::{pair_by_name, DualPair};
use grazing_lab::kernels::{AngularKernel, KernelSet, KineticKernel, SpatialKernel};
use grazing_lab::quadrature::{GridConfig, GridRule, SamplerConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "GRAZING_LAB_SEED";

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub density: DensitySpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub pair: PairSpec,
    #[serde(default)]
    pub mc: McSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub functionals: FunctionalsSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    /// `d = 2`, velocity covariance `diag(1, 4)`.
    #[default]
    Anisotropic,
    CorrelatedMixture,
    Standard { dim: usize },
    /// `N(0, x_var I) ⊗ N(drift, temperature I)`.
    Maxwellian { dim: usize, x_var: f64, drift: Vec<f64>, temperature: f64 },
    /// Mean of length `2d`, row-major covariance of size `(2d)²`.
    Gaussian { dim: usize, mean: Vec<f64>, cov: Vec<f64> },
}

impl DensitySpec {
    pub fn build(&self) -> grazing_lab::Result<DensityModel> {
        match self {
            Self::Anisotropic => Ok(DensityModel::anisotropic()),
            Self::CorrelatedMixture => Ok(DensityModel::correlated_mixture()),
            Self::Standard { dim } => DensityModel::standard(*dim),
            Self::Maxwellian { dim, x_var, drift, temperature } => DensityModel::maxwellian(*dim, *x_var, drift, *temperature),
            Self::Gaussian { dim, mean, cov } => DensityModel::gaussian(*dim, mean.clone(), cov.clone()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Anisotropic => "anisotropic",
            Self::CorrelatedMixture => "correlated_mixture",
            Self::Standard { .. } => "standard",
            Self::Maxwellian { .. } => "maxwellian",
            Self::Gaussian { .. } => "gaussian",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialForm {
    Constant,
    ExpBracket,
    PowerBracket,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default = "two")]
    pub dim: usize,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "one")]
    pub nu: f64,
    /// Constant of the spatial kernel.
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default = "constant_form")]
    pub spatial: SpatialForm,
    /// Exponent of `power_bracket`.
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "one")]
    pub epsilon: f64,
}

fn two() -> usize {
    2
}
fn one() -> f64 {
    1.0
}
fn constant_form() -> SpatialForm {
    SpatialForm::Constant
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { dim: 2, gamma: 0.0, nu: 1.0, kappa: 1.0, spatial: SpatialForm::Constant, alpha: 0.0, epsilon: 1.0 }
    }
}

impl KernelSpec {
    pub fn build(&self) -> grazing_lab::Result<KernelSet> {
        let kappa = match self.spatial {
            SpatialForm::Constant => SpatialKernel::Constant { c: self.kappa },
            SpatialForm::ExpBracket => SpatialKernel::ExpBracket { c: self.kappa },
            SpatialForm::PowerBracket => SpatialKernel::PowerBracket { c: self.kappa, alpha: self.alpha },
        };
        KernelSet::new(
            KineticKernel::power_law(self.gamma, self.dim)?,
            AngularKernel::power_law(self.nu, self.dim)?,
            kappa,
            self.epsilon,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    #[serde(default = "cosh_name")]
    pub name: String,
    /// Registry name of `Ψ*` when `name = "custom"`.
    #[serde(default)]
    pub psi_star: Option<String>,
}

fn cosh_name() -> String {
    "cosh".into()
}

impl Default for PairSpec {
    fn default() -> Self {
        Self { name: cosh_name(), psi_star: None }
    }
}

impl PairSpec {
    pub fn build(&self) -> grazing_lab::Result<DualPair> {
        pair_by_name(&self.name, self.psi_star.as_deref())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_samples() -> usize {
    200_000
}
fn default_workers() -> usize {
    4
}

impl Default for McSpec {
    fn default() -> Self {
        Self { samples: default_samples(), seed: 0, workers: default_workers() }
    }
}

impl McSpec {
    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig { workers: self.workers, ..SamplerConfig::with_samples(self.samples, self.seed) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Box half-width in standard deviations (midpoint rule only).
    #[serde(rename = "L", default = "default_l")]
    pub l: f64,
    /// Nodes per velocity axis.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_n_x")]
    pub n_x: usize,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    #[serde(default = "default_rule")]
    pub rule: GridRule,
}

fn yes() -> bool {
    true
}
fn default_l() -> f64 {
    GridConfig::default().l
}
fn default_resolution() -> usize {
    GridConfig::default().n_v
}
fn default_n_x() -> usize {
    GridConfig::default().n_x
}
fn default_n_theta() -> usize {
    GridConfig::default().n_theta
}
fn default_rule() -> GridRule {
    GridRule::GaussHermite
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            l: default_l(),
            resolution: default_resolution(),
            n_x: default_n_x(),
            n_theta: default_n_theta(),
            rule: default_rule(),
        }
    }
}

impl OracleSpec {
    pub fn grid(&self) -> GridConfig {
        GridConfig { rule: self.rule, l: self.l, n_x: self.n_x, n_v: self.resolution, n_theta: self.n_theta, ..GridConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepQuantity {
    /// `D^ε_{Ψ*}` of the configured pair against `½D_L`.
    Dissipation,
    /// `⟨Q^ε_B, x₁v₁⟩` against `⟨Q_L, x₁v₁⟩`.
    WeakX1v1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_eps_list")]
    pub eps_list: Vec<f64>,
    #[serde(default = "default_quantity")]
    pub quantity: SweepQuantity,
}

fn default_eps_list() -> Vec<f64> {
    grazing_lab::grazing::DEFAULT_EPS_LIST.to_vec()
}
fn default_quantity() -> SweepQuantity {
    SweepQuantity::Dissipation
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { eps_list: default_eps_list(), quantity: default_quantity() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteName {
    Mc,
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestName {
    X1v1,
    Energy,
    V1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalsSpec {
    #[serde(default = "default_eps_list")]
    pub eps_list: Vec<f64>,
    #[serde(default = "default_route")]
    pub route: RouteName,
    /// Test function of the weak-form rows.
    #[serde(default = "default_test")]
    pub test_function: TestName,
}

fn default_route() -> RouteName {
    RouteName::Mc
}
fn default_test() -> TestName {
    TestName::X1v1
}

impl Default for FunctionalsSpec {
    fn default() -> Self {
        Self { eps_list: default_eps_list(), route: default_route(), test_function: default_test() }
    }
}

/// Solver parameters; the seed comes from `mc.seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub theta_min: Option<f64>,
    #[serde(default)]
    pub neglected_fraction: Option<f64>,
    #[serde(default)]
    pub majorant_a0: Option<f64>,
    #[serde(default)]
    pub a0_cap: Option<f64>,
    #[serde(default = "default_every")]
    pub trace_every: usize,
    #[serde(default = "default_entropy_every")]
    pub entropy_every: usize,
    #[serde(default = "default_k")]
    pub knn_k: usize,
    #[serde(default = "yes")]
    pub whiten: bool,
    #[serde(default)]
    pub dissipation_samples: usize,
}

fn default_n() -> usize {
    1000
}
fn default_dt() -> f64 {
    0.01
}
fn default_horizon() -> f64 {
    0.1
}
fn default_every() -> usize {
    1
}
fn default_entropy_every() -> usize {
    10
}
fn default_k() -> usize {
    4
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            n: default_n(),
            dt: default_dt(),
            horizon: default_horizon(),
            theta_min: None,
            neglected_fraction: None,
            majorant_a0: None,
            a0_cap: None,
            trace_every: default_every(),
            entropy_every: default_entropy_every(),
            knn_k: default_k(),
            whiten: true,
            dissipation_samples: 0,
        }
    }
}

impl SolverSpec {
    pub fn build(&self, seed: u64) -> SolverConfig {
        let mut c = SolverConfig::new(self.n, self.dt, self.horizon, seed);
        c.theta_min = self.theta_min;
        if let Some(f) = self.neglected_fraction {
            c.neglected_fraction = f;
        }
        c.majorant_a0 = self.majorant_a0;
        if let Some(cap) = self.a0_cap {
            c.a0_cap = cap;
        }
        c.trace_every = self.trace_every;
        c.entropy_every = self.entropy_every;
        c.knn_k = self.knn_k;
        c.whiten = self.whiten;
        c.dissipation_samples = self.dissipation_samples;
        c
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Main CSV (or JSON report for the check subcommands).
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub plot: Option<String>,
    /// `simulate` particle dump.
    #[serde(default)]
    pub snapshot: Option<String>,
}

pub fn load(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Parses a TOML document; errors name the key path.
pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
    let de = toml::Deserializer::parse(text).map_err(|e| e.to_string())?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        format!("at `{path}`: {}", e.inner().message())
    })
}

/// `--seed` beats the environment, which beats `mc.seed`.
pub fn resolve_seed(flag: Option<u64>, config_seed: u64) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Validation(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(config_seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.density, DensitySpec::Anisotropic);
        assert_eq!(c.pair.name, "cosh");
        assert_eq!(c.oracle.resolution, 8);
    }

    #[test]
    fn unknown_key_names_its_path() {
        let e = parse("[mc]\nsamples = 10\nsaples = 3\n").unwrap_err();
        assert!(e.contains("mc"), "{e}");
        assert!(e.contains("saples"), "{e}");
    }

    #[test]
    fn missing_variant_field_names_its_path() {
        let e = parse("[density]\nkind = \"standard\"\n").unwrap_err();
        assert!(e.contains("density"), "{e}");
        assert!(e.contains("dim"), "{e}");
    }

    #[test]
    fn full_document_round_trips() {
        let text = r#"
[density]
kind = "gaussian"
dim = 2
mean = [0.0, 0.0, 0.0, 0.0]
cov = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 4.0]

[kernel]
gamma = 1.0
spatial = "power_bracket"
alpha = 2.0

[pair]
name = "custom"
psi_star = "quartic"

[oracle]
L = 5.0
resolution = 6
rule = "midpoint"
"#;
        let c = parse(text).unwrap();
        assert_eq!(c.oracle.l, 5.0);
        assert_eq!(c.oracle.rule, GridRule::Midpoint);
        assert!(c.density.build().is_ok());
        assert!(c.kernel.build().is_ok());
        assert!(c.pair.build().is_ok());
        let again = toml::to_string(&c).unwrap();
        assert_eq!(parse(&again).unwrap().kernel, c.kernel);
    }

    #[test]
    fn guide_example_parses() {
        let guide = include_str!("../../../book/src/cli.md");
        let start = guide.find("```toml\n").expect("toml block") + "```toml\n".len();
        let end = start + guide[start..].find("```").unwrap();
        let c = parse(&guide[start..end]).unwrap();
        assert_eq!(c.density.label(), "maxwellian");
        assert_eq!(c.solver.entropy_every, 10);
        c.kernel.build().unwrap();
    }
}
