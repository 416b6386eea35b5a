use std::path::{Path, PathBuf};

use serde::Deserialize;

use stein_bounds::clt::dyadic_grid;
use stein_bounds::{hermite_distribution, DiscreteDistribution, RidgeFunction, TestFunction};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Bound,
    VerifyStein,
    Rate,
    MvnBound,
    Thm34,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub command: Command,
    pub p: Option<usize>,
    pub d: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<NSpec>,
    pub n_grid: Option<NGrid>,
    pub quadrature_order: Option<usize>,
    pub threads: Option<usize>,
    pub distribution: Option<DistributionSpec>,
    pub test_function: Option<TestFunctionSpec>,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub rate: RateSpec,
    pub thm34: Option<Thm34Spec>,
    #[serde(default)]
    pub mvn: MvnSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NSpec {
    One(u64),
    Many(Vec<u64>),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NGrid {
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistributionSpec {
    Rademacher,
    Hermite { m: usize },
    Point { value: f64 },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFunctionSpec {
    Cosine {
        #[serde(default = "one")]
        a: f64,
        #[serde(default)]
        phase: f64,
        direction: Option<Vec<f64>>,
    },
    Logistic {
        #[serde(default = "one")]
        a: f64,
        direction: Option<Vec<f64>>,
    },
    Constant {
        value: f64,
        direction: Option<Vec<f64>>,
    },
    Csv {
        path: PathBuf,
        order: usize,
        direction: Option<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_w_min")]
    pub w_min: f64,
    #[serde(default = "default_w_max")]
    pub w_max: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_k_max() -> usize {
    4
}

fn default_w_min() -> f64 {
    -8.0
}

fn default_w_max() -> f64 {
    8.0
}

fn default_step() -> f64 {
    0.01
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            k_max: default_k_max(),
            w_min: default_w_min(),
            w_max: default_w_max(),
            step: default_step(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMethod {
    #[default]
    Exact,
    Mc,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    #[serde(default)]
    pub method: RateMethod,
    #[serde(default = "default_reps")]
    pub reps: u64,
    pub expected_slope: Option<f64>,
    #[serde(default = "default_slope_tolerance")]
    pub slope_tolerance: f64,
}

fn default_reps() -> u64 {
    100_000
}

fn default_slope_tolerance() -> f64 {
    0.1
}

impl Default for RateSpec {
    fn default() -> Self {
        RateSpec {
            method: RateMethod::Exact,
            reps: default_reps(),
            expected_slope: None,
            slope_tolerance: default_slope_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonSource {
    /// `ε_k = (k-1)!/(k² n max(‖h^(k)‖, ‖h^(k+2)‖))`.
    #[default]
    Synthetic,
    /// Deficits of the exact law of the normalized sum.
    Distribution,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thm34Spec {
    pub c: f64,
    pub alpha: f64,
    pub delta: f64,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[serde(default)]
    pub epsilon: EpsilonSource,
}

fn default_truncation() -> usize {
    20
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MvnSpec {
    pub sigma: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: default_out() }
    }
}

fn missing(key: &str) -> CliError {
    CliError::Config(format!("missing key `{key}`"))
}

impl Config {
    /// Parses and resolves relative data paths against the config's directory.
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: Config = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(DistributionSpec::Csv { path }) = &mut config.distribution {
            *path = base.join(&*path);
        }
        if let Some(TestFunctionSpec::Csv { path, .. }) = &mut config.test_function {
            *path = base.join(&*path);
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if let Some(p) = self.p {
            if p == 0 {
                return Err(CliError::Config("`p` must be at least 1".into()));
            }
        }
        if self.d == Some(0) {
            return Err(CliError::Config("`d` must be at least 1".into()));
        }
        if self.n.is_some() && self.n_grid.is_some() {
            return Err(CliError::Config(
                "give either `n` or `n_grid`, not both".into(),
            ));
        }
        let data_path = match (&self.distribution, &self.test_function) {
            (Some(DistributionSpec::Csv { path }), _) => Some(path),
            (_, Some(TestFunctionSpec::Csv { path, .. })) => Some(path),
            _ => None,
        };
        if let Some(path) = data_path {
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "file not found: {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn p(&self) -> Result<usize, CliError> {
        self.p.ok_or_else(|| missing("p"))
    }

    pub fn n_values(&self) -> Result<Vec<u64>, CliError> {
        let ns = match (&self.n, self.n_grid) {
            (Some(NSpec::One(n)), _) => vec![*n],
            (Some(NSpec::Many(ns)), _) => ns.clone(),
            (None, Some(g)) => dyadic_grid(g.start, g.end),
            (None, None) => return Err(missing("n")),
        };
        if ns.is_empty() || ns.contains(&0) || ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config(
                "`n` values must be positive and strictly increasing".into(),
            ));
        }
        Ok(ns)
    }

    pub fn distribution(&self) -> Result<DiscreteDistribution, CliError> {
        let spec = self
            .distribution
            .as_ref()
            .ok_or_else(|| missing("distribution"))?;
        Ok(match spec {
            DistributionSpec::Rademacher => DiscreteDistribution::rademacher(),
            DistributionSpec::Hermite { m } => hermite_distribution(*m)?,
            DistributionSpec::Point { value } => DiscreteDistribution::point_mass(*value),
            DistributionSpec::Csv { path } => {
                DiscreteDistribution::from_csv(path).map_err(CliError::input)?
            }
        })
    }

    fn test_function_spec(&self) -> Result<&TestFunctionSpec, CliError> {
        self.test_function
            .as_ref()
            .ok_or_else(|| missing("test_function"))
    }

    pub fn test_function(&self) -> Result<TestFunction, CliError> {
        Ok(match self.test_function_spec()? {
            TestFunctionSpec::Cosine { a, phase, .. } => TestFunction::cosine(*a, *phase)?,
            TestFunctionSpec::Logistic { a, .. } => TestFunction::logistic(*a)?,
            TestFunctionSpec::Constant { value, .. } => TestFunction::constant(*value),
            TestFunctionSpec::Csv { path, order, .. } => {
                TestFunction::from_csv(path, *order).map_err(CliError::input)?
            }
        })
    }

    /// `h(w) = g(⟨u, w⟩)`; the direction defaults to all ones.
    pub fn ridge_function(&self, d: usize) -> Result<RidgeFunction, CliError> {
        let direction = match self.test_function_spec()? {
            TestFunctionSpec::Cosine { direction, .. }
            | TestFunctionSpec::Logistic { direction, .. }
            | TestFunctionSpec::Constant { direction, .. }
            | TestFunctionSpec::Csv { direction, .. } => direction.clone(),
        }
        .unwrap_or_else(|| vec![1.0; d]);
        if direction.len() != d {
            return Err(CliError::Config(format!(
                "`direction` has {} entries but d = {d}",
                direction.len()
            )));
        }
        Ok(RidgeFunction::new(direction, self.test_function()?)?)
    }
}
