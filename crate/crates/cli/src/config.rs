//! TOML experiment configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use mcre_core::env::{EnvProcess, FiniteMarkov, Marginal, MovingAverage};
use mcre_core::mcre::FiniteKernel;
use mcre_core::models::linear::rotation_scaling;
use mcre_core::models::sgld::SgldOverrides;
use mcre_core::models::{Affine, AlphaBarChoice, Gradient, InterArrival};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::LabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output directory; relative paths resolve against the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub environment: EnvConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub couple: CoupleConfig,
    #[serde(default)]
    pub lln: LlnConfig,
    #[serde(default)]
    pub contract: ContractConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

/// One-dimensional law, for i.i.d. environments and moving-average innovations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalConfig {
    Constant { value: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Uniform { low: f64, high: f64 },
    Geometric { decay: f64 },
}

impl MarginalConfig {
    pub fn marginal(&self) -> Marginal {
        match self {
            Self::Constant { value } => Marginal::Constant(*value),
            Self::Discrete { values, probs } => Marginal::Discrete { values: values.clone(), probs: probs.clone() },
            Self::Uniform { low, high } => Marginal::Uniform { low: *low, high: *high },
            Self::Geometric { decay } => Marginal::Geometric { decay: *decay },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Constant {
        value: f64,
    },
    /// I.i.d. draws from a finite law.
    Discrete {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    Geometric {
        decay: f64,
    },
    /// Stationary finite Markov chain; `values` default to the labels `0..k`.
    Markov {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
        transition: Vec<Vec<f64>>,
    },
    MovingAverage {
        coefficients: Vec<f64>,
        innovation: MarginalConfig,
    },
}

impl EnvConfig {
    pub fn process(&self) -> Result<EnvProcess, LabError> {
        let iid = |m: Marginal| -> Result<EnvProcess, LabError> {
            m.validate().map_err(config_err)?;
            Ok(EnvProcess::Iid(m))
        };
        match self {
            Self::Constant { value } => iid(Marginal::Constant(*value)),
            Self::Discrete { values, probs } => iid(Marginal::Discrete { values: values.clone(), probs: probs.clone() }),
            Self::Uniform { low, high } => iid(Marginal::Uniform { low: *low, high: *high }),
            Self::Geometric { decay } => iid(Marginal::Geometric { decay: *decay }),
            Self::Markov { values, transition } => self.markov(values.as_ref(), transition).map(EnvProcess::FiniteMarkov),
            Self::MovingAverage { coefficients, innovation } => {
                MovingAverage::new(coefficients.clone(), innovation.marginal()).map(EnvProcess::MovingAverage).map_err(config_err)
            }
        }
    }

    fn markov(&self, values: Option<&Vec<f64>>, transition: &[Vec<f64>]) -> Result<FiniteMarkov, LabError> {
        match values {
            Some(v) => FiniteMarkov::new(v.clone(), transition.to_vec()),
            None => FiniteMarkov::labelled(transition.to_vec()),
        }
        .map_err(config_err)
    }

    /// The chain behind a Markov environment, for the exact oracle.
    pub fn finite_markov(&self) -> Result<FiniteMarkov, LabError> {
        match self {
            Self::Markov { values, transition } => self.markov(values.as_ref(), transition),
            _ => Err(LabError::Config("the oracle needs a markov environment".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InterArrivalConfig {
    Exponential { rate: f64 },
    ShiftedUniform { shift: f64, width: f64 },
    Deterministic { value: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl InterArrivalConfig {
    pub fn law(&self) -> InterArrival {
        match *self {
            Self::Exponential { rate } => InterArrival::Exponential { rate },
            Self::ShiftedUniform { shift, width } => InterArrival::ShiftedUniform { shift, width },
            Self::Deterministic { value } => InterArrival::Deterministic { value },
            Self::LogNormal { mu, sigma } => InterArrival::LogNormal { mu, sigma },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSearchConfig {
    pub grid: Vec<f64>,
    #[serde(default = "defaults::alpha_horizon")]
    pub horizon: usize,
    #[serde(default = "defaults::reps")]
    pub reps: usize,
}

/// `scale · y + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineConfig {
    #[serde(default)]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
}

impl From<AffineConfig> for Affine {
    fn from(a: AffineConfig) -> Self {
        Affine { scale: a.scale, offset: a.offset }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GradientConfig {
    /// `H(θ, y) = Δ(y) θ + g(y) 1`.
    Quadratic {
        delta: AffineConfig,
        #[serde(default)]
        shift: AffineConfig,
    },
    Logistic {
        ridge: f64,
    },
}

impl GradientConfig {
    pub fn gradient(&self) -> Gradient {
        match *self {
            Self::Quadratic { delta, shift } => Gradient::Quadratic { delta: delta.into(), shift: shift.into() },
            Self::Logistic { ridge } => Gradient::Logistic { ridge },
        }
    }
}

/// A square matrix, either by rows or as `R(rotation_deg) · diag(scales)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixConfig {
    Rows(Vec<Vec<f64>>),
    RotationScaling(RotationScaling),
    Identity(IdentityMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationScaling {
    pub rotation_deg: f64,
    pub scales: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityMatrix {
    pub identity: usize,
}

impl MatrixConfig {
    pub fn matrix(&self) -> Result<DMatrix<f64>, LabError> {
        match self {
            Self::Rows(rows) => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(LabError::Config(format!("matrix rows {rows:?} do not form a non-empty square matrix")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
            Self::RotationScaling(r) => Ok(rotation_scaling(r.rotation_deg, r.scales[0], r.scales[1])),
            Self::Identity(i) if i.identity > 0 => Ok(DMatrix::identity(i.identity, i.identity)),
            Self::Identity(_) => Err(LabError::Config("identity dimension must be positive".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Queue {
        interarrival: InterArrivalConfig,
        /// Almost-sure bound `M` on service times.
        bound: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha_bar: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha_search: Option<AlphaSearchConfig>,
        #[serde(default = "defaults::theta")]
        theta: f64,
        #[serde(default = "defaults::gamma_grid")]
        gamma_grid: Vec<usize>,
        #[serde(default = "defaults::gamma_reps")]
        gamma_reps: usize,
    },
    Sgld {
        lambda: f64,
        #[serde(default = "defaults::one")]
        dim: usize,
        gradient: GradientConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k1: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k2: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k3: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<f64>,
        #[serde(default = "defaults::theta")]
        theta: f64,
        #[serde(default = "defaults::gamma_grid")]
        gamma_grid: Vec<usize>,
        #[serde(default = "defaults::gamma_reps")]
        gamma_reps: usize,
    },
    Linear {
        /// Coefficient tables indexed by environment label; one entry applies to every label.
        a: Vec<MatrixConfig>,
        b: Vec<MatrixConfig>,
        #[serde(default = "defaults::unit")]
        noise_sd: f64,
        p: usize,
        #[serde(default = "defaults::gamma_grid")]
        gamma_grid: Vec<usize>,
        #[serde(default = "defaults::gamma_reps")]
        gamma_reps: usize,
    },
    /// Finite kernel `Q(y)` per environment label.
    Oracle { matrices: Vec<Vec<Vec<f64>>> },
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Queue { .. } => "queue",
            Self::Sgld { .. } => "sgld",
            Self::Linear { .. } => "linear",
            Self::Oracle { .. } => "oracle",
        }
    }

    pub fn alpha_choice(&self) -> Result<AlphaBarChoice, LabError> {
        match self {
            Self::Queue { alpha_bar: Some(a), alpha_search: None, .. } => Ok(AlphaBarChoice::Fixed(*a)),
            Self::Queue { alpha_bar: None, alpha_search: Some(s), .. } => {
                Ok(AlphaBarChoice::Search { grid: s.grid.clone(), horizon: s.horizon, reps: s.reps })
            }
            Self::Queue { .. } => Err(LabError::Config("queue needs exactly one of alpha_bar and alpha_search".into())),
            _ => Err(LabError::Config("alpha_bar applies to queue models only".into())),
        }
    }

    pub fn overrides(&self) -> SgldOverrides {
        match *self {
            Self::Sgld { k1, k2, k3, b, .. } => SgldOverrides { k1, k2, k3, b },
            _ => SgldOverrides::default(),
        }
    }

    pub fn finite_kernel(&self) -> Result<FiniteKernel, LabError> {
        match self {
            Self::Oracle { matrices } => FiniteKernel::new(matrices.clone()).map_err(config_err),
            _ => Err(LabError::Config("not an oracle model".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Lyapunov probe radii: waiting times for the queue, `|θ|` or `|x|` along
    /// the first axis otherwise.
    #[serde(default = "defaults::probes")]
    pub probes: Vec<f64>,
    #[serde(default = "defaults::verify_reps")]
    pub reps: usize,
    #[serde(default = "defaults::tolerance_se")]
    pub tolerance_se: f64,
    #[serde(default = "defaults::smallness_grid")]
    pub smallness_grid: Vec<usize>,
    #[serde(default = "defaults::verify_reps")]
    pub smallness_reps: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            probes: defaults::probes(),
            reps: defaults::verify_reps(),
            tolerance_se: defaults::tolerance_se(),
            smallness_grid: defaults::smallness_grid(),
            smallness_reps: defaults::verify_reps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyConfig {
    Synchronous,
    Split,
    MaximalGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x2: Option<Vec<f64>>,
    #[serde(default = "defaults::couple_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "defaults::verify_reps")]
    pub reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyConfig>,
}

impl Default for CoupleConfig {
    fn default() -> Self {
        Self { x1: None, x2: None, n_grid: defaults::couple_grid(), reps: defaults::verify_reps(), strategy: None }
    }
}

/// Bounded functional `Φ`; vector states enter through their norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiConfig {
    Indicator { state: f64 },
    Min { cap: f64 },
    Constant { value: f64 },
}

impl PhiConfig {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Indicator { state } => f64::from(x == state),
            Self::Min { cap } => x.min(cap),
            Self::Constant { value } => value,
        }
    }

    /// Bound implied by the definition, for states `x >= 0`.
    pub fn natural_bound(&self) -> f64 {
        match *self {
            Self::Indicator { .. } => 1.0,
            Self::Min { cap } => cap.abs(),
            Self::Constant { value } => value.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlnConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(default = "defaults::phi")]
    pub phi: PhiConfig,
    /// Declared `sup |Φ|`; defaults to the bound implied by `phi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default = "defaults::moments")]
    pub p: Vec<f64>,
    #[serde(default = "defaults::lln_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "defaults::lln_reps")]
    pub reps: usize,
    /// Length of the single long run used as reference when no exact value exists.
    #[serde(default = "defaults::reference_steps")]
    pub reference_steps: usize,
}

impl Default for LlnConfig {
    fn default() -> Self {
        Self {
            start: None,
            phi: defaults::phi(),
            bound: None,
            p: defaults::moments(),
            n_grid: defaults::lln_grid(),
            reps: defaults::lln_reps(),
            reference_steps: defaults::reference_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x2: Option<Vec<f64>>,
    #[serde(default = "defaults::contract_steps")]
    pub steps: usize,
    #[serde(default = "defaults::contract_reps")]
    pub reps: usize,
}

impl Default for ContractConfig {
    fn default() -> Self {
        Self { x1: None, x2: None, steps: defaults::contract_steps(), reps: defaults::contract_reps() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleTarget {
    Stationary,
    Start,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default)]
    pub x0: usize,
    #[serde(default = "defaults::oracle_target")]
    pub target: OracleTarget,
    /// Second start when `target = "start"`.
    #[serde(default = "defaults::one")]
    pub x1: usize,
    #[serde(default = "defaults::oracle_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "defaults::oracle_reps")]
    pub reps: usize,
    /// Exact TV at the largest horizon must fall below this.
    #[serde(default = "defaults::oracle_tolerance")]
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            x0: 0,
            target: defaults::oracle_target(),
            x1: 1,
            n_grid: defaults::oracle_grid(),
            reps: defaults::oracle_reps(),
            tolerance: defaults::oracle_tolerance(),
        }
    }
}

mod defaults {
    use super::{OracleTarget, PhiConfig};

    pub fn one() -> usize {
        1
    }
    pub fn unit() -> f64 {
        1.0
    }
    pub fn theta() -> f64 {
        0.5
    }
    pub fn reps() -> usize {
        2000
    }
    pub fn alpha_horizon() -> usize {
        50
    }
    pub fn gamma_grid() -> Vec<usize> {
        vec![25, 50, 100]
    }
    pub fn gamma_reps() -> usize {
        2000
    }
    pub fn probes() -> Vec<f64> {
        vec![0.0, 0.5, 1.0, 2.0, 5.0]
    }
    pub fn verify_reps() -> usize {
        10_000
    }
    pub fn tolerance_se() -> f64 {
        mcre_core::mcre::DEFAULT_DRIFT_TOLERANCE_SE
    }
    pub fn smallness_grid() -> Vec<usize> {
        vec![1, 4, 16, 64, 256]
    }
    pub fn couple_grid() -> Vec<usize> {
        vec![10, 20, 30, 40, 60, 80, 100, 150, 200]
    }
    pub fn phi() -> PhiConfig {
        PhiConfig::Indicator { state: 0.0 }
    }
    pub fn moments() -> Vec<f64> {
        vec![2.0]
    }
    pub fn lln_grid() -> Vec<usize> {
        vec![1000, 4000, 16000]
    }
    pub fn lln_reps() -> usize {
        400
    }
    pub fn reference_steps() -> usize {
        1_000_000
    }
    pub fn contract_steps() -> usize {
        40
    }
    pub fn contract_reps() -> usize {
        1000
    }
    pub fn oracle_target() -> OracleTarget {
        OracleTarget::Stationary
    }
    pub fn oracle_grid() -> Vec<usize> {
        vec![0, 1, 2, 5, 10, 20, 50, 100, 200]
    }
    pub fn oracle_reps() -> usize {
        20_000
    }
    pub fn oracle_tolerance() -> f64 {
        1e-8
    }
}

pub(crate) fn config_err(e: mcre_core::Error) -> LabError {
    LabError::Config(e.to_string())
}

/// 1-based line and column of a byte offset.
fn line_column(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Tagged tables are buffered before deserialization, so an unknown key is
/// reported at the table; look for the key itself up to the next header.
fn unknown_key_offset(src: &str, span: std::ops::Range<usize>, message: &str) -> Option<usize> {
    let key = message.strip_prefix("unknown field `")?.split('`').next()?;
    let region = src.get(span.start..)?;
    let mut offset = span.start;
    for (i, line) in region.split_inclusive('\n').enumerate() {
        let trimmed = line.trim_start();
        if i > 0 && offset >= span.end && trimmed.starts_with('[') {
            break;
        }
        if let Some(rest) = trimmed.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some(offset + line.len() - trimmed.len());
            }
        }
        offset += line.len();
    }
    None
}

pub fn parse(src: &str, path: &Path) -> Result<ExperimentConfig, LabError> {
    toml::from_str(src).map_err(|e| {
        let offset = e.span().map(|s| unknown_key_offset(src, s.clone(), e.message()).unwrap_or(s.start));
        let (line, column) = offset.map_or((0, 0), |o| line_column(src, o));
        LabError::Parse { path: path.to_path_buf(), line, column, message: e.message().to_string() }
    })
}

pub fn load(path: &Path) -> Result<ExperimentConfig, LabError> {
    let src = std::fs::read_to_string(path).map_err(|source| LabError::Io { path: path.to_path_buf(), source })?;
    parse(&src, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUEUE: &str = r#"
seed = 3

[environment]
kind = "constant"
value = 0.25

[model]
kind = "queue"
bound = 0.25
alpha_bar = 1.0
interarrival = { kind = "exponential", rate = 2.0 }
"#;

    #[test]
    fn parses_minimal_queue() {
        let c = parse(QUEUE, Path::new("q.toml")).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.verify, VerifyConfig::default());
        assert!(matches!(c.model.alpha_choice().unwrap(), AlphaBarChoice::Fixed(a) if a == 1.0));
    }

    #[test]
    fn unknown_key_reports_position() {
        let src = QUEUE.replace("bound = 0.25", "bound = 0.25\nbuond = 1");
        match parse(&src, Path::new("q.toml")) {
            Err(LabError::Parse { line, column, message, .. }) => {
                assert_eq!((line, column), (11, 1), "{message}");
                assert!(message.contains("buond"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = parse(QUEUE, Path::new("q.toml")).unwrap();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(parse(&text, Path::new("r.toml")).unwrap(), c);
    }

    #[test]
    fn matrix_forms() {
        let rows: MatrixConfig = toml::from_str::<toml::Table>("m = [[1.0, 2.0], [3.0, 4.0]]").unwrap()["m"].clone().try_into().unwrap();
        assert_eq!(rows.matrix().unwrap()[(1, 0)], 3.0);
        let r = MatrixConfig::RotationScaling(RotationScaling { rotation_deg: 270.0, scales: [1.5, 0.4] });
        let minus = -rotation_scaling(90.0, 1.5, 0.4);
        assert!((r.matrix().unwrap() - minus).norm() < 1e-12);
        assert!(MatrixConfig::Rows(vec![vec![1.0, 2.0]]).matrix().is_err());
    }

    #[test]
    fn line_column_counts_from_one() {
        assert_eq!(line_column("ab\ncd", 4), (2, 2));
        assert_eq!(line_column("ab", 0), (1, 1));
    }
}
