//! Shared domain vocabulary: concrete states, semantic mappings, normalization
//! bounds, metric weights and the abstraction configuration.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One recorded decision step of the system under study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcreteState {
    pub episode: u64,
    pub t: u64,
    /// Raw feature values, ordered as in [`DatasetSchema::features`].
    pub features: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    /// Label values, ordered as in [`DatasetSchema::labels`].
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(default)]
    pub unit: String,
}

/// Column layout of a trajectory file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub features: Vec<FeatureSpec>,
    pub action_dim: usize,
    #[serde(default)]
    pub labels: Vec<String>,
}

impl DatasetSchema {
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticDimension {
    pub name: String,
    /// Arithmetic expression over feature names, `t`, `reward` and `v_hat`.
    pub expression: String,
    #[serde(default)]
    pub unit: String,
}

/// Ordered list of semantic dimensions; its length is the semantic arity `J`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticMapping {
    pub dimensions: Vec<SemanticDimension>,
}

impl SemanticMapping {
    pub fn arity(&self) -> usize {
        self.dimensions.len()
    }
}

/// Per-dimension affine normalization bounds, fitted on the modeling split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Bounds {
    pub fn new(names: Vec<String>, min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != names.len() || max.len() != names.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: min.len().min(max.len()),
            });
        }
        for (j, name) in names.iter().enumerate() {
            if !min[j].is_finite() || !max[j].is_finite() {
                return Err(Error::invalid(format!("non-finite bound on `{name}`")));
            }
            if min[j] >= max[j] {
                return Err(Error::DegenerateDimension(name.clone()));
            }
        }
        Ok(Self { names, min, max })
    }

    /// Fits bounds to the component-wise extrema of `rows`.
    pub fn fit<'a>(names: Vec<String>, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let j = names.len();
        let mut min = vec![f64::INFINITY; j];
        let mut max = vec![f64::NEG_INFINITY; j];
        for row in rows {
            if row.len() != j {
                return Err(Error::DimensionMismatch {
                    expected: j,
                    got: row.len(),
                });
            }
            for (d, &x) in row.iter().enumerate() {
                min[d] = min[d].min(x);
                max[d] = max[d].max(x);
            }
        }
        if min.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("cannot fit bounds on an empty sample"));
        }
        Self::new(names, min, max)
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn span(&self, j: usize) -> f64 {
        self.max[j] - self.min[j]
    }

    /// Maps raw values into `[0,1]`, clamping out-of-range components.
    pub fn normalize(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_len(values)?;
        Ok(values
            .iter()
            .enumerate()
            .map(|(j, &x)| ((x - self.min[j]) / self.span(j)).clamp(0.0, 1.0))
            .collect())
    }

    pub fn denormalize(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_len(theta)?;
        Ok(theta
            .iter()
            .enumerate()
            .map(|(j, &u)| self.min[j] + u * self.span(j))
            .collect())
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Free-function form of [`Bounds::normalize`] over explicit min/max pairs.
pub fn normalize(values: &[f64], bounds: &[(f64, f64)]) -> Result<Vec<f64>> {
    if values.len() != bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: bounds.len(),
            got: values.len(),
        });
    }
    values
        .iter()
        .zip(bounds)
        .enumerate()
        .map(|(j, (&x, &(lo, hi)))| {
            if !(lo < hi) {
                return Err(Error::DegenerateDimension(format!("dim{j}")));
            }
            Ok(((x - lo) / (hi - lo)).clamp(0.0, 1.0))
        })
        .collect()
}

/// A normalized semantic coordinate plus the Monte-Carlo return of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticVector {
    pub theta: Vec<f64>,
    pub v_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionDistance {
    #[default]
    TotalVariation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricWeights {
    pub c_r: f64,
    pub c_p: f64,
    pub c_d: f64,
    pub c_t: f64,
    pub epsilon: f64,
    /// Temporal window, in steps of mean step index.
    pub temporal_window: u32,
    pub dp_kind: DistributionDistance,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            c_r: 1.0,
            c_p: 1.0,
            c_d: 1e6,
            c_t: 0.0,
            epsilon: 1.0,
            temporal_window: 5,
            dp_kind: DistributionDistance::TotalVariation,
        }
    }
}

impl MetricWeights {
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (field, v) in [
            ("c_r", self.c_r),
            ("c_p", self.c_p),
            ("c_d", self.c_d),
            ("c_t", self.c_t),
        ] {
            if !v.is_finite() || v < 0.0 {
                out.push(Violation::new(field, format!("{field} must be finite and ≥ 0")));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            out.push(Violation::new("epsilon", "ε must be > 0"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KMethod {
    Elbow,
    Silhouette,
    Gap,
    Canopy,
}

impl KMethod {
    pub const ALL: [KMethod; 4] = [KMethod::Elbow, KMethod::Silhouette, KMethod::Gap, KMethod::Canopy];

    pub fn as_str(self) -> &'static str {
        match self {
            KMethod::Elbow => "elbow",
            KMethod::Silhouette => "silhouette",
            KMethod::Gap => "gap",
            KMethod::Canopy => "canopy",
        }
    }
}

impl fmt::Display for KMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for KMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown k method `{s}`")))
    }
}

/// Parameters of interval refinement, MDP construction and guided blending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractionConfig {
    /// Minimum interval length per semantic dimension (normalized units).
    pub d_min: Vec<f64>,
    /// Maximum interval length per semantic dimension (normalized units).
    pub d_max: Vec<f64>,
    /// Minimum interval occupancy as a fraction of the modeling set.
    pub n_min: f64,
    pub e_mean: f64,
    pub e_max: f64,
    /// Target band `[lo, hi]` for the cell-to-state ratio.
    pub reduction_band: [f64; 2],
    pub gamma: f64,
    /// Hoeffding confidence parameter.
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k_method")]
    pub k_method: KMethod,
    #[serde(default = "half")]
    pub alpha: f64,
    #[serde(default = "half")]
    pub beta: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Largest Hoeffding half-width a retained `(state, action)` pair may have.
    /// `None` disables pruning.
    #[serde(default = "default_p_tol")]
    pub p_tol: Option<f64>,
}

fn default_k_method() -> KMethod {
    KMethod::Silhouette
}
fn half() -> f64 {
    0.5
}
fn default_max_iters() -> usize {
    50
}
fn default_p_tol() -> Option<f64> {
    Some(0.25)
}

impl AbstractionConfig {
    /// ACC-style defaults (one `v_t` row of the reference hyper-parameter
    /// table) replicated over `j` dimensions.
    pub fn with_dimensions(j: usize) -> Self {
        Self {
            d_min: vec![0.010; j],
            d_max: vec![0.050; j],
            n_min: 0.005,
            e_mean: 0.005,
            e_max: 0.01,
            reduction_band: [0.10, 0.30],
            gamma: 0.95,
            delta: 0.05,
            seed: 0,
            k_method: KMethod::Silhouette,
            alpha: 0.5,
            beta: 0.5,
            max_iters: 50,
            p_tol: Some(0.25),
        }
    }

    pub fn arity(&self) -> usize {
        self.d_min.len()
    }
}

/// One broken configuration constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every [`AbstractionConfig`] invariant. Never fails; an empty list
/// means the configuration is usable.
pub fn validate_config(config: &AbstractionConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if config.d_min.len() != config.d_max.len() {
        out.push(Violation::new(
            "d_max",
            format!(
                "d_MIN and d_MAX must have equal length ({} vs {})",
                config.d_min.len(),
                config.d_max.len()
            ),
        ));
    }
    if config.d_min.is_empty() {
        out.push(Violation::new("d_min", "at least one dimension is required"));
    }
    for (j, (&lo, &hi)) in config.d_min.iter().zip(&config.d_max).enumerate() {
        if !lo.is_finite() || !hi.is_finite() {
            out.push(Violation::new(format!("d_min[{j}]"), "interval lengths must be finite"));
            continue;
        }
        if lo <= 0.0 {
            out.push(Violation::new(format!("d_min[{j}]"), "d_MIN must be > 0"));
        }
        if lo > hi {
            out.push(Violation::new(format!("d_max[{j}]"), "d_MIN ≤ d_MAX violated"));
        }
    }
    if !(config.n_min > 0.0 && config.n_min < 1.0) {
        out.push(Violation::new("n_min", "n_MIN must be in (0,1)"));
    }
    if !config.e_mean.is_finite() || !config.e_max.is_finite() || config.e_mean < 0.0 {
        out.push(Violation::new("e_mean", "error thresholds must be finite and ≥ 0"));
    } else if config.e_mean > config.e_max {
        out.push(Violation::new("e_mean", "e_MEAN ≤ e_MAX violated"));
    }
    let [lo, hi] = config.reduction_band;
    if !(lo > 0.0 && lo <= hi && hi < 1.0) {
        out.push(Violation::new("reduction_band", "0 < lo ≤ hi < 1 violated"));
    }
    if !(config.gamma > 0.0 && config.gamma < 1.0) {
        out.push(Violation::new("gamma", "γ must be in (0,1)"));
    }
    if !(config.delta > 0.0 && config.delta < 1.0) {
        out.push(Violation::new("delta", "δ must be in (0,1)"));
    }
    if !config.alpha.is_finite() || !config.beta.is_finite() {
        out.push(Violation::new("alpha", "blend coefficients must be finite"));
    }
    if config.max_iters == 0 {
        out.push(Violation::new("max_iters", "max_iters must be ≥ 1"));
    }
    if let Some(p) = config.p_tol {
        if !(p > 0.0) {
            out.push(Violation::new("p_tol", "p_tol must be > 0"));
        }
    }
    out
}
