//! Pipeline configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::action::{ActionAbstraction, ActionRange};
use crate::env::HeadingPenalty;
use crate::error::{Error, Result};
use crate::guide::GuideConfig;
use crate::metrics::MetricKind;
use crate::model::{validate_config, AbstractionConfig, DatasetSchema, KMethod, MetricWeights, SemanticMapping, Violation};
use crate::verify::PropertySpec;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub kind: MetricKind,
    pub weights: MetricWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    /// Explicit candidate k values; derived from the cell count when absent.
    pub k_range: Option<Vec<usize>>,
    /// Candidate range as fractions of the cell count.
    pub k_fraction: [f64; 2],
    pub k_steps: usize,
    pub max_iters: usize,
    /// Bisections allowed while enforcing the ε diameter.
    pub split_budget: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k_range: None,
            k_fraction: [0.4, 0.8],
            k_steps: 5,
            max_iters: crate::cluster::DEFAULT_MAX_ITERS,
            split_budget: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub metrics: Vec<MetricKind>,
    pub k_methods: Vec<KMethod>,
    /// Select k once per method under the first metric and reuse it for the
    /// others, so rows differ only in the metric.
    pub shared_k: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: MetricKind::ALL.to_vec(),
            k_methods: KMethod::ALL.to_vec(),
            shared_k: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Acc,
    Lka,
    Ica,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuideSection {
    pub env: EnvKind,
    #[serde(default)]
    pub heading_penalty: HeadingPenalty,
    #[serde(default)]
    pub training: GuideConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Base name of the exported model files.
    pub name: String,
    /// Trajectory file, relative to the configuration file.
    pub data: PathBuf,
    pub schema: DatasetSchema,
    pub semantics: SemanticMapping,
    pub actions: Vec<ActionRange>,
    pub abstraction: AbstractionConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    /// Modeling : validation episode ratio.
    #[serde(default = "default_split")]
    pub split: (u32, u32),
    #[serde(default)]
    pub properties: Vec<PropertySpec>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guide: Option<GuideSection>,
    /// Directory the relative data path is resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_split() -> (u32, u32) {
    (8, 2)
}

impl PipelineConfig {
    /// Reads a JSON configuration. Structural errors surface as [`Error::Config`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn data_path(&self) -> PathBuf {
        crate::ingest::resolve(&self.base_dir, &self.data)
    }

    pub fn action_abstraction(&self) -> Result<ActionAbstraction> {
        ActionAbstraction::new(self.actions.clone())
    }

    /// Every broken constraint; empty when the configuration is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = validate_config(&self.abstraction);
        out.extend(self.metric.weights.validate());
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            out.push(Violation::new("name", "name must be non-empty and use [A-Za-z0-9_-]"));
        }
        if self.semantics.arity() != self.abstraction.arity() {
            out.push(Violation::new(
                "abstraction.d_min",
                format!(
                    "{} interval lengths for {} semantic dimensions",
                    self.abstraction.arity(),
                    self.semantics.arity()
                ),
            ));
        }
        if self.actions.len() != self.schema.action_dim {
            out.push(Violation::new(
                "actions",
                format!("{} ranges for action dimension {}", self.actions.len(), self.schema.action_dim),
            ));
        }
        if let Err(e) = self.action_abstraction() {
            out.push(Violation::new("actions", e.to_string()));
        }
        if let Err(e) = crate::semantics::CompiledSemantics::compile(&self.semantics, &self.schema) {
            out.push(Violation::new("semantics", e.to_string()));
        }
        if self.split.0 == 0 || self.split.1 == 0 {
            out.push(Violation::new("split", "both split parts must be positive"));
        }
        let c = &self.clustering;
        if let Some(ks) = &c.k_range {
            if ks.is_empty() || ks.contains(&0) {
                out.push(Violation::new("clustering.k_range", "candidates must be non-empty and ≥ 1"));
            }
        }
        let [lo, hi] = c.k_fraction;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            out.push(Violation::new("clustering.k_fraction", "need 0 < lo ≤ hi ≤ 1"));
        }
        if c.k_steps == 0 || c.max_iters == 0 {
            out.push(Violation::new("clustering", "k_steps and max_iters must be ≥ 1"));
        }
        for (i, p) in self.properties.iter().enumerate() {
            if let Err(e) = p.validate(&self.schema.labels) {
                out.push(Violation::new(format!("properties[{i}]"), e.to_string()));
            }
        }
        if self.eval.metrics.is_empty() || self.eval.k_methods.is_empty() {
            out.push(Violation::new("eval", "at least one metric and one k method"));
        }
        if let Some(g) = &self.guide {
            let t = &g.training;
            if t.episodes == 0 {
                out.push(Violation::new("guide.training.episodes", "must be ≥ 1"));
            }
            if t.seeds.is_empty() {
                out.push(Violation::new("guide.training.seeds", "at least one seed"));
            }
            for (field, v) in [
                ("learning_rate", t.learning_rate),
                ("epsilon_start", t.epsilon_start),
                ("epsilon_end", t.epsilon_end),
                ("discount", t.discount),
            ] {
                if !(0.0..=1.0).contains(&v) {
                    out.push(Violation::new(format!("guide.training.{field}"), "must be in [0,1]"));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> &'static str {
        r#"{
          "name": "toy",
          "data": "toy.csv",
          "schema": {"features": [{"name": "x"}], "action_dim": 1, "labels": ["bad"]},
          "semantics": {"dimensions": [{"name": "x", "expression": "x"}]},
          "actions": [{"lower": 0.0, "upper": 1.0, "granularity": 0.5}],
          "abstraction": {"d_min": [0.01], "d_max": [0.05], "n_min": 0.01, "e_mean": 0.005,
                          "e_max": 0.01, "reduction_band": [0.1, 0.3], "gamma": 0.95, "delta": 0.05},
          "properties": [{"kind": "PmaxF", "horizon": 5, "label": "bad"}]
        }"#
    }

    #[test]
    fn defaults_fill_optional_sections() {
        let c: PipelineConfig = serde_json::from_str(sample()).unwrap();
        assert_eq!(c.split, (8, 2));
        assert_eq!(c.metric.kind, MetricKind::Spatiotemporal);
        assert_eq!(c.eval.metrics.len(), 3);
        assert!(c.validate().is_empty(), "{:?}", c.validate());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = sample().replacen("\"name\"", "\"nmae\": 1, \"name\"", 1);
        assert!(serde_json::from_str::<PipelineConfig>(&text).is_err());
    }

    #[test]
    fn violations_are_listed() {
        let mut c: PipelineConfig = serde_json::from_str(sample()).unwrap();
        c.abstraction.d_max = vec![0.05, 0.05];
        c.properties.push(PropertySpec::reach_max("nope", 3));
        let v = c.validate();
        let fields: Vec<&str> = v.iter().map(|x| x.field.as_str()).collect();
        assert!(fields.contains(&"properties[1]"), "{fields:?}");
        assert!(fields.contains(&"d_max"), "{fields:?}");
    }

    #[test]
    fn data_path_is_relative_to_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, sample()).unwrap();
        let c = PipelineConfig::load(&p).unwrap();
        assert_eq!(c.data_path(), dir.path().join("toy.csv"));
    }
}
