//! Stage orchestration: every stage reads the JSON artifacts of its
//! prerequisites, checks they were produced under the same configuration and
//! seed, and writes its own artifact into the output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::ActionAbstraction;
use crate::cluster::{default_k_range, select_k_cached, validate_epsilon, ClusterCache, Clustering, EpsilonReport, KSelection};
use crate::config::{ClusteringConfig, EnvKind, PipelineConfig};
use crate::env::{AccEnv, Environment, IcaEnv, LkaEnv};
use crate::error::{Error, Result};
use crate::eval::{compare_metrics, compression_ratio, EvalReport};
use crate::guide::{compare_arms, curves_csv, solve_policy, ArmComparison, StateMapper};
use crate::ingest::{annotate_returns, load_trajectories, split_dataset, TrajectoryDataset};
use crate::interval::{refine, Refinement};
use crate::mdp::{build_abstract_mdp, state_assignment, AbstractMdp};
use crate::metrics::{cell_statistics, CellStats, Metric, MetricKind};
use crate::model::{Bounds, KMethod};
use crate::semantics::CompiledSemantics;
use crate::verify::{
    check_property, export_prism, export_properties, prism_cross_check, semantic_gap, CrossCheck, GapReport, PropertySpec,
};

pub const ARTIFACT_VERSION: u32 = 1;

/// Initial states handed to an external PRISM run.
const CROSS_CHECK_INITIAL: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Abstract,
    Build,
    ExportPrism,
    Check,
    Gap,
    Eval,
    Guide,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Abstract,
        Stage::Build,
        Stage::ExportPrism,
        Stage::Check,
        Stage::Gap,
        Stage::Eval,
        Stage::Guide,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Abstract => "abstract",
            Stage::Build => "build",
            Stage::ExportPrism => "export-prism",
            Stage::Check => "check",
            Stage::Gap => "gap",
            Stage::Eval => "eval",
            Stage::Guide => "guide",
            Stage::Report => "report",
        }
    }
}

/// Versioned stage output tagged with the configuration it ran under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub version: u32,
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub payload: T,
}

/// Command-line replacements for configuration values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub metric: Option<MetricKind>,
    pub k_method: Option<KMethod>,
    /// Replaces the horizon of every property.
    pub horizon: Option<u32>,
}

impl Overrides {
    pub fn apply(&self, config: &mut PipelineConfig) {
        if let Some(s) = self.seed {
            config.abstraction.seed = s;
        }
        if let Some(m) = self.metric {
            config.metric.kind = m;
        }
        if let Some(k) = self.k_method {
            config.abstraction.k_method = k;
        }
        if let Some(h) = self.horizon {
            for p in &mut config.properties {
                p.horizon = h;
            }
        }
    }
}

/// SHA-256 of the canonical JSON form of the configuration.
pub fn config_hash(config: &PipelineConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("configuration serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Split, annotated data with semantic vectors, shared by all stages.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset_sha256: String,
    pub modeling: TrajectoryDataset,
    pub validation: TrajectoryDataset,
    pub semantics: CompiledSemantics,
    /// Fitted on the modeling split.
    pub bounds: Bounds,
    /// Normalized semantic vector of every modeling state.
    pub theta: Vec<Vec<f64>>,
    /// Raw semantic vector of every validation state.
    pub validation_raw: Vec<Vec<f64>>,
    pub actions: ActionAbstraction,
}

impl Prepared {
    pub fn load(config: &PipelineConfig) -> Result<Self> {
        let ds = load_trajectories(&config.data_path(), &config.schema)?;
        Self::from_dataset(&ds, config)
    }

    pub fn from_dataset(ds: &TrajectoryDataset, config: &PipelineConfig) -> Result<Self> {
        let (modeling, validation) = split_dataset(ds, config.split, config.abstraction.seed)?;
        Self::from_split(modeling, validation, config)
    }

    /// Uses the given halves as they are, without splitting.
    pub fn from_split(modeling: TrajectoryDataset, validation: TrajectoryDataset, config: &PipelineConfig) -> Result<Self> {
        let gamma = config.abstraction.gamma;
        let modeling = annotate_returns(&modeling, gamma)?;
        let validation = annotate_returns(&validation, gamma)?;
        let semantics = CompiledSemantics::compile(&config.semantics, &config.schema)?;
        let raw = semantic_vectors(&semantics, &modeling)?;
        let bounds = Bounds::fit(semantics.names().to_vec(), raw.iter().map(Vec::as_slice))?;
        let theta = raw.iter().map(|r| bounds.normalize(r)).collect::<Result<_>>()?;
        let validation_raw = semantic_vectors(&semantics, &validation)?;
        Ok(Self {
            dataset_sha256: modeling.provenance.sha256.clone(),
            modeling,
            validation,
            semantics,
            bounds,
            theta,
            validation_raw,
            actions: config.action_abstraction()?,
        })
    }
}

fn semantic_vectors(semantics: &CompiledSemantics, ds: &TrajectoryDataset) -> Result<Vec<Vec<f64>>> {
    let v_hat = ds.returns()?;
    ds.states
        .iter()
        .zip(v_hat)
        .map(|(s, &v)| semantics.evaluate(s, v))
        .collect()
}

/// Interval refinement followed by per-cell statistics.
pub fn abstract_cells(prep: &Prepared, config: &PipelineConfig) -> Result<(Refinement, Vec<CellStats>)> {
    let refinement = refine(&prep.theta, &config.abstraction)?;
    let stats = cell_statistics(&refinement.cells, &prep.theta, &prep.modeling, &prep.actions)?;
    Ok((refinement, stats))
}

/// Candidate k values for `n` cells: the explicit list (clipped to `n`) or the
/// configured fraction range.
pub fn candidate_ks(n: usize, c: &ClusteringConfig) -> Result<Vec<usize>> {
    let ks: Vec<usize> = match &c.k_range {
        Some(ks) => ks.iter().copied().filter(|&k| k >= 1 && k <= n).collect(),
        None => default_k_range(n, c.k_fraction, c.k_steps),
    };
    if ks.is_empty() {
        return Err(Error::invalid(format!("no candidate k fits {n} cells")));
    }
    Ok(ks)
}

/// Selects k with the configured method and metric, clusters, and enforces ε.
pub fn cluster_states(stats: &[CellStats], config: &PipelineConfig) -> Result<(KSelection, Clustering, EpsilonReport)> {
    let metric = Metric::new(config.metric.kind, config.metric.weights.clone());
    let seed = config.abstraction.seed;
    let ks = candidate_ks(stats.len(), &config.clustering)?;
    let mut cache = ClusterCache::new();
    let selection = select_k_cached(
        stats,
        config.abstraction.k_method,
        &ks,
        &metric,
        seed,
        config.clustering.max_iters,
        &mut cache,
    )?;
    let mut clustering = match cache.remove(&selection.k) {
        Some(c) => c,
        None => crate::cluster::cluster_cells(stats, selection.k, &metric, seed, config.clustering.max_iters)?,
    };
    let epsilon = validate_epsilon(
        stats,
        &mut clustering,
        &metric,
        config.metric.weights.epsilon,
        config.clustering.split_budget,
        seed,
    )?;
    Ok((selection, clustering, epsilon))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestPayload {
    pub config: PipelineConfig,
    pub source: String,
    pub sha256: String,
    pub states: usize,
    pub episodes: usize,
    pub modeling_episodes: Vec<u64>,
    pub validation_episodes: Vec<u64>,
    pub modeling_states: usize,
    pub validation_states: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractPayload {
    pub bounds: Bounds,
    pub refinement: Refinement,
    pub metric: MetricKind,
    pub selection: KSelection,
    pub clustering: Clustering,
    pub epsilon: EpsilonReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildPayload {
    pub concrete_states: usize,
    pub abstract_states: usize,
    pub compression_ratio: f64,
    pub mdp: AbstractMdp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyValue {
    pub property: String,
    pub spec: PropertySpec,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckPayload {
    pub results: Vec<PropertyValue>,
    /// Present only when an external PRISM binary was configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_check: Option<Vec<CrossCheck>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidePayload {
    pub env: EnvKind,
    pub comparison: ArmComparison,
    pub guided_not_slower: bool,
}

/// A configuration bound to an output directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub config: PipelineConfig,
    pub out: PathBuf,
    hash: String,
}

impl Workspace {
    /// Validates the configuration and creates the output directory.
    pub fn new(config: PipelineConfig, out: &Path) -> Result<Self> {
        let violations = config.validate();
        if !violations.is_empty() {
            return Err(Error::Config(violations.iter().map(ToString::to_string).collect()));
        }
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        Ok(Self {
            hash: config_hash(&config),
            config,
            out: out.to_path_buf(),
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn seed(&self) -> u64 {
        self.config.abstraction.seed
    }

    fn name(&self) -> &str {
        &self.config.name
    }

    pub fn artifact_path(&self, stage: Stage) -> PathBuf {
        let file = match stage {
            Stage::Ingest => "ingest.json".to_string(),
            Stage::Abstract => "abstract.json".to_string(),
            Stage::Build => "mdp.json".to_string(),
            Stage::ExportPrism => format!("{}.prism", self.name()),
            Stage::Check => "check.json".to_string(),
            Stage::Gap => format!("{}.gap.json", self.name()),
            Stage::Eval => format!("{}.eval.json", self.name()),
            Stage::Guide => "guide.json".to_string(),
            Stage::Report => "report.md".to_string(),
        };
        self.out.join(file)
    }

    fn write<T: Serialize>(&self, stage: Stage, payload: T) -> Result<()> {
        let artifact = Artifact {
            version: ARTIFACT_VERSION,
            stage: stage.as_str().to_string(),
            config_hash: self.hash.clone(),
            seed: self.seed(),
            payload,
        };
        let path = self.artifact_path(stage);
        let mut text = serde_json::to_string_pretty(&artifact)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Loads a prerequisite artifact, rejecting missing or stale ones.
    fn read<T: DeserializeOwned>(&self, stage: Stage) -> Result<T> {
        let path = self.artifact_path(stage);
        if !path.exists() {
            return Err(Error::MissingPrerequisite(stage.as_str().to_string()));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let artifact: Artifact<T> =
            serde_json::from_str(&text).map_err(|_| Error::StalePrerequisite(stage.as_str().to_string()))?;
        if artifact.version != ARTIFACT_VERSION || artifact.config_hash != self.hash || artifact.seed != self.seed() {
            return Err(Error::StalePrerequisite(stage.as_str().to_string()));
        }
        Ok(artifact.payload)
    }

    /// Loads the data again and checks it is the file ingest saw.
    fn prepared(&self) -> Result<(Prepared, IngestPayload)> {
        let ingest: IngestPayload = self.read(Stage::Ingest)?;
        let prep = Prepared::load(&self.config)?;
        if prep.dataset_sha256 != ingest.sha256 {
            return Err(Error::StalePrerequisite(Stage::Ingest.as_str().to_string()));
        }
        Ok((prep, ingest))
    }

    fn read_abstract(&self) -> Result<AbstractPayload> {
        let mut p: AbstractPayload = self.read(Stage::Abstract)?;
        p.refinement.cells.reindex();
        Ok(p)
    }

    /// Runs one stage and records its wall time. Returns text for stdout.
    pub fn run(&self, stage: Stage) -> Result<String> {
        let start = Instant::now();
        let text = match stage {
            Stage::Ingest => self.ingest()?,
            Stage::Abstract => self.abstraction()?,
            Stage::Build => self.build()?,
            Stage::ExportPrism => self.export_prism()?,
            Stage::Check => self.check()?,
            Stage::Gap => self.gap()?,
            Stage::Eval => self.eval()?,
            Stage::Guide => self.guide()?,
            Stage::Report => self.report()?,
        };
        self.record_timing(stage, start.elapsed().as_secs_f64())?;
        Ok(text)
    }

    /// Timings live in their own file so artifacts stay reproducible.
    fn record_timing(&self, stage: Stage, secs: f64) -> Result<()> {
        let path = self.out.join("timings.json");
        let mut timings: BTreeMap<String, f64> = std::fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        timings.insert(stage.as_str().to_string(), secs);
        std::fs::write(&path, serde_json::to_string_pretty(&timings)?).map_err(|e| Error::io(&path, e))
    }

    fn ingest(&self) -> Result<String> {
        let ds = load_trajectories(&self.config.data_path(), &self.config.schema)?;
        let prep = Prepared::from_dataset(&ds, &self.config)?;
        let ids = |d: &TrajectoryDataset| d.episode_ids();
        let payload = IngestPayload {
            config: self.config.clone(),
            source: self.config.data.display().to_string(),
            sha256: ds.provenance.sha256.clone(),
            states: ds.len(),
            episodes: ds.num_episodes(),
            modeling_episodes: ids(&prep.modeling),
            validation_episodes: ids(&prep.validation),
            modeling_states: prep.modeling.len(),
            validation_states: prep.validation.len(),
        };
        let text = format!(
            "{} states in {} episodes; modeling {} states / {} episodes, validation {} states / {} episodes\n",
            payload.states,
            payload.episodes,
            payload.modeling_states,
            payload.modeling_episodes.len(),
            payload.validation_states,
            payload.validation_episodes.len()
        );
        self.write(Stage::Ingest, payload)?;
        Ok(text)
    }

    fn abstraction(&self) -> Result<String> {
        let (prep, _) = self.prepared()?;
        let (refinement, stats) = abstract_cells(&prep, &self.config)?;
        let (selection, clustering, epsilon) = cluster_states(&stats, &self.config)?;
        let mut text = String::new();
        let last = refinement.log.get(refinement.selected);
        if let Some(r) = last {
            writeln!(
                text,
                "cells {} (iteration {}, e_mean {:.5}, e_max {:.5}, reduction {:.4})",
                r.cells, r.iteration, r.e_mean, r.e_max, r.reduction
            )
            .ok();
        }
        for v in &refinement.not_converged {
            writeln!(text, "not converged: {v}").ok();
        }
        writeln!(
            text,
            "{} selected k = {} under {}; {} clusters wider than ε",
            selection.method,
            clustering.k(),
            self.config.metric.kind,
            epsilon.violations.len()
        )
        .ok();
        self.write(
            Stage::Abstract,
            AbstractPayload {
                bounds: prep.bounds,
                refinement,
                metric: self.config.metric.kind,
                selection,
                clustering,
                epsilon,
            },
        )?;
        Ok(text)
    }

    fn build(&self) -> Result<String> {
        let (prep, _) = self.prepared()?;
        let a = self.read_abstract()?;
        let assignment = state_assignment(&a.refinement.cells, &a.clustering);
        let c = &self.config.abstraction;
        let mdp = build_abstract_mdp(
            &assignment,
            a.clustering.k(),
            &prep.modeling,
            &prep.actions,
            c.gamma,
            c.delta,
            c.p_tol,
        )?;
        let payload = BuildPayload {
            concrete_states: prep.modeling.len(),
            abstract_states: a.clustering.k(),
            compression_ratio: compression_ratio(a.clustering.k(), prep.modeling.len())?,
            mdp,
        };
        let text = format!(
            "{} abstract states (+1 end state), CR {:.2}%, {} pruned pairs, {} degenerate states\n",
            payload.abstract_states,
            100.0 * payload.compression_ratio,
            payload.mdp.pruned.len(),
            payload.mdp.degenerate_states().len()
        );
        self.write(Stage::Build, payload)?;
        Ok(text)
    }

    fn read_mdp(&self) -> Result<AbstractMdp> {
        Ok(self.read::<BuildPayload>(Stage::Build)?.mdp)
    }

    fn export_prism(&self) -> Result<String> {
        let mdp = self.read_mdp()?;
        let model = self.artifact_path(Stage::ExportPrism);
        let props = self.out.join(format!("{}.props", self.name()));
        export_prism(&mdp, &model)?;
        export_properties(&self.config.properties, &mdp.label_names, &props)?;
        Ok(format!("wrote {} and {}\n", model.display(), props.display()))
    }

    fn check(&self) -> Result<String> {
        let mdp = self.read_mdp()?;
        let mut results = Vec::new();
        let mut text = String::new();
        for spec in &self.config.properties {
            let value = check_property(&mdp, spec)?;
            writeln!(text, "{spec}  {value:.9}").ok();
            results.push(PropertyValue {
                property: spec.to_string(),
                spec: spec.clone(),
                value,
            });
        }
        let cross_check = prism_cross_check(&mdp, &self.config.properties, &self.out, CROSS_CHECK_INITIAL)?;
        if let Some(cc) = &cross_check {
            let bad = cc.iter().filter(|c| !c.agrees(1e-6)).count();
            writeln!(text, "PRISM cross-check: {} comparisons, {bad} disagreements", cc.len()).ok();
        }
        self.write(Stage::Check, CheckPayload { results, cross_check })?;
        Ok(text)
    }

    fn gap(&self) -> Result<String> {
        let (prep, _) = self.prepared()?;
        let mdp = self.read_mdp()?;
        let report = semantic_gap(&mdp, &prep.validation, &self.config.properties)?;
        let text = report.to_string();
        self.write(Stage::Gap, report)?;
        Ok(text)
    }

    fn eval(&self) -> Result<String> {
        let (prep, _) = self.prepared()?;
        let a = self.read_abstract()?;
        let stats = cell_statistics(&a.refinement.cells, &prep.theta, &prep.modeling, &prep.actions)?;
        let report = compare_metrics(&prep, &a.refinement.cells, &stats, &self.config)?;
        let text = report.to_string();
        self.write(Stage::Eval, report)?;
        Ok(text)
    }

    fn guide(&self) -> Result<String> {
        let Some(section) = self.config.guide.clone() else {
            return Err(Error::Config(vec!["guide: section required by the guide stage".into()]));
        };
        let (prep, _) = self.prepared()?;
        let a = self.read_abstract()?;
        let mdp = self.read_mdp()?;
        let mapper = StateMapper::new(prep.semantics.clone(), prep.bounds.clone(), a.refinement.cells.clone())?;
        let training = &section.training;
        let policy = solve_policy(&mdp, training.horizon);
        let cells_to_states = &a.clustering.assignment;
        let (comparison, points) = match section.env {
            EnvKind::Acc => self.arms(AccEnv::seeded, &mapper, &prep.actions, &policy, cells_to_states, training)?,
            EnvKind::Lka => {
                let penalty = section.heading_penalty;
                self.arms(|s| LkaEnv::seeded(s, penalty), &mapper, &prep.actions, &policy, cells_to_states, training)?
            }
            EnvKind::Ica => self.arms(IcaEnv::seeded, &mapper, &prep.actions, &policy, cells_to_states, training)?,
        };
        let csv_path = self.out.join("curves.csv");
        std::fs::write(&csv_path, curves_csv(&points)?).map_err(|e| Error::io(&csv_path, e))?;
        let mut text = String::new();
        for arm in &comparison.arms {
            writeln!(text, "{:<13} median episodes to threshold {:>7.1}", arm.arm, arm.median).ok();
        }
        writeln!(text, "β = 0 arm identical to baseline: {}", comparison.beta0_identical).ok();
        let guided_not_slower = comparison.guided_not_slower();
        self.write(
            Stage::Guide,
            GuidePayload {
                env: section.env,
                comparison,
                guided_not_slower,
            },
        )?;
        Ok(text)
    }

    fn arms<E: Environment>(
        &self,
        make: impl Fn(u64) -> E,
        mapper: &StateMapper,
        actions: &ActionAbstraction,
        policy: &crate::guide::AbstractPolicy,
        cell_to_state: &[usize],
        training: &crate::guide::GuideConfig,
    ) -> Result<(ArmComparison, Vec<crate::guide::CurvePoint>)> {
        let probe = make(0);
        if probe.action_ranges() != self.config.actions {
            return Err(Error::Config(vec!["actions: do not match the guide environment".into()]));
        }
        let names: Vec<String> = probe.schema().features.into_iter().map(|f| f.name).collect();
        if names.iter().map(String::as_str).ne(self.config.schema.feature_names()) {
            return Err(Error::Config(vec!["schema.features: do not match the guide environment".into()]));
        }
        compare_arms(make, mapper, actions, policy, cell_to_state, training)
    }

    /// Markdown summary of every artifact present.
    fn report(&self) -> Result<String> {
        let build: BuildPayload = self.read(Stage::Build)?;
        let ingest: IngestPayload = self.read(Stage::Ingest)?;
        let a = self.read_abstract()?;
        let mut md = String::new();
        writeln!(md, "# {}\n", self.name()).ok();
        writeln!(md, "- config hash: `{}`", self.hash).ok();
        writeln!(md, "- seed: {}", self.seed()).ok();
        writeln!(md, "- data: `{}` (sha256 `{}`)", ingest.source, ingest.sha256).ok();
        writeln!(
            md,
            "- states: {} in {} episodes; modeling {}, validation {}\n",
            ingest.states, ingest.episodes, ingest.modeling_states, ingest.validation_states
        )
        .ok();
        writeln!(md, "## Abstraction\n").ok();
        if let Some(r) = a.refinement.log.get(a.refinement.selected) {
            writeln!(
                md,
                "- interval cells: {} after {} iterations (e_mean {:.5}, e_max {:.5}, reduction {:.4})",
                r.cells,
                a.refinement.log.len(),
                r.e_mean,
                r.e_max,
                r.reduction
            )
            .ok();
        }
        if !a.refinement.converged() {
            writeln!(md, "- refinement did not converge: {}", a.refinement.not_converged.join("; ")).ok();
        }
        writeln!(md, "- metric: {}; k method: {}; k = {}", a.metric, a.selection.method, a.clustering.k()).ok();
        writeln!(md, "- clusters wider than ε = {}: {}", a.epsilon.epsilon, a.epsilon.violations.len()).ok();
        writeln!(
            md,
            "- abstract MDP: {} states + end state, CR {:.2}%, {} pruned pairs\n",
            build.abstract_states,
            100.0 * build.compression_ratio,
            build.mdp.pruned.len()
        )
        .ok();
        if let Ok(check) = self.read::<CheckPayload>(Stage::Check) {
            writeln!(md, "## Model checking\n\n| property | value |\n|---|---|").ok();
            for r in &check.results {
                writeln!(md, "| `{}` | {:.6} |", r.property, r.value).ok();
            }
            md.push('\n');
        }
        if let Ok(gap) = self.read::<GapReport>(Stage::Gap) {
            writeln!(md, "## Semantic gap\n\n| property | verified | empirical | error |\n|---|---|---|---|").ok();
            for r in &gap.rows {
                writeln!(md, "| `{}` | {:.6} | {:.6} | {:.6} |", r.property, r.verified, r.empirical, r.error).ok();
            }
            md.push('\n');
        }
        if let Ok(eval) = self.read::<EvalReport>(Stage::Eval) {
            writeln!(md, "## Metric comparison\n\n| metric | k method | cells | states | CR | MAE |\n|---|---|---|---|---|---|").ok();
            for r in &eval.rows {
                writeln!(
                    md,
                    "| {} | {} | {} | {} | {:.2}% | {:.6} |",
                    r.metric,
                    r.k_method,
                    r.cells,
                    r.k,
                    100.0 * r.compression_ratio,
                    r.mae
                )
                .ok();
            }
            md.push('\n');
        }
        if let Ok(g) = self.read::<GuidePayload>(Stage::Guide) {
            writeln!(md, "## Guided learning\n\n| arm | median episodes to threshold |\n|---|---|").ok();
            for arm in &g.comparison.arms {
                writeln!(md, "| {} | {:.1} |", arm.arm, arm.median).ok();
            }
            writeln!(md, "\nβ = 0 arm identical to baseline: {}", g.comparison.beta0_identical).ok();
        }
        let path = self.artifact_path(Stage::Report);
        std::fs::write(&path, &md).map_err(|e| Error::io(&path, e))?;
        Ok(md)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_are_unique() {
        let names: std::collections::BTreeSet<_> = Stage::ALL.iter().map(|s| s.as_str()).collect();
        assert_eq!(names.len(), Stage::ALL.len());
    }

    #[test]
    fn overrides_replace_selected_fields() {
        let mut c: PipelineConfig = serde_json::from_str(
            r#"{"name":"t","data":"d.csv","schema":{"features":[{"name":"x"}],"action_dim":1},
                "semantics":{"dimensions":[{"name":"x","expression":"x"}]},
                "actions":[{"lower":0,"upper":1,"granularity":0.5}],
                "abstraction":{"d_min":[0.01],"d_max":[0.05],"n_min":0.01,"e_mean":0.005,"e_max":0.01,
                               "reduction_band":[0.1,0.3],"gamma":0.95,"delta":0.05},
                "properties":[{"kind":"RminC","horizon":3}]}"#,
        )
        .unwrap();
        let before = config_hash(&c);
        Overrides {
            seed: Some(9),
            metric: Some(MetricKind::Euclidean),
            k_method: Some(KMethod::Gap),
            horizon: Some(7),
        }
        .apply(&mut c);
        assert_eq!(c.abstraction.seed, 9);
        assert_eq!(c.metric.kind, MetricKind::Euclidean);
        assert_eq!(c.abstraction.k_method, KMethod::Gap);
        assert_eq!(c.properties[0].horizon, 7);
        assert_ne!(config_hash(&c), before);
        assert_eq!(config_hash(&c), config_hash(&c.clone()));
    }
}
