//! Loading, validation, splitting and return annotation of trajectory files.
//!
//! Two on-disk layouts are accepted:
//!
//! * JSONL, one object per row:
//!   `{"episode":0,"t":0,"features":{"gap":31.2,...},"action":[0.4],"reward":1.0,"terminal":false,"labels":{"isCrashed":false}}`
//! * CSV with header `episode,t,<features...>,action_0..action_{d-1},reward,terminal,<labels...>`,
//!   booleans written as `0`/`1`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ConcreteState, DatasetSchema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub sha256: String,
}

impl Provenance {
    pub fn in_memory(name: &str) -> Self {
        Self {
            source: name.to_string(),
            sha256: String::new(),
        }
    }
}

/// An ordered collection of whole episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub schema: DatasetSchema,
    pub states: Vec<ConcreteState>,
    /// Contiguous row ranges, one per episode, in file order.
    pub episodes: Vec<Range<usize>>,
    pub provenance: Provenance,
    /// Discounted Monte-Carlo return per state, once annotated.
    pub v_hat: Option<Vec<f64>>,
}

impl TrajectoryDataset {
    /// Builds a dataset from rows grouped by episode and checks every invariant.
    pub fn from_states(schema: DatasetSchema, states: Vec<ConcreteState>, provenance: Provenance) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::NoEpisodes);
        }
        let m = schema.features.len();
        let mut episodes = Vec::new();
        let mut seen = HashSet::new();
        let mut start = 0;
        for i in 0..states.len() {
            let s = &states[i];
            if s.features.len() != m || s.action.len() != schema.action_dim || s.labels.len() != schema.labels.len() {
                return Err(Error::InvalidDataset(format!(
                    "row {i}: expected {m} features, {} actions, {} labels",
                    schema.action_dim,
                    schema.labels.len()
                )));
            }
            let last_of_episode = i + 1 == states.len() || states[i + 1].episode != s.episode;
            if i > start && s.t <= states[i - 1].t {
                return Err(Error::InvalidDataset(format!(
                    "episode {}: step index {} does not increase",
                    s.episode, s.t
                )));
            }
            if s.terminal != last_of_episode {
                return Err(Error::InvalidDataset(format!(
                    "episode {}: exactly one terminal row, at the end, is required (row t={})",
                    s.episode, s.t
                )));
            }
            if last_of_episode {
                if !seen.insert(s.episode) {
                    return Err(Error::InvalidDataset(format!("episode {} is not contiguous", s.episode)));
                }
                episodes.push(start..i + 1);
                start = i + 1;
            }
        }
        Ok(Self {
            schema,
            states,
            episodes,
            provenance,
            v_hat: None,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn episode_ids(&self) -> Vec<u64> {
        self.episodes.iter().map(|r| self.states[r.start].episode).collect()
    }

    /// Index of the successor row, if `i` is not terminal.
    pub fn successor(&self, i: usize) -> Option<usize> {
        (!self.states[i].terminal).then_some(i + 1)
    }

    /// Returns the annotated returns, or an error if [`annotate_returns`] was not run.
    pub fn returns(&self) -> Result<&[f64]> {
        self.v_hat
            .as_deref()
            .ok_or_else(|| Error::invalid("dataset has no return annotation"))
    }

    /// Keeps only the listed episodes (by position), in ascending order.
    pub fn select_episodes(&self, positions: &[usize], tag: &str) -> Self {
        let mut states = Vec::new();
        let mut episodes = Vec::new();
        let mut v_hat = self.v_hat.as_ref().map(|_| Vec::new());
        for &p in positions {
            let r = self.episodes[p].clone();
            let start = states.len();
            states.extend_from_slice(&self.states[r.clone()]);
            if let (Some(dst), Some(src)) = (v_hat.as_mut(), self.v_hat.as_ref()) {
                dst.extend_from_slice(&src[r]);
            }
            episodes.push(start..states.len());
        }
        Self {
            schema: self.schema.clone(),
            states,
            episodes,
            provenance: Provenance {
                source: format!("{}#{tag}", self.provenance.source),
                sha256: self.provenance.sha256.clone(),
            },
            v_hat,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(csv_header(&self.schema))?;
        for s in &self.states {
            let mut rec = vec![s.episode.to_string(), s.t.to_string()];
            rec.extend(s.features.iter().map(f64::to_string));
            rec.extend(s.action.iter().map(f64::to_string));
            rec.push(s.reward.to_string());
            rec.push(u8::from(s.terminal).to_string());
            rec.extend(s.labels.iter().map(|&b| u8::from(b).to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for s in &self.states {
            let row = JsonRow {
                episode: s.episode,
                t: s.t,
                features: self
                    .schema
                    .features
                    .iter()
                    .zip(&s.features)
                    .map(|(f, &x)| (f.name.clone(), x))
                    .collect(),
                action: s.action.clone(),
                reward: Some(s.reward),
                terminal: s.terminal,
                labels: self.schema.labels.iter().cloned().zip(s.labels.iter().copied()).collect(),
            };
            serde_json::to_writer(&mut out, &row)?;
            out.push(b'\n');
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }
}

fn csv_header(schema: &DatasetSchema) -> Vec<String> {
    let mut h = vec!["episode".to_string(), "t".to_string()];
    h.extend(schema.features.iter().map(|f| f.name.clone()));
    h.extend((0..schema.action_dim).map(|i| format!("action_{i}")));
    h.push("reward".into());
    h.push("terminal".into());
    h.extend(schema.labels.iter().cloned());
    h
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRow {
    episode: u64,
    t: u64,
    features: BTreeMap<String, f64>,
    action: Vec<f64>,
    #[serde(default)]
    reward: Option<f64>,
    terminal: bool,
    #[serde(default)]
    labels: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Ok(Format::Jsonl),
            Some("csv") => Ok(Format::Csv),
            _ => Err(Error::invalid(format!(
                "cannot infer trajectory format of {}",
                path.display()
            ))),
        }
    }
}

/// Loads a trajectory file, inferring the format from its extension.
pub fn load_trajectories(path: &Path, schema: &DatasetSchema) -> Result<TrajectoryDataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let provenance = Provenance {
        source: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    let states = match Format::from_path(path)? {
        Format::Jsonl => parse_jsonl(&bytes, schema)?,
        Format::Csv => parse_csv(&bytes, schema)?,
    };
    TrajectoryDataset::from_states(schema.clone(), states, provenance)
}

fn parse_jsonl(bytes: &[u8], schema: &DatasetSchema) -> Result<Vec<ConcreteState>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        msg: e.to_string(),
    })?;
    let mut states = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        let reward = row.reward.ok_or_else(|| parse_err("missing field `reward`".into()))?;
        let mut missing = Vec::new();
        let features = schema
            .features
            .iter()
            .map(|f| {
                row.features.get(&f.name).copied().unwrap_or_else(|| {
                    missing.push(f.name.clone());
                    f64::NAN
                })
            })
            .collect::<Vec<_>>();
        let labels = schema
            .labels
            .iter()
            .map(|l| {
                row.labels.get(l).copied().unwrap_or_else(|| {
                    missing.push(l.clone());
                    false
                })
            })
            .collect();
        if !missing.is_empty() {
            return Err(parse_err(format!("missing columns {missing:?}")));
        }
        if row.action.len() != schema.action_dim {
            return Err(parse_err(format!(
                "action has {} components, expected {}",
                row.action.len(),
                schema.action_dim
            )));
        }
        states.push(ConcreteState {
            episode: row.episode,
            t: row.t,
            features,
            action: row.action,
            reward,
            terminal: row.terminal,
            labels,
        });
    }
    Ok(states)
}

fn parse_csv(bytes: &[u8], schema: &DatasetSchema) -> Result<Vec<ConcreteState>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let expected = csv_header(schema);
    let missing: Vec<String> = expected.iter().filter(|c| !header.contains(c)).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns(missing));
    }
    let col = |name: &str| header.iter().position(|h| h == name).expect("checked above");
    let feature_cols: Vec<usize> = schema.features.iter().map(|f| col(&f.name)).collect();
    let action_cols: Vec<usize> = (0..schema.action_dim).map(|i| col(&format!("action_{i}"))).collect();
    let label_cols: Vec<usize> = schema.labels.iter().map(|l| col(l)).collect();
    let (c_ep, c_t, c_r, c_term) = (col("episode"), col("t"), col("reward"), col("terminal"));

    let mut states = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let field = |c: usize| -> Result<&str> {
            rec.get(c)
                .filter(|s| !s.trim().is_empty())
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("missing value for column `{}`", header[c]),
                })
        };
        let num = |c: usize| -> Result<f64> {
            field(c)?.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("column `{}`: {e}", header[c]),
            })
        };
        let int = |c: usize| -> Result<u64> {
            field(c)?.trim().parse::<u64>().map_err(|e| Error::Parse {
                line,
                msg: format!("column `{}`: {e}", header[c]),
            })
        };
        let boolean = |c: usize| -> Result<bool> {
            match field(c)?.trim() {
                "0" | "false" => Ok(false),
                "1" | "true" => Ok(true),
                other => Err(Error::Parse {
                    line,
                    msg: format!("column `{}`: expected 0/1, got `{other}`", header[c]),
                }),
            }
        };
        states.push(ConcreteState {
            episode: int(c_ep)?,
            t: int(c_t)?,
            features: feature_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?,
            action: action_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?,
            reward: num(c_r)?,
            terminal: boolean(c_term)?,
            labels: label_cols.iter().map(|&c| boolean(c)).collect::<Result<_>>()?,
        });
    }
    Ok(states)
}

/// Splits by whole episodes into `(modeling, validation)`.
///
/// The validation share is `floor(n * ratio.1 / (ratio.0 + ratio.1))` episodes,
/// the remainder goes to modeling. Both halves keep the original episode order.
pub fn split_dataset(
    ds: &TrajectoryDataset,
    ratio: (u32, u32),
    seed: u64,
) -> Result<(TrajectoryDataset, TrajectoryDataset)> {
    let n = ds.num_episodes();
    if n < 2 {
        return Err(Error::invalid(format!("split needs at least 2 episodes, got {n}")));
    }
    if ratio.0 == 0 || ratio.1 == 0 {
        return Err(Error::invalid("split ratio parts must be positive"));
    }
    let n_val = n * ratio.1 as usize / (ratio.0 + ratio.1) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val: Vec<usize> = order[..n_val].to_vec();
    let mut model: Vec<usize> = order[n_val..].to_vec();
    val.sort_unstable();
    model.sort_unstable();
    Ok((ds.select_episodes(&model, "modeling"), ds.select_episodes(&val, "validation")))
}

/// Attaches `v_hat(s_t) = Σ_k γ^k r_{t+k}` computed backwards within each episode.
pub fn annotate_returns(ds: &TrajectoryDataset, gamma: f64) -> Result<TrajectoryDataset> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid("γ must be in (0,1)"));
    }
    let mut v = vec![0.0; ds.len()];
    for ep in &ds.episodes {
        let mut acc = 0.0;
        for i in ep.clone().rev() {
            acc = ds.states[i].reward + gamma * acc;
            v[i] = acc;
        }
    }
    let mut out = ds.clone();
    out.v_hat = Some(v);
    Ok(out)
}

/// Resolves `path` relative to `base` unless it is absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureSpec;

    pub(crate) fn toy_schema() -> DatasetSchema {
        DatasetSchema {
            features: vec![FeatureSpec { name: "x".into(), unit: "m".into() }],
            action_dim: 1,
            labels: vec!["hit".into()],
        }
    }

    fn toy(episodes: &[&[f64]]) -> TrajectoryDataset {
        let mut states = Vec::new();
        for (e, rewards) in episodes.iter().enumerate() {
            for (t, &r) in rewards.iter().enumerate() {
                states.push(ConcreteState {
                    episode: e as u64,
                    t: t as u64,
                    features: vec![t as f64],
                    action: vec![0.0],
                    reward: r,
                    terminal: t + 1 == rewards.len(),
                    labels: vec![false],
                });
            }
        }
        TrajectoryDataset::from_states(toy_schema(), states, Provenance::in_memory("toy")).unwrap()
    }

    #[test]
    fn returns_by_backward_recursion() {
        let ds = annotate_returns(&toy(&[&[1.0, 1.0, 1.0]]), 0.5).unwrap();
        assert_eq!(ds.v_hat.unwrap(), [1.75, 1.5, 1.0]);
        let ds = annotate_returns(&toy(&[&[0.0, 0.0]]), 0.9).unwrap();
        assert_eq!(ds.v_hat.unwrap(), [0.0, 0.0]);
        let ds = annotate_returns(&toy(&[&[7.0]]), 0.95).unwrap();
        assert_eq!(ds.v_hat.unwrap(), [7.0]);
    }

    #[test]
    fn split_rounds_validation_down() {
        let five = toy(&[[1.0].as_slice(); 5]);
        let (m, v) = split_dataset(&five, (8, 2), 3).unwrap();
        assert_eq!((m.num_episodes(), v.num_episodes()), (4, 1));
        let many = toy(&vec![[0.0].as_slice(); 1000]);
        let (m, v) = split_dataset(&many, (8, 2), 0).unwrap();
        assert_eq!((m.num_episodes(), v.num_episodes()), (800, 200));
    }

    #[test]
    fn split_is_deterministic_and_partitions_episodes() {
        let ds = toy(&[&[1.0, 2.0], &[3.0], &[4.0, 5.0, 6.0], &[1.0], &[2.0], &[3.0], &[4.0], &[5.0], &[6.0], &[7.0]]);
        let (m1, v1) = split_dataset(&ds, (8, 2), 42).unwrap();
        let (m2, v2) = split_dataset(&ds, (8, 2), 42).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(v1, v2);
        let mut ids: Vec<u64> = m1.episode_ids().into_iter().chain(v1.episode_ids()).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
        assert_eq!(m1.len() + v1.len(), ds.len());
    }

    #[test]
    fn split_needs_two_episodes() {
        assert!(split_dataset(&toy(&[&[1.0, 2.0]]), (8, 2), 0).is_err());
    }

    #[test]
    fn invariants_are_enforced() {
        let mut bad = toy(&[&[1.0, 1.0]]).states;
        bad[0].terminal = true;
        assert!(TrajectoryDataset::from_states(toy_schema(), bad, Provenance::in_memory("x")).is_err());
        let mut bad = toy(&[&[1.0, 1.0]]).states;
        bad[1].t = 0;
        assert!(TrajectoryDataset::from_states(toy_schema(), bad, Provenance::in_memory("x")).is_err());
        assert!(matches!(
            TrajectoryDataset::from_states(toy_schema(), vec![], Provenance::in_memory("x")),
            Err(Error::NoEpisodes)
        ));
    }
}
