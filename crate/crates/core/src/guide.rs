//! Abstract-policy guidance for a tabular Q-learner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::ActionAbstraction;
use crate::env::{scripted_return, Environment};
use crate::error::{Error, Result};
use crate::interval::{CellLookup, CellSpace};
use crate::mdp::AbstractMdp;
use crate::model::Bounds;
use crate::semantics::CompiledSemantics;

/// Maps live environment features to interval cells.
#[derive(Debug, Clone)]
pub struct StateMapper {
    semantics: CompiledSemantics,
    bounds: Bounds,
    cells: CellSpace,
}

impl StateMapper {
    /// Fails when the semantics need the Monte-Carlo return, which is not
    /// available while acting.
    pub fn new(semantics: CompiledSemantics, bounds: Bounds, cells: CellSpace) -> Result<Self> {
        if semantics.uses_v_hat() {
            return Err(Error::InvalidArgument(
                "semantics depending on v_hat cannot be evaluated online".into(),
            ));
        }
        if bounds.dim() != semantics.arity() || cells.arity() != semantics.arity() {
            return Err(Error::DimensionMismatch {
                expected: semantics.arity(),
                got: bounds.dim(),
            });
        }
        Ok(Self {
            semantics,
            bounds,
            cells,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &CellSpace {
        &self.cells
    }

    pub fn locate(&self, features: &[f64], t: u64) -> Result<CellLookup> {
        let raw = self.semantics.evaluate_features(features, t, 0.0, 0.0)?;
        let theta = self.bounds.normalize(&raw)?;
        Ok(self.cells.locate(&theta))
    }
}

/// Greedy first actions of the finite-horizon reward-maximizing problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractPolicy {
    pub horizon: u32,
    /// `None` for degenerate and end-of-episode states.
    pub actions: Vec<Option<u32>>,
    pub values: Vec<f64>,
}

/// Backward induction maximizing expected reward over `horizon` steps; ties go
/// to the lowest action id.
pub fn solve_policy(mdp: &AbstractMdp, horizon: u32) -> AbstractPolicy {
    let n = mdp.len();
    let mut v = vec![0.0; n];
    let mut actions = vec![None; n];
    for _ in 0..horizon.max(1) {
        let mut next = vec![0.0; n];
        for s in &mdp.states {
            let mut best: Option<(u32, f64)> = None;
            for c in &s.choices {
                let q = c.reward + c.next.0.iter().map(|&(t, p)| p * v[t as usize]).sum::<f64>();
                let better = match best {
                    None => true,
                    Some((a, bq)) => q > bq || (q == bq && c.action < a),
                };
                if better {
                    best = Some((c.action, q));
                }
            }
            let (a, q) = best.expect("every state has a choice");
            next[s.id] = q;
            actions[s.id] = if s.degenerate || s.sink { None } else { Some(a) };
        }
        v = next;
    }
    AbstractPolicy {
        horizon,
        actions,
        values: v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyFlag {
    /// The abstract state has no usable action; the zero action was returned.
    Degenerate,
    /// The state fell outside every cell and the nearest one was used.
    Clamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAction {
    pub action: Vec<f64>,
    pub abstract_action: Option<u32>,
    pub flags: Vec<PolicyFlag>,
}

impl AbstractPolicy {
    /// Concrete action for a located cell; `cell_to_state` is the cluster
    /// assignment of cells.
    pub fn act(&self, lookup: CellLookup, cell_to_state: &[usize], abs: &ActionAbstraction) -> Result<PolicyAction> {
        let mut flags = Vec::new();
        if !lookup.exact {
            flags.push(PolicyFlag::Clamped);
        }
        let state = *cell_to_state
            .get(lookup.cell)
            .ok_or_else(|| Error::invalid(format!("cell {} has no abstract state", lookup.cell)))?;
        match self.actions.get(state).copied().flatten() {
            Some(a) => Ok(PolicyAction {
                action: abs.representative_action(&abs.unflatten(a)?)?,
                abstract_action: Some(a),
                flags,
            }),
            None => {
                flags.push(PolicyFlag::Degenerate);
                Ok(PolicyAction {
                    action: vec![0.0; abs.dim()],
                    abstract_action: None,
                    flags,
                })
            }
        }
    }
}

/// One-shot version of [`AbstractPolicy::act`]: maps the features through the
/// abstraction and solves the MDP over `horizon` steps.
pub fn abstract_policy_action(
    mdp: &AbstractMdp,
    mapper: &StateMapper,
    cell_to_state: &[usize],
    abs: &ActionAbstraction,
    features: &[f64],
    t: u64,
    horizon: u32,
) -> Result<PolicyAction> {
    let lookup = mapper.locate(features, t)?;
    solve_policy(mdp, horizon).act(lookup, cell_to_state, abs)
}

/// `α·a_NN + β·a_MDP`, clamped to the action ranges.
pub fn blend_action(a_nn: &[f64], a_mdp: &[f64], alpha: f64, beta: f64, abs: &ActionAbstraction) -> Result<Vec<f64>> {
    if a_nn.len() != a_mdp.len() {
        return Err(Error::DimensionMismatch {
            expected: a_nn.len(),
            got: a_mdp.len(),
        });
    }
    let mixed: Vec<f64> = a_nn.iter().zip(a_mdp).map(|(x, y)| alpha * x + beta * y).collect();
    abs.clamp(&mixed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuideConfig {
    pub episodes: usize,
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub discount: f64,
    /// Look-ahead of the abstract policy.
    pub horizon: u32,
    /// Fraction of the scripted return that counts as "learned".
    pub threshold_fraction: f64,
    pub seeds: Vec<u64>,
}

impl Default for GuideConfig {
    fn default() -> Self {
        Self {
            episodes: 300,
            alpha: 0.5,
            beta: 0.5,
            learning_rate: 0.1,
            epsilon_start: 0.1,
            epsilon_end: 0.01,
            discount: 0.99,
            horizon: 51,
            threshold_fraction: 0.8,
            seeds: (0..10).collect(),
        }
    }
}

/// Abstract policy plus blend weights.
#[derive(Debug, Clone)]
pub struct Guidance<'a> {
    pub policy: &'a AbstractPolicy,
    /// Cell → abstract state.
    pub cell_to_state: &'a [usize],
    pub alpha: f64,
    pub beta: f64,
}

/// Tabular Q-learning over interval cells and abstract actions. With guidance
/// the executed action is the blend of the learner's choice and the abstract
/// policy's action, and the update credits the box of the executed action.
/// Returns the return of every episode.
pub fn train_guided<E: Environment>(
    env: &E,
    mapper: &StateMapper,
    abs: &ActionAbstraction,
    guidance: Option<&Guidance<'_>>,
    config: &GuideConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if config.episodes == 0 {
        return Err(Error::invalid("training needs at least one episode"));
    }
    let n_actions = abs.num_actions();
    let mut q = vec![0.0; mapper.num_cells() * n_actions];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = Vec::with_capacity(config.episodes);
    let mut ties = Vec::with_capacity(n_actions);
    for e in 0..config.episodes {
        let frac = if config.episodes > 1 {
            e as f64 / (config.episodes - 1) as f64
        } else {
            0.0
        };
        let epsilon = config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac;
        let mut s = env.reset();
        let mut lookup = mapper.locate(&env.features(&s), env.time(&s))?;
        let mut total = 0.0;
        loop {
            let row = &q[lookup.cell * n_actions..(lookup.cell + 1) * n_actions];
            let a = if rng.gen::<f64>() < epsilon {
                rng.gen_range(0..n_actions)
            } else {
                let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                ties.clear();
                ties.extend((0..n_actions).filter(|&i| row[i] == best));
                ties[rng.gen_range(0..ties.len())]
            };
            let a_nn = abs.representative_action(&abs.unflatten(a as u32)?)?;
            let executed = match guidance {
                Some(g) => {
                    let a_mdp = g.policy.act(lookup, g.cell_to_state, abs)?.action;
                    blend_action(&a_nn, &a_mdp, g.alpha, g.beta, abs)?
                }
                None => a_nn,
            };
            let taken = abs.action_id(&executed)? as usize;
            let st = env.step(&s, &executed);
            total += st.reward;
            let next_lookup = mapper.locate(&env.features(&st.next), env.time(&st.next))?;
            let future = if st.done {
                0.0
            } else {
                q[next_lookup.cell * n_actions..(next_lookup.cell + 1) * n_actions]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let slot = &mut q[lookup.cell * n_actions + taken];
            *slot += config.learning_rate * (st.reward + config.discount * future - *slot);
            if st.done {
                break;
            }
            s = st.next;
            lookup = next_lookup;
        }
        curve.push(total);
    }
    Ok(curve)
}

/// First episode (0-based) whose return reaches `threshold`.
pub fn episodes_to_threshold(curve: &[f64], threshold: f64) -> Option<usize> {
    curve.iter().position(|&r| r >= threshold)
}

/// Threshold used for an environment: the configured fraction of the
/// scripted controller's return.
pub fn learning_threshold<E: Environment>(env: &E, fraction: f64) -> f64 {
    fraction * scripted_return(env)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub arm: String,
    pub seed: u64,
}

/// `episode,return,arm,seed` rows.
pub fn curves_csv(points: &[CurvePoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

/// Median, with the upper middle element for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 0 { 0.5 * (v[m - 1] + v[m]) } else { v[m] })
}

/// Learning speed of one arm across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub alpha: f64,
    pub beta: f64,
    /// `None` when the threshold was never reached.
    pub episodes_to_threshold: Vec<Option<usize>>,
    /// Median with unreached seeds counted as the episode budget.
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmComparison {
    pub seeds: Vec<u64>,
    /// Per-seed return threshold.
    pub thresholds: Vec<f64>,
    pub arms: Vec<ArmSummary>,
    /// The β = 0 arm reproduced the baseline curves exactly.
    pub beta0_identical: bool,
}

impl ArmComparison {
    pub fn arm(&self, name: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == name)
    }

    /// Guided median episodes-to-threshold ≤ baseline median.
    pub fn guided_not_slower(&self) -> bool {
        match (self.arm("guided"), self.arm("baseline")) {
            (Some(g), Some(b)) => g.median <= b.median,
            _ => false,
        }
    }
}

/// Trains the `baseline`, `guided` and `guided_beta0` arms on `make(seed)` for
/// every configured seed. The β = 0 arm uses α = 1 so that it executes exactly
/// the learner's action.
pub fn compare_arms<E: Environment>(
    make: impl Fn(u64) -> E,
    mapper: &StateMapper,
    abs: &ActionAbstraction,
    policy: &AbstractPolicy,
    cell_to_state: &[usize],
    config: &GuideConfig,
) -> Result<(ArmComparison, Vec<CurvePoint>)> {
    let arms: [(&str, Option<(f64, f64)>); 3] = [
        ("baseline", None),
        ("guided", Some((config.alpha, config.beta))),
        ("guided_beta0", Some((1.0, 0.0))),
    ];
    let mut thresholds = Vec::with_capacity(config.seeds.len());
    let mut reached = vec![Vec::new(); arms.len()];
    let mut points = Vec::new();
    let mut beta0_identical = true;
    for &seed in &config.seeds {
        let env = make(seed);
        let threshold = learning_threshold(&env, config.threshold_fraction);
        thresholds.push(threshold);
        let mut baseline = Vec::new();
        for (i, (name, weights)) in arms.iter().enumerate() {
            let guidance = weights.map(|(alpha, beta)| Guidance {
                policy,
                cell_to_state,
                alpha,
                beta,
            });
            let curve = train_guided(&env, mapper, abs, guidance.as_ref(), config, seed)?;
            reached[i].push(episodes_to_threshold(&curve, threshold));
            match *name {
                "baseline" => baseline.clone_from(&curve),
                "guided_beta0" => beta0_identical &= curve.iter().map(|x| x.to_bits()).eq(baseline.iter().map(|x| x.to_bits())),
                _ => {}
            }
            points.extend(curve.into_iter().enumerate().map(|(episode, ret)| CurvePoint {
                episode,
                ret,
                arm: name.to_string(),
                seed,
            }));
        }
    }
    let arms = arms
        .iter()
        .zip(reached)
        .map(|((name, weights), hits)| {
            let (alpha, beta) = weights.unwrap_or((1.0, 0.0));
            let censored: Vec<f64> = hits.iter().map(|h| h.unwrap_or(config.episodes) as f64).collect();
            ArmSummary {
                arm: name.to_string(),
                alpha,
                beta,
                median: median(&censored).unwrap_or(f64::NAN),
                episodes_to_threshold: hits,
            }
        })
        .collect();
    Ok((
        ArmComparison {
            seeds: config.seeds.clone(),
            thresholds,
            arms,
            beta0_identical,
        },
        points,
    ))
}
