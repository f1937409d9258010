//! PRISM export, bounded-horizon model checking, and the semantic gap between
//! an abstract MDP and held-out trajectories.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TrajectoryDataset;
use crate::mdp::{AbstractMdp, Choice, MdpState};
use crate::metrics::SparseDist;

/// Probabilities are printed as integer multiples of 1e-9.
const UNITS: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PropertyKind {
    /// Minimum expected cumulative reward within N steps.
    RminC,
    /// Maximum probability of reaching a label within N steps.
    PmaxF,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertySpec {
    pub kind: PropertyKind,
    pub horizon: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PropertySpec {
    pub fn reward_min(horizon: u32) -> Self {
        Self {
            kind: PropertyKind::RminC,
            horizon,
            label: None,
        }
    }

    pub fn reach_max(label: &str, horizon: u32) -> Self {
        Self {
            kind: PropertyKind::PmaxF,
            horizon,
            label: Some(label.to_string()),
        }
    }

    /// Checks the horizon and that the label is one of `labels`.
    pub fn validate(&self, labels: &[String]) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("property horizon must be at least 1"));
        }
        if self.kind == PropertyKind::PmaxF {
            let label = self.label.as_deref().ok_or_else(|| Error::invalid("reachability property needs a label"))?;
            if !labels.iter().any(|l| l == label) {
                return Err(Error::UnknownLabel(label.to_string()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for PropertySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PropertyKind::RminC => write!(f, "R{{\"step\"}}min=? [ C<={} ]", self.horizon),
            PropertyKind::PmaxF => write!(
                f,
                "Pmax=? [ F<={} \"{}\" ]",
                self.horizon,
                self.label.as_deref().unwrap_or_default()
            ),
        }
    }
}

/// Integer units per branch; the last branch absorbs the rounding remainder.
fn print_units(next: &SparseDist) -> Vec<(u32, u64)> {
    let n = next.0.len();
    let mut out: Vec<(u32, u64)> = Vec::with_capacity(n);
    let mut used = 0u64;
    for (i, &(t, p)) in next.0.iter().enumerate() {
        if i + 1 == n {
            out.push((t, UNITS.saturating_sub(used)));
        } else {
            let u = (p * UNITS as f64).round() as u64;
            if u > 0 {
                used += u;
                out.push((t, u));
            }
        }
    }
    // rounding pushed the earlier branches past 1: take the excess from the largest
    if used > UNITS {
        let excess = used - UNITS;
        let big = (0..out.len()).max_by_key(|&i| (out[i].1, std::cmp::Reverse(i))).expect("nonempty row");
        out[big].1 -= excess;
    }
    out.retain(|&(_, u)| u > 0);
    out
}

fn fmt_units(u: u64) -> String {
    format!("{}.{:09}", u / UNITS, u % UNITS)
}

fn state_set(states: impl Iterator<Item = usize>) -> String {
    let parts: Vec<String> = states.map(|s| format!("s={s}")).collect();
    if parts.is_empty() {
        "false".to_string()
    } else {
        parts.join("|")
    }
}

/// Renders the abstract MDP as a PRISM `mdp` model.
pub fn prism_model(mdp: &AbstractMdp) -> String {
    prism_model_with_init(mdp, &mdp.initial)
}

fn prism_model_with_init(mdp: &AbstractMdp, initial: &SparseDist) -> String {
    let n = mdp.len();
    let mut out = String::new();
    out.push_str("mdp\n\n");
    let init_units = print_units(initial);
    let line = init_units
        .iter()
        .map(|&(s, u)| format!("{s}:{}", fmt_units(u)))
        .collect::<Vec<_>>()
        .join(" ");
    let _ = writeln!(out, "// initial distribution: {line}\n");
    out.push_str("module abstraction\n");
    if init_units.len() == 1 {
        let _ = writeln!(out, "  s : [0..{}] init {};", n.saturating_sub(1), init_units[0].0);
    } else {
        let _ = writeln!(out, "  s : [0..{}];", n.saturating_sub(1));
    }
    for s in &mdp.states {
        for c in &s.choices {
            let branches = print_units(&c.next)
                .iter()
                .map(|&(t, u)| format!("{}:(s'={t})", fmt_units(u)))
                .collect::<Vec<_>>()
                .join(" + ");
            let _ = writeln!(out, "  [a{}] s={} -> {};", c.action, s.id, branches);
        }
    }
    out.push_str("endmodule\n");
    if init_units.len() > 1 {
        let _ = writeln!(out, "\ninit\n  {}\nendinit", state_set(init_units.iter().map(|&(s, _)| s as usize)));
    }
    out.push_str("\nrewards \"step\"\n");
    for s in &mdp.states {
        for c in &s.choices {
            if c.reward != 0.0 {
                let _ = writeln!(out, "  [a{}] s={} : {:?};", c.action, s.id, c.reward);
            }
        }
    }
    out.push_str("endrewards\n");
    if !mdp.label_names.is_empty() {
        out.push('\n');
    }
    for (l, name) in mdp.label_names.iter().enumerate() {
        let members = (0..n).filter(|&s| mdp.has_label(s, l));
        let _ = writeln!(out, "label \"{name}\" = {};", state_set(members));
    }
    out
}

/// Writes the PRISM model to `path` and returns its text.
pub fn export_prism(mdp: &AbstractMdp, path: &Path) -> Result<String> {
    let text = prism_model(mdp);
    std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    Ok(text)
}

/// One PRISM property per line.
pub fn properties_text(specs: &[PropertySpec]) -> String {
    specs.iter().map(|s| format!("{s}\n")).collect()
}

/// Writes the properties file; reachability labels must exist in `labels`.
pub fn export_properties(specs: &[PropertySpec], labels: &[String], path: &Path) -> Result<String> {
    for s in specs {
        s.validate(labels)?;
    }
    let text = properties_text(specs);
    std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    Ok(text)
}

/// Reads back a model written by [`prism_model`]. Support counts and
/// Hoeffding bounds are not part of the format and come back as zero.
pub fn parse_prism(text: &str) -> Result<AbstractMdp> {
    let err = |line: usize, msg: &str| Error::Prism(format!("line {}: {msg}", line + 1));
    let mut n_states = None;
    let mut init_single = None;
    let mut init_dist = None;
    let mut rows: BTreeMap<(usize, u32), SparseDist> = BTreeMap::new();
    let mut rewards: BTreeMap<(usize, u32), f64> = BTreeMap::new();
    let mut labels: Vec<(String, Vec<usize>)> = Vec::new();
    let mut in_rewards = false;
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix("// initial distribution:") {
            let mut pairs = Vec::new();
            for tok in rest.split_whitespace() {
                let (s, p) = tok.split_once(':').ok_or_else(|| err(ln, "bad initial entry"))?;
                pairs.push((
                    s.parse().map_err(|_| err(ln, "bad initial state"))?,
                    p.parse().map_err(|_| err(ln, "bad initial probability"))?,
                ));
            }
            init_dist = Some(SparseDist::from_pairs(pairs));
            continue;
        }
        if line.is_empty() || line.starts_with("//") {
            continue;
        }
        if line.starts_with("rewards") {
            in_rewards = true;
            continue;
        }
        if line == "endrewards" {
            in_rewards = false;
            continue;
        }
        if let Some(rest) = line.strip_prefix("s : [0..") {
            let (max, tail) = rest.split_once(']').ok_or_else(|| err(ln, "bad range"))?;
            n_states = Some(max.parse::<usize>().map_err(|_| err(ln, "bad range"))? + 1);
            if let Some(i) = tail.trim().strip_prefix("init ") {
                init_single = Some(i.trim_end_matches(';').trim().parse::<u32>().map_err(|_| err(ln, "bad init"))?);
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("label \"") {
            let (name, tail) = rest.split_once('"').ok_or_else(|| err(ln, "bad label"))?;
            let expr = tail.trim().trim_start_matches('=').trim().trim_end_matches(';');
            let mut members = Vec::new();
            if expr != "false" {
                for part in expr.split('|') {
                    let s = part.trim().strip_prefix("s=").ok_or_else(|| err(ln, "bad label term"))?;
                    members.push(s.parse().map_err(|_| err(ln, "bad label state"))?);
                }
            }
            labels.push((name.to_string(), members));
            continue;
        }
        if let Some(rest) = line.strip_prefix("[a") {
            let (action, rest) = rest.split_once(']').ok_or_else(|| err(ln, "bad action"))?;
            let action: u32 = action.parse().map_err(|_| err(ln, "bad action"))?;
            let rest = rest.trim().strip_prefix("s=").ok_or_else(|| err(ln, "bad guard"))?;
            if in_rewards {
                let (s, r) = rest.split_once(':').ok_or_else(|| err(ln, "bad reward"))?;
                let s: usize = s.trim().parse().map_err(|_| err(ln, "bad reward state"))?;
                let r: f64 = r.trim().trim_end_matches(';').parse().map_err(|_| err(ln, "bad reward value"))?;
                rewards.insert((s, action), r);
            } else {
                let (s, body) = rest.split_once("->").ok_or_else(|| err(ln, "missing ->"))?;
                let s: usize = s.trim().parse().map_err(|_| err(ln, "bad source state"))?;
                let mut pairs = Vec::new();
                for branch in body.trim().trim_end_matches(';').split('+') {
                    let (p, upd) = branch.trim().split_once(':').ok_or_else(|| err(ln, "bad branch"))?;
                    let t = upd
                        .trim()
                        .strip_prefix("(s'=")
                        .and_then(|x| x.strip_suffix(')'))
                        .ok_or_else(|| err(ln, "bad update"))?;
                    pairs.push((
                        t.parse().map_err(|_| err(ln, "bad target"))?,
                        p.parse().map_err(|_| err(ln, "bad probability"))?,
                    ));
                }
                rows.insert((s, action), SparseDist::from_pairs(pairs));
            }
            continue;
        }
    }
    let n = n_states.ok_or_else(|| Error::Prism("no state variable declaration".into()))?;
    let initial = match (init_dist, init_single) {
        (Some(d), _) => d,
        (None, Some(i)) => SparseDist(vec![(i, 1.0)]),
        (None, None) => return Err(Error::Prism("no initial state".into())),
    };
    let mut states: Vec<MdpState> = (0..n)
        .map(|id| MdpState {
            id,
            choices: Vec::new(),
            degenerate: false,
            sink: false,
            occupancy: 0,
        })
        .collect();
    for ((s, action), next) in rows {
        let st = states.get_mut(s).ok_or_else(|| Error::Prism(format!("state {s} out of range")))?;
        st.choices.push(Choice {
            action,
            count: 0,
            reward: rewards.get(&(s, action)).copied().unwrap_or(0.0),
            next,
            bound: 0.0,
        });
    }
    let label_names: Vec<String> = labels.iter().map(|(l, _)| l.clone()).collect();
    let mut flags = vec![vec![false; labels.len()]; n];
    for (l, (_, members)) in labels.iter().enumerate() {
        for &s in members {
            *flags
                .get_mut(s)
                .ok_or_else(|| Error::Prism(format!("label state {s} out of range")))?
                .get_mut(l)
                .expect("sized by label count") = true;
        }
    }
    Ok(AbstractMdp {
        states,
        num_actions: 0,
        gamma: 0.0,
        delta: 0.0,
        p_tol: None,
        initial,
        label_names,
        labels: flags,
        pruned: Vec::new(),
    })
}

fn expect(c: &Choice, v: &[f64]) -> f64 {
    c.next.0.iter().map(|&(t, p)| p * v[t as usize]).sum()
}

fn weigh_initial(mdp: &AbstractMdp, v: &[f64]) -> f64 {
    mdp.initial.0.iter().map(|&(s, p)| p * v[s as usize]).sum()
}

/// Per-state `V_N` of the minimum expected cumulative reward within N steps.
pub fn reward_min_values(mdp: &AbstractMdp, horizon: u32) -> Vec<f64> {
    let mut v = vec![0.0; mdp.len()];
    for _ in 0..horizon {
        v = mdp
            .states
            .iter()
            .map(|s| {
                s.choices
                    .iter()
                    .map(|c| c.reward + expect(c, &v))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
    }
    v
}

/// `R{"step"}min=? [ C<=N ]` from the initial distribution, by backward induction.
pub fn check_bounded_reward_min(mdp: &AbstractMdp, horizon: u32) -> f64 {
    weigh_initial(mdp, &reward_min_values(mdp, horizon))
}

/// Per-state maximum probability of reaching `label` within N steps.
pub fn reach_max_values(mdp: &AbstractMdp, label: &str, horizon: u32) -> Result<Vec<f64>> {
    let l = mdp.label_index(label)?;
    let goal: Vec<bool> = (0..mdp.len()).map(|s| mdp.has_label(s, l)).collect();
    let mut v: Vec<f64> = goal.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect();
    for _ in 0..horizon {
        v = mdp
            .states
            .iter()
            .map(|s| {
                if goal[s.id] {
                    1.0
                } else {
                    s.choices.iter().map(|c| expect(c, &v)).fold(0.0, f64::max).min(1.0)
                }
            })
            .collect();
    }
    Ok(v)
}

/// `Pmax=? [ F<=N "label" ]` from the initial distribution.
pub fn check_bounded_reach_max(mdp: &AbstractMdp, label: &str, horizon: u32) -> Result<f64> {
    Ok(weigh_initial(mdp, &reach_max_values(mdp, label, horizon)?))
}

/// Evaluates a property on the abstract MDP.
pub fn check_property(mdp: &AbstractMdp, spec: &PropertySpec) -> Result<f64> {
    spec.validate(&mdp.label_names)?;
    match spec.kind {
        PropertyKind::RminC => Ok(check_bounded_reward_min(mdp, spec.horizon)),
        PropertyKind::PmaxF => check_bounded_reach_max(mdp, spec.label.as_deref().unwrap_or_default(), spec.horizon),
    }
}

/// Empirical counterpart on recorded episodes: mean reward over the first N
/// steps, or the fraction of episodes showing the label at step ≤ N.
pub fn empirical_property(ds: &TrajectoryDataset, spec: &PropertySpec) -> Result<f64> {
    if ds.num_episodes() == 0 {
        return Err(Error::NoEpisodes);
    }
    spec.validate(&ds.schema.labels)?;
    let n = spec.horizon as usize;
    let total: f64 = match spec.kind {
        PropertyKind::RminC => ds
            .episodes
            .iter()
            .map(|ep| ds.states[ep.clone()].iter().take(n).map(|s| s.reward).sum::<f64>())
            .sum(),
        PropertyKind::PmaxF => {
            let l = ds
                .schema
                .label_index(spec.label.as_deref().unwrap_or_default())
                .expect("validated above");
            ds.episodes
                .iter()
                .filter(|ep| ds.states[(*ep).clone()].iter().take(n + 1).any(|s| s.labels[l]))
                .count() as f64
        }
    };
    Ok(total / ds.num_episodes() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub property: String,
    pub spec: PropertySpec,
    pub verified: f64,
    pub empirical: f64,
    /// `empirical − verified`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
}

impl fmt::Display for GapReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.rows.iter().map(|r| r.property.len()).max().unwrap_or(8).max(8);
        writeln!(f, "{:<w$}  {:>12}  {:>12}  {:>12}", "property", "verified", "empirical", "error")?;
        for r in &self.rows {
            writeln!(f, "{:<w$}  {:>12.6}  {:>12.6}  {:>12.6}", r.property, r.verified, r.empirical, r.error)?;
        }
        Ok(())
    }
}

/// Verified versus empirical value of every property.
pub fn semantic_gap(mdp: &AbstractMdp, validation: &TrajectoryDataset, specs: &[PropertySpec]) -> Result<GapReport> {
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let verified = check_property(mdp, spec)?;
        let empirical = empirical_property(validation, spec)?;
        rows.push(GapRow {
            property: spec.to_string(),
            spec: spec.clone(),
            verified,
            empirical,
            error: empirical - verified,
        });
    }
    Ok(GapReport { rows })
}

/// Environment variable naming an external PRISM executable.
pub const PRISM_BIN_ENV: &str = "PRISM_BIN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub property: String,
    pub initial_state: usize,
    pub internal: f64,
    pub prism: f64,
}

impl CrossCheck {
    pub fn agrees(&self, tol: f64) -> bool {
        (self.internal - self.prism).abs() <= tol
    }
}

/// Runs the external checker (if `PRISM_BIN` is set) from each of the first
/// `max_initial` initial states and pairs its answers with the internal ones.
/// Returns `None` when no binary is configured.
pub fn prism_cross_check(
    mdp: &AbstractMdp,
    specs: &[PropertySpec],
    dir: &Path,
    max_initial: usize,
) -> Result<Option<Vec<CrossCheck>>> {
    let Some(bin) = std::env::var_os(PRISM_BIN_ENV) else {
        return Ok(None);
    };
    if specs.is_empty() {
        return Ok(Some(Vec::new()));
    }
    let props = dir.join("crosscheck.props");
    std::fs::write(&props, properties_text(specs)).map_err(|e| Error::io(&props, e))?;
    let mut out = Vec::new();
    for &(s0, _) in mdp.initial.0.iter().take(max_initial) {
        let model = dir.join(format!("crosscheck_{s0}.prism"));
        let text = prism_model_with_init(mdp, &SparseDist(vec![(s0, 1.0)]));
        std::fs::write(&model, text).map_err(|e| Error::io(&model, e))?;
        let res = Command::new(&bin).arg(&model).arg(&props).output().map_err(|e| Error::io(Path::new(&bin), e))?;
        let stdout = String::from_utf8_lossy(&res.stdout);
        let values: Vec<f64> = stdout
            .lines()
            .filter_map(|l| l.trim().strip_prefix("Result:"))
            .filter_map(|r| r.split_whitespace().next()?.parse().ok())
            .collect();
        if values.len() != specs.len() {
            return Err(Error::Prism(format!(
                "expected {} results from {}, got {}",
                specs.len(),
                Path::new(&bin).display(),
                values.len()
            )));
        }
        let single = AbstractMdp {
            initial: SparseDist(vec![(s0, 1.0)]),
            ..mdp.clone()
        };
        for (spec, prism) in specs.iter().zip(values) {
            out.push(CrossCheck {
                property: spec.to_string(),
                initial_state: s0 as usize,
                internal: check_property(&single, spec)?,
                prism,
            });
        }
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(id: usize, choices: Vec<(u32, f64, Vec<(u32, f64)>)>) -> MdpState {
        MdpState {
            id,
            choices: choices
                .into_iter()
                .map(|(action, reward, next)| Choice {
                    action,
                    count: 1,
                    reward,
                    next: SparseDist(next),
                    bound: 0.0,
                })
                .collect(),
            degenerate: false,
            sink: false,
            occupancy: 1,
        }
    }

    fn mdp(states: Vec<MdpState>, labels: &[(&str, &[usize])]) -> AbstractMdp {
        let n = states.len();
        AbstractMdp {
            states,
            num_actions: 3,
            gamma: 0.9,
            delta: 0.05,
            p_tol: None,
            initial: SparseDist(vec![(0, 1.0)]),
            label_names: labels.iter().map(|(l, _)| l.to_string()).collect(),
            labels: (0..n)
                .map(|s| labels.iter().map(|(_, m)| m.contains(&s)).collect())
                .collect(),
            pruned: Vec::new(),
        }
    }

    #[test]
    fn reward_min_examples() {
        let m = mdp(vec![state(0, vec![(0, 1.0, vec![(0, 1.0)])])], &[]);
        assert_eq!(check_bounded_reward_min(&m, 3), 3.0);
        let m = mdp(vec![state(0, vec![(0, 1.0, vec![(0, 1.0)]), (1, 0.5, vec![(0, 1.0)])])], &[]);
        assert_eq!(check_bounded_reward_min(&m, 1), 0.5);
    }

    #[test]
    fn reach_examples() {
        let m = mdp(
            vec![
                state(0, vec![(0, 0.0, vec![(0, 0.5), (1, 0.5)])]),
                state(1, vec![(0, 0.0, vec![(1, 1.0)])]),
                state(2, vec![(0, 0.0, vec![(2, 1.0)])]),
            ],
            &[("goal", &[1]), ("start", &[0]), ("never", &[2])],
        );
        assert!((check_bounded_reach_max(&m, "goal", 2).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(check_bounded_reach_max(&m, "start", 5).unwrap(), 1.0);
        assert_eq!(check_bounded_reach_max(&m, "never", 5).unwrap(), 0.0);
        assert!(matches!(check_bounded_reach_max(&m, "nope", 5), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn property_syntax() {
        assert_eq!(PropertySpec::reward_min(51).to_string(), "R{\"step\"}min=? [ C<=51 ]");
        assert_eq!(
            PropertySpec::reach_max("isCrashed", 60).to_string(),
            "Pmax=? [ F<=60 \"isCrashed\" ]"
        );
        assert_eq!(properties_text(&[]), "");
    }

    #[test]
    fn thirds_print_to_exactly_one() {
        let m = mdp(
            vec![
                state(0, vec![(0, 1.0, vec![(0, 1.0 / 3.0), (1, 1.0 / 3.0), (2, 1.0 / 3.0)])]),
                state(1, vec![(0, 0.0, vec![(1, 1.0)])]),
                state(2, vec![(0, 0.0, vec![(2, 1.0)])]),
            ],
            &[],
        );
        let text = prism_model(&m);
        assert!(text.contains("[a0] s=0 -> 0.333333333:(s'=0) + 0.333333333:(s'=1) + 0.333333334:(s'=2);"));
    }

    #[test]
    fn chain_model_line() {
        let m = mdp(
            vec![state(0, vec![(0, 1.0, vec![(1, 1.0)])]), state(1, vec![(0, 0.0, vec![(1, 1.0)])])],
            &[],
        );
        let text = prism_model(&m);
        assert!(text.contains("[a0] s=0 -> 1.000000000:(s'=1);"));
        assert!(text.contains("s : [0..1] init 0;"));
        assert!(text.contains("[a0] s=0 : 1.0;"));
    }

    #[test]
    fn roundtrip_through_reader() {
        let mut m = mdp(
            vec![
                state(0, vec![(2, 1.25, vec![(0, 0.2), (1, 0.8)]), (1, -0.5, vec![(2, 1.0)])]),
                state(1, vec![(0, 0.0, vec![(1, 1.0)])]),
                state(2, vec![(0, 3.0, vec![(0, 1.0)])]),
            ],
            &[("hit", &[1, 2]), ("none", &[])],
        );
        m.initial = SparseDist(vec![(0, 0.25), (2, 0.75)]);
        let back = parse_prism(&prism_model(&m)).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.initial, m.initial);
        assert_eq!(back.label_names, m.label_names);
        assert_eq!(back.labels, m.labels);
        for (a, b) in m.states.iter().zip(&back.states) {
            let mut ca = a.choices.clone();
            ca.sort_by_key(|c| c.action);
            assert_eq!(ca.len(), b.choices.len());
            for (x, y) in ca.iter().zip(&b.choices) {
                assert_eq!(x.action, y.action);
                assert_eq!(x.reward, y.reward);
                for (&(t1, p1), &(t2, p2)) in x.next.0.iter().zip(&y.next.0) {
                    assert_eq!(t1, t2);
                    assert!((p1 - p2).abs() <= 5e-10);
                }
            }
        }
        let text = prism_model(&m);
        assert!(text.contains("init\n  s=0|s=2\nendinit"));
        assert!(text.contains("label \"none\" = false;"));
    }
}
