#![allow(dead_code)]

use std::path::PathBuf;

use mdpabs::config::PipelineConfig;
use mdpabs::mdp::{AbstractMdp, Choice, MdpState};
use mdpabs::metrics::{ActionStats, CellStats, SparseDist, END};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn acc_config() -> PipelineConfig {
    PipelineConfig::load(&fixtures().join("acc.json")).unwrap()
}

/// Random distribution over a nonempty subset of `0..n`, from integer weights.
pub fn random_dist(rng: &mut impl Rng, n: usize) -> SparseDist {
    let mut targets: Vec<u32> = (0..n as u32).collect();
    targets.shuffle(rng);
    targets.truncate(rng.gen_range(1..=n));
    targets.sort_unstable();
    let weights: Vec<u32> = targets.iter().map(|_| rng.gen_range(1..=9)).collect();
    let total: u32 = weights.iter().sum();
    SparseDist::from_pairs(targets.into_iter().zip(weights).map(|(t, w)| (t, w as f64 / total as f64)))
}

/// MDP with up to `max_states` states, each with 1..=`max_actions` actions and
/// a single label `goal`.
pub fn random_mdp(rng: &mut impl Rng, max_states: usize, max_actions: u32) -> AbstractMdp {
    let n = rng.gen_range(1..=max_states);
    let states = (0..n)
        .map(|id| {
            let mut actions: Vec<u32> = (0..max_actions).collect();
            actions.shuffle(rng);
            actions.truncate(rng.gen_range(1..=max_actions as usize));
            actions.sort_unstable();
            MdpState {
                id,
                choices: actions
                    .into_iter()
                    .map(|action| Choice {
                        action,
                        count: 1,
                        reward: rng.gen_range(-2.0..2.0),
                        next: random_dist(rng, n),
                        bound: 0.0,
                    })
                    .collect(),
                degenerate: false,
                sink: false,
                occupancy: 1,
            }
        })
        .collect();
    AbstractMdp {
        states,
        num_actions: max_actions as usize,
        gamma: 0.95,
        delta: 0.05,
        p_tol: None,
        initial: random_dist(rng, n),
        label_names: vec!["goal".into()],
        labels: (0..n).map(|_| vec![rng.gen_bool(0.3)]).collect(),
        pruned: vec![],
    }
}

/// Optimal bounded value by walking every history explicitly: each path
/// prefix picks its own best action, so history-dependent policies are covered.
pub fn history_reward(mdp: &AbstractMdp, s: usize, steps: u32, minimize: bool) -> f64 {
    if steps == 0 {
        return 0.0;
    }
    let values = mdp.states[s].choices.iter().map(|c| {
        c.reward
            + c.next
                .0
                .iter()
                .map(|&(t, p)| p * history_reward(mdp, t as usize, steps - 1, minimize))
                .sum::<f64>()
    });
    if minimize {
        values.fold(f64::INFINITY, f64::min)
    } else {
        values.fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn history_reach(mdp: &AbstractMdp, label: usize, s: usize, steps: u32) -> f64 {
    if mdp.labels[s][label] {
        return 1.0;
    }
    if steps == 0 {
        return 0.0;
    }
    mdp.states[s]
        .choices
        .iter()
        .map(|c| c.next.0.iter().map(|&(t, p)| p * history_reach(mdp, label, t as usize, steps - 1)).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn from_initial(mdp: &AbstractMdp, f: impl Fn(usize) -> f64) -> f64 {
    mdp.initial.0.iter().map(|&(s, p)| p * f(s as usize)).sum()
}

/// Every deterministic time-dependent policy `(t, s) → choice`, scored by
/// pushing the state distribution forward. Returns (min reward, max reach).
pub fn enumerate_policies(mdp: &AbstractMdp, label: usize, horizon: u32) -> (f64, f64) {
    let n = mdp.len();
    let slots: Vec<usize> = (0..horizon as usize * n).map(|i| mdp.states[i % n].choices.len()).collect();
    let mut pick = vec![0usize; slots.len()];
    let mut best = (f64::INFINITY, 0.0f64);
    loop {
        let mut dist = vec![0.0; n];
        for &(s, p) in &mdp.initial.0 {
            dist[s as usize] += p;
        }
        // reach: mass that has touched a goal state is frozen in `hit`
        let mut live = dist.clone();
        let mut hit = 0.0;
        for s in 0..n {
            if mdp.labels[s][label] {
                hit += live[s];
                live[s] = 0.0;
            }
        }
        let mut reward = 0.0;
        for t in 0..horizon as usize {
            let mut next = vec![0.0; n];
            let mut next_live = vec![0.0; n];
            for s in 0..n {
                let c = &mdp.states[s].choices[pick[t * n + s]];
                reward += dist[s] * c.reward;
                for &(j, p) in &c.next.0 {
                    next[j as usize] += dist[s] * p;
                    next_live[j as usize] += live[s] * p;
                }
            }
            for s in 0..n {
                if mdp.labels[s][label] {
                    hit += next_live[s];
                    next_live[s] = 0.0;
                }
            }
            dist = next;
            live = next_live;
        }
        best = (best.0.min(reward), best.1.max(hit));
        // odometer increment
        let mut i = 0;
        loop {
            if i == pick.len() {
                return best;
            }
            pick[i] += 1;
            if pick[i] < slots[i] {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

fn choice(action: u32, reward: f64, next: &[(u32, f64)]) -> Choice {
    Choice {
        action,
        count: 3,
        reward,
        next: SparseDist(next.to_vec()),
        bound: 0.0,
    }
}

/// Two abstract states and the end state; state 1 carries `isCrashed`.
pub fn three_state() -> AbstractMdp {
    let third = 1.0 / 3.0;
    let state = |id, choices, sink| MdpState {
        id,
        choices,
        degenerate: false,
        sink,
        occupancy: if sink { 0 } else { 3 },
    };
    AbstractMdp {
        states: vec![
            state(
                0,
                vec![
                    choice(0, 1.5, &[(0, third), (1, third), (2, third)]),
                    choice(4, 0.25, &[(0, 0.75), (2, 0.25)]),
                ],
                false,
            ),
            state(1, vec![choice(2, -1.0, &[(2, 1.0)])], false),
            state(2, vec![choice(0, 0.0, &[(2, 1.0)])], true),
        ],
        num_actions: 5,
        gamma: 0.95,
        delta: 0.05,
        p_tol: None,
        initial: SparseDist(vec![(0, 2.0 / 3.0), (1, 1.0 / 3.0)]),
        label_names: vec!["isCrashed".into()],
        labels: vec![vec![false], vec![true], vec![false]],
        pruned: vec![],
    }
}


/// Random cell statistics over actions `0..4`, rewards in [-1, 1] and
/// successors in `{0, 1, 2, 3, END}`.
pub fn random_cell(rng: &mut impl Rng) -> CellStats {
    let mut actions: Vec<u32> = (0..4).collect();
    actions.shuffle(rng);
    actions.truncate(rng.gen_range(1..=3));
    actions.sort_unstable();
    let targets = [0, 1, 2, 3, END];
    CellStats {
        index: vec![],
        actions: actions
            .into_iter()
            .map(|action| {
                let mut next: Vec<u32> = targets.to_vec();
                next.shuffle(rng);
                next.truncate(rng.gen_range(1..=4));
                let w: Vec<f64> = next.iter().map(|_| rng.gen_range(1..10) as f64).collect();
                let total: f64 = w.iter().sum();
                ActionStats {
                    action,
                    count: rng.gen_range(1..20),
                    reward: rng.gen_range(-1.0..1.0),
                    next: SparseDist::from_pairs(next.into_iter().zip(w.into_iter().map(|x| x / total))),
                }
            })
            .collect(),
        theta: vec![rng.gen(), rng.gen()],
        t_mean: rng.gen_range(0.0..50.0),
        v_hat_mean: 0.0,
        occupancy: 1,
    }
}
