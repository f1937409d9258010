//! Toy driving environments with scripted controllers: ACC-1D car following,
//! LKA lateral keeping, and an ICA grid intersection.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::action::{ActionAbstraction, ActionRange};
use crate::error::Result;
use crate::ingest::{Provenance, TrajectoryDataset};
use crate::model::{ConcreteState, DatasetSchema, FeatureSpec};

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<S> {
    pub next: S,
    pub reward: f64,
    pub done: bool,
    /// Label values raised by this step, in schema order.
    pub labels: Vec<bool>,
}

/// A deterministic episodic environment with a fixed scenario.
pub trait Environment {
    type State: Clone;

    fn schema(&self) -> DatasetSchema;
    fn action_ranges(&self) -> Vec<ActionRange>;
    fn reset(&self) -> Self::State;
    fn step(&self, s: &Self::State, action: &[f64]) -> Step<Self::State>;
    fn features(&self, s: &Self::State) -> Vec<f64>;
    fn time(&self, s: &Self::State) -> u64;
    /// Hand-written reference controller.
    fn scripted_action(&self, s: &Self::State) -> Vec<f64>;

    fn action_abstraction(&self) -> Result<ActionAbstraction> {
        ActionAbstraction::new(self.action_ranges())
    }
}

fn features(names: &[(&str, &str)]) -> Vec<FeatureSpec> {
    names
        .iter()
        .map(|&(name, unit)| FeatureSpec {
            name: name.into(),
            unit: unit.into(),
        })
        .collect()
}

const GAP0: (f64, f64) = (5.0, 35.0);
const HW: (f64, f64) = (0.2, 1.5);
const BRAKE: (f64, f64) = (1.0, 8.0);

/// ACC-1D lead-vehicle scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccScenario {
    pub gap0: f64,
    pub v_ego0: f64,
    /// Lead speed `base + amplitude·sin(2π·t·Δt/period + phase)`, clamped to [0, 40].
    pub lead_base: f64,
    pub lead_amplitude: f64,
    pub lead_period: f64,
    pub lead_phase: f64,
    /// Time headway the scripted driver keeps, s.
    pub headway: f64,
    /// Hardest braking the scripted driver applies, m/s².
    pub max_brake: f64,
}

impl AccScenario {
    pub fn sample(rng: &mut impl Rng) -> Self {
        Self {
            gap0: rng.gen_range(GAP0.0..GAP0.1),
            v_ego0: rng.gen_range(12.0..28.0),
            lead_base: rng.gen_range(16.0..22.0),
            lead_amplitude: rng.gen_range(0.0..4.0),
            lead_period: rng.gen_range(2.0..6.0),
            lead_phase: rng.gen_range(0.0..2.0 * PI),
            headway: rng.gen_range(HW.0..HW.1),
            max_brake: rng.gen_range(BRAKE.0..BRAKE.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccState {
    pub gap: f64,
    pub v_ego: f64,
    pub v_lead: f64,
    pub t: u64,
}

/// Car following with Δt = 0.1 s, speeds in [0, 40] m/s, gap capped at 200 m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccEnv {
    pub scenario: AccScenario,
    pub dt: f64,
    pub horizon: u64,
}

impl AccEnv {
    pub const V_MAX: f64 = 40.0;
    pub const GAP_MAX: f64 = 200.0;
    pub const REWARD_PER_SPEED: f64 = 0.05;

    pub fn new(scenario: AccScenario) -> Self {
        Self {
            scenario,
            dt: 0.1,
            horizon: 51,
        }
    }

    /// Scenario drawn from `seed`.
    pub fn seeded(seed: u64) -> Self {
        Self::new(AccScenario::sample(&mut ChaCha8Rng::seed_from_u64(seed)))
    }

    pub fn lead_speed(&self, t: u64) -> f64 {
        let s = &self.scenario;
        let x = s.lead_base + s.lead_amplitude * (2.0 * PI * t as f64 * self.dt / s.lead_period + s.lead_phase).sin();
        x.clamp(0.0, Self::V_MAX)
    }
}

impl Environment for AccEnv {
    type State = AccState;

    fn schema(&self) -> DatasetSchema {
        DatasetSchema {
            features: features(&[("gap", "m"), ("v_ego", "m/s"), ("v_lead", "m/s")]),
            action_dim: 1,
            labels: vec!["isCrashed".into()],
        }
    }

    fn action_ranges(&self) -> Vec<ActionRange> {
        vec![ActionRange {
            lower: -8.0,
            upper: 3.0,
            granularity: 0.5,
        }]
    }

    fn reset(&self) -> AccState {
        AccState {
            gap: self.scenario.gap0,
            v_ego: self.scenario.v_ego0,
            v_lead: self.lead_speed(0),
            t: 0,
        }
    }

    fn step(&self, s: &AccState, action: &[f64]) -> Step<AccState> {
        let accel = action[0].clamp(-8.0, 3.0);
        let v_ego = (s.v_ego + accel * self.dt).clamp(0.0, Self::V_MAX);
        let gap = (s.gap + (s.v_lead - v_ego) * self.dt).min(Self::GAP_MAX);
        let crashed = gap <= 0.0;
        let t = s.t + 1;
        Step {
            next: AccState {
                gap,
                v_ego,
                v_lead: self.lead_speed(t),
                t,
            },
            reward: Self::REWARD_PER_SPEED * v_ego,
            done: crashed || t >= self.horizon,
            labels: vec![crashed],
        }
    }

    fn features(&self, s: &AccState) -> Vec<f64> {
        vec![s.gap, s.v_ego, s.v_lead]
    }

    fn time(&self, s: &AccState) -> u64 {
        s.t
    }

    /// Constant time-headway follower with a 4 m standstill gap.
    fn scripted_action(&self, s: &AccState) -> Vec<f64> {
        let desired = 4.0 + self.scenario.headway * s.v_ego;
        let a = 0.3 * (s.gap - desired) + 1.0 * (s.v_lead - s.v_ego);
        vec![a.clamp(-self.scenario.max_brake, 3.0)]
    }
}

/// Which heading penalty the LKA reward uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadingPenalty {
    /// `1 − d² − cos²θ`, as printed.
    #[default]
    Cos2,
    /// `1 − d² − sin²θ`, which rewards small heading errors.
    Sin2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LkaState {
    /// Lateral offset from the lane center, m.
    pub offset: f64,
    /// Heading error, rad.
    pub heading: f64,
    pub t: u64,
}

/// Lateral kinematics at constant speed with a steering-angle action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LkaEnv {
    pub offset0: f64,
    pub heading0: f64,
    pub speed: f64,
    pub wheelbase: f64,
    pub half_lane: f64,
    pub dt: f64,
    pub horizon: u64,
    pub penalty: HeadingPenalty,
}

impl LkaEnv {
    pub fn seeded(seed: u64, penalty: HeadingPenalty) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            offset0: rng.gen_range(-1.0..1.0),
            heading0: rng.gen_range(-0.1..0.1),
            speed: 20.0,
            wheelbase: 2.7,
            half_lane: 1.75,
            dt: 0.1,
            horizon: 51,
            penalty,
        }
    }

    pub fn reward(&self, offset: f64, heading: f64) -> f64 {
        let h = match self.penalty {
            HeadingPenalty::Cos2 => heading.cos().powi(2),
            HeadingPenalty::Sin2 => heading.sin().powi(2),
        };
        1.0 - offset * offset - h
    }
}

impl Environment for LkaEnv {
    type State = LkaState;

    fn schema(&self) -> DatasetSchema {
        DatasetSchema {
            features: features(&[("offset", "m"), ("heading", "rad")]),
            action_dim: 1,
            labels: vec!["isOutOfLane".into()],
        }
    }

    fn action_ranges(&self) -> Vec<ActionRange> {
        vec![ActionRange {
            lower: -0.1,
            upper: 0.1,
            granularity: 0.01,
        }]
    }

    fn reset(&self) -> LkaState {
        LkaState {
            offset: self.offset0,
            heading: self.heading0,
            t: 0,
        }
    }

    fn step(&self, s: &LkaState, action: &[f64]) -> Step<LkaState> {
        let steer = action[0].clamp(-0.1, 0.1);
        let heading = s.heading + self.speed / self.wheelbase * steer.tan() * self.dt;
        let offset = s.offset + self.speed * heading.sin() * self.dt;
        let out = offset.abs() > self.half_lane;
        let t = s.t + 1;
        Step {
            next: LkaState { offset, heading, t },
            reward: self.reward(offset, heading),
            done: out || t >= self.horizon,
            labels: vec![out],
        }
    }

    fn features(&self, s: &LkaState) -> Vec<f64> {
        vec![s.offset, s.heading]
    }

    fn time(&self, s: &LkaState) -> u64 {
        s.t
    }

    fn scripted_action(&self, s: &LkaState) -> Vec<f64> {
        vec![(-0.02 * s.offset - 0.3 * s.heading).clamp(-0.1, 0.1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcaState {
    /// Ego position along its row, in cells.
    pub x: f64,
    /// Ego speed, cells per step.
    pub v: f64,
    /// Cross-traffic position along its column, in cells.
    pub cross: f64,
    pub t: u64,
}

/// 5×5 grid intersection: the ego drives east along row 2 from column 0 to
/// column 4 while a scripted car drives north along column 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaEnv {
    pub cross0: f64,
    pub cross_speed: f64,
    /// Metres per grid cell.
    pub cell_size: f64,
    pub dt: f64,
    pub horizon: u64,
}

impl IcaEnv {
    pub const GRID: f64 = 5.0;
    pub const GOAL_X: f64 = 4.0;
    const ROW: f64 = 2.0;
    const V_MAX: f64 = 0.5;

    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            cross0: rng.gen_range(-3.0..1.0),
            cross_speed: rng.gen_range(0.1..0.3),
            cell_size: 10.0,
            dt: 0.1,
            horizon: 60,
        }
    }

    fn cross_at(&self, t: u64) -> f64 {
        self.cross0 + self.cross_speed * t as f64
    }

    /// Distance to the goal in metres.
    pub fn goal_distance(&self, x: f64) -> f64 {
        (Self::GOAL_X - x).max(0.0) * self.cell_size
    }
}

impl Environment for IcaEnv {
    type State = IcaState;

    fn schema(&self) -> DatasetSchema {
        DatasetSchema {
            features: features(&[("x", "cell"), ("v", "cell/step"), ("cross", "cell")]),
            action_dim: 1,
            labels: vec!["isCrashed".into(), "reachDest".into()],
        }
    }

    fn action_ranges(&self) -> Vec<ActionRange> {
        vec![ActionRange {
            lower: -0.1,
            upper: 0.1,
            granularity: 0.02,
        }]
    }

    fn reset(&self) -> IcaState {
        IcaState {
            x: 0.0,
            v: 0.1,
            cross: self.cross0,
            t: 0,
        }
    }

    fn step(&self, s: &IcaState, action: &[f64]) -> Step<IcaState> {
        let v = (s.v + action[0].clamp(-0.1, 0.1)).clamp(0.0, Self::V_MAX);
        let x = (s.x + v).min(Self::GRID - 1.0);
        let t = s.t + 1;
        let cross = self.cross_at(t);
        let same_cell = x.floor() == Self::ROW && cross.floor() == Self::ROW;
        let reached = x >= Self::GOAL_X;
        let speed = v * self.cell_size / self.dt;
        Step {
            next: IcaState { x, v, cross, t },
            reward: 0.05 * speed - 0.0005 * self.goal_distance(x),
            done: same_cell || reached || t >= self.horizon,
            labels: vec![same_cell, reached],
        }
    }

    fn features(&self, s: &IcaState) -> Vec<f64> {
        vec![s.x, s.v, s.cross]
    }

    fn time(&self, s: &IcaState) -> u64 {
        s.t
    }

    /// Slows down while the cross car occupies or approaches the shared cell.
    fn scripted_action(&self, s: &IcaState) -> Vec<f64> {
        let conflict = (Self::ROW - 1.0..Self::ROW + 1.0).contains(&s.cross) && s.x < Self::ROW && s.x + 3.0 * s.v >= Self::ROW - 0.5;
        vec![if conflict { -0.1 } else { 0.05 }]
    }
}

/// Runs the scripted controller once and returns the episode return.
pub fn scripted_return<E: Environment>(env: &E) -> f64 {
    let mut s = env.reset();
    let mut total = 0.0;
    loop {
        let a = env.scripted_action(&s);
        let st = env.step(&s, &a);
        total += st.reward;
        if st.done {
            return total;
        }
        s = st.next;
    }
}

/// Records `episodes` scripted episodes, each in the scenario `make(seed + e)`,
/// with Gaussian action noise of standard deviation `noise`.
pub fn generate_dataset<E: Environment>(
    make: impl Fn(u64) -> E,
    episodes: usize,
    seed: u64,
    noise: f64,
    source: &str,
) -> Result<TrajectoryDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).map_err(|e| crate::error::Error::invalid(format!("action noise: {e}")))?;
    let mut states = Vec::new();
    let mut schema = None;
    for e in 0..episodes {
        let env = make(seed.wrapping_add(e as u64));
        schema.get_or_insert_with(|| env.schema());
        let ranges = env.action_ranges();
        let mut s = env.reset();
        loop {
            let mut a = env.scripted_action(&s);
            for (x, r) in a.iter_mut().zip(&ranges) {
                *x = (*x + normal.sample(&mut rng)).clamp(r.lower, r.upper);
            }
            let st = env.step(&s, &a);
            states.push(ConcreteState {
                episode: e as u64,
                t: env.time(&s),
                features: env.features(&s),
                action: a,
                reward: st.reward,
                terminal: st.done,
                labels: st.labels.clone(),
            });
            if st.done {
                break;
            }
            s = st.next;
        }
    }
    let schema = schema.ok_or_else(|| crate::error::Error::invalid("no episodes requested"))?;
    TrajectoryDataset::from_states(schema, states, Provenance::in_memory(source))
}
