//! Links the epidemic to agent cognition: what each agent observes, the
//! intrinsic utility of masking, and the weekly decision cycle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cogibl::{
    self, seed_boundary_memory, Action, DeclarativeMemory, MemoryError, MemoryParams,
    PolicyParams, StateVector,
};
use crate::epidemic::{AgentHealth, HealthState};
use crate::graph::ContactGraph;

/// How the risk-reduction term mixes local and global infection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskForm {
    /// `c · i_local + (1 − c) · i_global`
    #[default]
    Convex,
    /// `c · i_local + (1 − c · i_global)`
    AsWritten,
}

/// Utility weights: discomfort `w1`, conformity `w2`, risk reduction `w3`,
/// local-infection salience `c` and masking factor `mf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub c: f64,
    pub mf: f64,
    pub rr_as_written: bool,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w1: 0.5,
            w2: 0.5,
            w3: 7.5,
            c: 0.8,
            mf: 0.2,
            rr_as_written: false,
        }
    }
}

impl RewardWeights {
    pub fn risk_form(&self) -> RiskForm {
        if self.rr_as_written {
            RiskForm::AsWritten
        } else {
            RiskForm::Convex
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3)] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("reward.{name}: {v} must be a non-negative number"));
            }
        }
        for (name, v) in [("c", self.c), ("mf", self.mf)] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("reward.{name}: {v} outside [0, 1]"));
            }
        }
        out
    }
}

/// `R = −w1·DP + w2·CR + w3·RR` with `DP = a`, `CR = 1 − |a − m_local|` and
/// `RR = a·(1 − mf)·risk`, where `risk` follows [`RiskForm`].
pub fn reward(s: &StateVector, a: Action, w: &RewardWeights) -> f64 {
    let act = a.as_f64();
    let discomfort = act;
    let conformity = 1.0 - (act - s.m_local).abs();
    let risk = match w.risk_form() {
        RiskForm::Convex => w.c * s.i_local + (1.0 - w.c) * s.i_global,
        RiskForm::AsWritten => w.c * s.i_local + (1.0 - w.c * s.i_global),
    };
    let risk_reduction = act * (1.0 - w.mf) * risk;
    -w.w1 * discomfort + w.w2 * conformity + w.w3 * risk_reduction
}

/// Which infectious states an agent can see in others.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    #[default]
    Symptomatic,
    AllInfectious,
}

impl Visibility {
    pub fn sees(self, state: HealthState) -> bool {
        match self {
            Visibility::Symptomatic => state == HealthState::SympInfectious,
            Visibility::AllInfectious => state.is_infectious(),
        }
    }
}

/// Observations for every agent from one frozen snapshot.
pub fn observe_all(
    g: &ContactGraph,
    health: &[AgentHealth],
    masks: &[bool],
    visibility: Visibility,
) -> Vec<StateVector> {
    let n = g.n_nodes();
    assert_eq!(health.len(), n, "health vector size must match the graph");
    assert_eq!(masks.len(), n, "mask vector size must match the graph");
    let visible: Vec<bool> = health.iter().map(|h| visibility.sees(h.state)).collect();
    let i_global = if n == 0 {
        0.0
    } else {
        visible.iter().filter(|&&v| v).count() as f64 / n as f64
    };
    (0..n)
        .map(|i| local_view(g, i, masks, &visible, i_global))
        .collect()
}

fn local_view(
    g: &ContactGraph,
    agent: usize,
    masks: &[bool],
    visible: &[bool],
    i_global: f64,
) -> StateVector {
    let degree = g.degree(agent);
    if degree == 0 {
        return StateVector {
            m_local: 0.0,
            i_local: 0.0,
            i_global,
        };
    }
    let (mut masked, mut sick) = (0usize, 0usize);
    for nb in g.neighbors(agent) {
        masked += usize::from(masks[nb]);
        sick += usize::from(visible[nb]);
    }
    StateVector {
        m_local: masked as f64 / degree as f64,
        i_local: sick as f64 / degree as f64,
        i_global,
    }
}

/// Observation of a single agent.
pub fn observe(
    agent: usize,
    g: &ContactGraph,
    health: &[AgentHealth],
    masks: &[bool],
    visibility: Visibility,
) -> StateVector {
    let visible: Vec<bool> = health.iter().map(|h| visibility.sees(h.state)).collect();
    let i_global = visible.iter().filter(|&&v| v).count() as f64 / health.len().max(1) as f64;
    local_view(g, agent, masks, &visible, i_global)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSchedule {
    pub decision_period: u32,
}

impl Default for BehaviorSchedule {
    fn default() -> Self {
        Self { decision_period: 7 }
    }
}

impl BehaviorSchedule {
    pub fn is_decision_day(&self, day: u32) -> bool {
        day % self.decision_period == 0
    }
}

/// Everything the decision cycle needs besides the simulation state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BehaviorParams {
    pub weights: RewardWeights,
    pub visibility: Visibility,
    pub memory: MemoryParams,
    pub policy: PolicyParams,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            visibility: Visibility::default(),
            memory: MemoryParams::default(),
            policy: PolicyParams::default(),
        }
    }
}

/// An experience whose value target still needs the next observation.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Pending {
    state: StateVector,
    action: Action,
    reward: f64,
}

/// The cognitive side of every agent.
#[derive(Clone, Debug)]
pub struct Population {
    memories: Vec<DeclarativeMemory>,
    pending: Vec<Option<Pending>>,
    last_actions: Vec<Action>,
}

impl Population {
    /// Gives each of `n` agents a memory seeded with the true reward at the
    /// corners of the state cube.
    pub fn new(n: usize, params: &BehaviorParams) -> Self {
        let w = params.weights;
        let seed = seed_boundary_memory(|s, a| reward(s, a, &w), params.memory);
        Self {
            memories: vec![seed; n],
            pending: vec![None; n],
            last_actions: vec![Action::Unmask; n],
        }
    }

    pub fn len(&self) -> usize {
        self.memories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memories.is_empty()
    }

    pub fn memory(&self, agent: usize) -> &DeclarativeMemory {
        &self.memories[agent]
    }

    pub fn last_actions(&self) -> &[Action] {
        &self.last_actions
    }
}

/// What one decision epoch produced.
#[derive(Clone, Debug)]
pub struct EpochOutcome {
    pub masks: Vec<bool>,
    pub observations: Vec<StateVector>,
    pub rewards: Vec<f64>,
}

/// Runs one simultaneous decision for every agent.
///
/// All agents observe the same snapshot of `health` and the previous
/// `masks`, blend both action values from memory and sample an action from
/// the Boltzmann policy. Each agent's reward is then evaluated on the
/// post-decision observation (same health, new masks) and stored against the
/// state it acted on. With `gamma > 0` the store waits one epoch so the next
/// observation can enter the target.
pub fn decision_epoch<R: Rng + ?Sized>(
    population: &mut Population,
    g: &ContactGraph,
    health: &[AgentHealth],
    masks: &[bool],
    params: &BehaviorParams,
    day: u32,
    rng: &mut R,
) -> Result<EpochOutcome, MemoryError> {
    let n = g.n_nodes();
    assert_eq!(population.len(), n, "population size must match the graph");
    let observations = observe_all(g, health, masks, params.visibility);
    let discounted = params.policy.gamma > 0.0;

    if discounted {
        for (i, obs) in observations.iter().enumerate() {
            if let Some(p) = population.pending[i].take() {
                population.memories[i].learn(
                    p.state,
                    p.action,
                    p.reward,
                    Some(obs),
                    &params.policy,
                    day,
                )?;
            }
        }
    }

    let mut actions = Vec::with_capacity(n);
    for (memory, obs) in population.memories.iter().zip(&observations) {
        let (q_unmask, q_mask) = memory.blend_both(obs)?;
        actions.push(cogibl::select_action(q_mask, q_unmask, params.policy.beta, rng));
    }
    let new_masks: Vec<bool> = actions.iter().map(|a| a.is_mask()).collect();

    let after = observe_all(g, health, &new_masks, params.visibility);
    let mut rewards = Vec::with_capacity(n);
    for i in 0..n {
        let r = reward(&after[i], actions[i], &params.weights);
        rewards.push(r);
        if discounted {
            population.pending[i] = Some(Pending {
                state: observations[i],
                action: actions[i],
                reward: r,
            });
        } else {
            population.memories[i].learn(
                observations[i],
                actions[i],
                r,
                None,
                &params.policy,
                day,
            )?;
        }
    }
    population.last_actions = actions;
    Ok(EpochOutcome {
        masks: new_masks,
        observations,
        rewards,
    })
}
