//! Instance-based learning: declarative memory, similarity-driven retrieval
//! and blended value estimates.
//!
//! Each agent stores experiences as instances `(state, action, value)`. To
//! value an action in a new situation the agent scores every stored instance
//! of that action by how closely its state matches the query, turns the
//! scores into retrieval probabilities with a softmax, and returns the
//! probability-weighted mean of the stored values. This is a kernel smoother
//! over the agent's own history:
//!
//! ```text
//! A_t   = -mu · Σ_k |f_k(query) − f_k(s_t)|
//! P_t   = exp(A_t / tau) / Σ_j exp(A_j / tau)
//! Q̂(s,a) = Σ_t P_t · q_t          (over instances with action a)
//! ```
//!
//! Base-level activation is fixed at zero and retrieval carries no noise, so
//! activation is purely the matching score.

use std::fmt::{self, Write as _};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("no instance stored for action {0:?}")]
    NoInstance(Action),
    #[error("state component {name} = {value} outside [0, 1]")]
    StateRange { name: &'static str, value: f64 },
    #[error("snapshot line {line}: {msg}")]
    Snapshot { line: usize, msg: String },
}

/// An agent's observation: masked-neighbor share, infectious-neighbor share
/// and population infectious share.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub m_local: f64,
    pub i_local: f64,
    pub i_global: f64,
}

impl StateVector {
    pub fn new(m_local: f64, i_local: f64, i_global: f64) -> Result<Self, MemoryError> {
        for (name, value) in [
            ("m_local", m_local),
            ("i_local", i_local),
            ("i_global", i_global),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(MemoryError::StateRange { name, value });
            }
        }
        Ok(Self {
            m_local,
            i_local,
            i_global,
        })
    }

    pub fn components(&self) -> [f64; 3] {
        [self.m_local, self.i_local, self.i_global]
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.components()
            .iter()
            .zip(other.components())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// The eight corners of the unit cube.
    pub fn corners() -> impl Iterator<Item = StateVector> {
        (0..8u8).map(|bits| StateVector {
            m_local: f64::from(bits & 1),
            i_local: f64::from((bits >> 1) & 1),
            i_global: f64::from((bits >> 2) & 1),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Unmask = 0,
    Mask = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Unmask, Action::Mask];

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn is_mask(self) -> bool {
        self == Action::Mask
    }

    fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Action::Unmask),
            1 => Some(Action::Mask),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Instance {
    pub state: StateVector,
    pub action: Action,
    pub q: f64,
    pub t_created: u32,
    /// Pinned instances are never evicted.
    pub pinned: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryParams {
    /// Mismatch penalty per unit of L1 state distance.
    pub mu: f64,
    /// Softmax temperature for retrieval.
    pub tau: f64,
    /// Total instance cap including pinned ones; `None` is unbounded.
    pub capacity: Option<usize>,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self {
            mu: 5.0,
            tau: 0.25,
            capacity: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// Inverse temperature of the Boltzmann policy.
    pub beta: f64,
    /// Discount on the best blended next-state value.
    pub gamma: f64,
    /// Learning rate; 1.0 stores the target itself.
    pub alpha: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            beta: 5.0,
            gamma: 0.0,
            alpha: 1.0,
        }
    }
}

/// `−mu · ‖query − stored‖₁`; zero only for identical states.
pub fn matching_score(query: &StateVector, stored: &StateVector, mu: f64) -> f64 {
    -mu * query.l1_distance(stored)
}

/// Softmax of `activations / tau`, shifted by the maximum for stability.
pub fn retrieval_probabilities(activations: &[f64], tau: f64) -> Vec<f64> {
    assert!(!activations.is_empty(), "retrieval needs at least one activation");
    assert!(tau > 0.0, "temperature must be positive");
    let max = activations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = activations.iter().map(|a| ((a - max) / tau).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Probability of masking under the Boltzmann policy.
pub fn mask_probability(q_mask: f64, q_unmask: f64, beta: f64) -> f64 {
    // logistic form of exp(βQm) / (exp(βQm) + exp(βQu))
    1.0 / (1.0 + (-beta * (q_mask - q_unmask)).exp())
}

pub fn select_action<R: Rng + ?Sized>(q_mask: f64, q_unmask: f64, beta: f64, rng: &mut R) -> Action {
    if rng.random::<f64>() < mask_probability(q_mask, q_unmask, beta) {
        Action::Mask
    } else {
        Action::Unmask
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeclarativeMemory {
    instances: Vec<Instance>,
    params: MemoryParams,
}

impl DeclarativeMemory {
    pub fn new(params: MemoryParams) -> Self {
        assert!(params.mu > 0.0 && params.tau > 0.0, "mu and tau must be positive");
        Self {
            instances: Vec::new(),
            params,
        }
    }

    pub fn params(&self) -> &MemoryParams {
        &self.params
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Appends `instance`, evicting the oldest unpinned instance first if the
    /// memory is at capacity.
    pub fn insert(&mut self, instance: Instance) {
        if let Some(cap) = self.params.capacity {
            if self.instances.len() >= cap {
                if let Some(pos) = self.instances.iter().position(|i| !i.pinned) {
                    self.instances.remove(pos);
                } else {
                    return;
                }
            }
        }
        self.instances.push(instance);
    }

    /// Blended value estimate `Q̂(s, a)` over instances of `action`.
    pub fn blend(&self, state: &StateVector, action: Action) -> Result<f64, MemoryError> {
        let (activations, values): (Vec<f64>, Vec<f64>) = self
            .instances
            .iter()
            .filter(|i| i.action == action)
            .map(|i| (matching_score(state, &i.state, self.params.mu), i.q))
            .unzip();
        if activations.is_empty() {
            return Err(MemoryError::NoInstance(action));
        }
        let probs = retrieval_probabilities(&activations, self.params.tau);
        Ok(probs.iter().zip(&values).map(|(p, q)| p * q).sum())
    }

    /// Blended estimates for `(unmask, mask)`.
    pub fn blend_both(&self, state: &StateVector) -> Result<(f64, f64), MemoryError> {
        Ok((
            self.blend(state, Action::Unmask)?,
            self.blend(state, Action::Mask)?,
        ))
    }

    /// Stores the outcome of taking `action` in `state`.
    ///
    /// The target is `reward` when `gamma == 0`, otherwise
    /// `reward + gamma · max_a Q̂(next, a)`. The stored value moves the prior
    /// blended estimate toward the target by `alpha`; with `alpha = 1` it is
    /// the target. Returns the stored value.
    pub fn learn(
        &mut self,
        state: StateVector,
        action: Action,
        reward: f64,
        next: Option<&StateVector>,
        policy: &PolicyParams,
        t: u32,
    ) -> Result<f64, MemoryError> {
        let target = if policy.gamma > 0.0 {
            let next = next.expect("discounted learning needs the next state");
            let (u, m) = self.blend_both(next)?;
            reward + policy.gamma * u.max(m)
        } else {
            reward
        };
        let q = if policy.alpha == 1.0 {
            target
        } else {
            let prior = self.blend(&state, action)?;
            prior + policy.alpha * (target - prior)
        };
        self.insert(Instance {
            state,
            action,
            q,
            t_created: t,
            pinned: false,
        });
        Ok(q)
    }

    /// Plain-text dump, one instance per line.
    pub fn to_snapshot(&self) -> String {
        let mut out = String::from("# declarative memory: t action q m_local i_local i_global pinned\n");
        let cap = self
            .params
            .capacity
            .map_or_else(|| "-".to_string(), |c| c.to_string());
        let _ = writeln!(
            out,
            "params {} {} {}",
            self.params.mu, self.params.tau, cap
        );
        for i in &self.instances {
            let _ = writeln!(
                out,
                "instance {} {} {} {} {} {} {}",
                i.t_created,
                i.action as u8,
                i.q,
                i.state.m_local,
                i.state.i_local,
                i.state.i_global,
                u8::from(i.pinned)
            );
        }
        out
    }

    pub fn from_snapshot(text: &str) -> Result<Self, MemoryError> {
        let mut params = None;
        let mut instances = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |msg: &str| MemoryError::Snapshot {
                line: line_no,
                msg: msg.to_string(),
            };
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            let num = |k: usize| -> Result<f64, MemoryError> {
                fields
                    .get(k)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| err(&format!("field {k} is not a number")))
            };
            match fields[0] {
                "params" if fields.len() == 4 => {
                    let capacity = match fields[3] {
                        "-" => None,
                        c => Some(c.parse().map_err(|_| err("bad capacity"))?),
                    };
                    let (mu, tau) = (num(1)?, num(2)?);
                    if !(mu > 0.0 && tau > 0.0) {
                        return Err(err("mu and tau must be positive"));
                    }
                    params = Some(MemoryParams { mu, tau, capacity });
                }
                "instance" if fields.len() == 8 => {
                    let t_created = fields[1].parse().map_err(|_| err("bad timestep"))?;
                    let action = fields[2]
                        .parse::<u8>()
                        .ok()
                        .and_then(Action::from_bit)
                        .ok_or_else(|| err("action must be 0 or 1"))?;
                    let q = num(3)?;
                    if !q.is_finite() {
                        return Err(err("value must be finite"));
                    }
                    let state = StateVector::new(num(4)?, num(5)?, num(6)?)
                        .map_err(|e| err(&e.to_string()))?;
                    let pinned = match fields[7] {
                        "0" => false,
                        "1" => true,
                        _ => return Err(err("pinned flag must be 0 or 1")),
                    };
                    instances.push(Instance {
                        state,
                        action,
                        q,
                        t_created,
                        pinned,
                    });
                }
                _ => return Err(err("unrecognized line")),
            }
        }
        let params = params.ok_or(MemoryError::Snapshot {
            line: 0,
            msg: "missing params line".into(),
        })?;
        Ok(Self { instances, params })
    }
}

impl fmt::Display for DeclarativeMemory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_snapshot())
    }
}

/// A memory holding the true reward at every corner of the state cube for
/// both actions: 16 pinned instances.
pub fn seed_boundary_memory<F>(reward: F, params: MemoryParams) -> DeclarativeMemory
where
    F: Fn(&StateVector, Action) -> f64,
{
    let mut memory = DeclarativeMemory::new(params);
    for state in StateVector::corners() {
        for action in Action::ALL {
            memory.instances.push(Instance {
                state,
                action,
                q: reward(&state, action),
                t_created: 0,
                pinned: true,
            });
        }
    }
    memory
}
