//! Daily SEIR progression and transmission.
//!
//! Infection travels along two channels: the calibrated contact network,
//! where each infectious–susceptible edge fires independently, and a random
//! mixing channel carrying a fixed share of R0 that is spread over the whole
//! population. Masks scale both channels.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::graph::ContactGraph;

/// Disease-course and spread parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiseaseParams {
    pub mean_exposed_days: f64,
    pub mean_presymp_days: f64,
    pub mean_symp_days: f64,
    pub mean_asymp_days: f64,
    pub immunity_days: u32,
    pub p_asymptomatic: f64,
    pub r0: f64,
    pub mix_fraction: f64,
    pub initial_exposed_fraction: f64,
    pub masking_effectiveness: f64,
    /// Draw immunity from a geometric distribution instead of a fixed countdown.
    pub geometric_immunity: bool,
}

impl Default for DiseaseParams {
    fn default() -> Self {
        Self {
            mean_exposed_days: 2.0,
            mean_presymp_days: 3.0,
            mean_symp_days: 8.0,
            mean_asymp_days: 8.0,
            immunity_days: 75,
            p_asymptomatic: 0.2,
            r0: 5.0,
            mix_fraction: 0.2,
            initial_exposed_fraction: 0.01,
            masking_effectiveness: 0.8,
            geometric_immunity: false,
        }
    }
}

impl DiseaseParams {
    /// Expected number of infectious days of one case.
    pub fn infectious_days(&self) -> f64 {
        self.mean_presymp_days
            + self.p_asymptomatic * self.mean_asymp_days
            + (1.0 - self.p_asymptomatic) * self.mean_symp_days
    }

    /// Every violated constraint, as `field: message`.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("mean_exposed_days", self.mean_exposed_days),
            ("mean_presymp_days", self.mean_presymp_days),
            ("mean_symp_days", self.mean_symp_days),
            ("mean_asymp_days", self.mean_asymp_days),
        ] {
            if !(v >= 1.0 && v.is_finite()) {
                out.push(format!("disease.{name}: mean duration {v} must be >= 1"));
            }
        }
        if self.immunity_days < 1 {
            out.push("disease.immunity_days: must be >= 1".into());
        }
        for (name, v) in [
            ("p_asymptomatic", self.p_asymptomatic),
            ("initial_exposed_fraction", self.initial_exposed_fraction),
            ("masking_effectiveness", self.masking_effectiveness),
        ] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("disease.{name}: {v} outside [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.mix_fraction) {
            out.push(format!(
                "disease.mix_fraction: {} outside [0, 1]",
                self.mix_fraction
            ));
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            out.push(format!("disease.r0: {} must be positive", self.r0));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HealthState {
    Susceptible,
    Exposed,
    PresympInfectious,
    SympInfectious,
    AsympInfectious,
    Recovered,
}

impl HealthState {
    pub const ALL: [HealthState; 6] = [
        HealthState::Susceptible,
        HealthState::Exposed,
        HealthState::PresympInfectious,
        HealthState::SympInfectious,
        HealthState::AsympInfectious,
        HealthState::Recovered,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_infectious(self) -> bool {
        matches!(
            self,
            HealthState::PresympInfectious
                | HealthState::SympInfectious
                | HealthState::AsympInfectious
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            HealthState::Susceptible => "S",
            HealthState::Exposed => "E",
            HealthState::PresympInfectious => "P",
            HealthState::SympInfectious => "Sy",
            HealthState::AsympInfectious => "A",
            HealthState::Recovered => "R",
        }
    }

    /// Whether one day can move an agent from `self` to `next`.
    pub fn can_become(self, next: HealthState) -> bool {
        use HealthState::*;
        self == next
            || matches!(
                (self, next),
                (Susceptible, Exposed)
                    | (Exposed, PresympInfectious)
                    | (PresympInfectious, SympInfectious)
                    | (PresympInfectious, AsympInfectious)
                    | (SympInfectious, Recovered)
                    | (AsympInfectious, Recovered)
                    | (Recovered, Susceptible)
            )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgentHealth {
    pub state: HealthState,
    /// Remaining immune days; only meaningful while Recovered.
    pub immunity_days_left: u32,
}

impl AgentHealth {
    pub const SUSCEPTIBLE: Self = Self {
        state: HealthState::Susceptible,
        immunity_days_left: 0,
    };

    pub fn new(state: HealthState) -> Self {
        Self {
            state,
            immunity_days_left: 0,
        }
    }

    pub fn recovered(days: u32) -> Self {
        Self {
            state: HealthState::Recovered,
            immunity_days_left: days,
        }
    }
}

/// Compartment counts in [`HealthState::ALL`] order.
pub fn compartment_counts(health: &[AgentHealth]) -> [usize; 6] {
    let mut counts = [0; 6];
    for h in health {
        counts[h.state.index()] += 1;
    }
    counts
}

/// Number of agents to expose at the start: `round(fraction · n)`, halves up.
pub fn initial_exposed_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) + 0.5).floor() as usize
}

/// Marks `round(initial_exposed_fraction · n)` uniformly chosen agents Exposed.
pub fn seed_outbreak<R: Rng + ?Sized>(
    n: usize,
    params: &DiseaseParams,
    rng: &mut R,
) -> Vec<AgentHealth> {
    let k = initial_exposed_count(n, params.initial_exposed_fraction).min(n);
    let mut health = vec![AgentHealth::SUSCEPTIBLE; n];
    for i in rand::seq::index::sample(rng, n, k) {
        health[i] = AgentHealth::new(HealthState::Exposed);
    }
    health
}

/// Factor applied to a contact's transmission probability: `(1 − e)` per
/// masked endpoint.
pub fn transmission_multiplier(masked_src: bool, masked_dst: bool, effectiveness: f64) -> f64 {
    let residual = 1.0 - effectiveness;
    match (masked_src, masked_dst) {
        (false, false) => 1.0,
        (true, true) => residual * residual,
        _ => residual,
    }
}

/// Per-agent linearized mask factor used by the mixing channel.
fn mixing_factor(masked: bool, effectiveness: f64) -> f64 {
    if masked {
        1.0 - effectiveness
    } else {
        1.0
    }
}

/// Expected mixing-channel infections for one day.
pub fn expected_mixing_infections(
    health: &[AgentHealth],
    masks: &[bool],
    params: &DiseaseParams,
) -> f64 {
    let n = health.len();
    if n == 0 || params.mix_fraction == 0.0 {
        return 0.0;
    }
    let e = params.masking_effectiveness;
    let (mut infectious, mut susceptible) = (0.0, 0.0);
    for (h, &m) in health.iter().zip(masks) {
        if h.state.is_infectious() {
            infectious += mixing_factor(m, e);
        } else if h.state == HealthState::Susceptible {
            susceptible += mixing_factor(m, e);
        }
    }
    params.mix_fraction * params.r0 / params.infectious_days() * infectious * susceptible
        / n as f64
}

/// One day of disease-course progression for a single agent (no infection).
pub fn progress<R: Rng + ?Sized>(
    h: AgentHealth,
    params: &DiseaseParams,
    rng: &mut R,
) -> AgentHealth {
    use HealthState::*;
    let exits = |rng: &mut R, mean: f64| rng.random::<f64>() < 1.0 / mean;
    match h.state {
        Susceptible => h,
        Exposed => {
            if exits(rng, params.mean_exposed_days) {
                AgentHealth::new(PresympInfectious)
            } else {
                h
            }
        }
        PresympInfectious => {
            if exits(rng, params.mean_presymp_days) {
                if rng.random::<f64>() < params.p_asymptomatic {
                    AgentHealth::new(AsympInfectious)
                } else {
                    AgentHealth::new(SympInfectious)
                }
            } else {
                h
            }
        }
        SympInfectious | AsympInfectious => {
            let mean = if h.state == SympInfectious {
                params.mean_symp_days
            } else {
                params.mean_asymp_days
            };
            if exits(rng, mean) {
                AgentHealth::recovered(params.immunity_days)
            } else {
                h
            }
        }
        Recovered => {
            if params.geometric_immunity {
                if exits(rng, params.immunity_days as f64) {
                    AgentHealth::SUSCEPTIBLE
                } else {
                    h
                }
            } else {
                let left = h.immunity_days_left.saturating_sub(1);
                if left == 0 {
                    AgentHealth::SUSCEPTIBLE
                } else {
                    AgentHealth::recovered(left)
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub health: Vec<AgentHealth>,
    /// Agents infected today, ascending; they are Exposed in `health`.
    pub new_infections: Vec<usize>,
}

/// Advances every agent by one day from a snapshot of today's states.
///
/// Randomness is consumed in a fixed order: one uniform per eligible edge in
/// edge-list order, then the mixing draws, then progression in agent order.
pub fn step_day<R: Rng + ?Sized>(
    health: &[AgentHealth],
    masks: &[bool],
    g: &ContactGraph,
    params: &DiseaseParams,
    rng: &mut R,
) -> StepOutcome {
    let n = g.n_nodes();
    assert_eq!(health.len(), n, "health vector size must match the graph");
    assert_eq!(masks.len(), n, "mask vector size must match the graph");
    let e = params.masking_effectiveness;
    let mut infected = vec![false; n];

    for edge in g.edges() {
        let (a, b) = (health[edge.u].state, health[edge.v].state);
        let target = if a.is_infectious() && b == HealthState::Susceptible {
            edge.v
        } else if b.is_infectious() && a == HealthState::Susceptible {
            edge.u
        } else {
            continue;
        };
        let p = edge.weight * transmission_multiplier(masks[edge.u], masks[edge.v], e);
        if rng.random::<f64>() < p {
            infected[target] = true;
        }
    }

    let expected = expected_mixing_infections(health, masks, params);
    if expected > 0.0 {
        let draws = Poisson::new(expected)
            .expect("expected imports are positive and finite")
            .sample(rng) as usize;
        if draws > 0 {
            let susceptible: Vec<usize> = (0..n)
                .filter(|&j| health[j].state == HealthState::Susceptible)
                .collect();
            let weights = susceptible.iter().map(|&j| mixing_factor(masks[j], e));
            if let Ok(dist) = WeightedIndex::new(weights) {
                for _ in 0..draws {
                    infected[susceptible[dist.sample(rng)]] = true;
                }
            }
        }
    }

    let mut next = Vec::with_capacity(n);
    let mut new_infections = Vec::new();
    for (i, &h) in health.iter().enumerate() {
        if infected[i] {
            new_infections.push(i);
            next.push(AgentHealth::new(HealthState::Exposed));
        } else {
            next.push(progress(h, params, rng));
        }
    }
    StepOutcome {
        health: next,
        new_infections,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::rng::from_seed;

    #[test]
    fn table_defaults() {
        let p = DiseaseParams::default();
        assert_eq!(p.infectious_days(), 11.0);
        assert!(p.violations().is_empty());
    }

    #[test]
    fn violations_name_fields() {
        let p = DiseaseParams {
            mean_exposed_days: 0.5,
            masking_effectiveness: 1.2,
            ..Default::default()
        };
        let v = p.violations();
        assert_eq!(v.len(), 2);
        assert!(v[0].contains("mean_exposed_days"));
        assert!(v[1].contains("masking_effectiveness"));
    }

    #[test]
    fn outbreak_sizes() {
        let p = DiseaseParams::default();
        let h = seed_outbreak(9223, &p, &mut from_seed(1));
        assert_eq!(compartment_counts(&h)[1], 92);
        let h = seed_outbreak(50, &p, &mut from_seed(1));
        assert_eq!(compartment_counts(&h)[1], 1);
        let none = DiseaseParams {
            initial_exposed_fraction: 0.0,
            ..p
        };
        let h = seed_outbreak(10, &none, &mut from_seed(1));
        assert_eq!(compartment_counts(&h)[0], 10);
    }

    #[test]
    fn multipliers() {
        assert_eq!(transmission_multiplier(false, false, 0.8), 1.0);
        assert!((transmission_multiplier(true, false, 0.8) - 0.2).abs() < 1e-15);
        assert!((transmission_multiplier(false, true, 0.8) - 0.2).abs() < 1e-15);
        assert!((transmission_multiplier(true, true, 0.8) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn immunity_countdown_boundary() {
        let g = ContactGraph::new(5, []).unwrap();
        let health = vec![AgentHealth::recovered(1); 5];
        let out = step_day(&health, &[false; 5], &g, &DiseaseParams::default(), &mut from_seed(0));
        assert!(out.health.iter().all(|h| *h == AgentHealth::SUSCEPTIBLE));
    }

    #[test]
    fn isolated_case_without_mixing_never_spreads() {
        let g = ContactGraph::new(4, [Edge { u: 1, v: 2, weight: 1.0 }]).unwrap();
        let p = DiseaseParams {
            mix_fraction: 0.0,
            ..Default::default()
        };
        let mut health = vec![AgentHealth::SUSCEPTIBLE; 4];
        health[0] = AgentHealth::new(HealthState::SympInfectious);
        let mut rng = from_seed(3);
        for _ in 0..200 {
            let out = step_day(&health, &[false; 4], &g, &p, &mut rng);
            assert!(out.new_infections.is_empty());
            health = out.health;
        }
    }

    #[test]
    fn new_infections_become_exposed_and_recovery_sets_immunity() {
        let g = ContactGraph::new(2, [Edge { u: 0, v: 1, weight: 1.0 }]).unwrap();
        let p = DiseaseParams {
            mix_fraction: 0.0,
            mean_symp_days: 1.0,
            ..Default::default()
        };
        let health = vec![
            AgentHealth::new(HealthState::SympInfectious),
            AgentHealth::SUSCEPTIBLE,
        ];
        let out = step_day(&health, &[false; 2], &g, &p, &mut from_seed(0));
        assert_eq!(out.new_infections, vec![1]);
        assert_eq!(out.health[1].state, HealthState::Exposed);
        assert_eq!(out.health[0], AgentHealth::recovered(75));
    }

    #[test]
    fn geometric_immunity_switch() {
        let p = DiseaseParams {
            geometric_immunity: true,
            immunity_days: 4,
            ..Default::default()
        };
        let mut rng = from_seed(5);
        let trials = 20_000;
        let mut total = 0u64;
        for _ in 0..trials {
            let mut h = AgentHealth::recovered(4);
            let mut days = 0;
            while h.state == HealthState::Recovered {
                h = progress(h, &p, &mut rng);
                days += 1;
            }
            total += days;
        }
        let mean = total as f64 / trials as f64;
        assert!((mean - 4.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn legal_transition_table() {
        use HealthState::*;
        assert!(Susceptible.can_become(Exposed));
        assert!(!Susceptible.can_become(PresympInfectious));
        assert!(!Exposed.can_become(Recovered));
        assert!(!Recovered.can_become(Exposed));
        assert!(PresympInfectious.can_become(AsympInfectious));
    }

    #[test]
    #[should_panic(expected = "size must match")]
    fn size_mismatch_is_a_contract_violation() {
        let g = ContactGraph::new(3, []).unwrap();
        step_day(
            &[AgentHealth::SUSCEPTIBLE; 2],
            &[false; 3],
            &g,
            &DiseaseParams::default(),
            &mut from_seed(0),
        );
    }
}
