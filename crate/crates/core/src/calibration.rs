//! Uniform edge-weight scaling to hit a target reproduction number.
//!
//! The network channel is asked to deliver `(1 − mix_fraction) · R0`
//! secondary infections from a typical index case in a fully susceptible,
//! unmasked population. For a single index case each neighbor is an
//! independent trial over the infectious period, so the expected count is
//! the mean over nodes of `Σ_j [1 − E(1 − λ w_ij)^D]`, where `D` is the
//! number of infectious days. [`InfectiousPeriod`] chooses how `D` is
//! modelled: a fixed length, or the geometric phases the epidemic engine
//! actually draws.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epidemic::{self, AgentHealth, DiseaseParams, HealthState};
use crate::graph::ContactGraph;
use crate::rng::{self, Purpose};

// allows λ = 1/max_weight to pass after floating-point rounding
const WEIGHT_SLACK: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("scale {lambda} pushes weight {weight} above 1")]
    Domain { lambda: f64, weight: f64 },
    #[error(
        "network target {target:.4} is unattainable: the ceiling at lambda_max = {lambda_max:.6} is {ceiling:.4}"
    )]
    Unattainable {
        target: f64,
        ceiling: f64,
        lambda_max: f64,
    },
    #[error("invalid calibration input: {0}")]
    Input(String),
}

/// Distribution of the number of days a case spends infectious.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InfectiousPeriod {
    /// Exactly `days` infectious days.
    Fixed { days: f64 },
    /// A geometric presymptomatic phase followed by a geometric symptomatic
    /// or asymptomatic phase, each lasting at least one day.
    GeometricPhases {
        presymp_days: f64,
        symp_days: f64,
        asymp_days: f64,
        p_asymptomatic: f64,
    },
}

impl InfectiousPeriod {
    pub fn fixed(days: f64) -> Self {
        Self::Fixed { days }
    }

    /// The phase structure `params` gives the epidemic engine.
    pub fn geometric(params: &DiseaseParams) -> Self {
        Self::GeometricPhases {
            presymp_days: params.mean_presymp_days,
            symp_days: params.mean_symp_days,
            asymp_days: params.mean_asymp_days,
            p_asymptomatic: params.p_asymptomatic,
        }
    }

    pub fn mean_days(&self) -> f64 {
        match *self {
            Self::Fixed { days } => days,
            Self::GeometricPhases {
                presymp_days,
                symp_days,
                asymp_days,
                p_asymptomatic,
            } => presymp_days + p_asymptomatic * asymp_days + (1.0 - p_asymptomatic) * symp_days,
        }
    }

    /// `E[z^D]`: the chance that a daily trial with failure probability `z`
    /// never succeeds over the whole infectious period.
    pub fn escape_probability(&self, z: f64) -> f64 {
        // geometric on {1, 2, ...} with exit probability q
        let pgf = |mean: f64| {
            let q = 1.0 / mean;
            q * z / (1.0 - (1.0 - q) * z)
        };
        match *self {
            Self::Fixed { days } => z.powf(days),
            Self::GeometricPhases {
                presymp_days,
                symp_days,
                asymp_days,
                p_asymptomatic,
            } => {
                pgf(presymp_days)
                    * (p_asymptomatic * pgf(asymp_days) + (1.0 - p_asymptomatic) * pgf(symp_days))
            }
        }
    }

    fn validate(&self) -> Result<(), CalibrationError> {
        let ok = match *self {
            Self::Fixed { days } => days >= 1.0,
            Self::GeometricPhases {
                presymp_days,
                symp_days,
                asymp_days,
                p_asymptomatic,
            } => {
                presymp_days >= 1.0
                    && symp_days >= 1.0
                    && asymp_days >= 1.0
                    && (0.0..=1.0).contains(&p_asymptomatic)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CalibrationError::Input(format!(
                "infectious period {self:?} needs durations >= 1"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub lambda: f64,
    pub target_r0_network: f64,
    pub achieved_r0_network: f64,
    pub iterations: usize,
    pub period: InfectiousPeriod,
}

/// Mean first-generation network infections from a uniformly chosen index
/// case when every weight is scaled by `lambda`.
pub fn expected_secondary_infections(
    g: &ContactGraph,
    lambda: f64,
    period: &InfectiousPeriod,
) -> Result<f64, CalibrationError> {
    period.validate()?;
    if let Some(w) = g.max_weight() {
        if lambda < 0.0 || lambda * w > 1.0 + WEIGHT_SLACK {
            return Err(CalibrationError::Domain { lambda, weight: w });
        }
    }
    if g.n_nodes() == 0 {
        return Ok(0.0);
    }
    // every edge contributes once from each endpoint
    let total: f64 = g
        .edges()
        .iter()
        .map(|e| {
            let p = (lambda * e.weight).min(1.0);
            2.0 * (1.0 - period.escape_probability(1.0 - p))
        })
        .sum();
    Ok(total / g.n_nodes() as f64)
}

pub fn lambda_max(g: &ContactGraph) -> f64 {
    g.max_weight().map_or(1.0, |w| 1.0 / w)
}

/// Bisection on `λ ∈ (0, 1/max_weight]` until the expected network
/// infections are within `tol` of `(1 − mix_fraction) · r0`. Returns the
/// scaled graph.
pub fn calibrate_to_r0(
    g: &ContactGraph,
    r0: f64,
    mix_fraction: f64,
    period: &InfectiousPeriod,
    tol: f64,
) -> Result<(ContactGraph, CalibrationResult), CalibrationError> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(CalibrationError::Input(format!("r0 {r0} must be positive")));
    }
    if !(0.0..1.0).contains(&mix_fraction) {
        return Err(CalibrationError::Input(format!(
            "mix_fraction {mix_fraction} must lie in [0, 1)"
        )));
    }
    if !(tol > 0.0) {
        return Err(CalibrationError::Input(format!("tolerance {tol} must be positive")));
    }
    let target = (1.0 - mix_fraction) * r0;
    let hi_lambda = lambda_max(g);
    let ceiling = expected_secondary_infections(g, hi_lambda, period)?;
    let finish = |lambda: f64, achieved: f64, iterations: usize| {
        let scaled = g
            .scaled(lambda)
            .map_err(|e| CalibrationError::Input(e.to_string()))?;
        Ok((
            scaled,
            CalibrationResult {
                lambda,
                target_r0_network: target,
                achieved_r0_network: achieved,
                iterations,
                period: *period,
            },
        ))
    };
    if (ceiling - target).abs() <= tol {
        return finish(hi_lambda, ceiling, 0);
    }
    if ceiling < target {
        return Err(CalibrationError::Unattainable {
            target,
            ceiling,
            lambda_max: hi_lambda,
        });
    }
    let (mut lo, mut hi) = (0.0, hi_lambda);
    for iteration in 1..=200 {
        let mid = 0.5 * (lo + hi);
        let value = expected_secondary_infections(g, mid, period)?;
        if (value - target).abs() <= tol {
            return finish(mid, value, iteration);
        }
        if value < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    let value = expected_secondary_infections(g, mid, period)?;
    finish(mid, value, 200)
}

/// Monte-Carlo secondary-infection counts from single index cases.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct R0Estimate {
    pub n_trials: usize,
    pub network: f64,
    pub mixing: f64,
    pub total: f64,
}

/// Direct infections per trial, split by channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrialCount {
    pub network: u64,
    pub mixing: u64,
}

/// Follows one index case from exposure to recovery while everyone else is
/// held susceptible and unmasked, counting the distinct neighbors it infects
/// and the mixing-channel imports it generates.
pub fn index_case_trial<R: Rng + ?Sized>(
    g: &ContactGraph,
    params: &DiseaseParams,
    index: usize,
    rng: &mut R,
) -> TrialCount {
    let n = g.n_nodes();
    let mixing_rate = if n > 0 {
        params.mix_fraction * params.r0 / params.infectious_days() * (n - 1) as f64 / n as f64
    } else {
        0.0
    };
    let mixing = (mixing_rate > 0.0).then(|| Poisson::new(mixing_rate).expect("positive rate"));
    let neighbors: Vec<(usize, f64)> = g.weighted_neighbors(index).collect();
    let mut hit = vec![false; neighbors.len()];
    let mut count = TrialCount::default();
    let mut h = AgentHealth::new(HealthState::Exposed);
    while h.state != HealthState::Recovered {
        if h.state.is_infectious() {
            for (k, &(_, w)) in neighbors.iter().enumerate() {
                if !hit[k] && rng.random::<f64>() < w {
                    hit[k] = true;
                    count.network += 1;
                }
            }
            if let Some(dist) = &mixing {
                count.mixing += dist.sample(rng) as u64;
            }
        }
        h = epidemic::progress(h, params, rng);
    }
    count
}

/// Mean direct infections over `n_trials` uniformly placed index cases.
/// Trials run in parallel, each on its own derived stream, and are summed in
/// trial order.
pub fn estimate_r0_empirical(
    g: &ContactGraph,
    params: &DiseaseParams,
    n_trials: usize,
    seed: u64,
) -> R0Estimate {
    assert!(n_trials >= 1, "need at least one trial");
    assert!(g.n_nodes() >= 1, "need at least one node");
    let counts: Vec<TrialCount> = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, t as u64, 0, Purpose::Calibration);
            let index = rng.random_range(0..g.n_nodes());
            index_case_trial(g, params, index, &mut rng)
        })
        .collect();
    let (network, mixing) = counts
        .iter()
        .fold((0u64, 0u64), |(a, b), c| (a + c.network, b + c.mixing));
    let nt = n_trials as f64;
    R0Estimate {
        n_trials,
        network: network as f64 / nt,
        mixing: mixing as f64 / nt,
        total: (network + mixing) as f64 / nt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_barabasi_albert, generate_uniform_random, Edge};

    fn single_edge(w: f64) -> ContactGraph {
        ContactGraph::new(2, [Edge { u: 0, v: 1, weight: w }]).unwrap()
    }

    #[test]
    fn closed_form_single_edge() {
        let one_day = InfectiousPeriod::fixed(1.0);
        let v = expected_secondary_infections(&single_edge(0.5), 1.0, &one_day).unwrap();
        assert!((v - 0.5).abs() < 1e-15);

        let eleven = InfectiousPeriod::fixed(11.0);
        let v = expected_secondary_infections(&single_edge(0.1), 1.0, &eleven).unwrap();
        // 1 - 0.9^11, computed by repeated multiplication
        let escape = (0..11).fold(1.0, |acc, _| acc * 0.9);
        assert!((v - (1.0 - escape)).abs() < 1e-12);
        assert!((v - 0.6862).abs() < 1e-4);
    }

    #[test]
    fn zero_scale_gives_zero() {
        let g = generate_barabasi_albert(100, 300, 1).unwrap();
        let v = expected_secondary_infections(&g, 0.0, &InfectiousPeriod::fixed(11.0)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn over_scaling_is_a_domain_error() {
        let g = single_edge(0.5);
        let err = expected_secondary_infections(&g, 2.5, &InfectiousPeriod::fixed(11.0));
        assert!(matches!(err, Err(CalibrationError::Domain { .. })));
    }

    #[test]
    fn geometric_escape_matches_enumeration() {
        // sum over the joint geometric durations, truncated far in the tail
        let params = DiseaseParams::default();
        let period = InfectiousPeriod::geometric(&params);
        let z: f64 = 0.97;
        let geo = |mean: f64, d: i32| (1.0 - 1.0 / mean).powi(d - 1) / mean;
        let mut brute = 0.0;
        for a in 1..400 {
            for b in 1..600 {
                let branch = params.p_asymptomatic * geo(8.0, b) + 0.8 * geo(8.0, b);
                brute += geo(3.0, a) * branch * z.powi(a + b);
            }
        }
        assert!((period.escape_probability(z) - brute).abs() < 1e-12);
        assert_eq!(period.mean_days(), 11.0);
    }

    #[test]
    fn paper_targets_split_r0() {
        let g = generate_barabasi_albert(500, 5500, 2).unwrap();
        let period = InfectiousPeriod::fixed(11.0);
        let (scaled, res) = calibrate_to_r0(&g, 5.0, 0.2, &period, 0.01).unwrap();
        assert_eq!(res.target_r0_network, 4.0);
        assert!((res.achieved_r0_network - 4.0).abs() <= 0.01);
        assert!(res.lambda * g.max_weight().unwrap() <= 1.0);
        let again = expected_secondary_infections(&scaled, 1.0, &period).unwrap();
        assert!((again - 4.0).abs() <= 0.01 + 1e-9);
        // topology preserved, weights multiplied by one factor
        for (a, b) in g.edges().iter().zip(scaled.edges()) {
            assert_eq!((a.u, a.v), (b.u, b.v));
            assert!((b.weight - a.weight * res.lambda).abs() < 1e-15);
        }
    }

    #[test]
    fn boundary_target_returns_lambda_max() {
        let g = ContactGraph::new(
            3,
            [
                Edge { u: 0, v: 1, weight: 0.5 },
                Edge { u: 1, v: 2, weight: 0.25 },
            ],
        )
        .unwrap();
        let period = InfectiousPeriod::fixed(11.0);
        let ceiling = expected_secondary_infections(&g, 2.0, &period).unwrap();
        let (_, res) = calibrate_to_r0(&g, ceiling, 0.0, &period, 1e-9).unwrap();
        assert_eq!(res.lambda, 2.0);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn unattainable_target_reports_ceiling() {
        let g = generate_uniform_random(20, 10, 0).unwrap();
        let err = calibrate_to_r0(&g, 5.0, 0.2, &InfectiousPeriod::fixed(11.0), 0.01).unwrap_err();
        match err {
            CalibrationError::Unattainable { ceiling, .. } => assert!((ceiling - 1.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expected_infections_increase_with_scale() {
        for seed in 0..5 {
            let g = generate_uniform_random(60, 200, seed).unwrap();
            let g = ContactGraph::new(
                60,
                g.edges().iter().enumerate().map(|(i, e)| Edge {
                    weight: 0.1 + 0.9 * ((i * 37 % 101) as f64 / 101.0),
                    ..*e
                }),
            )
            .unwrap();
            for period in [InfectiousPeriod::fixed(11.0), InfectiousPeriod::geometric(&DiseaseParams::default())] {
                let lmax = lambda_max(&g);
                let values: Vec<f64> = (1..=50)
                    .map(|k| expected_secondary_infections(&g, lmax * k as f64 / 50.0, &period).unwrap())
                    .collect();
                assert!(values.windows(2).all(|w| w[1] > w[0]));
            }
        }
    }

    #[test]
    fn single_trial_is_a_count() {
        let g = generate_barabasi_albert(100, 300, 1).unwrap();
        let est = estimate_r0_empirical(&g.scaled(0.05).unwrap(), &DiseaseParams::default(), 1, 9);
        assert_eq!(est.n_trials, 1);
        assert!(est.total >= 0.0 && est.total.fract() == 0.0);
    }

    #[test]
    fn mixing_channel_alone_carries_r0() {
        let g = ContactGraph::new(2000, []).unwrap();
        let params = DiseaseParams {
            mix_fraction: 1.0,
            ..Default::default()
        };
        let est = estimate_r0_empirical(&g, &params, 4000, 11);
        assert_eq!(est.network, 0.0);
        // per-trial sd is about 4.2, so 4000 trials give se 0.07
        assert!((est.total - 5.0).abs() < 0.35, "{est:?}");
    }
}
