//! Time-series records and the post-run analyses: wave peaks, equilibrium
//! prevalence and masking assortativity.

use serde::Serialize;
use thiserror::Error;

use crate::epidemic::{compartment_counts, AgentHealth, HealthState};
use crate::graph::ContactGraph;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("{0} has zero variance; slope and correlation are undefined")]
    ZeroVariance(&'static str),
    #[error("no node has a neighbor")]
    NoPoints,
}

/// One simulated day.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DailyRecord {
    pub day: u32,
    /// In [`HealthState::ALL`] order.
    pub counts: [usize; 6],
    pub masked: usize,
    pub new_infections: usize,
}

impl DailyRecord {
    pub fn new(day: u32, health: &[AgentHealth], masks: &[bool], new_infections: usize) -> Self {
        Self {
            day,
            counts: compartment_counts(health),
            masked: masks.iter().filter(|&&m| m).count(),
            new_infections,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn infectious(&self) -> usize {
        HealthState::ALL
            .iter()
            .filter(|s| s.is_infectious())
            .map(|s| self.counts[s.index()])
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AssortativityReport {
    pub slope: f64,
    pub pearson_r: f64,
    pub n_points: usize,
}

/// Regresses each node's neighbors' mean masking total on the node's own
/// total. Nodes without neighbors are skipped.
pub fn masking_assortativity(
    masked_days: &[f64],
    g: &ContactGraph,
) -> Result<AssortativityReport, StatsError> {
    assert_eq!(masked_days.len(), g.n_nodes(), "one total per node");
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..g.n_nodes() {
        let degree = g.degree(i);
        if degree == 0 {
            continue;
        }
        xs.push(masked_days[i]);
        ys.push(g.neighbors(i).map(|j| masked_days[j]).sum::<f64>() / degree as f64);
    }
    if xs.is_empty() {
        return Err(StatsError::NoPoints);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    // relative threshold so identical totals stored as floats still count as flat
    let flat = |s: f64, m: f64| s <= 1e-24 * n * (1.0 + m * m);
    if flat(sxx, mx) {
        return Err(StatsError::ZeroVariance("own masking total"));
    }
    if flat(syy, my) {
        return Err(StatsError::ZeroVariance("neighbor masking mean"));
    }
    Ok(AssortativityReport {
        slope: sxy / sxx,
        pearson_r: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        n_points: xs.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeakOptions {
    /// Minimum spacing between reported peaks, in days.
    pub min_separation: usize,
    /// Minimum prominence as a fraction of the population.
    pub min_prominence: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            min_separation: 30,
            min_prominence: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Peak {
    pub day: usize,
    pub height: f64,
    pub prominence: f64,
}

/// Interior local maxima of `series` whose topographic prominence is at
/// least `min_prominence · n`, thinned so no two lie closer than
/// `min_separation` (the taller wins). Flat tops report their midpoint.
pub fn wave_peaks(series: &[f64], n: usize, options: &PeakOptions) -> Vec<Peak> {
    let len = series.len();
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < len {
        if series[i - 1] < series[i] {
            let mut j = i;
            while j + 1 < len && series[j + 1] == series[i] {
                j += 1;
            }
            if j + 1 < len && series[j + 1] < series[i] {
                candidates.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }

    let threshold = options.min_prominence * n as f64;
    let mut peaks: Vec<Peak> = candidates
        .into_iter()
        .map(|p| Peak {
            day: p,
            height: series[p],
            prominence: prominence(series, p),
        })
        .filter(|p| p.prominence >= threshold)
        .collect();

    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| peaks[b].height.total_cmp(&peaks[a].height).then(a.cmp(&b)));
    let mut keep = vec![false; peaks.len()];
    let mut kept_days: Vec<usize> = Vec::new();
    for k in order {
        let day = peaks[k].day;
        if kept_days.iter().all(|&d| d.abs_diff(day) >= options.min_separation) {
            keep[k] = true;
            kept_days.push(day);
        }
    }
    let mut k = 0;
    peaks.retain(|_| {
        k += 1;
        keep[k - 1]
    });
    peaks
}

fn prominence(series: &[f64], p: usize) -> f64 {
    let h = series[p];
    let mut left_min = h;
    for &v in series[..p].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &series[p + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Mean infectious fraction over the last `window` days.
pub fn equilibrium_prevalence(series: &[f64], n: usize, window: usize) -> f64 {
    assert!(
        series.len() > window,
        "series of {} days is too short for a {window}-day window",
        series.len()
    );
    assert!(n > 0 && window > 0);
    let tail = &series[series.len() - window..];
    tail.iter().sum::<f64>() / window as f64 / n as f64
}

/// Whether a peak sequence has at least `min` peaks with strictly
/// decreasing heights.
pub fn is_damped(peaks: &[Peak], min: usize) -> bool {
    peaks.len() >= min && peaks.windows(2).all(|w| w[1].height < w[0].height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_barabasi_albert, Edge};
    use proptest::prelude::*;

    fn clique(offset: usize, k: usize) -> Vec<Edge> {
        let mut out = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                out.push(Edge { u: offset + a, v: offset + b, weight: 1.0 });
            }
        }
        out
    }

    #[test]
    fn two_cliques_are_perfectly_assortative() {
        let edges = clique(0, 5).into_iter().chain(clique(5, 5));
        let g = ContactGraph::new(10, edges).unwrap();
        let days: Vec<f64> = (0..10).map(|i| if i < 5 { 600.0 } else { 0.0 }).collect();
        let rep = masking_assortativity(&days, &g).unwrap();
        assert!((rep.slope - 1.0).abs() < 1e-12);
        assert!((rep.pearson_r - 1.0).abs() < 1e-12);
        assert_eq!(rep.n_points, 10);
    }

    #[test]
    fn bipartite_split_is_anti_assortative() {
        let mut edges = Vec::new();
        for a in 0..3 {
            for b in 3..7 {
                edges.push(Edge { u: a, v: b, weight: 1.0 });
            }
        }
        let g = ContactGraph::new(8, edges).unwrap();
        let days: Vec<f64> = (0..8).map(|i| if i < 3 { 10.0 } else { 0.0 }).collect();
        let rep = masking_assortativity(&days, &g).unwrap();
        assert!((rep.slope + 1.0).abs() < 1e-12);
        assert!((rep.pearson_r + 1.0).abs() < 1e-12);
        // node 7 is isolated
        assert_eq!(rep.n_points, 7);
    }

    #[test]
    fn identical_totals_are_an_error() {
        let g = generate_barabasi_albert(50, 100, 0).unwrap();
        assert_eq!(
            masking_assortativity(&[42.0; 50], &g),
            Err(StatsError::ZeroVariance("own masking total"))
        );
    }

    #[test]
    fn monotone_series_has_no_peaks() {
        let up: Vec<f64> = (0..200).map(f64::from).collect();
        assert!(wave_peaks(&up, 1000, &PeakOptions::default()).is_empty());
        let down: Vec<f64> = up.iter().rev().copied().collect();
        assert!(wave_peaks(&down, 1000, &PeakOptions::default()).is_empty());
    }

    #[test]
    fn damped_sinusoid_has_falling_peaks() {
        let n = 1000;
        let series: Vec<f64> = (0..600)
            .map(|t| {
                let t = t as f64;
                n as f64 * (0.1 + 0.08 * (-t / 200.0).exp() * (2.0 * std::f64::consts::PI * t / 120.0).sin())
            })
            .collect();
        let peaks = wave_peaks(&series, n, &PeakOptions::default());
        assert_eq!(peaks.len(), 5);
        assert!(is_damped(&peaks, 3));
        // peaks of sin(2πt/120) sit at t = 30 + 120k, pulled slightly earlier by the decay
        for (k, p) in peaks.iter().enumerate() {
            assert!((p.day as i64 - (30 + 120 * k as i64)).abs() <= 6);
        }
    }

    #[test]
    fn equal_peaks_both_reported() {
        let mut series = vec![0.0f64; 300];
        for (center, h) in [(100usize, 50.0), (200, 50.0)] {
            for d in 0..30usize {
                let v = h - d as f64;
                series[center - d] = series[center - d].max(v);
                series[center + d] = series[center + d].max(v);
            }
        }
        let peaks = wave_peaks(&series, 100, &PeakOptions::default());
        assert_eq!(peaks.iter().map(|p| p.day).collect::<Vec<_>>(), vec![100, 200]);
        assert!(!is_damped(&peaks, 2));
    }

    #[test]
    fn separation_keeps_the_taller_peak() {
        let mut series = vec![0.0; 100];
        series[40] = 30.0;
        series[50] = 40.0;
        let peaks = wave_peaks(&series, 100, &PeakOptions::default());
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].day, 50);
    }

    #[test]
    fn flat_top_reports_midpoint() {
        let mut series = vec![0.0; 50];
        for v in &mut series[20..=24] {
            *v = 10.0;
        }
        let peaks = wave_peaks(&series, 10, &PeakOptions::default());
        assert_eq!(peaks[0].day, 22);
        assert_eq!(peaks[0].prominence, 10.0);
    }

    #[test]
    fn prevalence_examples() {
        let n = 1500;
        let flat = vec![n as f64 / 15.0; 300];
        assert!((equilibrium_prevalence(&flat, n, 100) - 1.0 / 15.0).abs() < 1e-12);
        let mut dead = vec![50.0; 300];
        dead[150..].iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(equilibrium_prevalence(&dead, n, 100), 0.0);
    }

    #[test]
    #[should_panic(expected = "too short")]
    fn prevalence_needs_a_long_series() {
        equilibrium_prevalence(&[1.0; 100], 10, 100);
    }

    proptest! {
        #[test]
        fn peaks_ignore_constant_offsets(
            series in proptest::collection::vec(0.0..500.0f64, 3..300),
            offset in -1000.0..1000.0f64,
        ) {
            let opts = PeakOptions { min_separation: 10, min_prominence: 0.01 };
            let a: Vec<usize> = wave_peaks(&series, 2000, &opts).iter().map(|p| p.day).collect();
            let shifted: Vec<f64> = series.iter().map(|v| v + offset).collect();
            let b: Vec<usize> = wave_peaks(&shifted, 2000, &opts).iter().map(|p| p.day).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn assortativity_ignores_relabeling(
            seed in 0u64..1000,
            days in proptest::collection::vec(0u32..100, 60),
            perm_seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let g = generate_barabasi_albert(60, 120, seed).unwrap();
            let totals: Vec<f64> = days.iter().map(|&d| f64::from(d)).collect();
            let mut perm: Vec<usize> = (0..60).collect();
            perm.shuffle(&mut crate::rng::from_seed(perm_seed));
            let relabeled = ContactGraph::new(60, g.edges().iter().map(|e| Edge { u: perm[e.u], v: perm[e.v], weight: e.weight })).unwrap();
            let mut moved = vec![0.0; 60];
            for i in 0..60 {
                moved[perm[i]] = totals[i];
            }
            let a = masking_assortativity(&totals, &g);
            let b = masking_assortativity(&moved, &relabeled);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert!((a.slope - b.slope).abs() < 1e-9);
                    prop_assert!((a.pearson_r - b.pearson_r).abs() < 1e-9);
                    prop_assert_eq!(a.n_points, b.n_points);
                }
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }
}
