//! Scenario orchestration: network construction, calibration, replicate
//! simulation, analysis and artifact output.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::behavior::{decision_epoch, Population};
use crate::calibration::{
    calibrate_to_r0, estimate_r0_empirical, CalibrationError, CalibrationResult, R0Estimate,
};
use crate::cogibl::MemoryError;
use crate::config::{resolved_parameters, ConfigError, Generator, ScenarioConfig};
use crate::epidemic::{seed_outbreak, step_day, AgentHealth};
use crate::graph::{self, ContactGraph, GraphError, RewireOptions, RewireReport};
use crate::metrics::{
    equilibrium_prevalence, is_damped, masking_assortativity, wave_peaks, AssortativityReport,
    DailyRecord, Peak,
};
use crate::rng::{self, derive_seed, Purpose};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario '{scenario}': network: {source}")]
    Graph {
        scenario: String,
        #[source]
        source: GraphError,
    },
    #[error("scenario '{scenario}': calibration: {source}")]
    Calibration {
        scenario: String,
        #[source]
        source: CalibrationError,
    },
    #[error("scenario '{scenario}', replicate {replicate}: {source}")]
    Memory {
        scenario: String,
        replicate: usize,
        #[source]
        source: MemoryError,
    },
    #[error("scenario '{scenario}': writing {path}: {source}")]
    Output {
        scenario: String,
        path: String,
        #[source]
        source: io::Error,
    },
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}

/// The calibrated network a scenario runs on.
#[derive(Clone, Debug)]
pub struct PreparedNetwork {
    pub graph: ContactGraph,
    pub calibration: CalibrationResult,
    pub rewire: Option<RewireReport>,
}

/// Builds the raw contact network named by the config, downsampling it if
/// a sample target is set.
pub fn build_network(
    cfg: &ScenarioConfig,
) -> Result<(ContactGraph, Option<RewireReport>), GraphError> {
    let net = &cfg.network;
    let seed = derive_seed(cfg.seed, &[Purpose::Network as u64]);
    let base = match net.generator {
        Generator::BarabasiAlbert => graph::generate_barabasi_albert(
            net.n.unwrap_or_default(),
            net.edges.unwrap_or_default(),
            seed,
        )?,
        Generator::UniformRandom => graph::generate_uniform_random(
            net.n.unwrap_or_default(),
            net.edges.unwrap_or_default(),
            seed,
        )?,
        Generator::EdgeList => graph::load_edge_list(
            net.path
                .as_ref()
                .ok_or_else(|| GraphError::Config("edge_list generator needs a path".into()))?,
        )?,
    };
    match net.sample_target {
        Some(target) => {
            let (g, report) = graph::sample_and_rewire(
                &base,
                target,
                derive_seed(cfg.seed, &[Purpose::Sampling as u64]),
                RewireOptions {
                    max_attempts: net.rewire_max_attempts,
                },
            )?;
            Ok((g, Some(report)))
        }
        None => Ok((base, None)),
    }
}

pub fn prepare_network(cfg: &ScenarioConfig) -> Result<PreparedNetwork, RunError> {
    let (raw, rewire) = build_network(cfg).map_err(|source| RunError::Graph {
        scenario: cfg.name.clone(),
        source,
    })?;
    let (graph, calibration) = calibrate_to_r0(
        &raw,
        cfg.disease.r0,
        cfg.disease.mix_fraction,
        &cfg.infectious_period(),
        cfg.calibration.tol,
    )
    .map_err(|source| RunError::Calibration {
        scenario: cfg.name.clone(),
        source,
    })?;
    info!(
        "calibrated {} nodes / {} edges: lambda = {:.6}, network R0 = {:.4}",
        graph.n_nodes(),
        graph.n_edges(),
        calibration.lambda,
        calibration.achieved_r0_network
    );
    Ok(PreparedNetwork {
        graph,
        calibration,
        rewire,
    })
}

/// Raw per-replicate output.
#[derive(Clone, Debug)]
pub struct ReplicateRun {
    pub replicate: usize,
    pub records: Vec<DailyRecord>,
    /// Days each agent spent masked, counting every recorded day.
    pub masked_days: Vec<u32>,
    /// Decision epochs in which each agent chose to mask.
    pub masked_epochs: Vec<u32>,
    /// Population masking share after each decision epoch.
    pub epoch_mask_fractions: Vec<f64>,
    pub final_health: Vec<AgentHealth>,
}

impl ReplicateRun {
    pub fn infectious_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.infectious() as f64).collect()
    }
}

/// Simulates replicate `replicate` of `cfg` on an already calibrated graph.
///
/// Day `d` is recorded after that day's decision epoch (if any) and before
/// its transmission step; the last recorded day is `horizon_days`.
pub fn simulate_replicate(
    cfg: &ScenarioConfig,
    g: &ContactGraph,
    replicate: usize,
) -> Result<ReplicateRun, MemoryError> {
    let n = g.n_nodes();
    let seed = cfg.seed;
    let rep = replicate as u64;
    let behavior = cfg.behavior();
    let schedule = cfg.schedule();
    let mut health = seed_outbreak(
        n,
        &cfg.disease,
        &mut rng::stream(seed, rep, 0, Purpose::Outbreak),
    );
    let mut population = Population::new(n, &behavior);
    let mut masks = vec![false; n];
    let mut new_infections = 0;
    let horizon = cfg.schedule.horizon_days;
    let mut records = Vec::with_capacity(horizon as usize + 1);
    let mut masked_days = vec![0u32; n];
    let mut masked_epochs = vec![0u32; n];
    let mut epoch_mask_fractions = Vec::new();

    for day in 0..=horizon {
        if schedule.is_decision_day(day) {
            let mut rng = rng::stream(seed, rep, u64::from(day), Purpose::Decision);
            let outcome =
                decision_epoch(&mut population, g, &health, &masks, &behavior, day, &mut rng)?;
            masks = outcome.masks;
            let mut masked = 0;
            for (count, &m) in masked_epochs.iter_mut().zip(&masks) {
                *count += u32::from(m);
                masked += usize::from(m);
            }
            epoch_mask_fractions.push(if n == 0 { 0.0 } else { masked as f64 / n as f64 });
        }
        records.push(DailyRecord::new(day, &health, &masks, new_infections));
        for (count, &m) in masked_days.iter_mut().zip(&masks) {
            *count += u32::from(m);
        }
        if day < horizon {
            let mut rng = rng::stream(seed, rep, u64::from(day), Purpose::Epidemic);
            let out = step_day(&health, &masks, g, &cfg.disease, &mut rng);
            health = out.health;
            new_infections = out.new_infections.len();
        }
    }
    Ok(ReplicateRun {
        replicate,
        records,
        masked_days,
        masked_epochs,
        epoch_mask_fractions,
        final_health: health,
    })
}

/// Headline statistics of one replicate.
#[derive(Clone, Debug, Serialize)]
pub struct ReplicateSummary {
    pub replicate: usize,
    pub peaks: Vec<Peak>,
    pub damped: bool,
    /// Height of the last detected peak over the first.
    pub last_to_first_peak: Option<f64>,
    pub equilibrium_prevalence: Option<f64>,
    pub mask_fraction_range: f64,
    pub assortativity: Option<AssortativityReport>,
    pub assortativity_error: Option<String>,
    /// Same regression on per-agent masked epoch counts.
    pub assortativity_epochs: Option<AssortativityReport>,
    pub cumulative_infections: usize,
}

pub fn summarize(cfg: &ScenarioConfig, g: &ContactGraph, run: &ReplicateRun) -> ReplicateSummary {
    let n = g.n_nodes();
    let series = run.infectious_series();
    let peaks = wave_peaks(&series, n, &cfg.peak_options());
    let window = cfg.analysis.equilibrium_window;
    let equilibrium = (n > 0 && series.len() > window)
        .then(|| equilibrium_prevalence(&series, n, window));
    let (lo, hi) = run
        .epoch_mask_fractions
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &f| {
            (lo.min(f), hi.max(f))
        });
    let days: Vec<f64> = run.masked_days.iter().map(|&d| f64::from(d)).collect();
    let epochs: Vec<f64> = run.masked_epochs.iter().map(|&d| f64::from(d)).collect();
    let (assortativity, assortativity_error) = if n == 0 {
        (None, Some("empty network".to_string()))
    } else {
        match masking_assortativity(&days, g) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let assortativity_epochs = (n > 0)
        .then(|| masking_assortativity(&epochs, g).ok())
        .flatten();
    ReplicateSummary {
        replicate: run.replicate,
        damped: is_damped(&peaks, 3),
        last_to_first_peak: (peaks.len() >= 2)
            .then(|| peaks[peaks.len() - 1].height / peaks[0].height),
        peaks,
        equilibrium_prevalence: equilibrium,
        mask_fraction_range: if hi >= lo { hi - lo } else { 0.0 },
        assortativity,
        assortativity_error,
        assortativity_epochs,
        cumulative_infections: run.records.iter().map(|r| r.new_infections).sum(),
    }
}

/// Runs replicates `0..count` in parallel; results are ordered by index.
pub fn run_replicates(
    cfg: &ScenarioConfig,
    g: &ContactGraph,
    count: usize,
) -> Result<Vec<ReplicateRun>, RunError> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            simulate_replicate(cfg, g, k).map_err(|source| RunError::Memory {
                scenario: cfg.name.clone(),
                replicate: k,
                source,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct NetworkSummary {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub mean_degree: f64,
    pub rewiring: Option<RewiringSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RewiringSummary {
    pub pairing_rule: &'static str,
    pub clusters: usize,
    pub dropped_stubs: usize,
    pub histogram_l1: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub network: NetworkSummary,
    pub calibration: CalibrationResult,
    pub replicates: Vec<ReplicateSummary>,
    /// Every parameter after defaults were applied.
    pub parameters: std::collections::BTreeMap<String, serde_json::Value>,
}

/// Everything a run produces, before it touches the filesystem.
#[derive(Debug)]
pub struct RunArtifacts {
    pub summary: RunSummary,
    pub daily_csv: String,
    pub agents_csv: String,
}

pub fn daily_csv(runs: &[ReplicateRun]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "replicate",
        "day",
        "susceptible",
        "exposed",
        "presymptomatic",
        "symptomatic",
        "asymptomatic",
        "recovered",
        "infectious",
        "masked",
        "new_infections",
    ])
    .expect("in-memory write");
    for run in runs {
        for r in &run.records {
            let mut row = vec![run.replicate.to_string(), r.day.to_string()];
            row.extend(r.counts.iter().map(usize::to_string));
            row.push(r.infectious().to_string());
            row.push(r.masked.to_string());
            row.push(r.new_infections.to_string());
            w.write_record(&row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

pub fn agents_csv(runs: &[ReplicateRun], g: &ContactGraph) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "replicate",
        "agent",
        "degree",
        "masked_days",
        "masked_epochs",
        "final_state",
    ])
    .expect("in-memory write");
    for run in runs {
        for i in 0..g.n_nodes() {
            w.write_record([
                run.replicate.to_string(),
                i.to_string(),
                g.degree(i).to_string(),
                run.masked_days[i].to_string(),
                run.masked_epochs[i].to_string(),
                run.final_health[i].state.label().to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

/// Builds, calibrates, simulates and analyzes `cfg` without writing files.
pub fn execute(cfg: &ScenarioConfig) -> Result<RunArtifacts, RunError> {
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations).into());
    }
    let net = prepare_network(cfg)?;
    let runs = run_replicates(cfg, &net.graph, cfg.schedule.replicates)?;
    let replicates = runs
        .iter()
        .map(|r| summarize(cfg, &net.graph, r))
        .collect();
    let summary = RunSummary {
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        network: NetworkSummary {
            n_nodes: net.graph.n_nodes(),
            n_edges: net.graph.n_edges(),
            mean_degree: net.graph.mean_degree(),
            rewiring: net.rewire.as_ref().map(|r| RewiringSummary {
                pairing_rule: r.pairing_rule,
                clusters: r.clusters,
                dropped_stubs: r.dropped_stubs,
                histogram_l1: r.histogram_l1,
            }),
        },
        calibration: net.calibration.clone(),
        replicates,
        parameters: resolved_parameters(cfg),
    };
    Ok(RunArtifacts {
        summary,
        daily_csv: daily_csv(&runs),
        agents_csv: agents_csv(&runs, &net.graph),
    })
}

/// Runs the scenario and writes `daily.csv`, `agents.csv` and
/// `summary.json` into `cfg.output.dir`. On failure no partial output is
/// left behind.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunSummary, RunError> {
    let artifacts = execute(cfg)?;
    let dir = &cfg.output.dir;
    let json = serde_json::to_string_pretty(&artifacts.summary).expect("summary serializes");
    let files: [(&str, &str); 3] = [
        ("daily.csv", &artifacts.daily_csv),
        ("agents.csv", &artifacts.agents_csv),
        ("summary.json", &json),
    ];
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        fs::create_dir_all(dir).map_err(|e| (dir.clone(), e))?;
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| (path.clone(), e))?;
            written.push(path);
        }
        Ok::<(), (PathBuf, io::Error)>(())
    })();
    if let Err((path, source)) = result {
        for p in &written {
            if let Err(e) = fs::remove_file(p) {
                warn!("could not remove partial output {}: {e}", p.display());
            }
        }
        return Err(RunError::Output {
            scenario: cfg.name.clone(),
            path: path.display().to_string(),
            source,
        });
    }
    Ok(artifacts.summary)
}

/// Calibration report for the `calibrate` command.
#[derive(Clone, Debug, Serialize)]
pub struct CalibrationReport {
    pub scenario: String,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub calibration: CalibrationResult,
    pub empirical: R0Estimate,
    /// Relative gap between the Monte-Carlo and analytic network channel.
    pub network_discrepancy: f64,
}

pub fn calibrate_only(cfg: &ScenarioConfig) -> Result<CalibrationReport, RunError> {
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations).into());
    }
    let net = prepare_network(cfg)?;
    let empirical = estimate_r0_empirical(
        &net.graph,
        &cfg.disease,
        cfg.calibration.check_trials,
        derive_seed(cfg.seed, &[Purpose::Calibration as u64]),
    );
    let target = net.calibration.target_r0_network;
    let network_discrepancy = if target > 0.0 {
        (empirical.network - target) / target
    } else {
        0.0
    };
    if network_discrepancy.abs() > 0.05 {
        warn!(
            "Monte-Carlo network channel {:.3} differs from the analytic target {:.3} by {:.1}%",
            empirical.network,
            target,
            100.0 * network_discrepancy
        );
    }
    Ok(CalibrationReport {
        scenario: cfg.name.clone(),
        n_nodes: net.graph.n_nodes(),
        n_edges: net.graph.n_edges(),
        calibration: net.calibration,
        empirical,
        network_discrepancy,
    })
}

/// Resolves a CLI config argument: an existing file, else a preset name.
pub fn resolve_config(arg: &str) -> Result<ScenarioConfig, ConfigError> {
    let path = Path::new(arg);
    if path.exists() {
        return crate::config::load(path);
    }
    crate::config::preset(arg).ok_or_else(|| ConfigError::Io {
        path: arg.to_string(),
        source: io::Error::new(
            io::ErrorKind::NotFound,
            "no such file and no preset with that name",
        ),
    })
}
