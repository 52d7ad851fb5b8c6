//! Simulation study: exact Matérn fields on K x K grids, censoring, scenario
//! fits S1 to S3, MSPE and timing.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use censpde_core::fem::assemble_fem;
use censpde_core::mcmc::{run_chain, McmcConfig, Priors, SamplerModel, SIMULATION_PHI_UPPER_FRACTION};
use censpde_core::mesh::{build_mesh, diameter, MeshOptions};
use censpde_core::predict::{predict, PredictionGrid};
use censpde_core::simulation::{
    grid_locations, mspe, scenario_data, simulate_replicate, CensorLevel, MaternFieldSimulator, Replicate, Scenario,
    SimConfig,
};
use censpde_core::spde::SpdeStructure;
use censpde_core::variogram::{initial_estimates, VariogramOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::io::write_csv;

/// Prediction uses a stream separate from the chains.
const PREDICT_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub k: usize,
    pub levels: Vec<CensorLevel>,
    pub scenarios: Vec<Scenario>,
    pub n_replicates: usize,
    pub first_replicate: usize,
    pub seed: u64,
    pub mcmc: McmcConfig,
    /// Largest grid side accepted for exact simulation.
    pub max_grid_side: usize,
    pub threads: usize,
}

impl StudyConfig {
    /// Desk-scale defaults: one short chain per fit.
    pub fn desk(k: usize, seed: u64) -> Self {
        Self {
            k,
            levels: vec![CensorLevel::L1, CensorLevel::L2],
            scenarios: Scenario::ALL.to_vec(),
            n_replicates: 20,
            first_replicate: 0,
            seed,
            mcmc: McmcConfig { n_iter: 3000, burn_in: 1500, thin: 3, n_chains: 1, seed, ..McmcConfig::default() },
            max_grid_side: censpde_core::simulation::DEFAULT_MAX_GRID_SIDE,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub level: CensorLevel,
    pub k: usize,
    pub replicate: usize,
    pub replicate_seed: u64,
    pub n_train: usize,
    pub n_censored: usize,
    pub mesh_nodes: usize,
    pub mspe: f64,
    /// Mean posterior predictive sd over test locations.
    pub mean_se: f64,
    /// Share of test values inside the central 95% predictive interval.
    pub coverage95: f64,
    pub seconds: f64,
    pub seconds_per_iteration: f64,
    pub accept_phi: f64,
    pub accept_gamma: f64,
}

/// Seed of replicate `r`; replays with `first_replicate = r` reproduce it.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    let mut z = seed.wrapping_add((r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fit one scenario on one replicate and score it on the held-out values.
pub fn run_scenario(scenario: Scenario, rep: &Replicate, mcmc: &McmcConfig, seed: u64) -> Result<ScenarioResult> {
    let start = Instant::now();
    let data = scenario_data(&rep.training, scenario);
    let mesh = build_mesh(&data.locations, &MeshOptions::scaled_to(diameter(&data.locations)))?;
    let structure = Arc::new(SpdeStructure::new(&assemble_fem(&mesh)?));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (init, _, _) = initial_estimates(&data, &VariogramOptions::default(), &mut rng)?;
    let priors = Priors::for_domain(std::f64::consts::SQRT_2, SIMULATION_PHI_UPPER_FRACTION);
    let (n_train, n_censored) = (data.len(), data.num_censored());
    let model = SamplerModel::new(data, &mesh, structure, priors)?;
    let cfg = McmcConfig { seed, ..mcmc.clone() };
    let sampling = Instant::now();
    let chains = (0..cfg.n_chains as u64)
        .map(|c| run_chain(&model, &cfg, &init, c))
        .collect::<censpde_core::error::Result<Vec<_>>>()?;
    let sampler_seconds = sampling.elapsed().as_secs_f64();
    let grid = PredictionGrid::with_coordinate_design(rep.test_locations());
    let surface = predict(&chains, &mesh, &grid, seed ^ PREDICT_STREAM)?;
    let truth = rep.test_values();
    let covered = truth
        .iter()
        .enumerate()
        .filter(|&(i, t)| surface.q025[i] <= *t && *t <= surface.q975[i])
        .count();
    let rate = |f: fn(&censpde_core::mcmc::AcceptanceStats) -> f64| {
        chains.iter().map(|c| f(&c.acceptance)).sum::<f64>() / chains.len() as f64
    };
    Ok(ScenarioResult {
        scenario,
        level: CensorLevel::None,
        k: 0,
        replicate: 0,
        replicate_seed: seed,
        n_train,
        n_censored,
        mesh_nodes: mesh.num_nodes(),
        mspe: mspe(&surface.mean, &truth),
        mean_se: surface.sd.iter().sum::<f64>() / surface.len() as f64,
        coverage95: covered as f64 / truth.len() as f64,
        seconds: start.elapsed().as_secs_f64(),
        seconds_per_iteration: sampler_seconds / (cfg.n_iter * cfg.n_chains) as f64,
        accept_phi: rate(|a| a.phi.rate()),
        accept_gamma: rate(|a| a.gamma.rate()),
    })
}

/// All scenarios and levels for replicate `r`. The field and split depend
/// only on `(seed, r)`, so every level sees the same field.
pub fn run_replicate(cfg: &StudyConfig, sim: &MaternFieldSimulator, r: usize) -> Result<Vec<ScenarioResult>> {
    let seed = replicate_seed(cfg.seed, r);
    let locs = grid_locations(cfg.k);
    let mut out = Vec::new();
    for &level in &cfg.levels {
        let sc = SimConfig { k: cfg.k, level, seed, n_replicates: 1, ..SimConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rep = simulate_replicate(&sc, sim, &locs, &mut rng)?;
        for &scenario in &cfg.scenarios {
            let mut res = run_scenario(scenario, &rep, &cfg.mcmc, seed)?;
            res.level = level;
            res.k = cfg.k;
            res.replicate = r;
            log::info!(
                "replicate {r} seed {seed} {} {}: mspe {:.4} se {:.4} {:.1}s",
                level.name(),
                scenario.name(),
                res.mspe,
                res.mean_se,
                res.seconds
            );
            out.push(res);
        }
    }
    Ok(out)
}

/// Replicates run on `cfg.threads` workers; results come back ordered by
/// replicate, level and scenario.
pub fn run_study(cfg: &StudyConfig) -> Result<Vec<ScenarioResult>> {
    SimConfig { k: cfg.k, n_replicates: cfg.n_replicates.max(1), ..SimConfig::default() }.validate()?;
    let defaults = SimConfig::default();
    let sim = MaternFieldSimulator::new(&grid_locations(cfg.k), defaults.phi, defaults.gamma, cfg.max_grid_side.pow(2))?;
    let next = AtomicUsize::new(0);
    let done: Mutex<BTreeMap<usize, Result<Vec<ScenarioResult>>>> = Mutex::new(BTreeMap::new());
    std::thread::scope(|s| {
        for _ in 0..cfg.threads.clamp(1, cfg.n_replicates.max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= cfg.n_replicates {
                    break;
                }
                let r = cfg.first_replicate + k;
                let res = run_replicate(cfg, &sim, r);
                done.lock().unwrap().insert(r, res);
            });
        }
    });
    let mut out = Vec::new();
    for (_, res) in done.into_inner().unwrap() {
        out.extend(res?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub level: CensorLevel,
    pub k: usize,
    pub scenario: Scenario,
    pub replicates: usize,
    pub mspe_mean: f64,
    /// Standard error of `mspe_mean`; `None` for a single replicate.
    pub mspe_se: Option<f64>,
    pub pred_se_mean: f64,
    pub coverage95_mean: f64,
    pub time_median: f64,
    pub time_mad: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

/// Aggregate per `(level, K, scenario)` in first-seen order.
pub fn report(results: &[ScenarioResult]) -> Vec<ReportRow> {
    let mut keys: Vec<(CensorLevel, usize, Scenario)> = Vec::new();
    for r in results {
        let key = (r.level, r.k, r.scenario);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(level, k, scenario)| {
            let rows: Vec<&ScenarioResult> =
                results.iter().filter(|r| (r.level, r.k, r.scenario) == (level, k, scenario)).collect();
            let n = rows.len() as f64;
            let mean = |f: fn(&ScenarioResult) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            let mspe_mean = mean(|r| r.mspe);
            let mspe_se = (rows.len() > 1).then(|| {
                let var = rows.iter().map(|r| (r.mspe - mspe_mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            });
            let mut times: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
            let time_median = median(&mut times);
            let mut dev: Vec<f64> = times.iter().map(|t| (t - time_median).abs()).collect();
            ReportRow {
                level,
                k,
                scenario,
                replicates: rows.len(),
                mspe_mean,
                mspe_se,
                pred_se_mean: mean(|r| r.mean_se),
                coverage95_mean: mean(|r| r.coverage95),
                time_median,
                time_mad: median(&mut dev),
            }
        })
        .collect()
}

pub fn write_results(path: &Path, results: &[ScenarioResult]) -> Result<()> {
    write_csv(path, |w| {
        w.write_record([
            "level",
            "k",
            "scenario",
            "replicate",
            "replicate_seed",
            "n_train",
            "n_censored",
            "mesh_nodes",
            "mspe",
            "mean_se",
            "coverage95",
            "seconds",
            "seconds_per_iteration",
            "accept_phi",
            "accept_gamma",
        ])?;
        for r in results {
            w.write_record([
                r.level.name().to_string(),
                r.k.to_string(),
                r.scenario.name().to_string(),
                r.replicate.to_string(),
                r.replicate_seed.to_string(),
                r.n_train.to_string(),
                r.n_censored.to_string(),
                r.mesh_nodes.to_string(),
                r.mspe.to_string(),
                r.mean_se.to_string(),
                r.coverage95.to_string(),
                r.seconds.to_string(),
                r.seconds_per_iteration.to_string(),
                r.accept_phi.to_string(),
                r.accept_gamma.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_csv(path, |w| {
        w.write_record([
            "level",
            "k",
            "scenario",
            "replicates",
            "mspe",
            "mspe_se",
            "pred_se",
            "coverage95",
            "time_median_s",
            "time_mad_s",
        ])?;
        for r in rows {
            w.write_record([
                r.level.name().to_string(),
                r.k.to_string(),
                r.scenario.name().to_string(),
                r.replicates.to_string(),
                r.mspe_mean.to_string(),
                r.mspe_se.map(|v| v.to_string()).unwrap_or_default(),
                r.pred_se_mean.to_string(),
                r.coverage95_mean.to_string(),
                r.time_median.to_string(),
                r.time_mad.to_string(),
            ])?;
        }
        Ok(())
    })
}
