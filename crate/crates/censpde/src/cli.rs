//! Command-line front end.

use std::path::{Path, PathBuf};
use std::time::Instant;

use censpde_core::fem::{assemble_fem, outside_locations, projection_matrix};
use censpde_core::mesh::{build_mesh, diameter, Point};
use censpde_core::predict::{predict_blocked, PredictionGrid, DEFAULT_BLOCK};
use censpde_core::simulation::{CensorLevel, Scenario};
use censpde_core::variogram::initial_estimates;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::dataset::{design_rows, ingest, Ingested, Transform};
use crate::error::{CliError, Result};
use crate::fit::{fit_dataset, read_samples, standardized, write_outputs, write_variogram, FitMeta, FitOptions};
use crate::grid::{lattice, read_locations, write_report, write_surface, PredictReport};
use crate::harness::{report, run_study, write_report as write_study_report, write_results, StudyConfig};
use crate::meshio::{dump_fem, read_mesh, write_mesh};

#[derive(Debug, Parser)]
#[command(name = "censpde", version, about = "Bayesian SPDE regression for left-censored spatial data")]
pub struct Cli {
    /// TOML run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for all randomness.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the censored SPDE model by MCMC.
    Fit(FitArgs),
    /// Posterior predictive surface from a fit directory.
    Predict(PredictArgs),
    /// Simulation study on K x K grids.
    Simulate(SimulateArgs),
    /// Empirical semivariogram and Matérn fit of OLS residuals.
    Variogram(VariogramArgs),
    /// Build a mesh over the data locations and export it.
    Mesh(MeshArgs),
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub transform: Option<Transform>,
    #[arg(long)]
    pub lon: Option<String>,
    #[arg(long)]
    pub lat: Option<String>,
    #[arg(long)]
    pub value: Option<String>,
    /// Censoring indicator column; `none` when nothing is censored.
    #[arg(long)]
    pub censored: Option<String>,
    /// Detection limit column.
    #[arg(long)]
    pub limit: Option<String>,
    /// Extra covariate column (repeatable).
    #[arg(long = "covariate")]
    pub covariates: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_iter: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Skip writing node-effect draws (prediction then needs a refit).
    #[arg(long)]
    pub no_z: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub fit_dir: Option<PathBuf>,
    /// Output CSV; defaults to `prediction.csv` in the fit directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Bounding box `lon_min,lat_min,lon_max,lat_max`.
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    pub bbox: Option<[f64; 4]>,
    #[arg(long)]
    pub resolution: Option<f64>,
    /// CSV of prediction locations.
    #[arg(long)]
    pub locations: Option<PathBuf>,
    /// Drop points outside the mesh instead of failing.
    #[arg(long)]
    pub drop_outside: bool,
    #[arg(long, default_value_t = DEFAULT_BLOCK)]
    pub block: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Grid side K.
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', default_value = "L1,L2", value_parser = parse_level)]
    pub levels: Vec<CensorLevel>,
    #[arg(long, value_delimiter = ',', default_value = "S1,S2,S3", value_parser = parse_scenario)]
    pub scenarios: Vec<Scenario>,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    /// Index of the first replicate, for replaying single replicates.
    #[arg(long, default_value_t = 0)]
    pub first_replicate: usize,
    #[arg(long)]
    pub n_iter: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = censpde_core::simulation::DEFAULT_MAX_GRID_SIDE)]
    pub max_grid_side: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VariogramArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output CSV; defaults to `variogram.csv` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Mesh text file; defaults to `mesh.txt` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write D, G1, G2 and A in Matrix Market format here.
    #[arg(long)]
    pub fem_dir: Option<PathBuf>,
    #[arg(long)]
    pub max_edge_interior: Option<f64>,
    #[arg(long)]
    pub max_edge_exterior: Option<f64>,
    #[arg(long)]
    pub boundary_extension: Option<f64>,
    #[arg(long)]
    pub cutoff: Option<f64>,
}

fn parse_bbox(s: &str) -> std::result::Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    <[f64; 4]>::try_from(v).map_err(|v| format!("bounding box needs 4 numbers, got {}", v.len()))
}

fn parse_level(s: &str) -> std::result::Result<CensorLevel, String> {
    match s.to_ascii_uppercase().as_str() {
        "L1" => Ok(CensorLevel::L1),
        "L2" => Ok(CensorLevel::L2),
        "NONE" | "L0" => Ok(CensorLevel::None),
        _ => Err(format!("unknown censoring level `{s}` (L1, L2, none)")),
    }
}

fn parse_scenario(s: &str) -> std::result::Result<Scenario, String> {
    Scenario::ALL
        .into_iter()
        .find(|sc| sc.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown scenario `{s}` (S1, S2, S3)"))
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.data;
        if let Some(v) = &self.input {
            d.input = Some(v.clone());
        }
        if let Some(v) = self.transform {
            d.transform = v;
        }
        let c = &mut d.columns;
        if let Some(v) = &self.lon {
            c.lon = v.clone();
        }
        if let Some(v) = &self.lat {
            c.lat = v.clone();
        }
        if let Some(v) = &self.value {
            c.value = v.clone();
        }
        if let Some(v) = &self.censored {
            c.censored = (v != "none").then(|| v.clone());
        }
        if let Some(v) = &self.limit {
            c.limit = (v != "none").then(|| v.clone());
        }
        if !self.covariates.is_empty() {
            c.covariates = self.covariates.clone();
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn load_data(cfg: &RunConfig) -> Result<Ingested> {
    ingest(cfg.input()?, &cfg.data.columns, cfg.data.transform)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Fit(a) => {
            a.data.apply(&mut cfg);
            set(&mut cfg.output.dir, a.out);
            set(&mut cfg.mcmc.n_iter, a.n_iter);
            set(&mut cfg.mcmc.burn_in, a.burn_in);
            set(&mut cfg.mcmc.thin, a.thin);
            set(&mut cfg.mcmc.n_chains, a.chains);
            if a.no_z {
                cfg.output.write_z = false;
            }
            cfg.validate()?;
            fit_cmd(&cfg)
        }
        Command::Predict(a) => {
            set(&mut cfg.output.dir, a.fit_dir);
            if a.bbox.is_some() {
                cfg.prediction.bbox = a.bbox;
            }
            if a.resolution.is_some() {
                cfg.prediction.resolution = a.resolution;
            }
            if a.locations.is_some() {
                cfg.prediction.locations = a.locations;
            }
            cfg.prediction.drop_outside |= a.drop_outside;
            cfg.validate()?;
            predict_cmd(&cfg, cli.seed, a.out, a.block)
        }
        Command::Simulate(a) => simulate_cmd(&cfg, a),
        Command::Variogram(a) => {
            a.data.apply(&mut cfg);
            let data = load_data(&cfg)?;
            let (std_data, standardizer) = standardized(&data.data)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (init, emp, fit) = initial_estimates(&std_data, &cfg.variogram.options(), &mut rng)?;
            let out = a.out.unwrap_or_else(|| cfg.output.dir.join("variogram.csv"));
            write_variogram(&out, &emp, &fit)?;
            let beta = standardizer.beta_to_raw(&init.beta);
            println!(
                "phi {} gamma {} sigma2 {} tau {} beta {:?} fallback {}",
                init.phi, init.gamma, fit.sigma2, init.tau, beta, fit.used_fallback
            );
            Ok(())
        }
        Command::Mesh(a) => {
            a.data.apply(&mut cfg);
            set(&mut cfg.mesh.max_edge_interior, a.max_edge_interior.map(Some));
            set(&mut cfg.mesh.max_edge_exterior, a.max_edge_exterior.map(Some));
            set(&mut cfg.mesh.boundary_extension, a.boundary_extension.map(Some));
            set(&mut cfg.mesh.cutoff, a.cutoff.map(Some));
            let data = load_data(&cfg)?;
            let locs = &data.data.locations;
            let mesh = build_mesh(locs, &cfg.mesh.options(diameter(locs)))?;
            let out = a.out.unwrap_or_else(|| cfg.output.dir.join("mesh.txt"));
            write_mesh(&out, &mesh)?;
            if let Some(dir) = a.fem_dir {
                let fem = assemble_fem(&mesh)?;
                let proj = projection_matrix(&mesh, locs)?;
                dump_fem(&dir, &fem, Some(&proj))?;
            }
            println!("nodes {} triangles {}", mesh.num_nodes(), mesh.num_triangles());
            Ok(())
        }
    }
}

fn fit_cmd(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let opts = FitOptions {
        mesh: cfg.mesh,
        priors: cfg.priors,
        mcmc: cfg.mcmc.config(cfg.seed),
        variogram: cfg.variogram.options(),
    };
    let fit = fit_dataset(&data.data, &opts)?;
    let meta = FitMeta {
        seed: cfg.seed,
        transform: cfg.data.transform,
        covariates: data.covariates.clone(),
        p: data.data.p,
        num_nodes: fit.mesh.num_nodes(),
        n_chains: fit.chains.len(),
        data: data.report.clone(),
        standardizer: fit.standardizer.clone(),
        init_beta: fit.standardizer.beta_to_raw(&fit.init.beta),
        init_tau: fit.init.tau,
        init_phi: fit.init.phi,
        init_gamma: fit.init.gamma,
        variogram_sigma2: fit.variogram.sigma2,
        variogram_fallback: fit.variogram.used_fallback,
        seconds: fit.seconds,
    };
    write_outputs(&cfg.output.dir, &fit, &meta, cfg.output.write_z)?;
    crate::io::write_string(&cfg.output.dir.join("config.toml"), &cfg.to_toml())?;
    println!("wrote {} ({} chains, {:.1}s)", cfg.output.dir.display(), fit.chains.len(), fit.seconds);
    Ok(())
}

fn predict_cmd(cfg: &RunConfig, seed: Option<u64>, out: Option<PathBuf>, block: usize) -> Result<()> {
    let dir = &cfg.output.dir;
    let meta = FitMeta::load(&dir.join("fit.toml"))?;
    let mesh = read_mesh(&dir.join("mesh.txt"))?;
    let zpath = dir.join("zstar.csv");
    if !zpath.exists() {
        return Err(CliError::Config(format!("{} is missing; rerun fit without --no-z", zpath.display())));
    }
    let chains = read_samples(&dir.join("samples.csv"), Some(&zpath), meta.p, meta.num_nodes)?;
    let (mut locs, mut covs): (Vec<Point>, Vec<Vec<f64>>) = match (&cfg.prediction.locations, cfg.prediction.bbox) {
        (Some(path), _) => {
            let c = &cfg.data.columns;
            read_locations(path, &c.lon, &c.lat, &meta.covariates)?
        }
        (None, Some(bbox)) => {
            if !meta.covariates.is_empty() {
                return Err(CliError::Config("a bounding-box grid cannot supply extra covariates; use a locations file".into()));
            }
            let res = cfg
                .prediction
                .resolution
                .ok_or_else(|| CliError::Config("bounding-box grid needs a resolution".into()))?;
            (lattice(bbox, res)?, Vec::new())
        }
        (None, None) => return Err(CliError::Config("no prediction grid: give a bounding box or a locations file".into())),
    };
    let outside = outside_locations(&mesh, &locs);
    let dropped = outside.len();
    if dropped > 0 {
        if !cfg.prediction.drop_outside {
            return Err(censpde_core::error::Error::OutsideMesh(outside).into());
        }
        log::warn!("dropping {dropped} grid points outside the mesh");
        let mut k = 0;
        let keep: Vec<bool> = (0..locs.len())
            .map(|i| {
                let out = k < outside.len() && outside[k] == i;
                k += out as usize;
                !out
            })
            .collect();
        let mut it = keep.iter();
        locs.retain(|_| *it.next().unwrap());
        if !covs.is_empty() {
            let mut it = keep.iter();
            covs.retain(|_| *it.next().unwrap());
        }
    }
    let grid = PredictionGrid::new(locs.clone(), design_rows(&locs, &covs), meta.p)?;
    let start = Instant::now();
    let surface = predict_blocked(&chains, &mesh, &grid, seed.unwrap_or(meta.seed), block.max(1))?;
    let seconds = start.elapsed().as_secs_f64();
    let out = out.unwrap_or_else(|| dir.join("prediction.csv"));
    write_surface(&out, &locs, &surface)?;
    let draws: usize = chains.iter().map(|c| c.num_z_draws()).sum();
    let rep = PredictReport {
        locations: locs.len(),
        dropped_outside: dropped,
        extrapolated: surface.extrapolated.iter().filter(|&&e| e).count(),
        draws,
        seconds,
        block_working_bytes: block.max(1) * draws * 8,
    };
    write_report(&report_path(&out), &rep)?;
    println!("wrote {} ({} locations, {} dropped)", out.display(), rep.locations, dropped);
    Ok(())
}

fn report_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "prediction".into());
    out.with_file_name(format!("{stem}_report.toml"))
}

fn simulate_cmd(cfg: &RunConfig, a: SimulateArgs) -> Result<()> {
    let mut study = StudyConfig::desk(a.k, cfg.seed);
    study.levels = a.levels;
    study.scenarios = a.scenarios;
    study.n_replicates = a.replicates;
    study.first_replicate = a.first_replicate;
    study.max_grid_side = a.max_grid_side;
    set(&mut study.mcmc.n_iter, a.n_iter);
    set(&mut study.mcmc.burn_in, a.burn_in);
    set(&mut study.mcmc.thin, a.thin);
    set(&mut study.mcmc.n_chains, a.chains);
    set(&mut study.threads, a.threads);
    study.mcmc.validate()?;
    let out = a.out.unwrap_or_else(|| cfg.output.dir.clone());
    let results = run_study(&study)?;
    write_results(&out.join("results.csv"), &results)?;
    let rows = report(&results);
    write_study_report(&out.join("report.csv"), &rows)?;
    for r in &rows {
        println!(
            "{} K={} {}: MSPE {:.3} ({:.3}) median time {:.1}s",
            r.level.name(),
            r.k,
            r.scenario.name(),
            r.mspe_mean,
            r.pred_se_mean,
            r.time_median
        );
    }
    Ok(())
}
