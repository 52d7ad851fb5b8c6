//! The `fit` pipeline and its output files.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use censpde_core::data::CensoredDataset;
use censpde_core::fem::assemble_fem;
use censpde_core::mcmc::{rhat_table, run_chain, AcceptanceStats, McmcConfig, PosteriorSamples, SamplerModel};
use censpde_core::mesh::{build_mesh, diameter, Mesh};
use censpde_core::spde::SpdeStructure;
use censpde_core::variogram::{initial_estimates, EmpiricalVariogram, InitEstimates, VariogramFit, VariogramOptions};
use censpde_core::error::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{MeshSection, PriorSection};
use crate::dataset::{IngestReport, Standardizer, Transform};
use crate::error::{CliError, Result};
use crate::io::{read_to_string, write_atomic, write_csv, write_string};

/// Random stream used for variogram subsampling.
const VARIOGRAM_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub mesh: MeshSection,
    pub priors: PriorSection,
    pub mcmc: McmcConfig,
    pub variogram: VariogramOptions,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub mesh: Mesh,
    pub standardizer: Standardizer,
    /// Starting values on the standardized design.
    pub init: InitEstimates,
    pub empirical: EmpiricalVariogram,
    pub variogram: VariogramFit,
    /// Draws with coefficients on the raw design.
    pub chains: Vec<PosteriorSamples>,
    pub rhat: Vec<(String, f64)>,
    pub seconds: f64,
    pub seconds_per_iteration: f64,
}

pub fn standardized(data: &CensoredDataset) -> Result<(CensoredDataset, Standardizer)> {
    let s = Standardizer::fit(&data.x, data.p)?;
    let mut out = data.clone();
    out.x = s.apply(&data.x);
    Ok((out, s))
}

/// Variogram initialization on the observed rows, then `n_chains` chains
/// run concurrently.
pub fn fit_dataset(data: &CensoredDataset, opts: &FitOptions) -> Result<FitResult> {
    opts.mcmc.validate()?;
    let delta = diameter(&data.locations);
    if !(delta > 0.0) {
        return Err(Error::DegenerateInput("all locations coincide".into()).into());
    }
    let mesh = build_mesh(&data.locations, &opts.mesh.options(delta))?;
    let fem = assemble_fem(&mesh)?;
    let structure = Arc::new(SpdeStructure::new(&fem));
    let (std_data, standardizer) = standardized(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.mcmc.seed);
    rng.set_stream(VARIOGRAM_STREAM);
    let (init, empirical, variogram) = initial_estimates(&std_data, &opts.variogram, &mut rng)?;
    log::info!(
        "mesh {} nodes; initial tau {:.4} phi {:.4} gamma {:.4}",
        mesh.num_nodes(),
        init.tau,
        init.phi,
        init.gamma
    );
    let model = SamplerModel::new(std_data, &mesh, structure, opts.priors.priors(delta))?;

    let start = Instant::now();
    let results: Vec<censpde_core::error::Result<PosteriorSamples>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..opts.mcmc.n_chains as u64)
            .map(|c| {
                let (model, init, cfg) = (&model, &init, &opts.mcmc);
                s.spawn(move || run_chain(model, cfg, init, c))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let seconds = start.elapsed().as_secs_f64();
    let mut chains = Vec::with_capacity(results.len());
    for r in results {
        let mut c = r?;
        for t in 0..c.len() {
            let raw = standardizer.beta_to_raw(c.beta_draw(t));
            c.beta[t * c.p..(t + 1) * c.p].copy_from_slice(&raw);
        }
        check_acceptance(&c.acceptance, c.chain, opts.mcmc.accept_band);
        chains.push(c);
    }
    let rhat = if chains.len() >= 2 {
        match rhat_table(&chains) {
            Ok(r) => r,
            Err(Error::InsufficientSamples(msg)) => {
                log::warn!("R-hat skipped: {msg}");
                Vec::new()
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        Vec::new()
    };
    for (name, r) in &rhat {
        if *r > 1.1 {
            log::warn!("R-hat for {name} is {r:.3}");
        }
    }
    let per_chain = seconds * std::thread::available_parallelism().map_or(1, |n| n.get()).min(chains.len()) as f64
        / chains.len() as f64;
    Ok(FitResult {
        mesh,
        standardizer,
        init,
        empirical,
        variogram,
        chains,
        rhat,
        seconds,
        seconds_per_iteration: per_chain / opts.mcmc.n_iter as f64,
    })
}

fn check_acceptance(a: &AcceptanceStats, chain: u64, (lo, hi): (f64, f64)) {
    for (name, r) in [("phi", a.phi.rate()), ("gamma", a.gamma.rate())] {
        if r.is_finite() && !(lo..=hi).contains(&r) {
            log::warn!("chain {chain}: {name} acceptance {r:.3} is outside [{lo}, {hi}]");
        }
    }
}

/// Column names for the design: `intercept, lon, lat, covariates...`.
pub fn term_names(covariates: &[String]) -> Vec<String> {
    let mut t = vec!["intercept".to_string(), "lon".into(), "lat".into()];
    t.extend(covariates.iter().cloned());
    t
}

fn fmt(v: f64) -> String {
    v.to_string()
}

pub fn write_samples(path: &Path, chains: &[PosteriorSamples]) -> Result<()> {
    let p = chains.first().map_or(0, |c| c.p);
    write_csv(path, |w| {
        let mut header = vec!["iteration".to_string(), "chain".into()];
        header.extend((0..p).map(|j| format!("beta{j}")));
        header.extend(["tau", "phi", "gamma", "log_posterior"].map(String::from));
        w.write_record(&header)?;
        for c in chains {
            for t in 0..c.len() {
                let mut row = vec![c.iterations[t].to_string(), c.chain.to_string()];
                row.extend(c.beta_draw(t).iter().map(|v| fmt(*v)));
                row.extend([c.tau[t], c.phi[t], c.gamma[t], c.log_post[t]].map(fmt));
                w.write_record(&row)?;
            }
        }
        Ok(())
    })
}

/// Node effects, one line per stored draw: `chain,iteration,z0,z1,...`.
pub fn write_z(path: &Path, chains: &[PosteriorSamples]) -> Result<()> {
    let n = chains.first().map_or(0, |c| c.num_nodes);
    write_csv(path, |w| {
        let mut header = vec!["chain".to_string(), "iteration".into()];
        header.extend((0..n).map(|j| format!("z{j}")));
        w.write_record(&header)?;
        for c in chains {
            for k in 0..c.num_z_draws() {
                let mut row = vec![c.chain.to_string(), c.z_iterations[k].to_string()];
                row.extend(c.z_draw(k).iter().map(|v| fmt(*v)));
                w.write_record(&row)?;
            }
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub parameter: String,
    pub term: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
}

/// Posterior mean, sd and quantiles pooled over chains.
pub fn summarize(chains: &[PosteriorSamples], covariates: &[String]) -> Vec<SummaryRow> {
    let terms = term_names(covariates);
    let mut pooled: Vec<(String, Vec<f64>)> = Vec::new();
    for c in chains {
        for (k, (name, trace)) in c.scalar_traces().into_iter().enumerate() {
            match pooled.get_mut(k) {
                Some((_, v)) => v.extend(trace),
                None => pooled.push((name, trace)),
            }
        }
    }
    pooled
        .into_iter()
        .enumerate()
        .map(|(k, (parameter, mut v))| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            v.sort_by(f64::total_cmp);
            let q = |p: f64| censpde_core::predict::quantile_sorted(&v, p);
            SummaryRow {
                term: terms.get(k).filter(|_| parameter.starts_with("beta")).cloned().unwrap_or_default(),
                parameter,
                mean,
                sd,
                q025: q(0.025),
                q500: q(0.5),
                q975: q(0.975),
            }
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_csv(path, |w| {
        w.write_record(["parameter", "term", "mean", "sd", "q025", "q500", "q975"])?;
        for r in rows {
            w.write_record([
                r.parameter.clone(),
                r.term.clone(),
                fmt(r.mean),
                fmt(r.sd),
                fmt(r.q025),
                fmt(r.q500),
                fmt(r.q975),
            ])?;
        }
        Ok(())
    })
}

pub fn write_rhat(path: &Path, rhat: &[(String, f64)]) -> Result<()> {
    write_csv(path, |w| {
        w.write_record(["parameter", "rhat"])?;
        for (name, r) in rhat {
            w.write_record([name.clone(), fmt(*r)])?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainAcceptance {
    pub phi: f64,
    pub gamma: f64,
    pub joint: f64,
    pub phi_burn_in: f64,
    pub gamma_burn_in: f64,
    pub joint_burn_in: f64,
    pub phi_step: f64,
    pub gamma_step: f64,
    pub joint_step: f64,
}

impl From<&AcceptanceStats> for ChainAcceptance {
    fn from(a: &AcceptanceStats) -> Self {
        Self {
            phi: a.phi.rate(),
            gamma: a.gamma.rate(),
            joint: a.joint.rate(),
            phi_burn_in: a.phi_burn_in.rate(),
            gamma_burn_in: a.gamma_burn_in.rate(),
            joint_burn_in: a.joint_burn_in.rate(),
            phi_step: a.phi_step,
            gamma_step: a.gamma_step,
            joint_step: a.joint_step,
        }
    }
}

/// Acceptance rates per chain as TOML tables `[chain.<id>]`.
pub fn write_acceptance(path: &Path, chains: &[PosteriorSamples]) -> Result<()> {
    let mut map = BTreeMap::new();
    for c in chains {
        map.insert(c.chain.to_string(), ChainAcceptance::from(&c.acceptance));
    }
    let mut root = BTreeMap::new();
    root.insert("chain", map);
    write_string(path, &toml::to_string(&root).expect("acceptance serializes"))
}

/// Everything `predict` needs besides the mesh and the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub seed: u64,
    pub transform: Transform,
    pub covariates: Vec<String>,
    pub p: usize,
    pub num_nodes: usize,
    pub n_chains: usize,
    pub data: IngestReport,
    pub standardizer: Standardizer,
    pub init_beta: Vec<f64>,
    pub init_tau: f64,
    pub init_phi: f64,
    pub init_gamma: f64,
    pub variogram_sigma2: f64,
    pub variogram_fallback: bool,
    pub seconds: f64,
}

impl FitMeta {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&read_to_string(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &toml::to_string(self).expect("metadata serializes"))
    }
}

pub fn write_variogram(path: &Path, emp: &EmpiricalVariogram, fit: &VariogramFit) -> Result<()> {
    write_atomic(path, |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["distance", "semivariance", "count", "fitted"]).map_err(std::io::Error::other)?;
        for ((d, g), n) in emp.bin_centers.iter().zip(&emp.semivariances).zip(&emp.pair_counts) {
            let fitted = fit.sigma2 * (1.0 - censpde_core::spde::matern_correlation(*d, fit.phi, fit.gamma, false));
            let g = if *n == 0 { String::new() } else { fmt(*g) };
            wr.write_record([fmt(*d), g, n.to_string(), fmt(fitted)]).map_err(std::io::Error::other)?;
        }
        wr.flush()
    })
}

/// Read draws written by [`write_samples`] and [`write_z`].
pub fn read_samples(samples: &Path, z: Option<&Path>, p: usize, num_nodes: usize) -> Result<Vec<PosteriorSamples>> {
    let mut chains: BTreeMap<u64, PosteriorSamples> = BTreeMap::new();
    let empty = |chain: u64| PosteriorSamples {
        chain,
        p,
        num_nodes,
        iterations: Vec::new(),
        beta: Vec::new(),
        tau: Vec::new(),
        phi: Vec::new(),
        gamma: Vec::new(),
        log_post: Vec::new(),
        log_post_trace: Vec::new(),
        z: Vec::new(),
        z_iterations: Vec::new(),
        acceptance: AcceptanceStats::default(),
    };
    for_each_row(samples, 2 + p + 4, |line, f| {
        let it = parse_int(samples, line, f[0])?;
        let c = parse_int(samples, line, f[1])? as u64;
        let s = chains.entry(c).or_insert_with(|| empty(c));
        s.iterations.push(it);
        for v in &f[2..2 + p] {
            s.beta.push(parse_num(samples, line, v)?);
        }
        s.tau.push(parse_num(samples, line, f[2 + p])?);
        s.phi.push(parse_num(samples, line, f[3 + p])?);
        s.gamma.push(parse_num(samples, line, f[4 + p])?);
        s.log_post.push(parse_num(samples, line, f[5 + p])?);
        Ok(())
    })?;
    if let Some(zp) = z {
        for_each_row(zp, 2 + num_nodes, |line, f| {
            let c = parse_int(zp, line, f[0])? as u64;
            let it = parse_int(zp, line, f[1])?;
            let s = chains
                .get_mut(&c)
                .ok_or_else(|| CliError::parse(zp, line, format!("chain {c} has no scalar draws")))?;
            s.z_iterations.push(it);
            for v in &f[2..] {
                s.z.push(parse_num(zp, line, v)?);
            }
            Ok(())
        })?;
    }
    Ok(chains.into_values().collect())
}

fn for_each_row<F>(path: &Path, width: usize, mut f: F) -> Result<()>
where
    F: FnMut(u64, &[&str]) -> Result<()>,
{
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::from_csv(path, e))?;
    let headers = rdr.headers().map_err(|e| CliError::from_csv(path, e))?;
    if headers.len() != width {
        return Err(CliError::parse(path, 1, format!("expected {width} columns, found {}", headers.len())));
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::from_csv(path, e))?;
        let fields: Vec<&str> = rec.iter().collect();
        f(rec.position().map_or(0, |p| p.line()), &fields)?;
    }
    Ok(())
}

fn parse_num(path: &Path, line: u64, s: &str) -> Result<f64> {
    s.parse().map_err(|_| CliError::parse(path, line, format!("`{s}` is not a number")))
}

fn parse_int(path: &Path, line: u64, s: &str) -> Result<usize> {
    s.parse().map_err(|_| CliError::parse(path, line, format!("`{s}` is not an integer")))
}

/// Write the standard set of fit outputs into `dir`.
pub fn write_outputs(dir: &Path, fit: &FitResult, meta: &FitMeta, write_z_draws: bool) -> Result<()> {
    crate::meshio::write_mesh(&dir.join("mesh.txt"), &fit.mesh)?;
    write_samples(&dir.join("samples.csv"), &fit.chains)?;
    if write_z_draws {
        write_z(&dir.join("zstar.csv"), &fit.chains)?;
    }
    write_summary(&dir.join("summary.csv"), &summarize(&fit.chains, &meta.covariates))?;
    write_rhat(&dir.join("rhat.csv"), &fit.rhat)?;
    write_acceptance(&dir.join("acceptance.toml"), &fit.chains)?;
    write_variogram(&dir.join("variogram.csv"), &fit.empirical, &fit.variogram)?;
    meta.save(&dir.join("fit.toml"))
}
