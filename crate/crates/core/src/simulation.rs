//! Exact Matérn field simulation on regular grids, train/test splitting and
//! detection-limit censoring for the simulation study.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::SQRT_2;

use rand::Rng;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::data::CensoredDataset;
use crate::dense::DenseCholesky;
use crate::error::{Error, Result};
use crate::math;
use crate::mesh::Point;
use crate::spde::matern_correlation;

/// Largest grid side simulated exactly by default (`n = K^2` dense factor).
pub const DEFAULT_MAX_GRID_SIDE: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CensorLevel {
    /// Detection limit at the 15th percentile.
    L1,
    /// Detection limit at the 45th percentile.
    L2,
    /// No censoring.
    None,
}

impl CensorLevel {
    pub fn percentile(self) -> f64 {
        match self {
            CensorLevel::L1 => 15.0,
            CensorLevel::L2 => 45.0,
            CensorLevel::None => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CensorLevel::L1 => "L1",
            CensorLevel::L2 => "L2",
            CensorLevel::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// Drop censored rows.
    S1,
    /// Replace censored responses by the detection limit.
    S2,
    /// Full censored model.
    S3,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::S1, Scenario::S2, Scenario::S3];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub k: usize,
    pub beta: f64,
    pub phi: f64,
    pub gamma: f64,
    pub tau: f64,
    pub level: CensorLevel,
    pub train_frac: f64,
    pub n_replicates: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            k: 20,
            beta: 5.0,
            phi: 0.15 * SQRT_2,
            gamma: 0.9,
            tau: 0.2,
            level: CensorLevel::L1,
            train_frac: 0.8,
            n_replicates: 20,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument("grid side must be at least 2".into()));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::InvalidArgument("train_frac must lie in (0, 1)".into()));
        }
        if !(self.phi > 0.0 && self.tau > 0.0 && (0.0..=1.0).contains(&self.gamma)) {
            return Err(Error::InvalidArgument("invalid true parameters".into()));
        }
        Ok(())
    }
}

/// Grid `{(i/K, j/K) : i, j = 1..K}`, row by row.
pub fn grid_locations(k: usize) -> Vec<Point> {
    let mut out = Vec::with_capacity(k * k);
    for i in 1..=k {
        for j in 1..=k {
            out.push([i as f64 / k as f64, j as f64 / k as f64]);
        }
    }
    out
}

/// Exact sampler for `beta + tau^-1/2 L eps` with `L L^T = gamma Sigma + (1 - gamma) I`.
#[derive(Debug, Clone)]
pub struct MaternFieldSimulator {
    chol: DenseCholesky,
}

impl MaternFieldSimulator {
    pub fn new(locations: &[Point], phi: f64, gamma: f64, max_points: usize) -> Result<Self> {
        let n = locations.len();
        if n > max_points {
            return Err(Error::TooLarge(format!(
                "exact simulation of {n} points needs a {:.1} GB dense factor (limit {max_points} points)",
                (n * n * 8) as f64 / 1e9
            )));
        }
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let d = math::hypot(locations[i][0] - locations[j][0], locations[i][1] - locations[j][1]);
                let c = matern_correlation(d, phi, gamma, i == j);
                cov[i * n + j] = c;
                cov[j * n + i] = c;
            }
        }
        let chol = match DenseCholesky::factor(&cov, n) {
            Ok(c) => c,
            Err(_) => {
                for i in 0..n {
                    cov[i * n + i] += 1e-10;
                }
                DenseCholesky::factor(&cov, n)?
            }
        };
        Ok(Self { chol })
    }

    pub fn len(&self) -> usize {
        self.chol.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.chol.dim() == 0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, mean: f64, tau: f64) -> Vec<f64> {
        let eps: Vec<f64> = (0..self.len()).map(|_| StandardNormal.sample(rng)).collect();
        let sd = 1.0 / math::sqrt(tau);
        self.chol.mul_lower(&eps).into_iter().map(|v| mean + sd * v).collect()
    }
}

/// Seeded disjoint split of `0..n`; both halves sorted ascending.
pub fn train_test_split<R: Rng + ?Sized>(n: usize, train_frac: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_train = math::round(train_frac * n as f64) as usize;
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Order-statistic detection limit: the `(floor(n p / 100) + 1)`-th smallest
/// value, so exactly `floor(n p / 100)` values fall strictly below it when
/// there are no ties.
pub fn detection_limit(values: &[f64], percentile: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = math::floor(values.len() as f64 * percentile / 100.0 + 1e-9) as usize;
    sorted[k.min(sorted.len() - 1)]
}

/// Censor responses strictly below the level's detection limit; the design
/// is `[1, x, y]`.
pub fn apply_censoring(locations: &[Point], y: &[f64], level: CensorLevel) -> Result<CensoredDataset> {
    if level == CensorLevel::None || y.is_empty() {
        return CensoredDataset::with_coordinate_design(
            locations.to_vec(),
            y.to_vec(),
            vec![false; y.len()],
            vec![f64::INFINITY; y.len()],
        );
    }
    let mdl = detection_limit(y, level.percentile());
    let censored: Vec<bool> = y.iter().map(|&v| v < mdl).collect();
    let limits = censored.iter().map(|&c| if c { mdl } else { f64::INFINITY }).collect();
    let y = y.iter().zip(&censored).map(|(&v, &c)| if c { mdl } else { v }).collect();
    CensoredDataset::with_coordinate_design(locations.to_vec(), y, censored, limits)
}

/// Training data as seen by each scenario.
pub fn scenario_data(data: &CensoredDataset, scenario: Scenario) -> CensoredDataset {
    match scenario {
        Scenario::S1 => data.filter(|i| !data.censored[i]),
        Scenario::S2 => {
            let mut d = data.clone();
            for i in 0..d.len() {
                if d.censored[i] {
                    d.y[i] = d.limits[i];
                    d.censored[i] = false;
                    d.limits[i] = f64::INFINITY;
                }
            }
            d
        }
        Scenario::S3 => data.clone(),
    }
}

pub fn mspe(predicted: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    predicted.iter().zip(truth).map(|(p, t)| math::sq(p - t)).sum::<f64>() / truth.len() as f64
}

/// One simulated replicate: full grid responses plus the split and the
/// censored training set.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub locations: Vec<Point>,
    pub y: Vec<f64>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub training: CensoredDataset,
}

impl Replicate {
    pub fn test_locations(&self) -> Vec<Point> {
        self.test.iter().map(|&i| self.locations[i]).collect()
    }

    pub fn test_values(&self) -> Vec<f64> {
        self.test.iter().map(|&i| self.y[i]).collect()
    }
}

pub fn simulate_replicate<R: Rng + ?Sized>(
    cfg: &SimConfig,
    sim: &MaternFieldSimulator,
    locations: &[Point],
    rng: &mut R,
) -> Result<Replicate> {
    let y = sim.sample(rng, cfg.beta, cfg.tau);
    let (train, test) = train_test_split(locations.len(), cfg.train_frac, rng);
    let train_locs: Vec<Point> = train.iter().map(|&i| locations[i]).collect();
    let train_y: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let training = apply_censoring(&train_locs, &train_y, cfg.level)?;
    Ok(Replicate { locations: locations.to_vec(), y, train, test, training })
}
