//! Posterior predictive surfaces at new locations.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::coordinate_design;
use crate::error::{Error, Result};
use crate::fem::projection_matrix;
use crate::math;
use crate::mcmc::PosteriorSamples;
use crate::mesh::{Mesh, Point};
use crate::sparse::CsrMatrix;

/// Locations per block in [`predict`].
pub const DEFAULT_BLOCK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrid {
    pub locations: Vec<Point>,
    /// Row-major `n0 x p`.
    pub x: Vec<f64>,
    pub p: usize,
}

impl PredictionGrid {
    pub fn new(locations: Vec<Point>, x: Vec<f64>, p: usize) -> Result<Self> {
        if x.len() != locations.len() * p {
            return Err(Error::InvalidArgument("prediction design has the wrong size".into()));
        }
        Ok(Self { locations, x, p })
    }

    /// Design `[1, x, y]`.
    pub fn with_coordinate_design(locations: Vec<Point>) -> Self {
        let x = coordinate_design(&locations);
        Self { locations, x, p: 3 }
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            locations: self.locations[start..end].to_vec(),
            x: self.x[start * self.p..end * self.p].to_vec(),
            p: self.p,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSurface {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub q025: Vec<f64>,
    pub q500: Vec<f64>,
    pub q975: Vec<f64>,
    /// Outside the convex hull of the data.
    pub extrapolated: Vec<bool>,
}

impl PredictionSurface {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    fn with_capacity(n: usize) -> Self {
        Self {
            mean: Vec::with_capacity(n),
            sd: Vec::with_capacity(n),
            q025: Vec::with_capacity(n),
            q500: Vec::with_capacity(n),
            q975: Vec::with_capacity(n),
            extrapolated: Vec::with_capacity(n),
        }
    }

    fn append(&mut self, other: Self) {
        self.mean.extend(other.mean);
        self.sd.extend(other.sd);
        self.q025.extend(other.q025);
        self.q500.extend(other.q500);
        self.q975.extend(other.q975);
        self.extrapolated.extend(other.extrapolated);
    }
}

/// Draws usable for prediction: those with stored node effects.
struct Draw<'a> {
    beta: &'a [f64],
    z: &'a [f64],
    noise_sd: f64,
}

fn collect_draws(samples: &[PosteriorSamples]) -> Vec<Draw<'_>> {
    let mut out = Vec::new();
    for s in samples {
        let mut k = 0;
        for t in 0..s.len() {
            if k < s.num_z_draws() && s.z_iterations[k] == s.iterations[t] {
                out.push(Draw {
                    beta: s.beta_draw(t),
                    z: s.z_draw(k),
                    noise_sd: math::sqrt((1.0 - s.gamma[t]) / s.tau[t]),
                });
                k += 1;
            }
        }
    }
    out
}

/// Posterior predictive summaries at `grid`.
///
/// Mean and sd follow the law of total variance over retained draws;
/// quantiles use one noise draw per retained draw from a random stream
/// keyed by `(seed, location index)`, so any blocking gives identical output.
pub fn predict(samples: &[PosteriorSamples], mesh: &Mesh, grid: &PredictionGrid, seed: u64) -> Result<PredictionSurface> {
    predict_blocked(samples, mesh, grid, seed, DEFAULT_BLOCK)
}

/// [`predict`] processed in blocks of `block` locations.
pub fn predict_blocked(
    samples: &[PosteriorSamples],
    mesh: &Mesh,
    grid: &PredictionGrid,
    seed: u64,
    block: usize,
) -> Result<PredictionSurface> {
    let draws = collect_draws(samples);
    if draws.is_empty() {
        return Err(Error::InsufficientSamples("no posterior draws with node effects".into()));
    }
    if draws[0].beta.len() != grid.p {
        return Err(Error::InvalidArgument("prediction design does not match the fitted covariates".into()));
    }
    if draws[0].z.len() != mesh.num_nodes() {
        return Err(Error::InvalidArgument("samples do not match the mesh".into()));
    }
    let outside = crate::fem::outside_locations(mesh, &grid.locations);
    if !outside.is_empty() {
        return Err(Error::OutsideMesh(outside));
    }
    let block = block.max(1);
    let mut out = PredictionSurface::with_capacity(grid.len());
    let mut start = 0;
    while start < grid.len() {
        let end = (start + block).min(grid.len());
        let sub = grid.slice(start, end);
        let a = projection_matrix(mesh, &sub.locations)?;
        out.append(predict_block(&draws, mesh, &sub, &a, seed, start));
        start = end;
    }
    Ok(out)
}

fn predict_block(draws: &[Draw<'_>], mesh: &Mesh, grid: &PredictionGrid, a: &CsrMatrix, seed: u64, offset: usize) -> PredictionSurface {
    let n0 = grid.len();
    let t_count = draws.len();
    // mu[t * n0 + i]
    let mut mu = vec![0.0; t_count * n0];
    for (t, d) in draws.iter().enumerate() {
        let row = &mut mu[t * n0..(t + 1) * n0];
        a.mul_vec_into(d.z, row);
        for (i, m) in row.iter_mut().enumerate() {
            *m += grid.x[i * grid.p..(i + 1) * grid.p].iter().zip(d.beta).map(|(x, b)| x * b).sum::<f64>();
        }
    }
    let noise_var = draws.iter().map(|d| d.noise_sd * d.noise_sd).sum::<f64>() / t_count as f64;
    let mut out = PredictionSurface::with_capacity(n0);
    let mut pred = vec![0.0; t_count];
    for i in 0..n0 {
        let m = (0..t_count).map(|t| mu[t * n0 + i]).sum::<f64>() / t_count as f64;
        let between = (0..t_count).map(|t| math::sq(mu[t * n0 + i] - m)).sum::<f64>() / t_count as f64;
        out.mean.push(m);
        out.sd.push(math::sqrt(between + noise_var));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((offset + i) as u64);
        for (t, d) in draws.iter().enumerate() {
            let e: f64 = StandardNormal.sample(&mut rng);
            pred[t] = mu[t * n0 + i] + d.noise_sd * e;
        }
        pred.sort_by(f64::total_cmp);
        out.q025.push(quantile_sorted(&pred, 0.025));
        out.q500.push(quantile_sorted(&pred, 0.5));
        out.q975.push(quantile_sorted(&pred, 0.975));
        out.extrapolated.push(!mesh.in_data_hull(grid.locations[i]));
    }
    out
}

/// Linear interpolation between order statistics (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = math::floor(h) as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::AcceptanceStats;
    use std::vec::Vec;

    fn square_mesh() -> Mesh {
        Mesh::from_parts(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![true; 4],
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]],
        )
        .unwrap()
    }

    fn samples(draws: &[(f64, [f64; 4], f64, f64)]) -> PosteriorSamples {
        let n = draws.len();
        PosteriorSamples {
            chain: 0,
            p: 1,
            num_nodes: 4,
            iterations: (0..n).collect(),
            beta: draws.iter().map(|d| d.0).collect(),
            tau: draws.iter().map(|d| d.2).collect(),
            phi: vec![0.1; n],
            gamma: draws.iter().map(|d| d.3).collect(),
            log_post: vec![0.0; n],
            log_post_trace: vec![0.0; n],
            z: draws.iter().flat_map(|d| d.1).collect(),
            z_iterations: (0..n).collect(),
            acceptance: AcceptanceStats::default(),
        }
    }

    fn intercept_grid(locs: Vec<Point>) -> PredictionGrid {
        let n = locs.len();
        PredictionGrid::new(locs, vec![1.0; n], 1).unwrap()
    }

    #[test]
    fn node_prediction_is_exact_mean() {
        let s = samples(&[(1.0, [0.5, 0.0, 0.0, 2.0], 1.0, 0.5), (2.0, [1.5, 0.0, 0.0, -1.0], 2.0, 0.5)]);
        let grid = intercept_grid(vec![[0.0, 0.0], [0.0, 1.0]]);
        let surf = predict(&[s], &square_mesh(), &grid, 1).unwrap();
        assert!((surf.mean[0] - 2.5).abs() < 1e-12);
        assert!((surf.mean[1] - 2.0).abs() < 1e-12);
        // between-draw variance 1 at both, noise variances 0.5 and 0.25
        assert!((surf.sd[0] - (1.0f64 + 0.375).sqrt()).abs() < 1e-12);
        assert!((surf.sd[1] - (1.0f64 + 0.375).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_draw_near_pure_signal() {
        let s = samples(&[(3.0, [0.0; 4], 1.0, 1.0 - 1e-10)]);
        let surf = predict(&[s], &square_mesh(), &intercept_grid(vec![[0.3, 0.4]]), 1).unwrap();
        assert!(surf.sd[0] < 1e-4);
        assert!((surf.q500[0] - 3.0).abs() < 1e-4);
    }

    #[test]
    fn blocking_does_not_change_results() {
        let draws: Vec<(f64, [f64; 4], f64, f64)> = (0..50)
            .map(|t| {
                let f = t as f64;
                (f * 0.01, [0.1 * f.sin(), 0.2, -0.1 * f.cos(), 0.05 * f], 1.0 + 0.01 * f, 0.7)
            })
            .collect();
        let s = samples(&draws);
        let locs: Vec<Point> = (0..37).map(|i| [(i as f64 * 0.37) % 1.0, (i as f64 * 0.61) % 1.0]).collect();
        let grid = intercept_grid(locs);
        let whole = predict(core::slice::from_ref(&s), &square_mesh(), &grid, 5).unwrap();
        for block in [1, 4, 10, 36] {
            let b = predict_blocked(core::slice::from_ref(&s), &square_mesh(), &grid, 5, block).unwrap();
            assert_eq!(b, whole);
        }
        for i in 0..grid.len() {
            assert!(whole.q025[i] <= whole.q500[i] && whole.q500[i] <= whole.q975[i]);
            assert!(whole.sd[i] >= 0.0);
        }
    }

    #[test]
    fn noise_draws_match_total_variance() {
        // many identical draws: predictive variance is the noise variance only
        let draws: Vec<(f64, [f64; 4], f64, f64)> = (0..20_000).map(|_| (0.0, [0.0; 4], 1.0, 0.75)).collect();
        let s = samples(&draws);
        let surf = predict(&[s], &square_mesh(), &intercept_grid(vec![[0.5, 0.5]]), 2).unwrap();
        let sd = 0.5;
        assert!((surf.sd[0] - sd).abs() < 1e-12);
        // normal quantiles +-1.96 sd, Monte Carlo error about 0.01
        assert!((surf.q975[0] - 1.959964 * sd).abs() < 0.03);
        assert!((surf.q025[0] + 1.959964 * sd).abs() < 0.03);
    }

    #[test]
    fn errors() {
        let s = samples(&[(1.0, [0.0; 4], 1.0, 0.5)]);
        assert_eq!(
            predict(&[s.clone()], &square_mesh(), &intercept_grid(vec![[0.5, 0.5], [2.0, 0.0]]), 1).unwrap_err(),
            Error::OutsideMesh(vec![1])
        );
        let empty = samples(&[]);
        assert!(predict(&[empty], &square_mesh(), &intercept_grid(vec![[0.5, 0.5]]), 1).is_err());
    }

    #[test]
    fn extrapolation_flag() {
        let s = samples(&[(1.0, [0.0; 4], 1.0, 0.5)]);
        let surf = predict(&[s], &square_mesh(), &intercept_grid(vec![[0.9, 0.1], [0.1, 0.9]]), 1).unwrap();
        assert_eq!(surf.extrapolated, vec![false, true]);
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile_sorted(&[7.0], 0.975), 7.0);
    }
}
