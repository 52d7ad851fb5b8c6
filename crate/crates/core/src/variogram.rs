//! Empirical semivariogram of OLS residuals and a weighted Matérn fit used
//! to initialize the sampler.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::bessel::x_k1;
use crate::dense::least_squares;
use crate::data::CensoredDataset;
use crate::error::{Error, Result};
use crate::math;
use crate::mesh::{diameter, Point};
use crate::optim::nelder_mead;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramOptions {
    pub num_bins: usize,
    /// Largest bin center as a fraction of the domain diameter.
    pub max_lag_fraction: f64,
    /// Above this many sites, pairs are formed from a random subsample.
    pub subsample_above: usize,
    pub subsample_size: usize,
}

impl Default for VariogramOptions {
    fn default() -> Self {
        Self {
            num_bins: 15,
            max_lag_fraction: 1.0 / 3.0,
            subsample_above: 20_000,
            subsample_size: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    /// Dataset rows used (the observed ones).
    pub rows: Vec<usize>,
    /// Residuals divided by their sample standard deviation.
    pub residuals: Vec<f64>,
    pub residual_sd: f64,
}

/// OLS on the observed rows only.
pub fn ols_residuals(data: &CensoredDataset) -> Result<OlsFit> {
    let rows: Vec<usize> = (0..data.len()).filter(|&i| !data.censored[i]).collect();
    if rows.len() < data.p + 1 {
        return Err(Error::InsufficientSamples(alloc::format!(
            "{} observed rows for {} covariates",
            rows.len(),
            data.p
        )));
    }
    let x: Vec<f64> = rows.iter().flat_map(|&i| data.x_row(i).iter().copied()).collect();
    let y: Vec<f64> = rows.iter().map(|&i| data.y[i]).collect();
    let beta = least_squares(&x, &y, data.p)?;
    let mut residuals: Vec<f64> = rows
        .iter()
        .zip(&y)
        .map(|(&i, &yi)| yi - data.x_row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let scale = math::sqrt(math::variance(&residuals));
    // exact fits leave round-off only
    let y_scale = y.iter().fold(0.0f64, |m, v| m.max(math::abs(*v))).max(1.0);
    let residual_sd = if scale > 1e-10 * y_scale { scale } else { 0.0 };
    if residual_sd > 0.0 {
        residuals.iter_mut().for_each(|r| *r /= residual_sd);
    } else {
        residuals.iter_mut().for_each(|r| *r = 0.0);
    }
    Ok(OlsFit { beta, rows, residuals, residual_sd })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalVariogram {
    pub bin_centers: Vec<f64>,
    pub semivariances: Vec<f64>,
    pub pair_counts: Vec<u64>,
    pub half_width: f64,
}

impl EmpiricalVariogram {
    /// Bins with at least one pair.
    pub fn usable(&self) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
        (0..self.bin_centers.len())
            .filter(|&k| self.pair_counts[k] > 0)
            .map(|k| (self.bin_centers[k], self.semivariances[k], self.pair_counts[k]))
    }
}

/// Bins are centered at `2h, 4h, ..., 2h * num_bins`; a pair at distance
/// `d` contributes to the bin whose open window `(c - h, c + h)` holds `d`.
pub fn empirical_semivariogram(
    residuals: &[f64],
    locations: &[Point],
    num_bins: usize,
    h: f64,
) -> EmpiricalVariogram {
    assert_eq!(residuals.len(), locations.len());
    assert!(num_bins >= 1 && h > 0.0);
    let mut sums = vec![0.0; num_bins];
    let mut counts = vec![0u64; num_bins];
    let width = 2.0 * h;
    for i in 0..locations.len() {
        for j in (i + 1)..locations.len() {
            let d = math::hypot(locations[i][0] - locations[j][0], locations[i][1] - locations[j][1]);
            let k = math::round(d / width) as i64 - 1;
            if k < 0 || k as usize >= num_bins {
                continue;
            }
            let c = width * (k + 1) as f64;
            if math::abs(d - c) < h {
                sums[k as usize] += math::sq(residuals[i] - residuals[j]);
                counts[k as usize] += 1;
            }
        }
    }
    EmpiricalVariogram {
        bin_centers: (1..=num_bins).map(|k| width * k as f64).collect(),
        semivariances: sums
            .iter()
            .zip(&counts)
            .map(|(s, &n)| if n > 0 { s / (2.0 * n as f64) } else { 0.0 })
            .collect(),
        pair_counts: counts,
        half_width: h,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramFit {
    pub phi: f64,
    pub gamma: f64,
    pub sigma2: f64,
    pub objective: f64,
    pub used_fallback: bool,
}

/// `sum_d N(d) (gamma_hat(d) - sigma2 (1 - gamma (d/phi) K1(d/phi)))^2`.
pub fn variogram_objective(emp: &EmpiricalVariogram, phi: f64, gamma: f64, sigma2: f64) -> f64 {
    emp.usable()
        .map(|(d, g, n)| n as f64 * math::sq(g - sigma2 * (1.0 - gamma * x_k1(d / phi))))
        .sum()
}

/// Weighted least-squares fit of the Matérn-plus-nugget semivariogram.
///
/// `fallback` is `(phi, gamma, sigma2)` returned, with a warning, when the
/// optimizer fails or does worse.
pub fn fit_matern_variogram(emp: &EmpiricalVariogram, fallback: (f64, f64, f64)) -> Result<VariogramFit> {
    let usable: Vec<(f64, f64, u64)> = emp.usable().collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientSamples(alloc::format!(
            "{} non-empty variogram bins, need 3",
            usable.len()
        )));
    }
    let (fphi, fgamma, fsigma2) = fallback;
    let fallback_fit = VariogramFit {
        phi: fphi,
        gamma: fgamma,
        sigma2: fsigma2,
        objective: variogram_objective(emp, fphi, fgamma, fsigma2),
        used_fallback: true,
    };

    // For fixed (phi, gamma) the best sigma2 is a weighted projection.
    let best_sigma2 = |phi: f64, gamma: f64| -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for &(d, g, n) in &usable {
            let s = 1.0 - gamma * x_k1(d / phi);
            num += n as f64 * g * s;
            den += n as f64 * s * s;
        }
        if den > 0.0 { (num / den).max(1e-12) } else { 1.0 }
    };
    let d_max = usable.last().unwrap().0;
    let mut seed = (f64::INFINITY, 0.0, 0.0, 0.0);
    for a in 0..16 {
        let phi = d_max / 40.0 * libm::pow(80.0, a as f64 / 15.0);
        for gamma in [0.05, 0.25, 0.5, 0.75, 0.95] {
            let s2 = best_sigma2(phi, gamma);
            let v = variogram_objective(emp, phi, gamma, s2);
            if v < seed.0 {
                seed = (v, phi, gamma, s2);
            }
        }
    }

    let objective = |t: &[f64]| {
        variogram_objective(emp, math::exp(t[0]), math::sigmoid(t[1]), math::exp(t[2]))
    };
    let start = [math::ln(seed.1), math::logit(seed.2), math::ln(seed.3)];
    let res = nelder_mead(objective, &start, &[0.5, 1.0, 0.5], 4000, 1e-10, 1e-9);
    let fit = VariogramFit {
        phi: math::exp(res.x[0]),
        gamma: math::sigmoid(res.x[1]).clamp(0.0, 1.0),
        sigma2: math::exp(res.x[2]),
        objective: res.value,
        used_fallback: false,
    };
    if !res.converged || !fit.objective.is_finite() {
        log::warn!("variogram fit did not converge; using fallback starting values");
        return Ok(fallback_fit);
    }
    if fit.objective > fallback_fit.objective {
        log::warn!("variogram fit is worse than the fallback; using fallback starting values");
        return Ok(fallback_fit);
    }
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitEstimates {
    pub beta: Vec<f64>,
    pub tau: f64,
    pub phi: f64,
    pub gamma: f64,
}

/// Starting values from OLS on the observed rows followed by a variogram
/// fit of the standardized residuals.
pub fn initial_estimates<R: Rng + ?Sized>(
    data: &CensoredDataset,
    opts: &VariogramOptions,
    rng: &mut R,
) -> Result<(InitEstimates, EmpiricalVariogram, VariogramFit)> {
    let ols = ols_residuals(data)?;
    if ols.residual_sd == 0.0 {
        return Err(Error::DegenerateInput("observed responses are exactly linear in the covariates".into()));
    }
    let delta = diameter(&data.locations);
    let mut locs: Vec<Point> = ols.rows.iter().map(|&i| data.locations[i]).collect();
    let mut res = ols.residuals.clone();
    if locs.len() > opts.subsample_above {
        let pick = rand::seq::index::sample(rng, locs.len(), opts.subsample_size).into_vec();
        locs = pick.iter().map(|&k| locs[k]).collect();
        res = pick.iter().map(|&k| res[k]).collect();
    }
    let h = opts.max_lag_fraction * delta / (2.0 * opts.num_bins as f64);
    let emp = empirical_semivariogram(&res, &locs, opts.num_bins, h);
    let fit = fit_matern_variogram(&emp, (0.1 * delta, 0.8, math::variance(&res)))?;
    let init = InitEstimates {
        beta: ols.beta,
        tau: 1.0 / (fit.sigma2 * math::sq(ols.residual_sd)),
        phi: fit.phi,
        gamma: fit.gamma,
    };
    Ok((init, emp, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn dataset(locs: Vec<Point>, y: Vec<f64>) -> CensoredDataset {
        let n = y.len();
        CensoredDataset::with_coordinate_design(locs, y, vec![false; n], vec![f64::INFINITY; n]).unwrap()
    }

    #[test]
    fn exact_linear_response_gives_zero_residuals() {
        let locs: Vec<Point> = (0..10).map(|i| [i as f64, (i * i) as f64 * 0.1]).collect();
        let y = locs.iter().map(|p| 1.0 + 2.0 * p[0] - 3.0 * p[1]).collect();
        let fit = ols_residuals(&dataset(locs, y)).unwrap();
        assert_eq!(fit.residual_sd, 0.0);
        assert!(fit.residuals.iter().all(|&r| r == 0.0));
        assert!((fit.beta[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn intercept_only_residuals_are_standardized() {
        let y = vec![1.0, 4.0, 2.0, 7.0, 3.0];
        let locs = vec![[0.0, 0.0]; 5];
        let d = CensoredDataset::uncensored(locs, y.clone(), vec![1.0; 5], 1).unwrap();
        let fit = ols_residuals(&d).unwrap();
        let m = math::mean(&y);
        let sd = math::sqrt(math::variance(&y));
        for (r, v) in fit.residuals.iter().zip(&y) {
            assert!((r - (v - m) / sd).abs() < 1e-12);
        }
        assert!((math::variance(&fit.residuals) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn five_point_normal_equations() {
        // y on [1, t]: sums n=5, St=10, Stt=30, Sy=20, Sty=51
        // slope = (5*51 - 10*20) / (5*30 - 100) = 1.1; intercept = (20 - 11) / 5 = 1.8
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = vec![2.0, 2.5, 4.0, 5.5, 6.0];
        let x: Vec<f64> = t.iter().flat_map(|&v| [1.0, v]).collect();
        let d = CensoredDataset::uncensored(vec![[0.0, 0.0]; 5], y, x, 2).unwrap();
        let fit = ols_residuals(&d).unwrap();
        assert!((fit.beta[0] - 1.8).abs() < 1e-12);
        assert!((fit.beta[1] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn censored_rows_are_excluded() {
        let locs: Vec<Point> = (0..6).map(|i| [i as f64, 0.0]).collect();
        let d = CensoredDataset::new(
            locs,
            vec![1.0, 2.0, 100.0, 3.0, 5.0, 4.0],
            vec![false, false, true, false, false, false],
            vec![f64::INFINITY, f64::INFINITY, 100.0, f64::INFINITY, f64::INFINITY, f64::INFINITY],
            vec![1.0; 6],
            1,
        )
        .unwrap();
        let fit = ols_residuals(&d).unwrap();
        assert_eq!(fit.rows, vec![0, 1, 3, 4, 5]);
        assert!((fit.beta[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_observed_rows() {
        let d = CensoredDataset::with_coordinate_design(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![1.0, 2.0, 3.0],
            vec![false; 3],
            vec![f64::INFINITY; 3],
        )
        .unwrap();
        assert!(matches!(ols_residuals(&d), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn two_point_semivariogram() {
        let emp = empirical_semivariogram(&[0.0, 2.0], &[[0.0, 0.0], [1.0, 0.0]], 1, 0.5);
        assert_eq!(emp.bin_centers, vec![1.0]);
        assert_eq!(emp.pair_counts, vec![1]);
        assert_eq!(emp.semivariances, vec![2.0]);
    }

    #[test]
    fn constant_residuals_give_zero_semivariance() {
        let mut rng = StdRng::seed_from_u64(1);
        let locs: Vec<Point> = (0..50).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let emp = empirical_semivariogram(&vec![0.7; 50], &locs, 8, 0.05);
        assert!(emp.semivariances.iter().all(|&g| g == 0.0));
        assert!(emp.pair_counts.iter().sum::<u64>() > 0);
    }

    #[test]
    fn iid_residuals_have_flat_semivariogram() {
        let mut rng = StdRng::seed_from_u64(2);
        let n = 1500;
        let locs: Vec<Point> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let r: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let var = math::variance(&r);
        let emp = empirical_semivariogram(&r, &locs, 10, 0.02);
        for (_, g, _) in emp.usable() {
            assert!((g - var).abs() < 0.12, "{g} vs {var}");
        }
    }

    #[test]
    fn semivariogram_is_permutation_invariant() {
        let mut rng = StdRng::seed_from_u64(3);
        let locs: Vec<Point> = (0..60).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let r: Vec<f64> = (0..60).map(|_| rng.random::<f64>()).collect();
        let a = empirical_semivariogram(&r, &locs, 6, 0.05);
        let rev_l: Vec<Point> = locs.iter().rev().copied().collect();
        let rev_r: Vec<f64> = r.iter().rev().copied().collect();
        let b = empirical_semivariogram(&rev_r, &rev_l, 6, 0.05);
        assert_eq!(a.pair_counts, b.pair_counts);
        for (x, y) in a.semivariances.iter().zip(&b.semivariances) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn synthetic(phi: f64, gamma: f64, sigma2: f64) -> EmpiricalVariogram {
        let centers: Vec<f64> = (1..=15).map(|k| 0.04 * k as f64).collect();
        EmpiricalVariogram {
            semivariances: centers.iter().map(|&d| sigma2 * (1.0 - gamma * x_k1(d / phi))).collect(),
            pair_counts: (1..=15).map(|k| 100 + 10 * k as u64).collect(),
            bin_centers: centers,
            half_width: 0.02,
        }
    }

    #[test]
    fn recovers_synthetic_parameters() {
        let fit = fit_matern_variogram(&synthetic(0.2, 0.9, 5.0), (0.1, 0.8, 1.0)).unwrap();
        assert!(!fit.used_fallback);
        assert!((fit.phi / 0.2 - 1.0).abs() < 0.05, "{fit:?}");
        assert!((fit.gamma / 0.9 - 1.0).abs() < 0.05, "{fit:?}");
        assert!((fit.sigma2 / 5.0 - 1.0).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn flat_semivariogram_has_no_spatial_share() {
        let mut emp = synthetic(0.2, 0.9, 5.0);
        emp.semivariances.iter_mut().for_each(|g| *g = 2.0);
        let fit = fit_matern_variogram(&emp, (0.1, 0.8, 2.0)).unwrap();
        assert!(fit.gamma < 0.05, "{fit:?}");
        assert!((fit.sigma2 - 2.0).abs() < 0.05);
    }

    #[test]
    fn plateau_gives_sill_ratio() {
        // intercept 1, plateau 4: gamma = (4 - 1) / 4
        let fit = fit_matern_variogram(&synthetic(0.05, 0.75, 4.0), (0.1, 0.8, 1.0)).unwrap();
        assert!((fit.gamma - 0.75).abs() < 0.03, "{fit:?}");
    }

    #[test]
    fn never_worse_than_fallback() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let mut emp = synthetic(0.1, 0.5, 1.0);
            emp.semivariances.iter_mut().for_each(|g| *g += 0.3 * rng.random::<f64>());
            let fb = (0.1, 0.8, 1.0);
            let fit = fit_matern_variogram(&emp, fb).unwrap();
            assert!(fit.objective <= variogram_objective(&emp, fb.0, fb.1, fb.2));
        }
    }

    #[test]
    fn needs_three_bins() {
        let mut emp = synthetic(0.2, 0.9, 5.0);
        for k in 2..15 {
            emp.pair_counts[k] = 0;
        }
        assert!(fit_matern_variogram(&emp, (0.1, 0.8, 1.0)).is_err());
    }

    #[test]
    fn initial_estimates_on_spatial_data() {
        let mut rng = StdRng::seed_from_u64(6);
        let locs: Vec<Point> = (0..300).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> = locs
            .iter()
            .map(|p| {
                let e: f64 = StandardNormal.sample(&mut rng);
                2.0 + math::sin(6.0 * p[0]) + math::cos(5.0 * p[1]) + 0.3 * e
            })
            .collect();
        let (init, _, fit) = initial_estimates(&dataset(locs, y), &VariogramOptions::default(), &mut rng).unwrap();
        assert!(init.tau > 0.0 && init.phi > 0.0);
        assert!((0.0..=1.0).contains(&init.gamma));
        assert!(init.gamma > 0.5, "{fit:?}");
    }
}
