//! Adaptive Metropolis-within-Gibbs sampler for the censored SPDE model.
//!
//! Model, with `Z` the rescaled mesh-node effects:
//!
//! ```text
//! Y | beta, Z  ~ N(X beta + A Z, (1 - gamma) / tau I)
//! Z            ~ N(0, (gamma / tau) Q_phi^-1)
//! beta ~ N(0, beta_sd^2 I), tau ~ Gamma(a, b), phi ~ U(0, phi_upper), gamma ~ U(0, 1)
//! ```
//!
//! Censored responses are latent and imputed from truncated normals. Each
//! sweep also makes one joint Metropolis move of `(tau, phi, gamma)` with
//! `(beta, Z)` integrated out, after which `(beta, Z)` is drawn from its
//! full conditional.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::cholesky::{minimum_degree, CholeskyFactor, SymbolicCholesky};
use crate::data::CensoredDataset;
use crate::error::{Error, Result};
use crate::fem::projection_matrix;
use crate::math;
use crate::mesh::{diameter, Mesh};
use crate::normal::{sample_upper_truncated, upper_truncated_ln_pdf};
use crate::sparse::CsrMatrix;
use crate::spde::{SpdePrecision, SpdeStructure};
use crate::variogram::InitEstimates;

/// Bounds keeping `gamma` away from the singular ends.
pub const GAMMA_MIN: f64 = 1e-6;
pub const GAMMA_MAX: f64 = 1.0 - 1e-6;
/// Lower bound on `phi` as a fraction of the domain diameter.
pub const PHI_MIN_FRACTION: f64 = 1e-6;
/// Default prior upper bound on `phi` as a fraction of the domain diameter.
pub const PHI_UPPER_FRACTION: f64 = 0.5;
pub const SIMULATION_PHI_UPPER_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    pub beta_sd: f64,
    pub tau_shape: f64,
    pub tau_rate: f64,
    pub phi_upper: f64,
}

impl Priors {
    pub fn new(phi_upper: f64) -> Self {
        Self { beta_sd: 100.0, tau_shape: 0.1, tau_rate: 0.1, phi_upper }
    }

    /// `phi_upper = fraction * diameter`.
    pub fn for_domain(diameter: f64, fraction: f64) -> Self {
        Self::new(fraction * diameter)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.beta_sd, self.tau_shape, self.tau_rate, self.phi_upper]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("priors must be positive and finite: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub target_accept: f64,
    pub accept_band: (f64, f64),
    pub seed: u64,
    /// Keep every `z_thin`-th retained draw of the node effects.
    pub z_thin: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 25_000,
            burn_in: 15_000,
            thin: 5,
            n_chains: 3,
            target_accept: 0.4,
            accept_band: (0.3, 0.5),
            seed: 1,
            z_thin: 1,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::InvalidArgument("burn_in must be smaller than n_iter".into()));
        }
        if self.thin == 0 || self.z_thin == 0 || self.n_chains == 0 {
            return Err(Error::InvalidArgument("thin, z_thin and n_chains must be at least 1".into()));
        }
        if self.retained() == 0 {
            return Err(Error::InvalidArgument("no draws would be retained".into()));
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub beta: Vec<f64>,
    pub z: Vec<f64>,
    pub tau: f64,
    pub phi: f64,
    pub gamma: f64,
    /// Responses with current imputations in censored rows.
    pub y: Vec<f64>,
    pub log_step_phi: f64,
    pub log_step_gamma: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AcceptCounts {
    pub proposed: u64,
    pub accepted: u64,
}

impl AcceptCounts {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcceptanceStats {
    pub phi_burn_in: AcceptCounts,
    pub gamma_burn_in: AcceptCounts,
    pub phi: AcceptCounts,
    pub gamma: AcceptCounts,
    pub phi_step: f64,
    pub gamma_step: f64,
    pub joint_burn_in: AcceptCounts,
    pub joint: AcceptCounts,
    pub joint_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub chain: u64,
    pub p: usize,
    pub num_nodes: usize,
    /// Iteration index (0-based) of each retained draw.
    pub iterations: Vec<usize>,
    /// Row-major `draws x p`.
    pub beta: Vec<f64>,
    pub tau: Vec<f64>,
    pub phi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub log_post: Vec<f64>,
    /// Log posterior at every iteration.
    pub log_post_trace: Vec<f64>,
    /// Row-major `z_draws x N`; `z_iterations` gives their iteration indices.
    pub z: Vec<f64>,
    pub z_iterations: Vec<usize>,
    pub acceptance: AcceptanceStats,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn beta_draw(&self, t: usize) -> &[f64] {
        &self.beta[t * self.p..(t + 1) * self.p]
    }

    pub fn num_z_draws(&self) -> usize {
        self.z_iterations.len()
    }

    pub fn z_draw(&self, t: usize) -> &[f64] {
        &self.z[t * self.num_nodes..(t + 1) * self.num_nodes]
    }

    /// Scalar traces named `beta0.., tau, phi, gamma`.
    pub fn scalar_traces(&self) -> Vec<(String, Vec<f64>)> {
        let mut out: Vec<(String, Vec<f64>)> = (0..self.p)
            .map(|j| (format!("beta{j}"), (0..self.len()).map(|t| self.beta[t * self.p + j]).collect()))
            .collect();
        out.push(("tau".into(), self.tau.clone()));
        out.push(("phi".into(), self.phi.clone()));
        out.push(("gamma".into(), self.gamma.clone()));
        out
    }
}

/// Everything about the model that is shared read-only between chains.
#[derive(Debug)]
pub struct SamplerModel {
    data: CensoredDataset,
    priors: Priors,
    structure: Arc<SpdeStructure>,
    a: CsrMatrix,
    censored_rows: Vec<usize>,
    domain_diameter: f64,
    /// `A^T A` on its own pattern.
    ata: CsrMatrix,
    /// Row-major `p x N`.
    xta: Vec<f64>,
    xtx: Vec<f64>,
    lambda_pattern: CsrMatrix,
    lambda_symbolic: SymbolicCholesky,
    q_slots: Vec<usize>,
    ata_slots: Vec<usize>,
    /// `(beta row, node, slot of (N + b, j), slot of (j, N + b))`
    xta_slots: Vec<(usize, usize, usize, usize)>,
    xtx_slots: Vec<usize>,
}

impl SamplerModel {
    pub fn new(data: CensoredDataset, mesh: &Mesh, structure: Arc<SpdeStructure>, priors: Priors) -> Result<Self> {
        priors.validate()?;
        if data.is_empty() {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        if structure.dim() != mesh.num_nodes() {
            return Err(Error::InvalidArgument("SPDE structure does not match the mesh".into()));
        }
        let a = projection_matrix(mesh, &data.locations)?;
        let n_nodes = mesh.num_nodes();
        let p = data.p;
        let ata = a.transpose().matmul(&a);
        let mut xta = vec![0.0; p * n_nodes];
        let mut xtx = vec![0.0; p * p];
        for i in 0..data.len() {
            let x = data.x_row(i);
            let (cols, vals) = a.row(i);
            for b in 0..p {
                for (&j, &v) in cols.iter().zip(vals) {
                    xta[b * n_nodes + j] += x[b] * v;
                }
                for c in 0..p {
                    xtx[b * p + c] += x[b] * x[c];
                }
            }
        }

        let zz = structure.pattern().pattern_union(&ata);
        let used: Vec<usize> = (0..n_nodes).filter(|&j| ata.position(j, j).is_some()).collect();
        let mut trip: Vec<(usize, usize, f64)> = zz.triplets().map(|(r, c, _)| (r, c, 0.0)).collect();
        for b in 0..p {
            for &j in &used {
                trip.push((n_nodes + b, j, 0.0));
                trip.push((j, n_nodes + b, 0.0));
            }
            for c in 0..p {
                trip.push((n_nodes + b, n_nodes + c, 0.0));
            }
        }
        let dim = n_nodes + p;
        let lambda_pattern = CsrMatrix::from_triplets(dim, dim, trip);
        let mut perm = minimum_degree(&zz);
        perm.extend(n_nodes..dim);
        let lambda_symbolic = SymbolicCholesky::analyze(&lambda_pattern, perm);

        let slot = |r: usize, c: usize| lambda_pattern.position(r, c).expect("entry in pattern");
        let q_slots = structure.pattern().triplets().map(|(r, c, _)| slot(r, c)).collect();
        let ata_slots = ata.triplets().map(|(r, c, _)| slot(r, c)).collect();
        let mut xta_slots = Vec::with_capacity(p * used.len());
        for b in 0..p {
            for &j in &used {
                xta_slots.push((b, j, slot(n_nodes + b, j), slot(j, n_nodes + b)));
            }
        }
        let xtx_slots = (0..p * p).map(|k| slot(n_nodes + k / p, n_nodes + k % p)).collect();
        let censored_rows = (0..data.len()).filter(|&i| data.censored[i]).collect();
        let domain_diameter = diameter(&data.locations);
        Ok(Self {
            data,
            priors,
            structure,
            a,
            censored_rows,
            domain_diameter,
            ata,
            xta,
            xtx,
            lambda_pattern,
            lambda_symbolic,
            q_slots,
            ata_slots,
            xta_slots,
            xtx_slots,
        })
    }

    pub fn data(&self) -> &CensoredDataset {
        &self.data
    }

    pub fn priors(&self) -> &Priors {
        &self.priors
    }

    pub fn structure(&self) -> &Arc<SpdeStructure> {
        &self.structure
    }

    pub fn projection(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn num_nodes(&self) -> usize {
        self.structure.dim()
    }

    pub fn phi_bounds(&self) -> (f64, f64) {
        let upper = self.priors.phi_upper;
        let lo = (PHI_MIN_FRACTION * self.domain_diameter).min(1e-3 * upper);
        (lo, upper * (1.0 - 1e-9))
    }

    /// Floating-point work of the two sparse factorizations per iteration,
    /// plus the linear terms in `n`.
    pub fn flops_per_iteration(&self) -> u64 {
        2 * self.lambda_symbolic.flops()
            + 2 * self.structure.symbolic().flops()
            + 8 * self.lambda_symbolic.nnz_l() as u64
            + 4 * self.structure.symbolic().nnz_l() as u64
            + (4 * self.a.nnz() + 4 * self.data.len() * self.data.p) as u64
    }

    /// Clip `init` into the support and build the starting state.
    pub fn initial_state(&self, init: &InitEstimates) -> Result<ChainState> {
        if init.beta.len() != self.data.p {
            return Err(Error::InvalidArgument("initial beta has the wrong length".into()));
        }
        let (phi_lo, phi_hi) = self.phi_bounds();
        let clip = |name: &str, v: f64, lo: f64, hi: f64| -> f64 {
            let c = if v.is_finite() { v.clamp(lo, hi) } else { 0.5 * (lo + hi) };
            if c != v {
                log::warn!("initial {name} = {v} is outside ({lo}, {hi}); using {c}");
            }
            c
        };
        let phi = clip("phi", init.phi, phi_lo * 10.0, phi_hi * 0.95);
        let gamma = clip("gamma", init.gamma, 0.01, 0.99);
        let tau = clip("tau", init.tau, 1e-8, 1e8);
        let y = (0..self.data.len())
            .map(|i| {
                if self.data.censored[i] {
                    let fit: f64 = self.data.x_row(i).iter().zip(&init.beta).map(|(a, b)| a * b).sum();
                    fit.min(self.data.limits[i])
                } else {
                    self.data.y[i]
                }
            })
            .collect();
        Ok(ChainState {
            beta: init.beta.clone(),
            z: vec![0.0; self.num_nodes()],
            tau,
            phi,
            gamma,
            y,
            log_step_phi: math::ln(0.5),
            log_step_gamma: math::ln(0.5),
        })
    }

    /// `X beta + A z`.
    pub fn linear_predictor(&self, beta: &[f64], z: &[f64]) -> Vec<f64> {
        let mut eta = self.a.mul_vec(z);
        for (i, e) in eta.iter_mut().enumerate() {
            *e += self.data.x_row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
        }
        eta
    }

    fn residual_ss(&self, state: &ChainState, eta: &[f64]) -> f64 {
        state.y.iter().zip(eta).map(|(y, e)| math::sq(y - e)).sum()
    }

    /// Full conditional of `(z, beta)` (node effects first).
    pub fn beta_z_conditional(&self, state: &ChainState, q: &SpdePrecision) -> Result<GaussianConditional> {
        let mut values = vec![0.0; self.lambda_pattern.nnz()];
        self.fill_lambda(state.tau, state.gamma, q, &mut values);
        let factor = self.lambda_symbolic.factor(&values)?;
        let rhs = self.lambda_rhs(&state.y, state.tau, state.gamma);
        let mean = factor.solve(&self.lambda_symbolic, &rhs);
        let logdet = factor.logdet(&self.lambda_symbolic);
        Ok(GaussianConditional { values, mean, logdet, pattern: self.lambda_pattern.clone() })
    }

    fn fill_lambda(&self, tau: f64, gamma: f64, q: &SpdePrecision, values: &mut [f64]) {
        let lambda = tau / (1.0 - gamma);
        let prior = tau / gamma;
        values.iter_mut().for_each(|v| *v = 0.0);
        for (&s, &v) in self.q_slots.iter().zip(q.values()) {
            values[s] += prior * v;
        }
        for (&s, &v) in self.ata_slots.iter().zip(self.ata.values()) {
            values[s] += lambda * v;
        }
        let n_nodes = self.num_nodes();
        for &(b, j, s1, s2) in &self.xta_slots {
            let v = lambda * self.xta[b * n_nodes + j];
            values[s1] += v;
            values[s2] += v;
        }
        let p = self.data.p;
        let beta_prec = 1.0 / math::sq(self.priors.beta_sd);
        for (k, &s) in self.xtx_slots.iter().enumerate() {
            values[s] += lambda * self.xtx[k] + if k / p == k % p { beta_prec } else { 0.0 };
        }
    }

    fn lambda_rhs(&self, y: &[f64], tau: f64, gamma: f64) -> Vec<f64> {
        let lambda = tau / (1.0 - gamma);
        let mut rhs = self.a.mul_transpose_vec(y);
        let p = self.data.p;
        let mut xty = vec![0.0; p];
        for (i, &y) in y.iter().enumerate() {
            for (acc, x) in xty.iter_mut().zip(self.data.x_row(i)) {
                *acc += x * y;
            }
        }
        rhs.extend(xty);
        rhs.iter_mut().for_each(|v| *v *= lambda);
        rhs
    }

    /// Log density of `y` given `(tau, phi, gamma)` with `(z, beta)`
    /// integrated out. `q` must match `phi`.
    pub fn log_marginal(&self, y: &[f64], tau: f64, gamma: f64, q: &SpdePrecision) -> Result<f64> {
        let mut values = vec![0.0; self.lambda_pattern.nnz()];
        self.fill_lambda(tau, gamma, q, &mut values);
        let factor = self.lambda_symbolic.factor(&values)?;
        Ok(self.log_marginal_with(y, tau, gamma, q, &factor))
    }

    fn log_marginal_with(&self, y: &[f64], tau: f64, gamma: f64, q: &SpdePrecision, factor: &CholeskyFactor) -> f64 {
        let n = y.len() as f64;
        let nn = self.num_nodes() as f64;
        let p = self.data.p as f64;
        let lambda = tau / (1.0 - gamma);
        let b = self.lambda_rhs(y, tau, gamma);
        let m = factor.solve(&self.lambda_symbolic, &b);
        let bmb: f64 = b.iter().zip(&m).map(|(a, c)| a * c).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let prior_logdet = nn * math::ln(tau / gamma) + q.logdet() - 2.0 * p * math::ln(self.priors.beta_sd);
        -0.5 * n * math::ln(2.0 * PI) + 0.5 * n * math::ln(lambda) - 0.5 * lambda * yy + 0.5 * prior_logdet
            - 0.5 * factor.logdet(&self.lambda_symbolic)
            + 0.5 * bmb
    }

    /// Log prior of `(tau, phi, gamma)` on the `(ln tau, logit(phi / phi_upper),
    /// logit gamma)` scale, up to a constant.
    fn hyper_log_prior(&self, tau: f64, phi: f64, gamma: f64) -> f64 {
        let u = self.priors.phi_upper;
        self.priors.tau_shape * math::ln(tau) - self.priors.tau_rate * tau
            + math::ln(phi)
            + math::ln(u - phi)
            + math::ln(gamma)
            + math::ln(1.0 - gamma)
    }

    /// MH log acceptance ratio of the joint move from `(tau, q, gamma)` to
    /// `(tau_new, q_new, gamma_new)` with `(z, beta)` integrated out.
    pub fn joint_log_ratio(
        &self,
        y: &[f64],
        (tau, gamma, q): (f64, f64, &SpdePrecision),
        (tau_new, gamma_new, q_new): (f64, f64, &SpdePrecision),
    ) -> Result<f64> {
        Ok(self.log_marginal(y, tau_new, gamma_new, q_new)? + self.hyper_log_prior(tau_new, q_new.phi(), gamma_new)
            - self.log_marginal(y, tau, gamma, q)?
            - self.hyper_log_prior(tau, q.phi(), gamma))
    }

    /// Shape and rate of the Gamma full conditional of `tau`.
    pub fn tau_conditional(&self, state: &ChainState, q: &SpdePrecision) -> (f64, f64) {
        let eta = self.linear_predictor(&state.beta, &state.z);
        let rss = self.residual_ss(state, &eta);
        self.tau_params(rss, q.quad_form(&state.z), state.gamma)
    }

    fn tau_params(&self, rss: f64, zqz: f64, gamma: f64) -> (f64, f64) {
        let n = self.data.len() as f64;
        let nn = self.num_nodes() as f64;
        let shape = self.priors.tau_shape + 0.5 * (n + nn);
        let rate = self.priors.tau_rate + rss / (2.0 * (1.0 - gamma)) + zqz / (2.0 * gamma);
        (shape, rate)
    }

    /// Mean, sd and limit of the truncated normal conditional of censored row `i`.
    pub fn impute_conditional(&self, state: &ChainState, i: usize) -> (f64, f64, f64) {
        let (cols, vals) = self.a.row(i);
        let mean = self.data.x_row(i).iter().zip(&state.beta).map(|(a, b)| a * b).sum::<f64>()
            + cols.iter().zip(vals).map(|(&j, &v)| v * state.z[j]).sum::<f64>();
        (mean, math::sqrt((1.0 - state.gamma) / state.tau), self.data.limits[i])
    }

    /// Log conditional density of row `i`'s imputed value.
    pub fn impute_ln_density(&self, state: &ChainState, i: usize, value: f64) -> f64 {
        let (m, s, u) = self.impute_conditional(state, i);
        upper_truncated_ln_pdf(value, m, s, u)
    }

    /// Log joint density of `(y, z, beta, tau, phi, gamma)`, normalizing
    /// constants included. `q` must match `state.phi`.
    pub fn log_joint(&self, state: &ChainState, q: &SpdePrecision) -> f64 {
        let eta = self.linear_predictor(&state.beta, &state.z);
        let rss = self.residual_ss(state, &eta);
        self.log_joint_parts(state, rss, q.quad_form(&state.z), q.logdet())
    }

    fn log_joint_parts(&self, s: &ChainState, rss: f64, zqz: f64, logdet: f64) -> f64 {
        if self
            .censored_rows
            .iter()
            .any(|&i| s.y[i] > self.data.limits[i])
        {
            return f64::NEG_INFINITY;
        }
        let (lo, hi) = self.phi_bounds();
        if !(s.phi > lo && s.phi < hi && s.gamma > 0.0 && s.gamma < 1.0 && s.tau > 0.0) {
            return f64::NEG_INFINITY;
        }
        let n = self.data.len() as f64;
        let nn = self.num_nodes() as f64;
        let ln2pi = math::ln(2.0 * PI);
        let noise_var = (1.0 - s.gamma) / s.tau;
        let lik = -0.5 * n * (ln2pi + math::ln(noise_var)) - rss / (2.0 * noise_var);
        let field = -0.5 * nn * ln2pi + 0.5 * nn * math::ln(s.tau / s.gamma) + 0.5 * logdet
            - s.tau * zqz / (2.0 * s.gamma);
        let bsd = self.priors.beta_sd;
        let p = s.beta.len() as f64;
        let beta_prior = -0.5 * p * (ln2pi + 2.0 * math::ln(bsd))
            - s.beta.iter().map(|b| b * b).sum::<f64>() / (2.0 * bsd * bsd);
        let (a, b) = (self.priors.tau_shape, self.priors.tau_rate);
        let tau_prior = a * math::ln(b) - libm::lgamma(a) + (a - 1.0) * math::ln(s.tau) - b * s.tau;
        let phi_prior = -math::ln(self.priors.phi_upper);
        lik + field + beta_prior + tau_prior + phi_prior
    }

    /// MH log acceptance ratio for moving `phi` from `q` to `q_new`, on the
    /// logit(phi / phi_upper) scale.
    pub fn phi_log_ratio(&self, state: &ChainState, q: &SpdePrecision, q_new: &SpdePrecision) -> f64 {
        let u = self.priors.phi_upper;
        let jac = |f: f64| math::ln(f) + math::ln(u - f);
        let dq = q_new.quad_form(&state.z) - q.quad_form(&state.z);
        0.5 * (q_new.logdet() - q.logdet()) - state.tau / (2.0 * state.gamma) * dq + jac(q_new.phi())
            - jac(q.phi())
    }

    /// MH log acceptance ratio for moving `gamma` to `gamma_new`, on the logit scale.
    pub fn gamma_log_ratio(&self, state: &ChainState, q: &SpdePrecision, gamma_new: f64) -> f64 {
        let eta = self.linear_predictor(&state.beta, &state.z);
        let rss = self.residual_ss(state, &eta);
        self.gamma_log_target(state.tau, rss, q.quad_form(&state.z), gamma_new)
            - self.gamma_log_target(state.tau, rss, q.quad_form(&state.z), state.gamma)
    }

    fn gamma_log_target(&self, tau: f64, rss: f64, zqz: f64, g: f64) -> f64 {
        let n = self.data.len() as f64;
        let nn = self.num_nodes() as f64;
        -0.5 * n * math::ln(1.0 - g) - tau * rss / (2.0 * (1.0 - g)) - 0.5 * nn * math::ln(g)
            - tau * zqz / (2.0 * g)
            + math::ln(g)
            + math::ln(1.0 - g)
    }
}

/// Gaussian in canonical form `N(Lambda^-1 b, Lambda^-1)` with `Lambda` on a
/// sparse pattern.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    pub values: Vec<f64>,
    pub mean: Vec<f64>,
    pub logdet: f64,
    pattern: CsrMatrix,
}

impl GaussianConditional {
    pub fn precision(&self) -> CsrMatrix {
        CsrMatrix::from_parts(
            self.pattern.nrows(),
            self.pattern.ncols(),
            self.pattern.indptr().to_vec(),
            self.pattern.indices().to_vec(),
            self.values.clone(),
        )
    }

    pub fn ln_density(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let quad = self.precision().quad_form(&d);
        -0.5 * x.len() as f64 * math::ln(2.0 * PI) + 0.5 * self.logdet - 0.5 * quad
    }
}

fn adapt_gain(t: usize) -> f64 {
    libm::pow(1.0 + t as f64 / 100.0, -0.6)
}

fn refactor(symbolic: &SymbolicCholesky, slot: &mut Option<CholeskyFactor>, values: &[f64]) -> Result<()> {
    match slot {
        Some(f) => f.refactor(symbolic, values),
        None => {
            *slot = Some(symbolic.factor(values)?);
            Ok(())
        }
    }
}

const JOINT_TARGET_ACCEPT: f64 = 0.25;
const JOINT_COV_START: usize = 200;

/// Adaptive Gaussian random walk in three dimensions: the shape follows the
/// running covariance of the burn-in path, the scale is tuned toward
/// `JOINT_TARGET_ACCEPT`. Both freeze after burn-in.
#[derive(Debug, Clone)]
struct JointProposal {
    log_scale: f64,
    n: f64,
    mean: [f64; 3],
    /// Sum of squared deviations.
    m2: [[f64; 3]; 3],
    chol: [[f64; 3]; 3],
}

impl JointProposal {
    fn new() -> Self {
        let mut chol = [[0.0; 3]; 3];
        for (i, row) in chol.iter_mut().enumerate() {
            row[i] = 0.1;
        }
        Self { log_scale: 0.0, n: 0.0, mean: [0.0; 3], m2: [[0.0; 3]; 3], chol }
    }

    fn propose(&self, x: &[f64; 3], eps: &[f64; 3]) -> [f64; 3] {
        let s = math::exp(self.log_scale);
        let mut out = *x;
        for i in 0..3 {
            for j in 0..=i {
                out[i] += s * self.chol[i][j] * eps[j];
            }
        }
        out
    }

    fn adapt(&mut self, t: usize, prob: f64, x: &[f64; 3]) {
        self.log_scale += adapt_gain(t) * (prob - JOINT_TARGET_ACCEPT);
        self.n += 1.0;
        let delta: [f64; 3] = core::array::from_fn(|i| x[i] - self.mean[i]);
        for i in 0..3 {
            self.mean[i] += delta[i] / self.n;
        }
        for i in 0..3 {
            for j in 0..3 {
                self.m2[i][j] += delta[i] * (x[j] - self.mean[j]);
            }
        }
        if t >= JOINT_COV_START && t % 50 == 0 {
            let scale = math::sq(2.38) / 3.0 / (self.n - 1.0);
            let cov: Vec<f64> = (0..9)
                .map(|k| scale * self.m2[k / 3][k % 3] + if k / 3 == k % 3 { 1e-6 } else { 0.0 })
                .collect();
            if let Ok(l) = crate::dense::DenseCholesky::factor(&cov, 3) {
                for i in 0..3 {
                    for j in 0..=i {
                        self.chol[i][j] = l.l(i, j);
                    }
                }
            }
        }
    }
}

/// One chain of the sampler with its buffers and random stream.
pub struct Chain<'m> {
    model: &'m SamplerModel,
    chain_id: u64,
    state: ChainState,
    q: SpdePrecision,
    q_prop: SpdePrecision,
    lambda_values: Vec<f64>,
    lambda_factor: Option<CholeskyFactor>,
    lambda_prop_values: Vec<f64>,
    lambda_prop_factor: Option<CholeskyFactor>,
    joint: JointProposal,
    eta: Vec<f64>,
    noise: Vec<f64>,
    rng: ChaCha8Rng,
    target_accept: f64,
    stats: AcceptanceStats,
}

impl<'m> Chain<'m> {
    pub fn new(model: &'m SamplerModel, state: ChainState, seed: u64, chain_id: u64, target_accept: f64) -> Result<Self> {
        let q = SpdePrecision::new(state.phi, model.structure.clone())?;
        let q_prop = q.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain_id);
        let eta = model.linear_predictor(&state.beta, &state.z);
        Ok(Self {
            model,
            chain_id,
            lambda_values: vec![0.0; model.lambda_pattern.nnz()],
            lambda_factor: None,
            lambda_prop_values: vec![0.0; model.lambda_pattern.nnz()],
            lambda_prop_factor: None,
            joint: JointProposal::new(),
            noise: vec![0.0; model.lambda_symbolic.dim()],
            state,
            q,
            q_prop,
            eta,
            rng,
            target_accept,
            stats: AcceptanceStats::default(),
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn precision(&self) -> &SpdePrecision {
        &self.q
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn log_joint(&self) -> f64 {
        self.model.log_joint(&self.state, &self.q)
    }

    pub fn impute_censored(&mut self) {
        let sd = math::sqrt((1.0 - self.state.gamma) / self.state.tau);
        for &i in &self.model.censored_rows {
            let u = self.model.data.limits[i];
            let v = sample_upper_truncated(&mut self.rng, self.eta[i], sd, u);
            debug_assert!(v <= u);
            self.state.y[i] = v;
        }
    }

    pub fn update_beta_z(&mut self) -> Result<()> {
        self.factor_current()?;
        self.draw_beta_z()
    }

    fn factor_current(&mut self) -> Result<()> {
        let m = self.model;
        m.fill_lambda(self.state.tau, self.state.gamma, &self.q, &mut self.lambda_values);
        refactor(&m.lambda_symbolic, &mut self.lambda_factor, &self.lambda_values)
    }

    /// Joint random-walk move of `(ln tau, logit(phi / phi_upper), logit
    /// gamma)` with `(z, beta)` integrated out, followed by a draw of `(z,
    /// beta)` from its full conditional at the resulting hyperparameters.
    pub fn update_joint(&mut self, adapt_at: Option<usize>) -> Result<bool> {
        let m = self.model;
        let u = m.priors.phi_upper;
        let (lo, hi) = m.phi_bounds();
        self.factor_current()?;
        let current = [
            math::ln(self.state.tau),
            math::logit(self.state.phi / u),
            math::logit(self.state.gamma),
        ];
        let mut eps = [0.0; 3];
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut self.rng);
        }
        let proposal = self.joint.propose(&current, &eps);
        let log_u = math::ln(1.0 - self.rng.random::<f64>());
        let (tau_new, phi_new, gamma_new) = (math::exp(proposal[0]), u * math::sigmoid(proposal[1]), math::sigmoid(proposal[2]));
        let mut prob = 0.0;
        let mut accepted = false;
        let in_support = tau_new.is_finite()
            && tau_new > 0.0
            && phi_new > lo
            && phi_new < hi
            && gamma_new > GAMMA_MIN
            && gamma_new < GAMMA_MAX;
        if in_support && self.q_prop.set_phi(phi_new).is_ok() {
            m.fill_lambda(tau_new, gamma_new, &self.q_prop, &mut self.lambda_prop_values);
            if refactor(&m.lambda_symbolic, &mut self.lambda_prop_factor, &self.lambda_prop_values).is_ok() {
                let y = &self.state.y;
                let old = m.log_marginal_with(y, self.state.tau, self.state.gamma, &self.q, self.lambda_factor.as_ref().unwrap())
                    + m.hyper_log_prior(self.state.tau, self.state.phi, self.state.gamma);
                let new = m.log_marginal_with(y, tau_new, gamma_new, &self.q_prop, self.lambda_prop_factor.as_ref().unwrap())
                    + m.hyper_log_prior(tau_new, phi_new, gamma_new);
                let r = new - old;
                if r.is_finite() {
                    prob = if r >= 0.0 { 1.0 } else { math::exp(r) };
                    if log_u < r {
                        core::mem::swap(&mut self.q, &mut self.q_prop);
                        core::mem::swap(&mut self.lambda_factor, &mut self.lambda_prop_factor);
                        core::mem::swap(&mut self.lambda_values, &mut self.lambda_prop_values);
                        self.state.tau = tau_new;
                        self.state.phi = phi_new;
                        self.state.gamma = gamma_new;
                        accepted = true;
                    }
                }
            }
        }
        if let Some(t) = adapt_at {
            let now = [
                math::ln(self.state.tau),
                math::logit(self.state.phi / u),
                math::logit(self.state.gamma),
            ];
            self.joint.adapt(t, prob, &now);
            self.stats.joint_burn_in.record(accepted);
        } else {
            self.stats.joint.record(accepted);
        }
        self.draw_beta_z()?;
        Ok(accepted)
    }

    fn draw_beta_z(&mut self) -> Result<()> {
        let m = self.model;
        let rhs = m.lambda_rhs(&self.state.y, self.state.tau, self.state.gamma);
        for v in self.noise.iter_mut() {
            *v = StandardNormal.sample(&mut self.rng);
        }
        let theta = self
            .lambda_factor
            .as_ref()
            .unwrap()
            .sample_canonical(&m.lambda_symbolic, &rhs, &self.noise);
        let n_nodes = m.num_nodes();
        self.state.z.copy_from_slice(&theta[..n_nodes]);
        self.state.beta.copy_from_slice(&theta[n_nodes..]);
        self.eta = m.linear_predictor(&self.state.beta, &self.state.z);
        Ok(())
    }

    fn rss(&self) -> f64 {
        self.model.residual_ss(&self.state, &self.eta)
    }

    pub fn update_tau(&mut self) -> Result<()> {
        let (shape, rate) = self.model.tau_params(self.rss(), self.q.quad_form(&self.state.z), self.state.gamma);
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::Numerical(format!("tau conditional rate is {rate}")));
        }
        let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numerical(format!("{e}")))?;
        self.state.tau = g.sample(&mut self.rng).max(f64::MIN_POSITIVE);
        Ok(())
    }

    /// Returns whether the proposal was accepted.
    pub fn update_phi(&mut self, adapt_at: Option<usize>) -> bool {
        let m = self.model;
        let u = m.priors.phi_upper;
        let (lo, hi) = m.phi_bounds();
        let step = math::exp(self.state.log_step_phi);
        let eps: f64 = StandardNormal.sample(&mut self.rng);
        let phi_new = u * math::sigmoid(math::logit(self.state.phi / u) + step * eps);
        let log_u = math::ln(1.0 - self.rng.random::<f64>());
        let mut prob = 0.0;
        if phi_new > lo && phi_new < hi && self.q_prop.set_phi(phi_new).is_ok() {
            let r = m.phi_log_ratio(&self.state, &self.q, &self.q_prop);
            prob = if r >= 0.0 { 1.0 } else { math::exp(r) };
            if log_u < r {
                core::mem::swap(&mut self.q, &mut self.q_prop);
                self.state.phi = phi_new;
            }
        }
        let accepted = self.q.phi() == phi_new;
        if let Some(t) = adapt_at {
            self.state.log_step_phi += adapt_gain(t) * (prob - self.target_accept);
            self.stats.phi_burn_in.record(accepted);
        } else {
            self.stats.phi.record(accepted);
        }
        accepted
    }

    pub fn update_gamma(&mut self, adapt_at: Option<usize>) -> bool {
        let m = self.model;
        let step = math::exp(self.state.log_step_gamma);
        let eps: f64 = StandardNormal.sample(&mut self.rng);
        let g_new = math::sigmoid(math::logit(self.state.gamma) + step * eps);
        let log_u = math::ln(1.0 - self.rng.random::<f64>());
        let mut prob = 0.0;
        let mut accepted = false;
        if g_new > GAMMA_MIN && g_new < GAMMA_MAX {
            let rss = self.rss();
            let zqz = self.q.quad_form(&self.state.z);
            let r = m.gamma_log_target(self.state.tau, rss, zqz, g_new)
                - m.gamma_log_target(self.state.tau, rss, zqz, self.state.gamma);
            prob = if r >= 0.0 { 1.0 } else { math::exp(r) };
            if log_u < r {
                self.state.gamma = g_new;
                accepted = true;
            }
        }
        if let Some(t) = adapt_at {
            self.state.log_step_gamma += adapt_gain(t) * (prob - self.target_accept);
            self.stats.gamma_burn_in.record(accepted);
        } else {
            self.stats.gamma.record(accepted);
        }
        accepted
    }

    /// One full sweep. `adapt_at` is the burn-in iteration index, or `None`
    /// once adaptation is frozen.
    pub fn step(&mut self, adapt_at: Option<usize>) -> Result<()> {
        self.impute_censored();
        self.update_joint(adapt_at)?;
        self.update_tau()?;
        self.update_phi(adapt_at);
        self.update_gamma(adapt_at);
        Ok(())
    }

    pub fn run(mut self, config: &McmcConfig) -> Result<PosteriorSamples> {
        config.validate()?;
        let m = self.model;
        let retained = config.retained();
        let n_nodes = m.num_nodes();
        let mut out = PosteriorSamples {
            chain: self.chain_id,
            p: m.data.p,
            num_nodes: n_nodes,
            iterations: Vec::with_capacity(retained),
            beta: Vec::with_capacity(retained * m.data.p),
            tau: Vec::with_capacity(retained),
            phi: Vec::with_capacity(retained),
            gamma: Vec::with_capacity(retained),
            log_post: Vec::with_capacity(retained),
            log_post_trace: Vec::with_capacity(config.n_iter),
            z: Vec::new(),
            z_iterations: Vec::new(),
            acceptance: AcceptanceStats::default(),
        };
        for it in 0..config.n_iter {
            let adapt = (it < config.burn_in).then_some(it);
            self.step(adapt).map_err(|e| Error::Sampler {
                chain: self.chain_id,
                iteration: it,
                source: alloc::boxed::Box::new(e),
            })?;
            let lp = m.log_joint_parts(&self.state, self.rss(), self.q.quad_form(&self.state.z), self.q.logdet());
            out.log_post_trace.push(lp);
            if it >= config.burn_in && (it + 1 - config.burn_in) % config.thin == 0 && out.tau.len() < retained {
                let k = out.tau.len();
                out.iterations.push(it);
                out.beta.extend_from_slice(&self.state.beta);
                out.tau.push(self.state.tau);
                out.phi.push(self.state.phi);
                out.gamma.push(self.state.gamma);
                out.log_post.push(lp);
                if k % config.z_thin == 0 {
                    out.z.extend_from_slice(&self.state.z);
                    out.z_iterations.push(it);
                }
            }
        }
        self.stats.phi_step = math::exp(self.state.log_step_phi);
        self.stats.gamma_step = math::exp(self.state.log_step_gamma);
        self.stats.joint_step = math::exp(self.joint.log_scale);
        out.acceptance = self.stats;
        Ok(out)
    }
}

/// Starting values for chain `chain_id`: chain 0 starts at `init`, the
/// others at a random perturbation of it.
pub fn perturbed_init(init: &InitEstimates, seed: u64, chain_id: u64) -> InitEstimates {
    if chain_id == 0 {
        return init.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_c4a1);
    rng.set_stream(chain_id);
    let mut jitter = |s: f64| -> f64 {
        let e: f64 = StandardNormal.sample(&mut rng);
        math::exp(s * e)
    };
    let tau = init.tau * jitter(0.2);
    let phi = init.phi * jitter(0.2);
    let gamma = math::sigmoid(math::logit(init.gamma.clamp(0.01, 0.99)) + math::ln(jitter(0.3)));
    let sd = 1.0 / math::sqrt(init.tau.max(1e-12));
    let beta = init
        .beta
        .iter()
        .map(|b| {
            let e: f64 = StandardNormal.sample(&mut rng);
            b + 0.1 * sd * e
        })
        .collect();
    InitEstimates { beta, tau, phi, gamma }
}

/// Run one chain from `init` (perturbed for `chain_id > 0`).
pub fn run_chain(model: &SamplerModel, config: &McmcConfig, init: &InitEstimates, chain_id: u64) -> Result<PosteriorSamples> {
    config.validate()?;
    let start = model.initial_state(&perturbed_init(init, config.seed, chain_id))?;
    Chain::new(model, start, config.seed, chain_id, config.target_accept)?.run(config)
}

/// Split-R̂ of one scalar over several chains. Each chain is cut in half
/// (dropping a middle draw when odd).
pub fn gelman_rubin(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InsufficientSamples("split-Rhat needs at least 2 chains".into()));
    }
    let len = chains.iter().map(|c| c.len()).min().unwrap();
    if len < 50 {
        return Err(Error::InsufficientSamples(format!("split-Rhat needs 50 draws per chain, got {len}")));
    }
    let half = len / 2;
    let mut seqs: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let c = &c[..len];
        seqs.push(&c[..half]);
        seqs.push(&c[len - half..]);
    }
    let n = half as f64;
    let means: Vec<f64> = seqs.iter().map(|s| math::mean(s)).collect();
    let w = seqs.iter().map(|s| math::variance(s)).sum::<f64>() / seqs.len() as f64;
    let b = n * math::variance(&means);
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok(math::sqrt(var_plus / w))
}

/// Split-R̂ for every scalar parameter across chains.
pub fn rhat_table(chains: &[PosteriorSamples]) -> Result<Vec<(String, f64)>> {
    let traces: Vec<Vec<(String, Vec<f64>)>> = chains.iter().map(|c| c.scalar_traces()).collect();
    let first = traces
        .first()
        .ok_or_else(|| Error::InsufficientSamples("no chains".into()))?;
    (0..first.len())
        .map(|k| {
            let refs: Vec<&[f64]> = traces.iter().map(|t| t[k].1.as_slice()).collect();
            Ok((first[k].0.clone(), gelman_rubin(&refs)?))
        })
        .collect()
}
