//! Run configuration, read from TOML. Command-line flags override keys.

use std::path::{Path, PathBuf};

use censpde_core::mcmc::{McmcConfig, Priors, PHI_UPPER_FRACTION};
use censpde_core::mesh::MeshOptions;
use censpde_core::variogram::VariogramOptions;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnMapping, Transform};
use crate::error::{CliError, Result};
use crate::io::read_to_string;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub mesh: MeshSection,
    pub priors: PriorSection,
    pub mcmc: McmcSection,
    pub variogram: VariogramSection,
    pub prediction: PredictionSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub input: Option<PathBuf>,
    pub transform: Transform,
    #[serde(flatten)]
    pub columns: ColumnMapping,
}

/// Unset lengths default to fractions of the data diameter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub max_edge_interior: Option<f64>,
    pub max_edge_exterior: Option<f64>,
    pub boundary_extension: Option<f64>,
    pub cutoff: Option<f64>,
}

impl MeshSection {
    pub fn options(&self, data_diameter: f64) -> MeshOptions {
        let d = MeshOptions::scaled_to(data_diameter);
        MeshOptions {
            max_edge_interior: self.max_edge_interior.unwrap_or(d.max_edge_interior),
            max_edge_exterior: self.max_edge_exterior.unwrap_or(d.max_edge_exterior),
            boundary_extension: self.boundary_extension.unwrap_or(d.boundary_extension),
            cutoff: self.cutoff.unwrap_or(d.cutoff),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub beta_sd: f64,
    pub tau_shape: f64,
    pub tau_rate: f64,
    /// Upper end of the uniform prior on `phi` as a fraction of the data diameter.
    pub phi_upper_fraction: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        let p = Priors::new(1.0);
        Self { beta_sd: p.beta_sd, tau_shape: p.tau_shape, tau_rate: p.tau_rate, phi_upper_fraction: PHI_UPPER_FRACTION }
    }
}

impl PriorSection {
    pub fn priors(&self, data_diameter: f64) -> Priors {
        Priors {
            beta_sd: self.beta_sd,
            tau_shape: self.tau_shape,
            tau_rate: self.tau_rate,
            phi_upper: self.phi_upper_fraction * data_diameter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    /// Keep node effects for every `z_thin`-th retained draw.
    pub z_thin: usize,
    pub target_accept: f64,
}

impl Default for McmcSection {
    fn default() -> Self {
        let c = McmcConfig::default();
        Self {
            n_iter: c.n_iter,
            burn_in: c.burn_in,
            thin: c.thin,
            n_chains: c.n_chains,
            z_thin: c.z_thin,
            target_accept: c.target_accept,
        }
    }
}

impl McmcSection {
    pub fn config(&self, seed: u64) -> McmcConfig {
        McmcConfig {
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            thin: self.thin,
            n_chains: self.n_chains,
            z_thin: self.z_thin,
            target_accept: self.target_accept,
            seed,
            ..McmcConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariogramSection {
    pub num_bins: usize,
    pub max_lag_fraction: f64,
    pub subsample_above: usize,
    pub subsample_size: usize,
}

impl Default for VariogramSection {
    fn default() -> Self {
        let v = VariogramOptions::default();
        Self {
            num_bins: v.num_bins,
            max_lag_fraction: v.max_lag_fraction,
            subsample_above: v.subsample_above,
            subsample_size: v.subsample_size,
        }
    }
}

impl VariogramSection {
    pub fn options(&self) -> VariogramOptions {
        VariogramOptions {
            num_bins: self.num_bins,
            max_lag_fraction: self.max_lag_fraction,
            subsample_above: self.subsample_above,
            subsample_size: self.subsample_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionSection {
    /// `[lon_min, lat_min, lon_max, lat_max]`
    pub bbox: Option<[f64; 4]>,
    pub resolution: Option<f64>,
    /// CSV of prediction locations, using the data column names.
    pub locations: Option<PathBuf>,
    /// Drop grid points outside the mesh instead of failing.
    pub drop_outside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub write_z: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("censpde-out"), write_z: true }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn input(&self) -> Result<&Path> {
        self.data.input.as_deref().ok_or_else(|| CliError::Config("no input file given".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.mcmc.config(self.seed).validate()?;
        if let Some(r) = self.prediction.resolution {
            if !(r > 0.0 && r.is_finite()) {
                return Err(CliError::Config(format!("prediction resolution must be positive, got {r}")));
            }
        }
        if let Some(b) = self.prediction.bbox {
            if !(b[0] <= b[2] && b[1] <= b[3]) || b.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config(format!("bad bounding box {b:?}")));
            }
        }
        if !(self.priors.phi_upper_fraction > 0.0) {
            return Err(CliError::Config("phi_upper_fraction must be positive".into()));
        }
        Ok(())
    }
}
