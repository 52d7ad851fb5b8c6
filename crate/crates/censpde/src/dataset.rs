//! CSV ingestion, response transforms and covariate standardization.

use std::path::Path;

use censpde_core::data::CensoredDataset;
use censpde_core::mesh::Point;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::write_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    None,
    /// `log(1 + x)`
    Log1p,
    /// `log(1 + log(1 + x))`
    Iterlog,
}

impl Transform {
    /// `None` when `x` is outside the domain.
    pub fn apply(self, x: f64) -> Option<f64> {
        let v = match self {
            Transform::None => x,
            Transform::Log1p => {
                if x <= -1.0 {
                    return None;
                }
                x.ln_1p()
            }
            Transform::Iterlog => {
                if x <= -1.0 {
                    return None;
                }
                let inner = x.ln_1p();
                if inner <= -1.0 {
                    return None;
                }
                inner.ln_1p()
            }
        };
        v.is_finite().then_some(v)
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::None => "none",
            Transform::Log1p => "log1p",
            Transform::Iterlog => "iterlog",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub lon: String,
    pub lat: String,
    pub value: String,
    /// Column of censoring indicators; absent means nothing is censored.
    pub censored: Option<String>,
    /// Per-row detection limit, required on censored rows.
    pub limit: Option<String>,
    pub covariates: Vec<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            lon: "lon".into(),
            lat: "lat".into(),
            value: "value".into(),
            censored: Some("censored".into()),
            limit: Some("limit".into()),
            covariates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub censored: usize,
    pub censored_fraction: f64,
    /// `[lon_min, lat_min, lon_max, lat_max]`
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    /// Design is `[1, lon, lat, covariates...]` on the raw scale.
    pub data: CensoredDataset,
    pub covariates: Vec<String>,
    pub report: IngestReport,
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::parse(path, 1, format!("column `{name}` not found")))
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" | "y" => Some(true),
        "0" | "false" | "f" | "no" | "n" | "" => Some(false),
        _ => None,
    }
}

pub fn ingest(path: &Path, mapping: &ColumnMapping, transform: Transform) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let lon_c = column(&headers, &mapping.lon, path)?;
    let lat_c = column(&headers, &mapping.lat, path)?;
    let val_c = column(&headers, &mapping.value, path)?;
    let cens_c = mapping.censored.as_deref().map(|c| column(&headers, c, path)).transpose()?;
    let lim_c = mapping.limit.as_deref().map(|c| column(&headers, c, path)).transpose()?;
    let cov_c: Vec<usize> = mapping.covariates.iter().map(|c| column(&headers, c, path)).collect::<Result<_>>()?;
    let p = 3 + cov_c.len();

    let mut locations = Vec::new();
    let mut y = Vec::new();
    let mut censored = Vec::new();
    let mut limits = Vec::new();
    let mut x = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |c: usize| rec.get(c).unwrap_or("");
        let number = |c: usize, what: &str| -> Result<f64> {
            let s = field(c);
            let v: f64 = s
                .parse()
                .map_err(|_| CliError::parse(path, line, format!("{what} `{s}` is not a number")))?;
            if !v.is_finite() {
                return Err(CliError::parse(path, line, format!("{what} is not finite")));
            }
            Ok(v)
        };
        let transformed = |v: f64, what: &str| -> Result<f64> {
            transform.apply(v).ok_or_else(|| {
                CliError::parse(path, line, format!("{what} {v} is outside the domain of the {} transform", transform.name()))
            })
        };
        let lon = number(lon_c, "longitude")?;
        let lat = number(lat_c, "latitude")?;
        let is_cens = match cens_c {
            Some(c) => parse_flag(field(c))
                .ok_or_else(|| CliError::parse(path, line, format!("censoring flag `{}` is not recognized", field(c))))?,
            None => false,
        };
        if is_cens {
            let c = lim_c
                .filter(|&c| !field(c).is_empty())
                .ok_or_else(|| CliError::parse(path, line, "censored row has no detection limit"))?;
            let u = transformed(number(c, "limit")?, "limit")?;
            y.push(u);
            limits.push(u);
        } else {
            y.push(transformed(number(val_c, "value")?, "value")?);
            limits.push(f64::INFINITY);
        }
        censored.push(is_cens);
        locations.push([lon, lat]);
        x.extend([1.0, lon, lat]);
        for &c in &cov_c {
            x.push(number(c, &format!("covariate `{}`", &headers[c]))?);
        }
    }
    if locations.is_empty() {
        return Err(CliError::parse(path, 1, "no data rows"));
    }
    let data = CensoredDataset::new(locations, y, censored, limits, x, p)?;
    let report = report(&data);
    log::info!(
        "{}: {} rows, {} censored ({:.4}), bbox [{}, {}] x [{}, {}]",
        path.display(),
        report.rows,
        report.censored,
        report.censored_fraction,
        report.bbox[0],
        report.bbox[2],
        report.bbox[1],
        report.bbox[3]
    );
    Ok(Ingested { data, covariates: mapping.covariates.clone(), report })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::from_csv(path, e)
}

pub fn report(data: &CensoredDataset) -> IngestReport {
    let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in &data.locations {
        bbox[0] = bbox[0].min(p[0]);
        bbox[1] = bbox[1].min(p[1]);
        bbox[2] = bbox[2].max(p[0]);
        bbox[3] = bbox[3].max(p[1]);
    }
    IngestReport {
        rows: data.len(),
        censored: data.num_censored(),
        censored_fraction: data.censored_fraction(),
        bbox,
    }
}

/// Write `data` in the layout read by [`ingest`] with the default mapping
/// and no transform.
pub fn write_canonical(path: &Path, data: &CensoredDataset, covariates: &[String]) -> Result<()> {
    if data.p != 3 + covariates.len() {
        return Err(CliError::Config(format!(
            "design has {} columns but {} covariate names were given",
            data.p,
            covariates.len()
        )));
    }
    write_csv(path, |w| {
        let mut header = vec!["lon".to_string(), "lat".into(), "value".into(), "censored".into(), "limit".into()];
        header.extend(covariates.iter().cloned());
        w.write_record(&header)?;
        for i in 0..data.len() {
            let mut row = vec![
                data.locations[i][0].to_string(),
                data.locations[i][1].to_string(),
                data.y[i].to_string(),
                u8::from(data.censored[i]).to_string(),
                if data.censored[i] { data.limits[i].to_string() } else { String::new() },
            ];
            row.extend(data.x_row(i)[3..].iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

/// Centering and scaling of every design column except the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Column 0 must be the intercept.
    pub fn fit(x: &[f64], p: usize) -> Result<Self> {
        let n = x.len() / p;
        let mut center = vec![0.0; p];
        let mut scale = vec![1.0; p];
        for j in 1..p {
            let col: Vec<f64> = (0..n).map(|i| x[i * p + j]).collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
            let sd = var.sqrt();
            if !(sd > 1e-12 * m.abs().max(1.0)) {
                return Err(CliError::Config(format!("design column {j} is constant")));
            }
            center[j] = m;
            scale[j] = sd;
        }
        Ok(Self { center, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let p = self.center.len();
        x.iter()
            .enumerate()
            .map(|(k, v)| {
                let j = k % p;
                if j == 0 { *v } else { (v - self.center[j]) / self.scale[j] }
            })
            .collect()
    }

    /// Coefficients of the standardized design mapped to the raw design.
    pub fn beta_to_raw(&self, beta: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = beta.iter().zip(&self.scale).map(|(b, s)| b / s).collect();
        out[0] = beta[0] - (1..beta.len()).map(|j| beta[j] * self.center[j] / self.scale[j]).sum::<f64>();
        out
    }

    pub fn beta_to_standardized(&self, beta: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = beta.iter().zip(&self.scale).map(|(b, s)| b * s).collect();
        out[0] = beta[0] + (1..beta.len()).map(|j| beta[j] * self.center[j]).sum::<f64>();
        out
    }
}

/// Design rows for prediction locations with extra covariate values.
pub fn design_rows(locations: &[Point], covariates: &[Vec<f64>]) -> Vec<f64> {
    let mut x = Vec::with_capacity(locations.len() * 3);
    for (i, p) in locations.iter().enumerate() {
        x.extend([1.0, p[0], p[1]]);
        if let Some(c) = covariates.get(i) {
            x.extend_from_slice(c);
        }
    }
    x
}
