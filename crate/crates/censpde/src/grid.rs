//! Prediction grids and surface output.

use std::path::Path;

use censpde_core::mesh::Point;
use censpde_core::predict::PredictionSurface;

use crate::error::{CliError, Result};
use crate::io::write_atomic;

/// Inclusive lattice over `[lon_min, lat_min, lon_max, lat_max]`, longitude
/// varying fastest.
pub fn lattice(bbox: [f64; 4], resolution: f64) -> Result<Vec<Point>> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(CliError::Config(format!("resolution must be positive, got {resolution}")));
    }
    let steps = |lo: f64, hi: f64| -> Result<usize> {
        let n = ((hi - lo) / resolution + 1e-9).floor();
        if !(n >= 0.0) {
            return Err(CliError::Config(format!("bad bounding box range [{lo}, {hi}]")));
        }
        Ok(n as usize + 1)
    };
    let nx = steps(bbox[0], bbox[2])?;
    let ny = steps(bbox[1], bbox[3])?;
    Ok((0..ny)
        .flat_map(|j| (0..nx).map(move |i| [bbox[0] + i as f64 * resolution, bbox[1] + j as f64 * resolution]))
        .collect())
}

/// Locations (and extra covariate values, in the given column order) from a CSV.
pub fn read_locations(path: &Path, lon: &str, lat: &str, covariates: &[String]) -> Result<(Vec<Point>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::from_csv(path, e))?;
    let headers = rdr.headers().map_err(|e| CliError::from_csv(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::parse(path, 1, format!("column `{name}` not found")))
    };
    let (lon_c, lat_c) = (col(lon)?, col(lat)?);
    let cov_c: Vec<usize> = covariates.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let mut locs = Vec::new();
    let mut covs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::from_csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |c: usize| -> Result<f64> {
            let s = rec.get(c).unwrap_or("");
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::parse(path, line, format!("`{s}` is not a finite number")))
        };
        locs.push([num(lon_c)?, num(lat_c)?]);
        covs.push(cov_c.iter().map(|&c| num(c)).collect::<Result<Vec<f64>>>()?);
    }
    Ok((locs, covs))
}

pub fn write_surface(path: &Path, locations: &[Point], s: &PredictionSurface) -> Result<()> {
    write_atomic(path, |w| {
        let mut wr = csv::Writer::from_writer(w);
        let e = std::io::Error::other;
        wr.write_record(["longitude", "latitude", "mean", "sd", "q025", "q500", "q975", "extrapolation_flag"])
            .map_err(e)?;
        for (i, p) in locations.iter().enumerate() {
            wr.write_record([
                p[0].to_string(),
                p[1].to_string(),
                s.mean[i].to_string(),
                s.sd[i].to_string(),
                s.q025[i].to_string(),
                s.q500[i].to_string(),
                s.q975[i].to_string(),
                u8::from(s.extrapolated[i]).to_string(),
            ])
            .map_err(e)?;
        }
        wr.flush()
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PredictReport {
    pub locations: usize,
    pub dropped_outside: usize,
    pub extrapolated: usize,
    pub draws: usize,
    pub seconds: f64,
    /// Bytes of per-block working storage (noise draws for one block).
    pub block_working_bytes: usize,
}

pub fn write_report(path: &Path, r: &PredictReport) -> Result<()> {
    let text = toml::to_string(r).expect("report serializes");
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}
