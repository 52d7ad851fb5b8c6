//! Left-censored point-referenced observations.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mesh::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct CensoredDataset {
    pub locations: Vec<Point>,
    /// Responses; censored rows hold their detection limit.
    pub y: Vec<f64>,
    pub censored: Vec<bool>,
    /// Detection limit per row; `+inf` for observed rows.
    pub limits: Vec<f64>,
    /// Row-major `n x p` design matrix.
    pub x: Vec<f64>,
    pub p: usize,
}

impl CensoredDataset {
    pub fn new(
        locations: Vec<Point>,
        y: Vec<f64>,
        censored: Vec<bool>,
        limits: Vec<f64>,
        x: Vec<f64>,
        p: usize,
    ) -> Result<Self> {
        let n = locations.len();
        if y.len() != n || censored.len() != n || limits.len() != n || x.len() != n * p {
            return Err(Error::InvalidArgument("dataset columns have mismatched lengths".into()));
        }
        if p == 0 {
            return Err(Error::InvalidArgument("design matrix has no columns".into()));
        }
        for i in 0..n {
            if !locations[i][0].is_finite() || !locations[i][1].is_finite() {
                return Err(Error::InvalidArgument(format!("row {i}: non-finite location")));
            }
            if censored[i] && !limits[i].is_finite() {
                return Err(Error::InvalidArgument(format!("row {i}: censored without a finite limit")));
            }
            if !censored[i] && !y[i].is_finite() {
                return Err(Error::InvalidArgument(format!("row {i}: non-finite response")));
            }
            if x[i * p..(i + 1) * p].iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i}: non-finite covariate")));
            }
        }
        Ok(Self { locations, y, censored, limits, x, p })
    }

    /// Dataset with the default design `[1, x, y]` built from the locations.
    pub fn with_coordinate_design(
        locations: Vec<Point>,
        y: Vec<f64>,
        censored: Vec<bool>,
        limits: Vec<f64>,
    ) -> Result<Self> {
        let x = coordinate_design(&locations);
        Self::new(locations, y, censored, limits, x, 3)
    }

    /// Fully observed dataset.
    pub fn uncensored(locations: Vec<Point>, y: Vec<f64>, x: Vec<f64>, p: usize) -> Result<Self> {
        let n = locations.len();
        Self::new(locations, y, alloc::vec![false; n], alloc::vec![f64::INFINITY; n], x, p)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn num_censored(&self) -> usize {
        self.censored.iter().filter(|&&c| c).count()
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.num_censored() as f64 / self.len() as f64
        }
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    /// Keep only the rows selected by `keep`.
    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> Self {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        Self {
            locations: rows.iter().map(|&i| self.locations[i]).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            censored: rows.iter().map(|&i| self.censored[i]).collect(),
            limits: rows.iter().map(|&i| self.limits[i]).collect(),
            x: rows.iter().flat_map(|&i| self.x_row(i).iter().copied()).collect(),
            p: self.p,
        }
    }
}

/// `[1, x, y]` per location, row-major.
pub fn coordinate_design(locations: &[Point]) -> Vec<f64> {
    locations.iter().flat_map(|p| [1.0, p[0], p[1]]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn validates_rows() {
        let locs = vec![[0.0, 0.0], [1.0, 0.0]];
        assert!(CensoredDataset::with_coordinate_design(locs.clone(), vec![1.0, 0.5], vec![false, true], vec![f64::INFINITY, 0.5]).is_ok());
        assert!(CensoredDataset::with_coordinate_design(locs.clone(), vec![1.0, 0.5], vec![false, true], vec![f64::INFINITY, f64::NAN]).is_err());
        assert!(CensoredDataset::with_coordinate_design(locs.clone(), vec![f64::NAN, 0.5], vec![false, false], vec![f64::INFINITY; 2]).is_err());
        assert!(CensoredDataset::with_coordinate_design(locs, vec![1.0], vec![false], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn filter_keeps_rows_in_order() {
        let d = CensoredDataset::with_coordinate_design(
            vec![[0.0, 0.0], [1.0, 2.0], [3.0, 4.0]],
            vec![1.0, 2.0, 3.0],
            vec![false, true, false],
            vec![f64::INFINITY, 2.0, f64::INFINITY],
        )
        .unwrap();
        let f = d.filter(|i| !d.censored[i]);
        assert_eq!(f.y, vec![1.0, 3.0]);
        assert_eq!(f.x, vec![1.0, 0.0, 0.0, 1.0, 3.0, 4.0]);
        assert!((d.censored_fraction() - 1.0 / 3.0).abs() < 1e-15);
    }
}
