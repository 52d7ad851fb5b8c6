#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bessel;
pub mod cholesky;
pub mod data;
pub mod dense;
pub mod error;
pub mod fem;
pub mod math;
pub mod mcmc;
pub mod mesh;
pub mod normal;
pub mod optim;
pub mod predict;
pub mod simulation;
pub mod sparse;
pub mod spde;
pub mod variogram;
