//! Divide-and-recombine likelihood modeling.
//!
//! Big datasets are split into subsets, MCMC draws are taken from each subset
//! likelihood, a parametric likelihood model (normal or skew-normal) is fitted
//! to the draws by moment matching, and the fitted densities are recombined
//! into an all-data approximate likelihood with a point estimate and
//! covariance. The contour-probability diagnostic quantifies how close an
//! approximate unnormalized density is to a reference one.
//!
//! This crate is `no_std` (alloc required); IO, file formats, and the
//! experiment harness live in the companion `dnr-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cpa;
pub mod datamodels;
pub mod mcmc;
pub mod numkit;
pub mod random;
pub mod recombine;
pub mod skewnormal;
