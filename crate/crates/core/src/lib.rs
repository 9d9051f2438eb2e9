//! Tests for independence of two high-dimensional Gaussian sub-vectors.
//!
//! The null hypothesis is a block-diagonal covariance matrix. Test
//! statistics are linear spectral statistics of the Fisher matrix
//! `W T^{-1}` built from the partitioned sample covariance; their null
//! calibrations come from random matrix theory and stay valid when the
//! block dimensions grow proportionally with the sample size.
//!
//! Modules:
//!
//! * [`model`] — dimensions, ratios, data containers;
//! * [`calibration`] — closed-form null means, variances and centerings;
//! * [`spectral`] — the limiting Fisher spectral law and quadrature;
//! * [`statistics`] — sample covariance, eigenvalues, the statistic
//!   registry, decisions and Monte Carlo critical values;
//! * [`stieltjes`] — the alternative-hypothesis spectral machinery;
//! * [`simulate`] — scenario generators and the Monte Carlo engine;
//! * [`output`] — plot-ready CSV/JSON serialization of results.

pub mod calibration;
pub mod error;
pub mod model;
pub mod output;
pub mod quadrature;
pub mod simulate;
pub mod spectral;
pub mod statistics;
pub mod stieltjes;

pub use error::{Error, Result};
pub use model::{DataMatrix, Dims, MeanMode, PartitionedCov, RatioSet, StatisticId, TestOutcome};
