//! Distance covariance independence tests for pairs of random fields
//! observed on lattices or at random locations.
//!
//! The crate covers the whole pipeline: discretized L2 norms, distance
//! matrices, sample distance covariance/correlation (V- and U-statistics),
//! field simulators, a bootstrap independence test, a Monte Carlo size and
//! power harness, and a station-data pipeline.

pub mod bootstrap;
pub mod dcov;
pub mod distance;
pub mod domain;
pub mod error;
pub mod fields;
pub mod montecarlo;
pub mod norms;
pub mod stations;
pub mod stats;

pub use dcov::{empirical_h2, population_dcov_mc, sample_dcov, un_statistic, ustat_dcov, CenteredKernelMatrix, DcovResult, McEstimate};
pub use bootstrap::{bootstrap_test, bootstrap_test_dcor, bootstrap_test_un, Resampling, TestConfig, TestResult, TestVariant};
pub use distance::distance_matrix;
pub use domain::{
    CellAverageSpec, DcovParams, DiscretizationScheme, DistanceMatrix, FieldRealization, LatticeSpec, LocationSet,
    PairedSample,
};
pub use error::{Error, Result};
