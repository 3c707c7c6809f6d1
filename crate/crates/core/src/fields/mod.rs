//! Random-field simulators and random observation locations.

mod dependence;
pub mod dump;
mod gaussian;
mod locations;
pub mod rng;
mod sheet;
mod stable;

pub use dependence::{make_dependent_pair, DependenceFamily, DependenceSpec};
pub use gaussian::{
    levy_fbf_covariance, simulate_fbs_at_points, simulate_fbs_lattice, simulate_levy_fbf, FbsParams,
    GaussianFieldSampler, MAX_DENSE_SITES,
};
pub use locations::sample_poisson_locations;
pub use rng::{Purpose, RngStream, StreamId};
pub use sheet::{
    simulate_increment_sheet_lattice, simulate_sheet_at_points, simulate_stable_sheet_at_points,
    IrregularGrid, SheetFamily,
};
pub use stable::{sample_stable, StableParams};
