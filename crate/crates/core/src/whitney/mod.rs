//! Whitney boxes, Whitney regions and the corona provider.

mod boxes;
mod corona;
mod regions;

pub use boxes::{whitney_decompose, Facet, WhitneyBox, WhitneyComplex, Window, TAU_MAX};
pub use corona::{corona_provider, distance_ratio, CoronaDecomposition, CoronaSpec, CubeRef, Regime, RegimeSpec};
pub use regions::{build_regions, Region, RegionComplex, RegionParams, RegionReport};
