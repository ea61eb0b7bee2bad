//! End-to-end pipelines for the imaging, finance and shallow-water
//! experiments. Each returns its numbers; writing them out is the runner's
//! job.

mod finance;
mod imaging;
mod swe;

pub use finance::{finance_returns, finance_seed, FinanceFit, FinanceSeedResult};
pub use imaging::{imaging_data, imaging_sweep, ImagingData, ImagingMaps, ImagingRow, ImagingSweep};
pub use swe::{swe_datasets, swe_inverse, SweDatasets, SweInverseResult, SweMaps};
