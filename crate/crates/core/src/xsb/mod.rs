//! Discrete `X_{s,b}` norms and the multilinear estimate ratios.

use thiserror::Error;

pub mod continuum;
mod lattice;
mod linear;
pub mod scan;

pub use lattice::{
    asym_bilinear_ratio, bilinear_ratio, block_cell_count, block_concentrated_field, product, product_physical,
    spacetime_spectrum, trilinear_ratio, xsb_norm, Segment, SpaceTimeField, DEFAULT_PAD,
};

pub use continuum::{cell_asym_ratio, cell_bilinear_ratio, cell_product, cell_trilinear_ratio, CellField};
pub use scan::{ratio_scaling_scan, EstimateKind, ScanEnsemble, ScanResolution, ScanRow, ScanTable, SlopeFit};

pub use linear::{verify_linear_estimates, verify_linear_estimates_with, DataEnsemble, LinearEstimateOptions, LinearEstimateReport, LinearEstimateRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum XsbError {
    #[error("time lattice is not uniform")]
    NonUniform,
    #[error("trajectory has {0} samples, need at least 2")]
    TooShort(usize),
    #[error("ratio undefined: an input has zero norm")]
    ZeroDenominator,
    #[error("operands live on different space-time lattices")]
    LatticeMismatch,
    #[error("block has no lattice cells")]
    EmptySupport,
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}
