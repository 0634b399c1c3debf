//! Geometric normalization: similarity transform, thin-plate-spline
//! deformation, differentiable resampling, and ridge-period based scaling.

mod affine;
pub(crate) mod linalg;
mod ridge;
mod tps;
mod warp;

pub use affine::{affine_matrix, image_center, normalize_angle, AffineParams};
pub use ridge::{
    estimate_ridge_period, scale_to_500ppi, BlockPeriod, PeriodEstimate, DEFAULT_PERIOD_BLOCK,
    DEFAULT_TARGET_PERIOD, MAX_PERIOD, MIN_PERIOD, MIN_VALID_FRACTION,
};
pub(crate) use ridge::{dominant_period, x_signature};
pub use tps::{tps_flow, FlowGrid, TpsBasis, TpsField, DEFAULT_GRID, LATTICE_INSET};
pub use warp::{
    warp_image, warp_objective, warp_param_gradients, warp_source_coords, WarpGradients, WarpParams,
};
