//! Robust ellipse fitting with a variable-center Laplacian correntropy
//! criterion.
//!
//! The pipeline alternates a weighted-L1 conic program (solved by the
//! in-crate [`solver`]) with closed-form kernel center and bandwidth
//! updates ([`kernel`]). [`coupled`] extends it to two concentric,
//! co-rotated ellipses, and [`bench`] reproduces the synthetic Monte-Carlo
//! campaigns.

pub mod accurate;
pub mod bench;
pub mod conic;
pub mod coupled;
pub mod error;
pub mod kernel;
pub mod mcc;
pub mod solver;

pub use conic::{
    conic_to_geometry, design_row, geometry_to_conic, residuals, sample_ellipse, ConicVector, EllipseGeometry,
    Normalization, PointSet,
};
pub use coupled::{associate, fit_coupled, AssociationResult, CoupledConic, CoupledFit, CoupledGeometry};
pub use error::{Error, Result};
pub use kernel::{estimate_bandwidth, estimate_center, estimate_center_lp, KernelParams};
pub use mcc::{fit_baseline_ls, fit_single, FailureRule, FitConfig, FitReport};
