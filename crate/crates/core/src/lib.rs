//! Joint estimation of related sparse vector autoregressions.
//!
//! Each of `K` classes (for example stores of one chain) owns a VAR(P) model
//! over the same `J` series. Coefficients are estimated jointly under a
//! fusion penalty that pulls corresponding coefficients of different classes
//! together and a lasso penalty that sets unimportant ones to exactly zero.
//! Error precision matrices get the analogous fused graphical lasso
//! treatment, and the two blocks are estimated by alternation.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what IO, the simulation harness
//! and the CLI use.

pub mod cli;
pub mod error;
pub mod fit;
pub mod io;
pub mod jgl;
pub mod linalg;
pub mod panel;
pub mod penalty;
pub mod report;
pub mod scalar;
pub mod simulation;
pub mod spg;
pub mod tuning;

pub use error::{Error, Result};
pub use fit::{fit_ls, fit_multiclass, fit_singleclass, Estimator, FitOptions, FitResult, Penalties};
pub use jgl::{AdmmOptions, LogDetWeight, PrecisionSet};
pub use panel::{CoefficientSet, MultiClassPanel, PanelSpec, StackedDesign};
pub use penalty::FusionCoupling;
pub use scalar::Scalar;
pub use spg::SpgOptions;
pub use tuning::{GridAxis, RegularizationGrid};

pub type Panel = MultiClassPanel<f64>;
pub type Coefficients = CoefficientSet<f64>;
pub type Precisions = PrecisionSet<f64>;
pub type Fit = FitResult<f64>;
pub type Grid = RegularizationGrid<f64>;
pub type Options = FitOptions<f64>;

pub type Panel32 = MultiClassPanel<f32>;
pub type Coefficients32 = CoefficientSet<f32>;
pub type Precisions32 = PrecisionSet<f32>;
pub type Fit32 = FitResult<f32>;
