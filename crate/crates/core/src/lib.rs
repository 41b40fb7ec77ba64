//! Goodness-of-fit testing for the squared volatility of McKean–Vlasov
//! interacting particle systems observed at high frequency.
//!
//! The numerical core ([`measures`], [`models`], [`simulate`], [`gof`]) is
//! generic over the floating-point type through [`Scalar`]; the `*F64` and
//! `*F32` aliases below fix it. Reference checks ([`oracle`]), file formats
//! ([`io`]) and the Monte Carlo harness ([`experiments`]) work in `f64`.
//!
//! ```
//! use mvgof::{parse_basis, run_test, simulate_particles, ModelSpec, TestMode};
//!
//! let model = ModelSpec::new("state-vol", [("theta", 1.0), ("lambda1", 1.0), ("lambda2", 0.5)])
//!     .build::<f64>()?;
//! let grid = simulate_particles(&model, 200, 100, 1.0, 7)?;
//! let basis = parse_basis("const,x2")?;
//! let report = run_test(&grid, &basis, 0.05, TestMode::Absolute)?;
//! assert!(report.p_value >= 0.0 && report.p_value <= 1.0);
//! # Ok::<(), mvgof::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod gof;
pub mod io;
pub mod json;
pub mod linalg;
pub mod measures;
pub mod models;
pub mod normal;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod simulate;

pub use error::{Error, Result};
pub use experiments::{run_experiment, ks_normal, ExperimentConfig, ExperimentResult};
pub use gof::{
    closed_form_distance, compute_summary, decide, grad_g, grad_relative, relative_distance, run_test,
    GofSummary, TestMode, TestReport,
};
pub use linalg::Matrix;
pub use measures::{wasserstein2, EmpiricalMeasure};
pub use models::{
    build_basis, build_model, parse_basis, BasisAtom, BasisFamily, CatalogAtom, CoefficientModel,
    GaussianLaw, McKeanVlasovModel, ModelSpec,
};
pub use scalar::Scalar;
pub use simulate::{simulate_particles, simulate_streaming, subsample, ObservationGrid};

pub type EmpiricalMeasureF64 = EmpiricalMeasure<f64>;
pub type EmpiricalMeasureF32 = EmpiricalMeasure<f32>;
pub type ObservationGridF64 = ObservationGrid<f64>;
pub type ObservationGridF32 = ObservationGrid<f32>;
pub type BasisFamilyF64 = BasisFamily<f64>;
pub type BasisFamilyF32 = BasisFamily<f32>;
pub type CoefficientModelF64 = CoefficientModel<f64>;
pub type CoefficientModelF32 = CoefficientModel<f32>;
pub type GofSummaryF64 = GofSummary<f64>;
pub type GofSummaryF32 = GofSummary<f32>;
pub type MatrixF64 = Matrix<f64>;
pub type MatrixF32 = Matrix<f32>;
