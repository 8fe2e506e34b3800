//! Mixed-effects smoothing spline ANOVA for daily activity curves.
//!
//! Fits `y = η(t, g) + b_s + ε` where `η` decomposes into a constant, a
//! smooth time effect, a group effect and a time-by-group interaction, each
//! a penalized reproducing-kernel term, with subject random intercepts `b_s`.
//! Smoothing parameters are chosen by GCV or GML; Bayesian confidence bands
//! are available for every component, for predictions and for group
//! differences.
//!
//! ```no_run
//! use ssanova::{data, fit, inference, ModelSpec};
//!
//! let (table, _) = data::read_csv("activity.csv".as_ref(), &data::SchemaConfig::default())?;
//! let model = fit(&table, &ModelSpec::time_by_group("group", &[], true))?;
//! let grid = inference::daily_grid(1.0);
//! let delta = inference::difference_curve(&model, "group", "rational", "congruent", &grid, 0.95)?;
//! let regions = inference::significant_regions(&delta);
//! # Ok::<(), ssanova::Error>(())
//! ```

pub mod data;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod model;
pub mod persist;
pub mod solver;

pub use error::{Error, Result, SpecError};
pub use inference::{CurveEstimate, Region, RegionSet};
pub use model::{
    validate_spec, Criterion, FactorDef, KnotCount, ModelPlan, ModelSpec, Observation, ObservationTable,
    ResponseTransform, TermKind, TermSpec,
};
pub use solver::{fit, FittedModel};
