//! Enclosure-method probing of a conductivity inclusion with shell-type
//! initial heat data.
//!
//! The pipeline: a free-space heat field started from a datum supported on
//! a spherical shell around the body produces an explicit boundary flux;
//! boundary temperatures, Laplace transformed in time, feed an indicator
//! whose exponential rate in `sqrt(tau)` yields the radius of the smallest
//! sphere centered at the probe point that encloses the inclusion.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod potentials;
pub mod quadrature;
pub mod heatsolver;
pub mod indicator;
pub mod shellflux;
pub mod thermo;

pub use geometry::{
    boundary_mesh, enclosing_radius, validate_shell, AxisBox, BallShape, BodySpec, BoundaryMesh, BoundaryNode,
    GeometryError, InclusionSpec, Point, Shape, ShellSource,
};
pub use potentials::{PotentialError, SpectralParam, W00};
pub use shellflux::{
    flux_on_boundary, laplace_boundary, shell_heat_value, BoundarySeries, FluxError, FluxRecord, SeriesKind, TimeGrid,
};
pub use heatsolver::{
    solve_helmholtz_perturbation, solve_modified_helmholtz, Grid, MediumField, SolverConfig, SolverError,
};
pub use indicator::{
    extract_radius, tau_sweep, time_window_test, Estimator, FitModel, FitOptions, IndicatorError, IndicatorSeries,
    JumpClass, PathSpec, ProbeConfig, RadiusEstimate, SolverMode, TimeDomainRun, WindowChoice, WindowClass,
};
pub use thermo::{ElasticParams, ShellElasticSource, ThermoError, TouchingBallGeom};
