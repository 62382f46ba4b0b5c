//! Numerical laboratory for the Ricci-DeTurck flow of rough, almost-continuous
//! metrics on the flat torus.
//!
//! The crate is organised around a periodic structured grid: [`grid`] and
//! [`field`] provide the containers, [`calculus`] the fourth-order finite
//! difference tensor calculus with respect to a fixed background metric,
//! [`flow`] the evolution engine, [`deturck`] the pullback to a related Ricci
//! flow, [`curvature`] smooth and distributional scalar curvature, and
//! [`conjugate`] the conjugate heat equation used to test scalar curvature
//! lower bounds. [`harness`] measures the localized Sobolev energies and rate
//! fits that the whole construction is judged by.

pub mod background;
pub mod calculus;
pub mod conjugate;
pub mod curvature;
pub mod deturck;
pub mod error;
pub mod fft;
pub mod field;
pub mod flow;
pub mod grid;
pub mod harness;
pub mod initial_data;
pub mod interp;
pub mod linalg;
pub mod reduce;
pub mod report;
pub mod stencil;

pub use background::BackgroundMetric;
pub use error::{CoreError, Result};
pub use field::{MetricField, ScalarField, TensorField, Variance, VectorField};
pub use flow::{FlowState, FlowTrajectory, Scheme};
pub use grid::TorusGrid;
pub use report::NormReport;
