//! Constructive IDA-PBC toolkit.
//!
//! Given a control-affine plant and a candidate target structure, the crate
//! checks the structural preconditions and shapeability of the design,
//! constructs the shaped energy function by quadrature along segments to the
//! equilibrium, selects the free gain from the definiteness bound,
//! synthesizes the state feedback, and simulates the closed loop with
//! energy monitoring. The magnetic-levitation example ships fully wired,
//! with closed-form oracles for every stage.
//!
//! All "for all x" conditions are verified numerically on sampled grids;
//! reports state this explicitly.

pub mod controller;
pub mod error;
pub mod field;
pub mod maglev;
pub mod model;
pub mod numerics;
pub mod report;
pub mod shapeability;
pub mod shaping;
pub mod sim;

pub use error::{Error, Result};
pub use field::{Mat, MatrixField, ScalarField, State, VectorField};
pub use model::{
    AffineSystem, CoordinateChange, DomainBox, SampleGrid, TargetStructure, Tolerances,
    ValidationReport,
};
pub use numerics::StepConfig;
pub use report::KvReport;
pub use shapeability::ShapeabilityReport;
pub use shaping::{GainSelection, HessianCertificate, ShapedEnergy};
pub use sim::{SimConfig, Trajectory};
