//! Second-order (two-photon) interference from two independent
//! pseudo-thermal point sources.
//!
//! The closed-form correlation functions live in [`analytic`], the Monte
//! Carlo speckle engine that cross-checks them in [`speckle`], and the scan
//! driver and fringe analysis in [`scan`] and [`fringes`].

pub mod analytic;
pub mod cli;
pub mod config;
pub mod fringes;
pub mod geometry;
pub mod output;
pub mod scan;
pub mod speckle;
pub mod verify;

pub use geometry::{ExperimentConfig, Polarization, ScanMode, ScanPlan, SourceGeometry, Spot};
