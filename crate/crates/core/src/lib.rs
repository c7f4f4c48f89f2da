//! Dielectric loss extraction for superconducting resonators.
//!
//! Measured TLS-limited quality factors of several resonator geometries are
//! combined with their simulated participation ratios to solve for one loss
//! factor per dielectric region (metal–substrate, substrate–air, metal–air,
//! bulk substrate). The crate provides:
//!
//! - [`model`]: region and device types, the forward loss model and the
//!   loss-factor / loss-tangent conversions;
//! - [`solver`]: nonnegative least squares and condition-number diagnostics;
//! - [`uncertainty`]: measurement summaries, Monte Carlo extraction with 95%
//!   intervals and predicted-Q intervals;
//! - [`design`]: minimum condition-number device-set search;
//! - [`simexp`]: simulated measurement campaigns that size the number of
//!   devices needed for a resolved extraction;
//! - [`io`]: dataset files and reports.

pub mod design;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod model;
pub mod rng;
pub mod simexp;
pub mod solver;
pub mod stats;
pub mod uncertainty;

pub use error::{Error, Result};
pub use model::{
    decompose_losses, inverse_q_forward, loss_factor_from_tangent, q_tls_forward, q_tls_from_power_sweep,
    tangent_from_loss_factor, DeviceGeometry, EtchStyle, LossBasis, LossVector, ParticipationMatrix, QtlsDistribution,
    RegionKind, RegionSpec,
};
pub use solver::{condition_number, least_squares, nnls_solve, ConditionReport, LinearSystem, NnlsSolution};
pub use uncertainty::{extract_mc, extract_mc_with, predict_q_mc, summarize, ExtractionResult, McOptions, MeasurementSet, SamplingSpace};
