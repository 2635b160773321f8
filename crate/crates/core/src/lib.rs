//! Unbiased sequential estimation of multinomial probabilities for
//! processes observed until they leave a lattice region.
//!
//! Probability-valued code is generic over [`Probability`]; the aliases
//! below fix the two scalars used in practice: exact rationals and `f64`.

pub mod error;
pub mod estimation;
pub mod formats;
pub mod hull;
pub mod lattice;
pub mod paths;
pub mod region_analysis;
pub mod scalar;
pub mod simulation;
pub mod trial;

pub use error::{Error, Result};
pub use estimation::{
    closed_form_lattice2d, closed_form_nullstep, ml_estimate, unbiased_estimate,
    verify_estimator, verify_unbiasedness, ClosedForm, EstimateReport, StopObservation,
    VerificationReport,
};
pub use hull::{hull_contains, HullMembership, SeparationCertificate};
pub use lattice::{
    boundary_points, enumerate_slice, successors, validate_region, LatticePoint, OutcomeModel,
    Region, RegionSlice, ValidationReport,
};
pub use paths::{
    count_paths, count_paths_with, cycle_count_first_passage, first_passage_pmf, frontier_mass,
    PathCountTable, Retention,
};
pub use region_analysis::{is_closed, is_simple, ClosednessReport, ClosureVerdict, SimplicityReport};
pub use scalar::{Probability, Rational};
pub use simulation::{run_study, sample_path, summarize, SimulationSummary, StudyConfig};
pub use trial::{
    continuation_regions, trial_decision, trial_region, trial_unbiased_estimate, trial_verify,
    Decision, TrialDesign, TrialState,
};

/// Outcome model with exact rational probabilities.
pub type ExactModel = OutcomeModel<Rational>;
/// Outcome model with `f64` probabilities.
pub type FloatModel = OutcomeModel<f64>;
pub type ExactClosedness = ClosednessReport<Rational>;
pub type FloatClosedness = ClosednessReport<f64>;
