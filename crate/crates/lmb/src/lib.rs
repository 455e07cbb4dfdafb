//! Multi-sensor multi-object tracking with labelled multi-Bernoulli (LMB)
//! filters.
//!
//! The crate provides the building blocks of a multi-sensor LMB tracker:
//!
//! - [`gaussian`]: closed-form linear-Gaussian algebra (predict, update,
//!   information-form powers/products, moment matching, Hellinger distance);
//! - [`density`]: the labelled multi-Bernoulli density, prediction,
//!   cardinality, pruning, and MAP state extraction;
//! - [`lbp`]: single-sensor measurement updates with loopy-belief-propagation
//!   data association;
//! - [`oracle`]: exact association enumeration and the moment-matched
//!   posterior, for validating the approximate update at small scale;
//! - [`fusion`]: parallel multi-sensor merges (parallel-update and
//!   geometric-average) plus the sequential iterated-corrector baseline;
//! - [`sim`]: scenario configuration, ground-truth and measurement
//!   simulation;
//! - [`metrics`]: OSPA-based evaluation of position and uncertainty
//!   estimates.

pub mod density;
pub mod error;
pub mod fusion;
pub mod gaussian;
pub mod lbp;
pub mod metrics;
pub mod oracle;
pub mod sim;

pub use density::{
    cardinality_distribution, extract_state, predict, prune, BirthModel, Label, LmbDensity,
    MotionModel, Track,
};
pub use error::{Error, Result};
pub use fusion::{
    equal_weights, ga_merge, ic_update, pu_merge, FusionConfig, PuMergeResult, Strategy,
};
pub use gaussian::{
    hellinger_distance, power_product, predict_gaussian, update_gaussian, weak_marginal, Gaussian,
    GaussianMixture, LinearGaussianMap,
};
pub use lbp::{lbp_update, CollapseMode, LbpConfig, SensorModel};
pub use metrics::{euclidean_ospa, hellinger_ospa, optimal_reference, ospa, OspaParams};
pub use sim::{
    generate_all_measurements, generate_measurements, generate_truth, BirthSite, GroundTruth,
    Region, Scenario, SensorData, SensorSpec,
};
