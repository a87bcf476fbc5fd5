//! Synthesis and analysis of per-sensor privacy mappings for decentralized
//! binary detection. A fusion center must detect a public hypothesis while a
//! private hypothesis, known only up to a contamination neighborhood, stays
//! near-undetectable. The crate provides the model layer, the most-favorable
//! contaminated pair, privacy-utility bounds, the alternating mapping
//! optimizer, error-exponent design, and calibrated baselines.

pub mod asymptotic;
pub mod baselines;
pub mod bounds;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod lp;
pub mod model;
pub mod pbpo;
pub mod uncertainty;

pub use dist::{
    bayes_error, likelihood_ratio_profile, min_avg_type12_error, mutual_information,
    total_variation, ConditionalTable, DiscreteDistribution, LikelihoodRatioProfile, CMP_TOL,
    NORM_TOL,
};
pub use error::{Error, Result};
pub use model::{
    generate_model, push_forward, read_mapping, read_model, write_mapping, write_model,
    FusionBundle, JointModel, ModelGenConfig, StochasticMapping, TensorModel,
};
