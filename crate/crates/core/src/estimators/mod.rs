//! Estimators that check the closed forms independently: exact linear-Gaussian
//! mutual information and Monte Carlo estimates of generalization error and
//! privacy leakage.

mod coefficients;
mod generalization;
mod leakage;
pub mod mc;

pub use coefficients::{
    extract_coefficients, federated_coefficients, federated_sample_weight, gaussian_mi,
    privacy_leakage_conditional, sums_to_one, LinearCoefficientMap, SampleRef,
};
pub use generalization::{
    estimate_gen_mc, estimate_gen_mc_per_round, federated_gaps, MIN_GEN_TRIALS,
};
pub use leakage::{
    privacy_leakage_federated_mc, LeakageEstimate, LeakageMcOptions, MAX_ACTIVE_SETS,
    MAX_COMPONENTS, MIN_LEAKAGE_TRIALS,
};
pub use mc::MCEstimate;
