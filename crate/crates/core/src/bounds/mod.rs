//! Mutual-information generalization bounds.

mod assembly;
mod closed_form;
mod envelope;

pub use assembly::{
    average_bound_reports, gen_bounds_centralized, gen_bounds_distributed, gen_bounds_federated,
    BoundReport, EnvelopePair,
};
pub use closed_form::{
    lemma2_closed_forms, lemma3_closed_forms, lemma4_closed_forms, ClosedFormReport,
};
pub use envelope::{legendre_dual_inverse, subgaussian_envelope, EnvelopeSide, PsiEnvelope};
