//! Point-wise curvature, global curvature bound profiles and their smoothings.

pub mod checks;
pub mod geometry;
pub mod profile;
pub mod smoothing;

pub use geometry::{MetricKind, NormKind};
pub use profile::{
    gcb_estimate, holder_kappa_envelope, pointwise_delta, CurvatureProfile, GcbOptions, KappaForm,
    Provenance, SampleMeta, SamplingRegion,
};
pub use smoothing::{
    holder_sigma_coefficient, holder_sigma_envelope, sigma_hat, sigma_hat_inverse, sigma_hat_prime,
    HolderSigma, HolderSum, ProfileSigma, SigmaFunction, SigmaInverse, SmoothedCurvature,
};
