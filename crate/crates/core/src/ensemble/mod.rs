//! Grand-canonical and canonical ensembles of the zero-range process in an
//! environment.
//!
//! All functions are pure; nothing here holds mutable state.

mod annealed;
mod canonical;
mod grand;
mod rate;

pub use annealed::{
    annealed_r, annealed_r_derivative_law, annealed_r_law, critical_density, critical_density_law,
    effective_diffusivity, fugacity_phi, fugacity_phi_law, fugacity_sup, harmonic_mean_ftilde, PHI_TOL,
};
pub use canonical::{
    canonical_pmf, canonical_pmf_with, compositions, equivalence_gap, CanonicalDistribution, CanonicalSpec,
    EnumerationCaps, Observable,
};
pub use grand::{
    density_derivative, density_m, expected_rate, partition_z, site_moments, site_pmf, Fugacity, SiteMoments,
    SERIES_MAX_TERMS, SERIES_TOL,
};
pub use rate::{g_factorial, ln_g_factorial, RateFunction, RateKind, RateShape};
