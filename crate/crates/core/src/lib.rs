//! Core linear-algebra machinery for two-to-infinity norm perturbation
//! analysis: norms, subspace geometry, Procrustes alignment, the exact
//! decomposition of aligned frame differences, bound evaluators, and seeded
//! random models.

pub mod bounds;
pub mod decomposition;
pub mod error;
pub mod matrix;
pub mod models;
pub mod procrustes;
pub mod subspace;

pub use bounds::{
    bound_baseline, bound_entrywise_symmetric, bound_low_rank, bound_uniform_rect,
    bound_uniform_rect_auto, covariance_rhs, davis_kahan, davis_kahan_sin_theta, weyl_slack,
    BoundReport,
};
pub use decomposition::{
    decompose, decompose_with_transforms, reconstruction_error, term_norms, write_terms_csv,
    DecompositionTerms, PerturbationInstance, Side, TermNorms, Variant,
};
pub use error::{Error, Result};
pub use matrix::{
    frobenius_norm, matrix_norm, max_norm, numerical_rank, spectral_norm, svd, sym_eigen,
    top_singular_triplets, top_sym_eigenpairs, truncate, two_to_inf_norm, DenseMatrix, EigenOrder,
    NormKind, SvdFactors, SymEigen,
};
pub use models::{
    gen_gaussian_noise, gen_low_rank, gen_rho_sbm_pair, gen_spiked_covariance, omnibus_instance,
    sample_empirical_covariance, CovarianceModel, OmnibusPair, SbmModel, SeededStream,
};
pub use procrustes::{
    align, align_bruteforce, residual_sandwich, spectral_residual_bounds, two_to_inf_lower_chain,
    AlignmentResult,
};
pub use subspace::{
    canonical_angles, coherence, principal_cosines, random_orthonormal, sin_theta_norms,
    CanonicalAngles, OrthonormalFrame,
};
