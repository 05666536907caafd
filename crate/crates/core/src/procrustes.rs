//! Frobenius-optimal orthogonal Procrustes alignment and the geometric
//! residual lemmas that sandwich it.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{
    frobenius_norm, numerical_rank, spectral_norm, svd, two_to_inf_norm, DenseMatrix,
};
use crate::subspace::{sin_theta_norms, OrthonormalFrame};

/// Result of aligning `Uhat` to `U` over the orthogonal group.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// The Procrustes solution `W = W1 W2^T` from the SVD of `U^T Uhat`.
    pub w: DenseMatrix,
    /// The Gram matrix `U^T Uhat`.
    pub gram: DenseMatrix,
    pub residual_frobenius: f64,
    pub residual_spectral: f64,
    pub residual_two_to_inf: f64,
    /// Set when `U^T Uhat` is numerically singular; the minimizer is then not
    /// unique, though the returned `w` is still a valid one.
    pub non_unique: bool,
}

fn check_same_dims(u: &OrthonormalFrame, uhat: &OrthonormalFrame) -> Result<()> {
    if u.ambient_dim() != uhat.ambient_dim() || u.frame_dim() != uhat.frame_dim() {
        return Err(Error::DimensionMismatch {
            context: "alignment requires frames of identical shape",
            expected: format!("{}x{}", u.ambient_dim(), u.frame_dim()),
            found: format!("{}x{}", uhat.ambient_dim(), uhat.frame_dim()),
        });
    }
    Ok(())
}

fn result_from_w(
    u: &OrthonormalFrame,
    uhat: &OrthonormalFrame,
    gram: DenseMatrix,
    w: DMatrix<f64>,
    non_unique: bool,
) -> Result<AlignmentResult> {
    let diff = uhat.as_dmatrix() - u.as_dmatrix() * &w;
    Ok(AlignmentResult {
        w: DenseMatrix::from_dmatrix(w)?,
        gram,
        residual_frobenius: frobenius_norm(&diff),
        residual_spectral: spectral_norm(&diff),
        residual_two_to_inf: two_to_inf_norm(&diff),
        non_unique,
    })
}

/// Solves `min_W |Uhat - U W|_F` over orthogonal `W` via the SVD of the Gram
/// matrix `U^T Uhat = W1 S W2^T`, returning `W = W1 W2^T`.
pub fn align(u: &OrthonormalFrame, uhat: &OrthonormalFrame) -> Result<AlignmentResult> {
    check_same_dims(u, uhat)?;
    let gram = DenseMatrix::from_dmatrix(u.as_dmatrix().transpose() * uhat.as_dmatrix())?;
    let f = svd(&gram)?;
    let w = f.left.as_dmatrix() * f.right.as_dmatrix().transpose();
    let non_unique = numerical_rank(&f.singular_values) < gram.rows();
    result_from_w(u, uhat, gram, w, non_unique)
}

/// Exhaustive-search oracle for `r <= 2`: scans rotations on an angle grid and
/// reflections, returning the Frobenius-minimizing candidate. Independent of
/// the SVD route in [`align`].
pub fn align_bruteforce(
    u: &OrthonormalFrame,
    uhat: &OrthonormalFrame,
    grid_size: usize,
) -> Result<AlignmentResult> {
    check_same_dims(u, uhat)?;
    let r = u.frame_dim();
    let gram = DenseMatrix::from_dmatrix(u.as_dmatrix().transpose() * uhat.as_dmatrix())?;
    let g = gram.as_dmatrix();
    let best = match r {
        1 => {
            // Two-point search over {-1, +1}.
            if g[(0, 0)] >= 0.0 {
                DMatrix::from_element(1, 1, 1.0)
            } else {
                DMatrix::from_element(1, 1, -1.0)
            }
        }
        2 => {
            if grid_size == 0 {
                return Err(Error::InvalidArgument("grid_size must be >= 1".into()));
            }
            // |Uhat - U R|_F^2 = 2r - 2 tr(R^T G): maximize the trace term.
            let mut best_w = DMatrix::identity(2, 2);
            let mut best_trace = f64::NEG_INFINITY;
            for k in 0..grid_size {
                let theta = std::f64::consts::TAU * (k as f64) / (grid_size as f64);
                let (s, c) = theta.sin_cos();
                // Rotation [[c, -s], [s, c]].
                let trace_rot = c * (g[(0, 0)] + g[(1, 1)]) + s * (g[(1, 0)] - g[(0, 1)]);
                if trace_rot > best_trace {
                    best_trace = trace_rot;
                    best_w = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
                }
                // Reflection [[c, s], [s, -c]].
                let trace_ref = c * (g[(0, 0)] - g[(1, 1)]) + s * (g[(1, 0)] + g[(0, 1)]);
                if trace_ref > best_trace {
                    best_trace = trace_ref;
                    best_w = DMatrix::from_row_slice(2, 2, &[c, s, s, -c]);
                }
            }
            best_w
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "brute-force alignment supports r <= 2, got r = {r}"
            )))
        }
    };
    result_from_w(u, uhat, gram, best, false)
}

/// The geometric sandwich
/// `1/2 |sin Theta|_2^2 <= |U^T Uhat - W|_2 <= |sin Theta|_2^2`.
pub fn residual_sandwich(
    u: &OrthonormalFrame,
    uhat: &OrthonormalFrame,
) -> Result<(f64, f64, f64)> {
    let alignment = align(u, uhat)?;
    let (sin_spec, _) = sin_theta_norms(u, uhat)?;
    let mid = spectral_norm(&(alignment.gram.as_dmatrix() - alignment.w.as_dmatrix()));
    let sq = sin_spec * sin_spec;
    Ok((0.5 * sq, mid, sq))
}

/// The spectral chain
/// `|sin Theta|_2 <= |Uhat - U W|_2 <= min{1 + |sin Theta|_2, sqrt(2)} |sin Theta|_2`.
pub fn spectral_residual_bounds(
    u: &OrthonormalFrame,
    uhat: &OrthonormalFrame,
) -> Result<(f64, f64, f64)> {
    let alignment = align(u, uhat)?;
    let (sin_spec, _) = sin_theta_norms(u, uhat)?;
    let upper = (1.0 + sin_spec).min(std::f64::consts::SQRT_2) * sin_spec;
    Ok((sin_spec, alignment.residual_spectral, upper))
}

/// Lower bound `(1 / sqrt(p)) |sin Theta|_2 <= |Uhat - U W|_{2->inf}` used by
/// the recovery experiment; returns `(lower, residual_two_to_inf)`.
pub fn two_to_inf_lower_chain(
    u: &OrthonormalFrame,
    uhat: &OrthonormalFrame,
) -> Result<(f64, f64)> {
    let alignment = align(u, uhat)?;
    let (sin_spec, _) = sin_theta_norms(u, uhat)?;
    Ok((
        sin_spec / (u.ambient_dim() as f64).sqrt(),
        alignment.residual_two_to_inf,
    ))
}
