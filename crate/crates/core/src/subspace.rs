//! Orthonormal frames, canonical angles, sin-theta distances, and coherence.

use std::ops::Deref;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{max_norm, orthonormalize, spectral_norm, DenseMatrix, ORTHO_TOL};
use crate::models::SeededStream;

/// A `p x r` matrix with orthonormal columns (a Stiefel matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalFrame {
    matrix: DenseMatrix,
}

impl OrthonormalFrame {
    /// Validates `|Q^T Q - I|_max <= 1e-10` and wraps the frame.
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        let (p, r) = (matrix.rows(), matrix.cols());
        if r > p {
            return Err(Error::InvalidArgument(format!(
                "frame dimension {r} exceeds ambient dimension {p}"
            )));
        }
        let gram = matrix.as_dmatrix().transpose() * matrix.as_dmatrix();
        let dev = max_norm(&(gram - DMatrix::identity(r, r)));
        if dev > ORTHO_TOL {
            return Err(Error::InvalidArgument(format!(
                "columns not orthonormal: |Q^T Q - I|_max = {dev:.3e} > {ORTHO_TOL:.0e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// Ambient dimension `p`.
    pub fn ambient_dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Frame dimension `r`.
    pub fn frame_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        self.matrix.as_dmatrix()
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// `M - Q (Q^T M)`, the projection of `M` onto the orthogonal complement
    /// of the frame's column space.
    pub fn project_complement(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m - self.as_dmatrix() * (self.as_dmatrix().transpose() * m)
    }

    /// `Q (Q^T M)`, the projection of `M` onto the frame's column space.
    pub fn project_onto(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.as_dmatrix() * (self.as_dmatrix().transpose() * m)
    }
}

impl Deref for OrthonormalFrame {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &Self::Target {
        self.matrix.as_dmatrix()
    }
}

/// Canonical angles between two frames, in radians, non-decreasing in [0, pi/2].
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalAngles {
    angles: Vec<f64>,
}

impl CanonicalAngles {
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// `max_i sin(theta_i)`.
    pub fn sin_spectral(&self) -> f64 {
        self.angles
            .iter()
            .fold(0.0f64, |m, &t| m.max(t.sin()))
    }

    /// `sqrt(sum_i sin^2(theta_i))`.
    pub fn sin_frobenius(&self) -> f64 {
        self.angles
            .iter()
            .map(|&t| {
                let s = t.sin();
                s * s
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn check_same_dims(u: &OrthonormalFrame, uhat: &OrthonormalFrame) -> Result<()> {
    if u.ambient_dim() != uhat.ambient_dim() || u.frame_dim() != uhat.frame_dim() {
        return Err(Error::DimensionMismatch {
            context: "frames must share ambient and frame dimensions",
            expected: format!("{}x{}", u.ambient_dim(), u.frame_dim()),
            found: format!("{}x{}", uhat.ambient_dim(), uhat.frame_dim()),
        });
    }
    Ok(())
}

/// Singular values of `U^T Uhat`, non-increasing, clamped into [0, 1].
pub fn principal_cosines(u: &OrthonormalFrame, uhat: &OrthonormalFrame) -> Result<Vec<f64>> {
    check_same_dims(u, uhat)?;
    let gram = DenseMatrix::from_dmatrix(u.as_dmatrix().transpose() * uhat.as_dmatrix())?;
    let f = crate::matrix::svd(&gram)?;
    Ok(f.singular_values
        .iter()
        .map(|&s| s.clamp(0.0, 1.0))
        .collect())
}

/// Canonical angles `theta_i = arccos(sigma_i(U^T Uhat))`.
pub fn canonical_angles(u: &OrthonormalFrame, uhat: &OrthonormalFrame) -> Result<CanonicalAngles> {
    let angles = principal_cosines(u, uhat)?
        .into_iter()
        .map(|c| c.acos())
        .collect();
    Ok(CanonicalAngles { angles })
}

/// `(|sin Theta|_2, |sin Theta|_F)`, cross-checked against the
/// complement-projection route `|(I - U U^T) Uhat Uhat^T|_2`.
pub fn sin_theta_norms(u: &OrthonormalFrame, uhat: &OrthonormalFrame) -> Result<(f64, f64)> {
    check_same_dims(u, uhat)?;
    // Singular values of (I - U U^T) Uhat are exactly sin(theta_i); this
    // route keeps full precision for near-zero angles, where the
    // arccos-of-cosines route loses half the significant digits.
    let proj = u.project_complement(uhat.as_dmatrix());
    let spectral = spectral_norm(&proj).min(1.0);
    let frobenius = proj.norm();
    let angles = canonical_angles(u, uhat)?;
    debug_assert!(
        (spectral - angles.sin_spectral()).abs() <= 1e-6,
        "sin-theta routes disagree: {spectral} vs {}",
        angles.sin_spectral()
    );
    Ok((spectral, frobenius))
}

/// Coherence `mu(U) = (p/r) |U|_{2->inf}^2`, always in `[1, p/r]`.
pub fn coherence(u: &OrthonormalFrame) -> f64 {
    let p = u.ambient_dim() as f64;
    let r = u.frame_dim() as f64;
    let tti = crate::matrix::two_to_inf_norm(u.as_dmatrix());
    (p / r) * tti * tti
}

/// A uniformly random frame: orthonormalized i.i.d. standard normals.
pub fn random_orthonormal(p: usize, r: usize, stream: &mut SeededStream) -> Result<OrthonormalFrame> {
    if r > p || r == 0 || p == 0 {
        return Err(Error::InvalidArgument(format!(
            "invalid frame dimensions p={p}, r={r}"
        )));
    }
    let g = DMatrix::from_fn(p, r, |_, _| stream.normal());
    let mut q = orthonormalize(&g);
    // One re-orthogonalization pass keeps the frame invariant at 1e-10 even
    // for unlucky draws.
    q = orthonormalize(&q);
    OrthonormalFrame::new(DenseMatrix::from_dmatrix(q)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn frame(p: usize, r: usize, data: &[f64]) -> OrthonormalFrame {
        OrthonormalFrame::new(DenseMatrix::from_row_slice(p, r, data).unwrap()).unwrap()
    }

    #[test]
    fn identical_frames_have_zero_angles() {
        let mut s = SeededStream::new(1);
        let u = random_orthonormal(6, 2, &mut s).unwrap();
        let angles = canonical_angles(&u, &u).unwrap();
        for &t in angles.angles() {
            assert_abs_diff_eq!(t, 0.0, epsilon = 1e-7);
        }
        let (sp, fr) = sin_theta_norms(&u, &u).unwrap();
        assert_abs_diff_eq!(sp, 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(fr, 0.0, epsilon = 1e-7);
    }

    #[test]
    fn orthogonal_spans_give_right_angle() {
        let u = frame(2, 1, &[1.0, 0.0]);
        let uhat = frame(2, 1, &[0.0, 1.0]);
        let angles = canonical_angles(&u, &uhat).unwrap();
        assert_abs_diff_eq!(angles.angles()[0], std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn planted_angle_recovered() {
        let theta = 0.3f64;
        let u = frame(2, 1, &[1.0, 0.0]);
        let uhat = frame(2, 1, &[theta.cos(), theta.sin()]);
        // Direct oracle: arccos |u^T uhat|.
        let direct = (u.as_dmatrix().column(0).dot(&uhat.as_dmatrix().column(0)))
            .abs()
            .acos();
        let angles = canonical_angles(&u, &uhat).unwrap();
        assert_abs_diff_eq!(angles.angles()[0], theta, epsilon = 1e-12);
        assert_abs_diff_eq!(angles.angles()[0], direct, epsilon = 1e-12);
        let (sp, fr) = sin_theta_norms(&u, &uhat).unwrap();
        assert_abs_diff_eq!(sp, theta.sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(fr, theta.sin(), epsilon = 1e-12);
    }

    #[test]
    fn sin_theta_routes_agree_on_random_pairs() {
        let mut s = SeededStream::new(7);
        for _ in 0..20 {
            let u = random_orthonormal(10, 3, &mut s).unwrap();
            let uhat = random_orthonormal(10, 3, &mut s).unwrap();
            let (sp, _) = sin_theta_norms(&u, &uhat).unwrap();
            let proj = u.project_complement(uhat.as_dmatrix()) * uhat.as_dmatrix().transpose();
            assert_abs_diff_eq!(sp, spectral_norm(&proj), epsilon = 1e-8);
        }
    }

    #[test]
    fn sin_theta_symmetric_in_arguments() {
        let mut s = SeededStream::new(9);
        let u = random_orthonormal(12, 4, &mut s).unwrap();
        let uhat = random_orthonormal(12, 4, &mut s).unwrap();
        let a = sin_theta_norms(&u, &uhat).unwrap();
        let b = sin_theta_norms(&uhat, &u).unwrap();
        assert_abs_diff_eq!(a.0, b.0, epsilon = 1e-10);
        assert_abs_diff_eq!(a.1, b.1, epsilon = 1e-10);
    }

    #[test]
    fn coherence_standard_basis_frame() {
        let p = 6;
        let r = 2;
        let u = OrthonormalFrame::new(
            DenseMatrix::from_fn(p, r, |i, j| if i == j { 1.0 } else { 0.0 }).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(coherence(&u), (p as f64) / (r as f64), epsilon = 1e-12);
    }

    #[test]
    fn coherence_flat_frame_is_one() {
        // Normalized Hadamard columns, p = 4, r = 2: every entry magnitude 1/2.
        let h = 0.5f64;
        let u = frame(4, 2, &[h, h, h, -h, h, h, h, -h]);
        assert_abs_diff_eq!(coherence(&u), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn coherence_in_range_for_random_frames() {
        let mut s = SeededStream::new(11);
        let u = random_orthonormal(100, 5, &mut s).unwrap();
        let mu = coherence(&u);
        assert!((1.0..=20.0).contains(&mu), "mu = {mu}");
    }

    #[test]
    fn random_orthonormal_square_is_orthogonal() {
        let mut s = SeededStream::new(3);
        let q = random_orthonormal(5, 5, &mut s).unwrap();
        let gram = q.as_dmatrix().transpose() * q.as_dmatrix();
        assert!(max_norm(&(gram - DMatrix::identity(5, 5))) <= ORTHO_TOL);
    }

    #[test]
    fn random_orthonormal_deterministic_under_seed() {
        let mut a = SeededStream::new(42);
        let mut b = SeededStream::new(42);
        let qa = random_orthonormal(8, 3, &mut a).unwrap();
        let qb = random_orthonormal(8, 3, &mut b).unwrap();
        assert_eq!(qa.as_dmatrix(), qb.as_dmatrix());
    }

    #[test]
    fn random_orthonormal_rejects_bad_dims() {
        let mut s = SeededStream::new(0);
        assert!(random_orthonormal(3, 4, &mut s).is_err());
    }

    #[test]
    fn random_frame_coherence_calibration() {
        // Bounded coherence regime: p = 2000, r = 5 keeps mu below 9 for the
        // vast majority of seeds.
        let mut hits = 0;
        for seed in 0..100 {
            let mut s = SeededStream::new(seed);
            let u = random_orthonormal(2000, 5, &mut s).unwrap();
            if coherence(&u) <= 9.0 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits}/100 seeds below coherence 9");
    }

    #[test]
    fn gauge_invariance_of_angles_and_coherence() {
        let mut s = SeededStream::new(17);
        let u = random_orthonormal(10, 3, &mut s).unwrap();
        let uhat = random_orthonormal(10, 3, &mut s).unwrap();
        let rot = random_orthonormal(3, 3, &mut s).unwrap();
        let rot2 = random_orthonormal(3, 3, &mut s).unwrap();
        let ur = OrthonormalFrame::new(
            DenseMatrix::from_dmatrix(u.as_dmatrix() * rot.as_dmatrix()).unwrap(),
        )
        .unwrap();
        let uhr = OrthonormalFrame::new(
            DenseMatrix::from_dmatrix(uhat.as_dmatrix() * rot2.as_dmatrix()).unwrap(),
        )
        .unwrap();
        let a = canonical_angles(&u, &uhat).unwrap();
        let b = canonical_angles(&ur, &uhr).unwrap();
        for (x, y) in a.angles().iter().zip(b.angles()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(coherence(&u), coherence(&ur), epsilon = 1e-10);
    }

    #[test]
    fn sin_theta_bounded_by_one_and_sqrt_r() {
        let mut s = SeededStream::new(23);
        for _ in 0..10 {
            let u = random_orthonormal(15, 4, &mut s).unwrap();
            let uhat = random_orthonormal(15, 4, &mut s).unwrap();
            let (sp, fr) = sin_theta_norms(&u, &uhat).unwrap();
            assert!(sp <= 1.0 + 1e-12);
            assert!(fr <= 2.0 + 1e-12); // sqrt(r) with r = 4
        }
    }
}
