//! Dense matrix storage, the matrix norms used throughout the crate, and the
//! singular value / symmetric eigenvalue decomposition contracts everything
//! else depends on.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::ops::Deref;
use std::path::Path;

use nalgebra::DMatrix;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace::OrthonormalFrame;

/// Orthonormality tolerance in the max norm for computed frames.
pub const ORTHO_TOL: f64 = 1e-10;
/// Relative Frobenius tolerance for SVD reconstruction, per unit dimension.
/// The effective tolerance is this times `max(rows, cols)`.
pub const SVD_RECON_TOL: f64 = 100.0 * f64::EPSILON;
/// Relative threshold below which a singular value is treated as zero.
pub const RANK_REL_TOL: f64 = 1e-12;
/// Max-norm tolerance for symmetry checks.
pub const SYM_TOL: f64 = 1e-12;

const SVD_MAX_ITER: usize = 10_000;
const SUBSPACE_MAX_ITER: usize = 2_000;
/// Above this dimension, truncated factorizations switch from a full
/// decomposition to deterministic subspace iteration.
const DENSE_FACTOR_LIMIT: usize = 512;

/// A dense real rectangular matrix with finite entries and positive dimensions.
///
/// Values are immutable after construction; the wrapper derefs to
/// [`nalgebra::DMatrix`] for read-only access.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    inner: DMatrix<f64>,
}

impl DenseMatrix {
    /// Validates and wraps an owned matrix.
    pub fn from_dmatrix(inner: DMatrix<f64>) -> Result<Self> {
        if inner.nrows() == 0 || inner.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix dimensions must be positive, got {}x{}",
                inner.nrows(),
                inner.ncols()
            )));
        }
        for j in 0..inner.ncols() {
            for i in 0..inner.nrows() {
                if !inner[(i, j)].is_finite() {
                    return Err(Error::NonFiniteEntry { row: i, col: j });
                }
            }
        }
        Ok(Self { inner })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::from_dmatrix(DMatrix::from_fn(rows, cols, f))
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "expected {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::from_dmatrix(DMatrix::zeros(rows, cols))
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.inner
    }

    /// Maximum absolute asymmetry `max_ij |a_ij - a_ji|`; zero for symmetric
    /// matrices. Errors for non-square input.
    pub fn asymmetry(&self) -> Result<f64> {
        if self.rows() != self.cols() {
            return Err(Error::DimensionMismatch {
                context: "symmetry check requires a square matrix",
                expected: format!("{0}x{0}", self.rows()),
                found: format!("{}x{}", self.rows(), self.cols()),
            });
        }
        let mut worst = 0.0f64;
        for j in 0..self.cols() {
            for i in 0..j {
                worst = worst.max((self.inner[(i, j)] - self.inner[(j, i)]).abs());
            }
        }
        Ok(worst)
    }

    /// Writes the matrix text fixture format: a `rows cols` header line then
    /// one whitespace-separated row per line at 17 significant digits.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.rows(), self.cols())?;
        let mut line = String::new();
        for i in 0..self.rows() {
            line.clear();
            for j in 0..self.cols() {
                if j > 0 {
                    line.push(' ');
                }
                write!(line, "{:.16e}", self.inner[(i, j)]).expect("write to string");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn write_text_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_text(std::io::BufWriter::new(file))
            .map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })
    }

    /// Parses the matrix text fixture format.
    pub fn read_text<R: Read>(r: R, origin: &Path) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty input".into()))?;
        let header = header.map_err(|source| Error::Io {
            path: origin.to_path_buf(),
            source,
        })?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        if dims.len() != 2 {
            return Err(parse_err(1, format!("expected 'rows cols', got {header:?}")));
        }
        let rows: usize = dims[0]
            .parse()
            .map_err(|e| parse_err(1, format!("bad row count: {e}")))?;
        let cols: usize = dims[1]
            .parse()
            .map_err(|e| parse_err(1, format!("bad col count: {e}")))?;
        let mut data = Vec::with_capacity(rows.saturating_mul(cols));
        for (idx, line) in lines {
            let line = line.map_err(|source| Error::Io {
                path: origin.to_path_buf(),
                source,
            })?;
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|e| parse_err(idx + 1, format!("bad entry {tok:?}: {e}")))?;
                data.push(v);
            }
        }
        if data.len() != rows * cols {
            return Err(parse_err(
                0,
                format!("expected {} entries, found {}", rows * cols, data.len()),
            ));
        }
        Self::from_row_slice(rows, cols, &data)
    }

    pub fn read_text_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_text(file, path)
    }
}

impl Deref for DenseMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &Self::Target {
        &self.inner
    }
}

/// The matrix norms used in the perturbation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Largest singular value.
    Spectral,
    Frobenius,
    /// Maximum absolute column sum.
    One,
    /// Maximum absolute row sum.
    Infinity,
    /// Maximum absolute entry.
    Max,
}

/// Maximum row-wise Euclidean norm, i.e. `sup_{|x|_2 = 1} |Ax|_inf`.
pub fn two_to_inf_norm(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        let mut sq = 0.0f64;
        for j in 0..a.ncols() {
            let v = a[(i, j)];
            sq += v * v;
        }
        worst = worst.max(sq);
    }
    worst.sqrt()
}

pub fn matrix_norm(a: &DMatrix<f64>, kind: NormKind) -> f64 {
    match kind {
        NormKind::Spectral => spectral_norm(a),
        NormKind::Frobenius => {
            let mut sq = 0.0f64;
            for j in 0..a.ncols() {
                for i in 0..a.nrows() {
                    let v = a[(i, j)];
                    sq += v * v;
                }
            }
            sq.sqrt()
        }
        NormKind::One => {
            let mut worst = 0.0f64;
            for j in 0..a.ncols() {
                let mut s = 0.0f64;
                for i in 0..a.nrows() {
                    s += a[(i, j)].abs();
                }
                worst = worst.max(s);
            }
            worst
        }
        NormKind::Infinity => {
            let mut worst = 0.0f64;
            for i in 0..a.nrows() {
                let mut s = 0.0f64;
                for j in 0..a.ncols() {
                    s += a[(i, j)].abs();
                }
                worst = worst.max(s);
            }
            worst
        }
        NormKind::Max => {
            let mut worst = 0.0f64;
            for j in 0..a.ncols() {
                for i in 0..a.nrows() {
                    worst = worst.max(a[(i, j)].abs());
                }
            }
            worst
        }
    }
}

/// Spectral norm computed as the leading singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values().max()
}

pub fn max_norm(a: &DMatrix<f64>) -> f64 {
    matrix_norm(a, NormKind::Max)
}

pub fn frobenius_norm(a: &DMatrix<f64>) -> f64 {
    matrix_norm(a, NormKind::Frobenius)
}

/// A full thin singular value decomposition `A = left * diag(s) * right^T`
/// with `k = min(rows, cols)` columns on each side.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub left: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub right: DenseMatrix,
}

impl SvdFactors {
    pub fn k(&self) -> usize {
        self.singular_values.len()
    }

    /// `left * diag(s) * right^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut scaled = self.left.as_dmatrix().clone();
        for j in 0..k {
            let s = self.singular_values[j];
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= s;
            }
        }
        &scaled * self.right.as_dmatrix().transpose()
    }
}

/// Thin SVD with singular values sorted non-increasing. Deterministic for
/// identical input bits.
pub fn svd(a: &DenseMatrix) -> Result<SvdFactors> {
    let mut fac = nalgebra::SVD::new(a.as_dmatrix().clone(), true, true);
    fac.sort_by_singular_values();
    if fac.singular_values.iter().all(|s| s.is_finite()) {
        let u = fac.u.expect("u requested");
        let v_t = fac.v_t.expect("v_t requested");
        let candidate = SvdFactors {
            left: DenseMatrix::from_dmatrix(u)?,
            singular_values: fac.singular_values.iter().copied().collect(),
            right: DenseMatrix::from_dmatrix(v_t.transpose())?,
        };
        // The implicit-QR solver occasionally mis-deflates on exactly rank
        // deficient inputs; accept its answer only when it reproduces the
        // matrix.
        let scale = a.as_dmatrix().norm().max(1.0) * a.rows().max(a.cols()) as f64;
        if (candidate.reconstruct() - a.as_dmatrix()).norm() <= SVD_RECON_TOL * scale {
            return Ok(candidate);
        }
    }
    jacobi_svd(a)
}

/// One-sided Jacobi SVD: slower than the implicit-QR path but accurate on
/// rank deficient matrices. Operates on whichever of `A`, `A^T` has fewer
/// columns.
fn jacobi_svd(a: &DenseMatrix) -> Result<SvdFactors> {
    let transposed = a.rows() < a.cols();
    let work_src: DMatrix<f64> = if transposed {
        a.as_dmatrix().transpose()
    } else {
        a.as_dmatrix().clone()
    };
    let (m, n) = (work_src.nrows(), work_src.ncols());
    let mut w = work_src;
    let mut v = DMatrix::<f64>::identity(n, n);
    let eps = 1e-15;
    let mut converged = false;
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let wp = w.column(p);
                let wq = w.column(q);
                let app = wp.dot(&wp);
                let aqq = wq.dot(&wq);
                let apq = wp.dot(&wq);
                if apq.abs() <= eps * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wip = w[(i, p)];
                    let wiq = w[(i, q)];
                    w[(i, p)] = c * wip - s * wiq;
                    w[(i, q)] = s * wip + c * wiq;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdConvergence {
            max_iter: SVD_MAX_ITER,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let sigma_max = norms[order[0]];
    let mut left = DMatrix::<f64>::zeros(m, n);
    let mut singular_values = Vec::with_capacity(n);
    let mut right = DMatrix::<f64>::zeros(n, n);
    for (slot, &j) in order.iter().enumerate() {
        singular_values.push(norms[j]);
        right.set_column(slot, &v.column(j));
        if norms[j] > sigma_max * f64::EPSILON && norms[j] > 0.0 {
            left.set_column(slot, &(w.column(j) / norms[j]));
        }
    }
    // Complete null columns of the left factor to an orthonormal set.
    for slot in 0..n {
        if left.column(slot).norm() > 0.5 {
            continue;
        }
        for basis in 0..m {
            let mut cand = DMatrix::<f64>::zeros(m, 1);
            cand[(basis, 0)] = 1.0;
            for j in 0..n {
                if j == slot || left.column(j).norm() < 0.5 {
                    continue;
                }
                let proj = left.column(j).dot(&cand.column(0));
                let col = left.column(j).into_owned();
                for i in 0..m {
                    cand[(i, 0)] -= proj * col[i];
                }
            }
            let norm = cand.column(0).norm();
            if norm > 0.5 {
                left.set_column(slot, &(cand.column(0) / norm));
                break;
            }
        }
    }
    if transposed {
        Ok(SvdFactors {
            left: DenseMatrix::from_dmatrix(right)?,
            singular_values,
            right: DenseMatrix::from_dmatrix(left)?,
        })
    } else {
        Ok(SvdFactors {
            left: DenseMatrix::from_dmatrix(left)?,
            singular_values,
            right: DenseMatrix::from_dmatrix(right)?,
        })
    }
}

/// Leading `r` singular triplets of a computed factorization.
pub fn truncate(f: &SvdFactors, r: usize) -> Result<(OrthonormalFrame, Vec<f64>, OrthonormalFrame)> {
    let k = f.k();
    if r < 1 || r > k {
        return Err(Error::RankOutOfRange { r, k });
    }
    let u = f.left.as_dmatrix().columns(0, r).into_owned();
    let v = f.right.as_dmatrix().columns(0, r).into_owned();
    Ok((
        OrthonormalFrame::new(DenseMatrix::from_dmatrix(u)?)?,
        f.singular_values[..r].to_vec(),
        OrthonormalFrame::new(DenseMatrix::from_dmatrix(v)?)?,
    ))
}

/// A symmetric eigendecomposition `A = vectors * diag(values) * vectors^T`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

/// Eigenvalue ordering conventions for symmetric decompositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenOrder {
    /// `lambda_1 >= lambda_2 >= ...` (signed).
    SignedDescending,
    /// `|lambda_1| >= |lambda_2| >= ...`.
    AbsDescending,
}

/// Full symmetric eigendecomposition, eigenpairs sorted per `order`.
pub fn sym_eigen(a: &DenseMatrix, order: EigenOrder) -> Result<SymEigen> {
    let asym = a.asymmetry()?;
    if asym > SYM_TOL * max_norm(a).max(1.0) {
        return Err(Error::NotSymmetric {
            asymmetry: asym,
            tol: SYM_TOL,
        });
    }
    // Symmetrize so the solver sees an exactly symmetric matrix.
    let m = (a.as_dmatrix() + a.as_dmatrix().transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(m);
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    match order {
        EigenOrder::SignedDescending => {
            idx.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
        }
        EigenOrder::AbsDescending => {
            idx.sort_by(|&i, &j| {
                eig.eigenvalues[j]
                    .abs()
                    .partial_cmp(&eig.eigenvalues[i].abs())
                    .unwrap()
            });
        }
    }
    let values: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, idx[j])]);
    Ok(SymEigen {
        values,
        vectors: DenseMatrix::from_dmatrix(vectors)?,
    })
}

fn deterministic_gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    // Local Box-Muller over a fixed ChaCha stream; bit-reproducible.
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut uniform = move || {
        // 53-bit uniform in (0, 1].
        ((rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / 9007199254740992.0)
    };
    let mut cache: Option<f64> = None;
    let mut normal = move || {
        if let Some(z) = cache.take() {
            return z;
        }
        let u1 = uniform();
        let u2 = uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        cache = Some(radius * angle.sin());
        radius * angle.cos()
    };
    DMatrix::from_fn(rows, cols, |_, _| normal())
}

/// Householder-QR orthonormalization of the columns of `m` (first `cols(m)`
/// columns of Q).
pub(crate) fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    qr.q()
}

/// Leading `r` singular triplets of `a`.
///
/// Uses a full SVD at moderate sizes and deterministic block subspace
/// iteration with Rayleigh-Ritz refinement for larger matrices.
pub fn top_singular_triplets(
    a: &DenseMatrix,
    r: usize,
) -> Result<(OrthonormalFrame, Vec<f64>, OrthonormalFrame)> {
    let (p1, p2) = (a.rows(), a.cols());
    let k = p1.min(p2);
    if r < 1 || r > k {
        return Err(Error::RankOutOfRange { r, k });
    }
    if p1.max(p2) <= DENSE_FACTOR_LIMIT {
        let f = svd(a)?;
        return truncate(&f, r);
    }
    let block = (r + 8).min(k);
    let m = a.as_dmatrix();
    let omega = deterministic_gaussian(p2, block, 0x5eed_0001);
    let mut q = orthonormalize(&(m * &omega));
    let scale = two_to_inf_norm(m).max(1.0);
    for _ in 0..SUBSPACE_MAX_ITER {
        let z = orthonormalize(&(m.transpose() * &q));
        q = orthonormalize(&(m * &z));
        // Rayleigh-Ritz on the current block.
        let b = q.transpose() * m; // block x p2
        let mut small = nalgebra::SVD::try_new(b, true, true, f64::EPSILON, SVD_MAX_ITER).ok_or(
            Error::SvdConvergence {
                max_iter: SVD_MAX_ITER,
            },
        )?;
        small.sort_by_singular_values();
        let w = small.u.expect("u requested");
        let v_t = small.v_t.expect("v_t requested");
        let u_ritz = &q * &w;
        let v_ritz = v_t.transpose();
        let sigma: Vec<f64> = small.singular_values.iter().copied().collect();
        // Converged when the leading r triplets satisfy both residual
        // identities to near machine precision.
        let mut worst = 0.0f64;
        for (i, &s_i) in sigma.iter().enumerate().take(r) {
            let av = m * v_ritz.column(i);
            let atu = m.transpose() * u_ritz.column(i);
            let res1 = (&av - u_ritz.column(i) * s_i).norm();
            let res2 = (&atu - v_ritz.column(i) * s_i).norm();
            worst = worst.max(res1).max(res2);
        }
        if worst <= 1e-13 * scale * (p1.max(p2) as f64).sqrt() {
            let u = u_ritz.columns(0, r).into_owned();
            let v = v_ritz.columns(0, r).into_owned();
            return Ok((
                OrthonormalFrame::new(DenseMatrix::from_dmatrix(u)?)?,
                sigma[..r].to_vec(),
                OrthonormalFrame::new(DenseMatrix::from_dmatrix(v)?)?,
            ));
        }
    }
    Err(Error::SvdConvergence {
        max_iter: SUBSPACE_MAX_ITER,
    })
}

/// Leading `r` eigenpairs of a symmetric matrix ordered by `|lambda|`
/// descending, computed without a full decomposition when the matrix is large.
pub fn top_sym_eigenpairs(a: &DenseMatrix, r: usize) -> Result<(OrthonormalFrame, Vec<f64>)> {
    let n = a.rows();
    if r < 1 || r > n {
        return Err(Error::RankOutOfRange { r, k: n });
    }
    if n <= DENSE_FACTOR_LIMIT {
        let eig = sym_eigen(a, EigenOrder::AbsDescending)?;
        let vectors = eig.vectors.as_dmatrix().columns(0, r).into_owned();
        return Ok((
            OrthonormalFrame::new(DenseMatrix::from_dmatrix(vectors)?)?,
            eig.values[..r].to_vec(),
        ));
    }
    let asym = a.asymmetry()?;
    if asym > SYM_TOL * max_norm(a).max(1.0) {
        return Err(Error::NotSymmetric {
            asymmetry: asym,
            tol: SYM_TOL,
        });
    }
    let block = (r + 8).min(n);
    let m = a.as_dmatrix();
    let omega = deterministic_gaussian(n, block, 0x5eed_0002);
    let mut q = orthonormalize(&(m * &omega));
    let scale = two_to_inf_norm(m).max(1.0) * (n as f64).sqrt();
    for _ in 0..SUBSPACE_MAX_ITER {
        q = orthonormalize(&(m * &q));
        let small = nalgebra::SymmetricEigen::new(q.transpose() * m * &q);
        let mut idx: Vec<usize> = (0..block).collect();
        idx.sort_by(|&i, &j| {
            small.eigenvalues[j]
                .abs()
                .partial_cmp(&small.eigenvalues[i].abs())
                .unwrap()
        });
        let rot = DMatrix::from_fn(block, block, |i, j| small.eigenvectors[(i, idx[j])]);
        let ritz_vecs = &q * &rot;
        let ritz_vals: Vec<f64> = idx.iter().map(|&i| small.eigenvalues[i]).collect();
        let mut worst = 0.0f64;
        for (i, &lam) in ritz_vals.iter().enumerate().take(r) {
            let res = (m * ritz_vecs.column(i) - ritz_vecs.column(i) * lam).norm();
            worst = worst.max(res);
        }
        if worst <= 1e-13 * scale {
            let vectors = ritz_vecs.columns(0, r).into_owned();
            return Ok((
                OrthonormalFrame::new(DenseMatrix::from_dmatrix(vectors)?)?,
                ritz_vals[..r].to_vec(),
            ));
        }
        q = ritz_vecs;
    }
    Err(Error::EigenConvergence {
        max_iter: SUBSPACE_MAX_ITER,
    })
}

/// Numerical rank with the relative threshold `sigma_i > RANK_REL_TOL * sigma_1`.
pub fn numerical_rank(singular_values: &[f64]) -> usize {
    let s1 = singular_values.first().copied().unwrap_or(0.0);
    if s1 <= 0.0 {
        return 0;
    }
    singular_values
        .iter()
        .take_while(|&&s| s > RANK_REL_TOL * s1)
        .count()
}

/// Columns of `a` scaled by the inverse of the given (signed) diagonal.
/// Errors when a diagonal entry falls below the rank threshold.
pub(crate) fn scale_columns_by_inverse(a: &DMatrix<f64>, diag: &[f64]) -> Result<DMatrix<f64>> {
    let lead = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mut out = a.clone();
    for (j, &d) in diag.iter().enumerate() {
        if d.abs() <= RANK_REL_TOL * lead.max(1.0) {
            return Err(Error::RankDeficient { index: j + 1, value: d });
        }
        let inv = 1.0 / d;
        for i in 0..out.nrows() {
            out[(i, j)] *= inv;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dm(rows: usize, cols: usize, data: &[f64]) -> DenseMatrix {
        DenseMatrix::from_row_slice(rows, cols, data).unwrap()
    }

    #[test]
    fn two_to_inf_constant_matrix() {
        // 4x9 matrix with constant entries 1/3 has unit rows.
        let a = DenseMatrix::from_fn(4, 9, |_, _| 1.0 / 3.0).unwrap();
        assert_abs_diff_eq!(two_to_inf_norm(&a), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_to_inf_identity() {
        let a = DenseMatrix::identity(3);
        assert_abs_diff_eq!(two_to_inf_norm(&a), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_to_inf_upper_triangular() {
        let a = dm(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert_abs_diff_eq!(two_to_inf_norm(&a), 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn two_to_inf_matches_row_sweep_oracle() {
        // Independent oracle: explicit per-row Euclidean norm loop.
        let a = dm(3, 2, &[0.3, -1.2, 2.0, 0.5, -0.7, -0.1]);
        let mut expect = 0.0f64;
        for i in 0..3 {
            let mut s = 0.0;
            for j in 0..2 {
                s += a[(i, j)] * a[(i, j)];
            }
            expect = expect.max(s.sqrt());
        }
        assert_abs_diff_eq!(two_to_inf_norm(&a), expect, epsilon = 1e-14);
    }

    #[test]
    fn norms_constant_matrix_spectral() {
        let p1 = 4usize;
        let p2 = 7usize;
        let a = DenseMatrix::from_fn(p1, p2, |_, _| 1.0 / (p2 as f64).sqrt()).unwrap();
        assert_abs_diff_eq!(
            matrix_norm(&a, NormKind::Spectral),
            (p1 as f64).sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            matrix_norm(&a, NormKind::Frobenius),
            (p1 as f64).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn norms_zero_matrix() {
        let a = DenseMatrix::zeros(3, 4).unwrap();
        for kind in [
            NormKind::Spectral,
            NormKind::Frobenius,
            NormKind::One,
            NormKind::Infinity,
            NormKind::Max,
        ] {
            assert_eq!(matrix_norm(&a, kind), 0.0);
        }
    }

    #[test]
    fn norms_small_example() {
        let a = dm(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert_abs_diff_eq!(matrix_norm(&a, NormKind::One), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(matrix_norm(&a, NormKind::Infinity), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(matrix_norm(&a, NormKind::Max), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn svd_diagonal() {
        let a = dm(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let f = svd(&a).unwrap();
        assert_abs_diff_eq!(f.singular_values[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.singular_values[1], 1.0, epsilon = 1e-12);
        for j in 0..2 {
            // Identity up to column sign.
            assert_abs_diff_eq!(f.left[(j, j)].abs(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(f.right[(j, j)].abs(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn svd_antidiagonal_closed_form() {
        // Closed form: singular values are the roots of the eigenvalues of A^T A.
        let a = dm(2, 2, &[0.0, 2.0, 1.0, 0.0]);
        let f = svd(&a).unwrap();
        assert_abs_diff_eq!(f.singular_values[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.singular_values[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn svd_reconstruction_contract() {
        let a = DenseMatrix::from_dmatrix(deterministic_gaussian(8, 5, 7)).unwrap();
        let f = svd(&a).unwrap();
        let recon = f.reconstruct();
        let err = frobenius_norm(&(a.as_dmatrix() - &recon));
        assert!(err <= SVD_RECON_TOL * 8.0 * frobenius_norm(&a).max(1.0));
        // Factor orthonormality at the contract tolerance.
        let gram = f.left.as_dmatrix().transpose() * f.left.as_dmatrix();
        let eye = DMatrix::identity(f.k(), f.k());
        assert!(max_norm(&(gram - eye)) <= ORTHO_TOL);
        // Sorted non-increasing, non-negative.
        for w in f.singular_values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(f.singular_values.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn svd_deterministic() {
        let a = DenseMatrix::from_dmatrix(deterministic_gaussian(10, 6, 3)).unwrap();
        let f1 = svd(&a).unwrap();
        let f2 = svd(&a).unwrap();
        assert_eq!(f1.left.as_dmatrix(), f2.left.as_dmatrix());
        assert_eq!(f1.singular_values, f2.singular_values);
    }

    #[test]
    fn truncate_basic() {
        let a = dm(3, 3, &[3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
        let f = svd(&a).unwrap();
        let (_, sig, _) = truncate(&f, 2).unwrap();
        assert_eq!(sig, vec![3.0, 2.0]);
        // r = k is the identity operation.
        let (_, sig_all, _) = truncate(&f, 3).unwrap();
        assert_eq!(sig_all, f.singular_values);
        assert!(matches!(
            truncate(&f, 4),
            Err(Error::RankOutOfRange { r: 4, k: 3 })
        ));
        assert!(truncate(&f, 0).is_err());
    }

    #[test]
    fn truncate_rank_one() {
        let u = deterministic_gaussian(6, 1, 11);
        let u = &u / u.norm();
        let v = deterministic_gaussian(4, 1, 13);
        let v = &v / v.norm();
        let a = DenseMatrix::from_dmatrix(&u * 5.0 * v.transpose()).unwrap();
        let f = svd(&a).unwrap();
        let (uf, sig, vf) = truncate(&f, 1).unwrap();
        assert_abs_diff_eq!(sig[0], 5.0, epsilon = 1e-10);
        let udot = uf.as_dmatrix().column(0).dot(&u.column(0)).abs();
        let vdot = vf.as_dmatrix().column(0).dot(&v.column(0)).abs();
        assert_abs_diff_eq!(udot, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vdot, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn sym_eigen_orderings() {
        let a = dm(
            3,
            3,
            &[2.0, 0.0, 0.0, 0.0, -5.0, 0.0, 0.0, 0.0, 1.0],
        );
        let signed = sym_eigen(&a, EigenOrder::SignedDescending).unwrap();
        assert_abs_diff_eq!(signed.values[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(signed.values[2], -5.0, epsilon = 1e-12);
        let by_abs = sym_eigen(&a, EigenOrder::AbsDescending).unwrap();
        assert_abs_diff_eq!(by_abs.values[0], -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(by_abs.values[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sym_eigen_rejects_asymmetric() {
        let a = dm(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            sym_eigen(&a, EigenOrder::SignedDescending),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn top_triplets_match_full_svd_on_large_matrix() {
        let n = 600; // above the dense cutoff, exercises subspace iteration
        let g = deterministic_gaussian(n, 5, 21);
        let q = orthonormalize(&g);
        let h = deterministic_gaussian(400, 5, 22);
        let p = orthonormalize(&h);
        let sig = [50.0, 40.0, 30.0, 4.0, 3.0];
        let mut scaled = q.clone();
        for j in 0..5 {
            for i in 0..n {
                scaled[(i, j)] *= sig[j];
            }
        }
        let noise = deterministic_gaussian(n, 400, 23) * 0.01;
        let a = DenseMatrix::from_dmatrix(&scaled * p.transpose() + noise).unwrap();
        let (u, s, v) = top_singular_triplets(&a, 3).unwrap();
        // Residual identities define correctness here.
        for i in 0..3 {
            let res = (a.as_dmatrix() * v.as_dmatrix().column(i)
                - u.as_dmatrix().column(i) * s[i])
                .norm();
            assert!(res <= 1e-9 * s[0], "residual {res} too large");
        }
        for w in s.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn numerical_rank_thresholding() {
        assert_eq!(numerical_rank(&[3.0, 2.0, 1e-15]), 2);
        assert_eq!(numerical_rank(&[3.0, 2.0, 1.0]), 3);
        assert_eq!(numerical_rank(&[0.0]), 0);
    }

    #[test]
    fn text_format_round_trip() {
        let a = DenseMatrix::from_dmatrix(deterministic_gaussian(5, 3, 99)).unwrap();
        let mut buf = Vec::new();
        a.write_text(&mut buf).unwrap();
        let b = DenseMatrix::read_text(&buf[..], Path::new("<mem>")).unwrap();
        assert_eq!(a.as_dmatrix(), b.as_dmatrix());
    }

    #[test]
    fn text_format_rejects_garbage() {
        let bad = b"2 2\n1.0 2.0\n3.0 x\n";
        assert!(matches!(
            DenseMatrix::read_text(&bad[..], Path::new("<mem>")),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let res = DenseMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 0.0, 1.0]);
        assert!(matches!(res, Err(Error::NonFiniteEntry { row: 0, col: 1 })));
    }
}
