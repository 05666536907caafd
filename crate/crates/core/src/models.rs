//! Seeded random generators for the noise and signal models used by the
//! applications, plus their population quantities.

use nalgebra::DMatrix;
use rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::decomposition::PerturbationInstance;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::subspace::{random_orthonormal, OrthonormalFrame};

/// A reproducible random stream.
///
/// Identical seeds give identical draw sequences across platforms; child
/// streams are derived on disjoint ChaCha streams and never share state with
/// the parent. Normal variates use the Box-Muller transform so the sequence
/// is pinned, not implementation-defined.
#[derive(Debug, Clone)]
pub struct SeededStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
    draws: u64,
    cached_normal: Option<f64>,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
            draws: 0,
            cached_normal: None,
        }
    }

    /// Independent-behaving child stream; injective in `index`.
    pub fn child(&self, index: u64) -> Self {
        // Stream ids: parent uses its own id, children shift to a disjoint
        // block keyed by the parent id and child index.
        Self::with_stream(
            self.seed,
            self.stream_id
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(index)
                .wrapping_add(1),
        )
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of raw 64-bit draws consumed so far.
    pub fn position(&self) -> u64 {
        self.draws
    }

    /// Uniform in (0, 1], 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        ((self.rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.cached_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() <= p
    }
}

/// Matrix of i.i.d. standard normal entries.
pub fn gen_gaussian_noise(p1: usize, p2: usize, stream: &mut SeededStream) -> Result<DenseMatrix> {
    if p1 == 0 || p2 == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    // Column-major fill order, pinned.
    DenseMatrix::from_dmatrix(DMatrix::from_fn(p1, p2, |_, _| stream.normal()))
}

/// A fixed rank-r signal `X = U diag(sigmas) V^T` with random singular frames.
/// The returned factors are the population truth.
pub fn gen_low_rank(
    p1: usize,
    p2: usize,
    r: usize,
    sigmas: &[f64],
    stream: &mut SeededStream,
) -> Result<(DenseMatrix, OrthonormalFrame, OrthonormalFrame)> {
    if sigmas.len() != r {
        return Err(Error::InvalidArgument(format!(
            "expected {r} singular values, got {}",
            sigmas.len()
        )));
    }
    if sigmas.iter().any(|&s| s <= 0.0) || sigmas.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument(
            "singular values must be positive and non-increasing".into(),
        ));
    }
    let u = random_orthonormal(p1, r, stream)?;
    let v = random_orthonormal(p2, r, stream)?;
    let mut scaled = u.as_dmatrix().clone();
    for j in 0..r {
        for i in 0..p1 {
            scaled[(i, j)] *= sigmas[j];
        }
    }
    let x = DenseMatrix::from_dmatrix(&scaled * v.as_dmatrix().transpose())?;
    Ok((x, u, v))
}

/// A spiked covariance `Gamma = U (Lambda + c^2 I) U^T + c^2 (I - U U^T)`:
/// r signal directions above a flat bulk.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    pub d: usize,
    pub r: usize,
    pub u: OrthonormalFrame,
    /// Spike singular values `sigma_i = lambda_i + c^2`, sorted non-increasing.
    pub spike_values: Vec<f64>,
    /// Bulk singular value `c^2`.
    pub bulk_value: f64,
}

impl CovarianceModel {
    /// Population gap `delta_r = sigma_r - sigma_{r+1} = lambda_r`.
    pub fn gap(&self) -> f64 {
        self.spike_values[self.r - 1] - self.bulk_value
    }

    /// Effective rank `trace(Gamma) / sigma_1(Gamma)`.
    pub fn effective_rank(&self) -> f64 {
        let trace: f64 =
            self.spike_values.iter().sum::<f64>() + (self.d - self.r) as f64 * self.bulk_value;
        trace / self.spike_values[0]
    }

    /// `nu(Y) = max_i sqrt(Var(Y^(i))) = max_i sqrt(Gamma_ii)`.
    pub fn nu(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.d {
            let mut gii = self.bulk_value;
            for j in 0..self.r {
                let uij = self.u.as_dmatrix()[(i, j)];
                gii += uij * uij * (self.spike_values[j] - self.bulk_value);
            }
            worst = worst.max(gii);
        }
        worst.sqrt()
    }

    /// Dense `Gamma`.
    pub fn gamma(&self) -> Result<DenseMatrix> {
        let d = self.d;
        let mut scaled = self.u.as_dmatrix().clone();
        for j in 0..self.r {
            let lam = self.spike_values[j] - self.bulk_value;
            for i in 0..d {
                scaled[(i, j)] *= lam;
            }
        }
        let mut g = &scaled * self.u.as_dmatrix().transpose();
        for i in 0..d {
            g[(i, i)] += self.bulk_value;
        }
        // Force exact symmetry in the stored representation.
        let g = (&g + g.transpose()) * 0.5;
        DenseMatrix::from_dmatrix(g)
    }
}

/// Builds the spike model of the covariance application.
pub fn gen_spiked_covariance(
    d: usize,
    r: usize,
    lambda_values: &[f64],
    c: f64,
    stream: &mut SeededStream,
) -> Result<CovarianceModel> {
    if lambda_values.len() != r {
        return Err(Error::InvalidArgument(format!(
            "expected {r} spike gaps, got {}",
            lambda_values.len()
        )));
    }
    if lambda_values.iter().any(|&l| l <= 0.0) || c <= 0.0 {
        return Err(Error::InvalidArgument(
            "spike values and bulk level must be positive".into(),
        ));
    }
    let mut sorted = lambda_values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let u = random_orthonormal(d, r, stream)?;
    Ok(CovarianceModel {
        d,
        r,
        u,
        spike_values: sorted.iter().map(|&l| l + c * c).collect(),
        bulk_value: c * c,
    })
}

/// Draws `n` i.i.d. samples and returns the instance
/// `(x = Gamma, e = empirical - Gamma, xhat = empirical)`.
pub fn sample_empirical_covariance(
    model: &CovarianceModel,
    n: usize,
    stream: &mut SeededStream,
) -> Result<PerturbationInstance> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let d = model.d;
    let r = model.r;
    let c = model.bulk_value.sqrt();
    // Gamma^{1/2} g = c g + U (sqrt(sigma_i) - c) U^T g, applied per sample.
    let sqrt_delta: Vec<f64> = model
        .spike_values
        .iter()
        .map(|&s| s.sqrt() - c)
        .collect();
    let mut samples = DMatrix::zeros(d, n);
    let u = model.u.as_dmatrix();
    for k in 0..n {
        let g = DMatrix::from_fn(d, 1, |_, _| stream.normal());
        let proj = u.transpose() * &g;
        let mut y = &g * c;
        for j in 0..r {
            let w = sqrt_delta[j] * proj[(j, 0)];
            for i in 0..d {
                y[(i, 0)] += u[(i, j)] * w;
            }
        }
        samples.set_column(k, &y.column(0));
    }
    let mut empirical = &samples * samples.transpose();
    empirical /= n as f64;
    let empirical = (&empirical + empirical.transpose()) * 0.5;
    let gamma = model.gamma()?;
    let e = DenseMatrix::from_dmatrix(&empirical - gamma.as_dmatrix())?;
    PerturbationInstance::new(gamma, e, r)
}

/// A rho-correlated stochastic block model over two graphs with identical
/// marginals.
#[derive(Debug, Clone)]
pub struct SbmModel {
    pub kappa: usize,
    pub block_sizes: Vec<usize>,
    /// Symmetric block probability matrix in [0, 1].
    pub lambda_block: DenseMatrix,
    /// Vertex-to-block assignment.
    pub membership: Vec<usize>,
    /// Edge correlation in [0, 1].
    pub rho: f64,
}

impl SbmModel {
    pub fn new(
        block_sizes: Vec<usize>,
        lambda_block: DenseMatrix,
        rho: f64,
    ) -> Result<Self> {
        let kappa = block_sizes.len();
        if kappa == 0 || block_sizes.contains(&0) {
            return Err(Error::InvalidArgument("blocks must be non-empty".into()));
        }
        if lambda_block.rows() != kappa || lambda_block.cols() != kappa {
            return Err(Error::DimensionMismatch {
                context: "block probability matrix",
                expected: format!("{kappa}x{kappa}"),
                found: format!("{}x{}", lambda_block.rows(), lambda_block.cols()),
            });
        }
        if lambda_block.asymmetry()? > 0.0 {
            return Err(Error::InvalidArgument(
                "block probability matrix must be symmetric".into(),
            ));
        }
        for j in 0..kappa {
            for i in 0..kappa {
                let v = lambda_block.as_dmatrix()[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!(
                        "block probability {v} outside [0, 1]"
                    )));
                }
            }
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!(
                "edge correlation {rho} outside [0, 1]"
            )));
        }
        let mut membership = Vec::with_capacity(block_sizes.iter().sum());
        for (block, &size) in block_sizes.iter().enumerate() {
            membership.extend(std::iter::repeat_n(block, size));
        }
        Ok(Self {
            kappa,
            block_sizes,
            lambda_block,
            membership,
            rho,
        })
    }

    pub fn n(&self) -> usize {
        self.membership.len()
    }

    /// Edge probability matrix `P = Z Lambda Z^T`.
    pub fn p_matrix(&self) -> Result<DenseMatrix> {
        let n = self.n();
        DenseMatrix::from_fn(n, n, |i, j| {
            self.lambda_block.as_dmatrix()[(self.membership[i], self.membership[j])]
        })
    }

    /// Maximum expected degree: max row sum of `P`.
    pub fn max_expected_degree(&self) -> Result<f64> {
        let p = self.p_matrix()?;
        Ok(crate::matrix::matrix_norm(p.as_dmatrix(), crate::matrix::NormKind::Infinity))
    }

    /// `rank(P)`, computed from the size-weighted block matrix.
    pub fn p_rank(&self) -> Result<usize> {
        let weighted = DenseMatrix::from_fn(self.kappa, self.kappa, |i, j| {
            self.lambda_block.as_dmatrix()[(i, j)]
                * (self.block_sizes[i] as f64).sqrt()
                * (self.block_sizes[j] as f64).sqrt()
        })?;
        let f = crate::matrix::svd(&weighted)?;
        Ok(crate::matrix::numerical_rank(&f.singular_values))
    }
}

/// Two correlated adjacency matrices plus their omnibus assemblies.
#[derive(Debug, Clone)]
pub struct OmnibusPair {
    pub a1: DenseMatrix,
    pub a2: DenseMatrix,
    /// `[[A1, (A1+A2)/2], [(A1+A2)/2, A2]]`.
    pub ohat: DenseMatrix,
    /// `ones(2x2) kron P`.
    pub omodel: DenseMatrix,
    pub p: DenseMatrix,
}

/// Samples a pair of rho-correlated SBM graphs and assembles the omnibus
/// matrices.
///
/// The first graph draws each edge as Bernoulli(P_jl). Conditionally, the
/// second draws Bernoulli(P_jl + rho (1 - P_jl)) when the first edge is
/// present and Bernoulli(P_jl (1 - rho)) otherwise, which preserves the
/// marginal and gives pairwise correlation rho.
pub fn gen_rho_sbm_pair(model: &SbmModel, stream: &mut SeededStream) -> Result<OmnibusPair> {
    let n = model.n();
    let p = model.p_matrix()?;
    let rho = model.rho;
    let mut a1 = DMatrix::zeros(n, n);
    let mut a2 = DMatrix::zeros(n, n);
    for j in 0..n {
        for l in (j + 1)..n {
            let pe = p.as_dmatrix()[(j, l)];
            let first = stream.bernoulli(pe);
            let second_prob = if first {
                pe + rho * (1.0 - pe)
            } else {
                pe * (1.0 - rho)
            };
            let second = stream.bernoulli(second_prob);
            if first {
                a1[(j, l)] = 1.0;
                a1[(l, j)] = 1.0;
            }
            if second {
                a2[(j, l)] = 1.0;
                a2[(l, j)] = 1.0;
            }
        }
    }
    let mut ohat = DMatrix::zeros(2 * n, 2 * n);
    let mut omodel = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let avg = 0.5 * (a1[(i, j)] + a2[(i, j)]);
            ohat[(i, j)] = a1[(i, j)];
            ohat[(n + i, n + j)] = a2[(i, j)];
            ohat[(i, n + j)] = avg;
            ohat[(n + i, j)] = avg;
            let pij = p.as_dmatrix()[(i, j)];
            omodel[(i, j)] = pij;
            omodel[(n + i, n + j)] = pij;
            omodel[(i, n + j)] = pij;
            omodel[(n + i, j)] = pij;
        }
    }
    Ok(OmnibusPair {
        a1: DenseMatrix::from_dmatrix(a1)?,
        a2: DenseMatrix::from_dmatrix(a2)?,
        ohat: DenseMatrix::from_dmatrix(ohat)?,
        omodel: DenseMatrix::from_dmatrix(omodel)?,
        p,
    })
}

/// Wraps an omnibus pair as a perturbation instance with
/// `x = model omnibus`, `xhat = adjacency omnibus`.
pub fn omnibus_instance(pair: &OmnibusPair, r: usize) -> Result<PerturbationInstance> {
    // Rank of the model omnibus equals the rank of P (the Kronecker factor
    // has rank one); verify against the requested r.
    let f = crate::matrix::top_singular_triplets(&pair.omodel, (r + 1).min(pair.omodel.rows()))?;
    let rank = crate::matrix::numerical_rank(&f.1);
    if rank != r {
        return Err(Error::InvalidArgument(format!(
            "model omnibus rank {rank} does not match requested r = {r}"
        )));
    }
    let e = DenseMatrix::from_dmatrix(pair.ohat.as_dmatrix() - pair.omodel.as_dmatrix())?;
    PerturbationInstance::new(pair.omodel.clone(), e, r)
}
