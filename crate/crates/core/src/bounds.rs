//! Evaluators for the perturbation bounds. Each returns a `BoundReport`;
//! non-violation (slack >= 0 when preconditions hold) is checked by callers.

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::decomposition::PerturbationInstance;
use crate::error::{Error, Result};
use crate::matrix::{
    matrix_norm, spectral_norm, sym_eigen, top_singular_triplets, top_sym_eigenpairs,
    two_to_inf_norm, DenseMatrix, EigenOrder, NormKind, RANK_REL_TOL, SYM_TOL,
};
use crate::procrustes::align;
use crate::subspace::{sin_theta_norms, OrthonormalFrame};

/// Evaluation of one bound on one instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// Named preconditions; slack is only meaningful when all hold.
    pub preconditions: IndexMap<String, bool>,
    /// Labelled scalar contributions to the right side.
    pub terms: IndexMap<String, f64>,
}

impl BoundReport {
    pub fn preconditions_met(&self) -> bool {
        self.preconditions.values().all(|&ok| ok)
    }
}

/// Shared spectral quantities of one instance, computed once.
struct InstanceGeometry {
    sigma_r: f64,
    sigma_r1: f64,
    e_spectral: f64,
    u: OrthonormalFrame,
    v: OrthonormalFrame,
    /// `|Uhat - U W_U|_{2->inf}`.
    lhs_two_to_inf: f64,
    sin_theta_u: f64,
    sin_theta_v: f64,
}

fn geometry(inst: &PerturbationInstance) -> Result<InstanceGeometry> {
    let r = inst.rank();
    let k = inst.x().rows().min(inst.x().cols());
    let probe = (r + 1).min(k);
    let (_, sig, _) = top_singular_triplets(inst.x(), probe)?;
    let sigma_r = sig[r - 1];
    let sigma_r1 = if probe > r { sig[r] } else { 0.0 };
    let (u, _, v) = top_singular_triplets(inst.x(), r)?;
    let (uhat, _, vhat) = top_singular_triplets(inst.xhat(), r)?;
    let w_u = align(&u, &uhat)?.w;
    let lhs_two_to_inf =
        two_to_inf_norm(&(uhat.as_dmatrix() - u.as_dmatrix() * w_u.as_dmatrix()));
    let (sin_theta_u, _) = sin_theta_norms(&u, &uhat)?;
    let (sin_theta_v, _) = sin_theta_norms(&v, &vhat)?;
    Ok(InstanceGeometry {
        sigma_r,
        sigma_r1,
        e_spectral: spectral_norm(inst.e().as_dmatrix()),
        u,
        v,
        lhs_two_to_inf,
        sin_theta_u,
        sin_theta_v,
    })
}

/// `(I - U U^T) M (V V^T)` without forming projector matrices.
fn perp_left_range_right(
    u: &OrthonormalFrame,
    v: &OrthonormalFrame,
    m: &DMatrix<f64>,
) -> DMatrix<f64> {
    let ranged = (m * v.as_dmatrix()) * v.as_dmatrix().transpose();
    u.project_complement(&ranged)
}

/// `(I - U U^T) M (I - V V^T)`.
fn perp_both(u: &OrthonormalFrame, v: &OrthonormalFrame, m: &DMatrix<f64>) -> DMatrix<f64> {
    let complement = m - (m * v.as_dmatrix()) * v.as_dmatrix().transpose();
    u.project_complement(&complement)
}

/// The baseline two-to-infinity bound for the left singular frame.
pub fn bound_baseline(inst: &PerturbationInstance) -> Result<BoundReport> {
    let g = geometry(inst)?;
    let e = inst.e().as_dmatrix();
    let x = inst.x().as_dmatrix();

    let mut preconditions = IndexMap::new();
    preconditions.insert("singular_gap_positive".into(), g.sigma_r > g.sigma_r1);
    preconditions.insert("sigma_r_ge_2_norm_e".into(), g.sigma_r >= 2.0 * g.e_spectral);

    let t1 = 2.0 * two_to_inf_norm(&perp_left_range_right(&g.u, &g.v, e)) / g.sigma_r;
    let t2 = 2.0 * two_to_inf_norm(&perp_both(&g.u, &g.v, e)) * g.sin_theta_v / g.sigma_r;
    let t3 = 2.0 * two_to_inf_norm(&perp_both(&g.u, &g.v, x)) * g.sin_theta_v / g.sigma_r;
    let t4 = g.sin_theta_u * g.sin_theta_u * two_to_inf_norm(g.u.as_dmatrix());

    let mut terms = IndexMap::new();
    terms.insert("noise_in_range".into(), t1);
    terms.insert("noise_off_range".into(), t2);
    terms.insert("signal_off_range".into(), t3);
    terms.insert("second_order_alignment".into(), t4);

    let rhs = t1 + t2 + t3 + t4;
    let lhs = g.lhs_two_to_inf;
    Ok(BoundReport {
        bound_id: "baseline_two_to_inf".into(),
        lhs,
        rhs,
        slack: rhs - lhs,
        preconditions,
        terms,
    })
}

/// Exact values of the projected-norm constants the uniform bound uses.
struct UniformConstants {
    c_eu: f64,
    c_ev: f64,
    c_xu: f64,
    c_xv: f64,
}

fn uniform_constants(inst: &PerturbationInstance, g: &InstanceGeometry) -> UniformConstants {
    let e = inst.e().as_dmatrix();
    let x = inst.x().as_dmatrix();
    let et = e.transpose();
    let xt = x.transpose();
    UniformConstants {
        c_eu: matrix_norm(&g.u.project_complement(e), NormKind::Infinity),
        c_ev: matrix_norm(&g.v.project_complement(&et), NormKind::Infinity),
        c_xu: matrix_norm(&g.u.project_complement(x), NormKind::Infinity),
        c_xv: matrix_norm(&g.v.project_complement(&xt), NormKind::Infinity),
    }
}

fn is_effectively_rank_r(g: &InstanceGeometry) -> bool {
    let scale = g.sigma_r.max(1.0);
    g.sigma_r1 <= RANK_REL_TOL * scale
}

/// The uniform rectangular bound with free constants `alpha, alpha', beta,
/// beta'`. When `X` is numerically rank `r` the `beta` conditions drop and
/// `delta = alpha * alpha'`.
pub fn bound_uniform_rect(
    inst: &PerturbationInstance,
    alpha: f64,
    alpha_p: f64,
    beta: f64,
    beta_p: f64,
) -> Result<BoundReport> {
    for (name, v) in [
        ("alpha", alpha),
        ("alpha_p", alpha_p),
        ("beta", beta),
        ("beta_p", beta_p),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
    }
    let g = geometry(inst)?;
    let c = uniform_constants(inst, &g);
    let rank_r = is_effectively_rank_r(&g);
    let delta = if rank_r {
        alpha * alpha_p
    } else {
        (alpha + beta) * (alpha_p + beta_p)
    };
    if delta >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "delta = {delta} must be < 1"
        )));
    }

    let mut preconditions = IndexMap::new();
    preconditions.insert("sigma_r_ge_2_norm_e".into(), g.sigma_r >= 2.0 * g.e_spectral);
    preconditions.insert(
        "sigma_r_alpha_noise_left".into(),
        g.sigma_r >= (2.0 / alpha) * c.c_eu,
    );
    preconditions.insert(
        "sigma_r_alpha_noise_right".into(),
        g.sigma_r >= (2.0 / alpha_p) * c.c_ev,
    );
    if !rank_r {
        preconditions.insert(
            "sigma_r_beta_signal_left".into(),
            g.sigma_r >= (2.0 / beta) * c.c_xu,
        );
        preconditions.insert(
            "sigma_r_beta_signal_right".into(),
            g.sigma_r >= (2.0 / beta_p) * c.c_xv,
        );
    }

    let e = inst.e().as_dmatrix();
    let et = e.transpose();
    let t1 = 2.0 * two_to_inf_norm(&perp_left_range_right(&g.u, &g.v, e)) / g.sigma_r;
    let t2 = 2.0 * two_to_inf_norm(&perp_left_range_right(&g.v, &g.u, &et)) / g.sigma_r;
    let t3 = g.sin_theta_u * g.sin_theta_u * two_to_inf_norm(g.u.as_dmatrix());
    let t4 = g.sin_theta_v * g.sin_theta_v * two_to_inf_norm(g.v.as_dmatrix());

    let mut terms = IndexMap::new();
    terms.insert("noise_in_range_left".into(), t1);
    terms.insert("noise_in_range_right".into(), t2);
    terms.insert("second_order_left".into(), t3);
    terms.insert("second_order_right".into(), t4);
    terms.insert("delta".into(), delta);

    let rhs = t1 + t2 + t3 + t4;
    let lhs = (1.0 - delta) * g.lhs_two_to_inf;
    Ok(BoundReport {
        bound_id: "uniform_rectangular".into(),
        lhs,
        rhs,
        slack: rhs - lhs,
        preconditions,
        terms,
    })
}

/// Grid search over the free constants (step `0.05`), returning the feasible
/// report with the smallest right side; falls back to the most permissive
/// grid point when nothing is feasible.
pub fn bound_uniform_rect_auto(inst: &PerturbationInstance, step: f64) -> Result<BoundReport> {
    let g = geometry(inst)?;
    let rank_r = is_effectively_rank_r(&g);
    let grid: Vec<f64> = {
        let mut v = Vec::new();
        let mut t = step;
        while t < 1.0 - 1e-12 {
            v.push(t);
            t += step;
        }
        v
    };
    let mut best: Option<BoundReport> = None;
    let mut fallback: Option<BoundReport> = None;
    for &a in &grid {
        for &ap in &grid {
            let betas: Vec<(f64, f64)> = if rank_r {
                vec![(step, step)]
            } else {
                grid.iter()
                    .flat_map(|&b| grid.iter().map(move |&bp| (b, bp)))
                    .collect()
            };
            for (b, bp) in betas {
                let delta = if rank_r { a * ap } else { (a + b) * (ap + bp) };
                if delta >= 1.0 {
                    continue;
                }
                let report = bound_uniform_rect(inst, a, ap, b, bp)?;
                if report.preconditions_met() {
                    if best.as_ref().is_none_or(|r| report.rhs < r.rhs) {
                        best = Some(report);
                    }
                } else if fallback.is_none() {
                    fallback = Some(report);
                }
            }
        }
    }
    best.or(fallback)
        .ok_or_else(|| Error::InvalidArgument("empty feasibility grid".into()))
}

/// The low-rank corollary: requires `X` to be numerically rank `r`.
pub fn bound_low_rank(
    inst: &PerturbationInstance,
    alpha: f64,
    alpha_p: f64,
) -> Result<BoundReport> {
    if !(alpha > 0.0 && alpha_p > 0.0) {
        return Err(Error::InvalidArgument("alpha values must be positive".into()));
    }
    let delta = alpha * alpha_p;
    if delta >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "delta = {delta} must be < 1"
        )));
    }
    let g = geometry(inst)?;
    let c = uniform_constants(inst, &g);
    let e = inst.e().as_dmatrix();

    let mut preconditions = IndexMap::new();
    preconditions.insert("x_has_rank_r".into(), is_effectively_rank_r(&g));
    preconditions.insert("sigma_r_ge_2_norm_e".into(), g.sigma_r >= 2.0 * g.e_spectral);
    preconditions.insert(
        "sigma_r_alpha_noise_left".into(),
        g.sigma_r >= (2.0 / alpha) * c.c_eu,
    );
    preconditions.insert(
        "sigma_r_alpha_noise_right".into(),
        g.sigma_r >= (2.0 / alpha_p) * c.c_ev,
    );

    let e_row_col = matrix_norm(e, NormKind::One).max(matrix_norm(e, NormKind::Infinity));
    let frame_max = two_to_inf_norm(g.u.as_dmatrix()).max(two_to_inf_norm(g.v.as_dmatrix()));
    let rhs = 12.0 * e_row_col / g.sigma_r * frame_max;

    let mut terms = IndexMap::new();
    terms.insert("noise_row_col_norm".into(), e_row_col);
    terms.insert("frame_two_to_inf_max".into(), frame_max);
    terms.insert("delta".into(), delta);

    let lhs = (1.0 - delta) * g.lhs_two_to_inf;
    Ok(BoundReport {
        bound_id: "low_rank_corollary".into(),
        lhs,
        rhs,
        slack: rhs - lhs,
        preconditions,
        terms,
    })
}

/// The entrywise eigenvector bound for symmetric rank-`r` signal matrices.
pub fn bound_entrywise_symmetric(inst: &PerturbationInstance) -> Result<BoundReport> {
    if !inst.is_symmetric() {
        return Err(Error::NotSymmetric {
            asymmetry: inst.x().asymmetry().unwrap_or(f64::INFINITY),
            tol: SYM_TOL,
        });
    }
    let r = inst.rank();
    let k = inst.x().rows();
    let probe = (r + 1).min(k);
    let (_, lam_probe) = top_sym_eigenpairs(inst.x(), probe)?;
    let lam_r = lam_probe[r - 1].abs();
    let lam_r1 = if probe > r { lam_probe[r].abs() } else { 0.0 };
    let (u, _) = top_sym_eigenpairs(inst.x(), r)?;
    let (uhat, _) = top_sym_eigenpairs(inst.xhat(), r)?;
    let w = align(&u, &uhat)?.w;
    let lhs = two_to_inf_norm(&(uhat.as_dmatrix() - u.as_dmatrix() * w.as_dmatrix()));

    let e_inf = matrix_norm(inst.e().as_dmatrix(), NormKind::Infinity);
    let mut preconditions = IndexMap::new();
    preconditions.insert("x_has_rank_r".into(), lam_r1 <= RANK_REL_TOL * lam_r.max(1.0));
    preconditions.insert("lambda_r_ge_4_inf_norm_e".into(), lam_r >= 4.0 * e_inf);

    let rhs = 14.0 * (e_inf / lam_r) * two_to_inf_norm(u.as_dmatrix());
    let mut terms = IndexMap::new();
    terms.insert("noise_inf_norm".into(), e_inf);
    terms.insert("abs_lambda_r".into(), lam_r);
    terms.insert("frame_two_to_inf".into(), two_to_inf_norm(u.as_dmatrix()));

    Ok(BoundReport {
        bound_id: "entrywise_symmetric".into(),
        lhs,
        rhs,
        slack: rhs - lhs,
        preconditions,
        terms,
    })
}

/// Eigenvalues of both matrices in signed descending order plus the block
/// eigenvector frames for indices `r..=s` (1-based).
fn dk_frames(
    x: &DenseMatrix,
    xhat: &DenseMatrix,
    r: usize,
    s: usize,
) -> Result<(Vec<f64>, OrthonormalFrame, OrthonormalFrame)> {
    let p = x.rows();
    if r < 1 || s < r || s > p {
        return Err(Error::InvalidArgument(format!(
            "block indices must satisfy 1 <= r <= s <= {p}, got ({r}, {s})"
        )));
    }
    let eig = sym_eigen(x, EigenOrder::SignedDescending)?;
    let eig_hat = sym_eigen(xhat, EigenOrder::SignedDescending)?;
    let block = |vectors: &DMatrix<f64>| -> Result<OrthonormalFrame> {
        OrthonormalFrame::new(DenseMatrix::from_dmatrix(
            vectors.columns(r - 1, s - r + 1).into_owned(),
        )?)
    };
    Ok((
        eig.values.clone(),
        block(&eig.vectors)?,
        block(&eig_hat.vectors)?,
    ))
}

/// The sin-theta right side `2 |E|_2 / delta_gap` for the eigenvalue block
/// `r..=s` (1-based, signed descending order). `lambda_0 = +inf` and
/// `lambda_{p+1} = -inf` by convention.
pub fn davis_kahan(x: &DenseMatrix, xhat: &DenseMatrix, r: usize, s: usize) -> Result<f64> {
    let (values, _, _) = dk_frames(x, xhat, r, s)?;
    let p = values.len();
    let upper = if r == 1 {
        f64::INFINITY
    } else {
        values[r - 2] - values[r - 1]
    };
    let lower = if s == p {
        f64::INFINITY
    } else {
        values[s - 1] - values[s]
    };
    let gap = upper.min(lower);
    if gap <= 0.0 || gap.is_nan() {
        return Err(Error::ZeroGap { gap });
    }
    let e = xhat.as_dmatrix() - x.as_dmatrix();
    Ok(2.0 * spectral_norm(&e) / gap)
}

/// `|sin Theta|_2` between the `r..=s` eigenvector blocks of the two
/// matrices, for checking the sin-theta bound.
pub fn davis_kahan_sin_theta(
    x: &DenseMatrix,
    xhat: &DenseMatrix,
    r: usize,
    s: usize,
) -> Result<f64> {
    let (_, frame, frame_hat) = dk_frames(x, xhat, r, s)?;
    Ok(sin_theta_norms(&frame, &frame_hat)?.0)
}

/// The covariance-estimation right side with its absolute constant supplied
/// by the caller; used for scaling trends, not absolute verification.
pub fn covariance_rhs(model: &crate::models::CovarianceModel, n: usize, big_c: f64) -> f64 {
    let d = model.d as f64;
    let r = model.r as f64;
    let sigma_r = model.spike_values[model.r - 1];
    let sigma_r1 = model.bulk_value;
    let complexity = model.effective_rank().max(d.ln()) / n as f64;
    let first = complexity.sqrt() * (model.nu() * r / sigma_r.sqrt() + sigma_r1 / sigma_r);
    let second = complexity * ((sigma_r1 / sigma_r).sqrt() + (r / d).sqrt());
    big_c * (first + second)
}

/// Weyl slack `sigma_r(Xhat) - (sigma_r(X) - |E|_2)`; nonnegative up to
/// floating error on every instance.
pub fn weyl_slack(inst: &PerturbationInstance) -> Result<f64> {
    let r = inst.rank();
    let (_, sig, _) = top_singular_triplets(inst.x(), r)?;
    let (_, sig_hat, _) = top_singular_triplets(inst.xhat(), r)?;
    let e_spec = spectral_norm(inst.e().as_dmatrix());
    Ok(sig_hat[r - 1] - (sig[r - 1] - e_spec))
}
