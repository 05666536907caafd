//! Monte Carlo experiment drivers. Every experiment derives replicate
//! streams as children of the base seed, evaluates its inequalities, and
//! runs the decomposition identity as a ride-along exactness check.

use indexmap::IndexMap;
use nalgebra::DMatrix;
use perturb_core::bounds::bound_entrywise_symmetric;
use perturb_core::decomposition::{
    decompose, reconstruction_error, PerturbationInstance, Side, Variant,
};
use perturb_core::matrix::{
    matrix_norm, spectral_norm, top_singular_triplets, two_to_inf_norm, DenseMatrix, NormKind,
};
use perturb_core::models::{
    gen_gaussian_noise, gen_low_rank, gen_rho_sbm_pair, gen_spiked_covariance, omnibus_instance,
    sample_empirical_covariance, SbmModel, SeededStream,
};
use perturb_core::procrustes::align;
use perturb_core::subspace::random_orthonormal;

use crate::config::{
    CovarianceParams, DecompositionSuiteParams, EntrywiseParams, ExperimentConfig,
    ExperimentKind, LowrankRecoveryParams, NormSuiteParams, OmnibusParams,
};
use crate::relations;
use crate::report::{log_log_slope, ExperimentReport, ReportRow, VIOLATION_TOL};
use crate::HarnessError;

/// Decomposition identity tolerance, enforced on every generated instance.
pub const RECON_TOL: f64 = 1e-10;

pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let mut report = match &config.kind {
        ExperimentKind::Covariance(p) => run_covariance(p, config.replicates, config.base_seed),
        ExperimentKind::LowrankRecovery(p) => {
            run_lowrank_recovery(p, config.replicates, config.base_seed)
        }
        ExperimentKind::Omnibus(p) => run_omnibus(p, config.replicates, config.base_seed),
        ExperimentKind::Entrywise(p) => run_entrywise(p, config.replicates, config.base_seed),
        ExperimentKind::DecompositionSuite(p) => {
            run_decomposition_suite(p, config.replicates, config.base_seed)
        }
        ExperimentKind::NormSuite(p) => run_norm_suite(p, config.replicates, config.base_seed),
    }?;
    report.seal();
    Ok(report)
}

fn core_err(e: perturb_core::Error) -> HarnessError {
    HarnessError::Run(e.to_string())
}

/// Stream for replicate `rep` at grid point `grid`; injective across the
/// grid for grids up to 2^20 points.
fn replicate_stream(base_seed: u64, grid: usize, rep: usize) -> SeededStream {
    SeededStream::new(base_seed).child(((grid as u64) << 20) | rep as u64)
}

fn push_row(
    report: &mut ExperimentReport,
    replicate: usize,
    seed_stream: &SeededStream,
    grid_point: String,
    precondition_failed: bool,
    metrics: IndexMap<String, f64>,
) {
    report.rows.push(ReportRow {
        replicate,
        seed: seed_stream.seed(),
        grid_point,
        precondition_failed,
        metrics,
    });
}

/// Aligned-difference norms for the top-r eigenframes of a symmetric
/// instance, plus the identity ride-along.
fn symmetric_frame_errors(
    inst: &PerturbationInstance,
) -> Result<(f64, f64, f64), HarnessError> {
    let terms = decompose(inst, Variant::Symmetric4, Side::Left).map_err(core_err)?;
    let rerr = reconstruction_error(&terms);
    Ok((
        two_to_inf_norm(&terms.lhs),
        spectral_norm(&terms.lhs),
        rerr,
    ))
}

pub fn run_covariance(
    params: &CovarianceParams,
    replicates: usize,
    base_seed: u64,
) -> Result<ExperimentReport, HarnessError> {
    let mut report = ExperimentReport::new("covariance", base_seed, replicates);
    let mut medians: Vec<(f64, f64)> = Vec::new();
    for (gi, &d) in params.d_grid.iter().enumerate() {
        let grid_point = format!("d={d}");
        // Spike strengths proportional to d/r, mildly separated so the
        // signal frame is unique.
        let lambdas: Vec<f64> = (0..params.r)
            .map(|i| {
                params.spike_scale * (d as f64 / params.r as f64)
                    * (1.0 + 0.1 * (params.r - 1 - i) as f64)
            })
            .collect();
        for rep in 0..replicates {
            let mut stream = replicate_stream(base_seed, gi, rep);
            let model = gen_spiked_covariance(d, params.r, &lambdas, params.bulk_c, &mut stream)
                .map_err(core_err)?;
            let inst =
                sample_empirical_covariance(&model, params.n, &mut stream).map_err(core_err)?;
            let (lhs_2inf, lhs_spec, rerr) = symmetric_frame_errors(&inst)?;
            if rerr > RECON_TOL {
                report.violation_count += 1;
            }
            let mut metrics = IndexMap::new();
            metrics.insert("lhs_two_to_inf".into(), lhs_2inf);
            metrics.insert("lhs_spectral".into(), lhs_spec);
            metrics.insert("ratio".into(), lhs_2inf / lhs_spec);
            metrics.insert("reconstruction_error".into(), rerr);
            push_row(&mut report, rep, &stream, grid_point.clone(), false, metrics);
        }
        let median = report
            .median_metric(&grid_point, "ratio")
            .expect("rows exist");
        report
            .aggregates
            .insert(format!("median_ratio[{grid_point}]"), median);
        medians.push((d as f64, median));
    }
    if let Some(slope) = log_log_slope(&medians) {
        report.aggregates.insert("ratio_log_slope".into(), slope);
    }
    Ok(report)
}

pub fn run_lowrank_recovery(
    params: &LowrankRecoveryParams,
    replicates: usize,
    base_seed: u64,
) -> Result<ExperimentReport, HarnessError> {
    let mut report = ExperimentReport::new("lowrank_recovery", base_seed, replicates);
    let grid_point = format!("p1={},p2={}", params.p1, params.p2);
    let sigma_r = params.sigma_scale * params.p2 as f64 / (params.p1 as f64).sqrt();
    let sigmas: Vec<f64> = (0..params.r)
        .map(|i| sigma_r * (1.0 + 0.1 * (params.r - 1 - i) as f64))
        .collect();
    let mut small_ratio = 0usize;
    for rep in 0..replicates {
        let mut stream = replicate_stream(base_seed, 0, rep);
        let (x, _, _) =
            gen_low_rank(params.p1, params.p2, params.r, &sigmas, &mut stream).map_err(core_err)?;
        let raw = gen_gaussian_noise(params.p1, params.p2, &mut stream).map_err(core_err)?;
        let e =
            DenseMatrix::from_dmatrix(raw.as_dmatrix() * params.noise_scale).map_err(core_err)?;
        let inst = PerturbationInstance::new(x, e, params.r).map_err(core_err)?;

        // Right-frame quantities via the transposed instance.
        let swapped = inst.transposed().map_err(core_err)?;
        let (v, _, _) = top_singular_triplets(swapped.x(), params.r).map_err(core_err)?;
        let (vhat, _, _) = top_singular_triplets(swapped.xhat(), params.r).map_err(core_err)?;
        let w = align(&v, &vhat).map_err(core_err)?.w;
        let diff = vhat.as_dmatrix() - v.as_dmatrix() * w.as_dmatrix();
        let resid_2inf = two_to_inf_norm(&diff);
        let resid_spec = spectral_norm(&diff);
        let (lower, _) =
            perturb_core::procrustes::two_to_inf_lower_chain(&v, &vhat).map_err(core_err)?;

        let terms = decompose(&inst, Variant::Rect4, Side::Right).map_err(core_err)?;
        let rerr = reconstruction_error(&terms);
        let mut failed_checks = 0;
        if lower > resid_2inf * (1.0 + 1e-12) + 1e-12 {
            failed_checks += 1;
        }
        if rerr > RECON_TOL {
            failed_checks += 1;
        }
        report.violation_count += failed_checks;
        let ratio = resid_2inf / resid_spec;
        if ratio <= 0.25 {
            small_ratio += 1;
        }
        let mut metrics = IndexMap::new();
        metrics.insert("resid_two_to_inf".into(), resid_2inf);
        metrics.insert("resid_spectral".into(), resid_spec);
        metrics.insert("lower_bound".into(), lower);
        metrics.insert("ratio".into(), ratio);
        metrics.insert("reconstruction_error".into(), rerr);
        push_row(&mut report, rep, &stream, grid_point.clone(), false, metrics);
    }
    report.aggregates.insert(
        "small_ratio_fraction".into(),
        small_ratio as f64 / replicates as f64,
    );
    Ok(report)
}

pub fn run_omnibus(
    params: &OmnibusParams,
    replicates: usize,
    base_seed: u64,
) -> Result<ExperimentReport, HarnessError> {
    let mut report = ExperimentReport::new("omnibus", base_seed, replicates);
    let kappa = params.lambda_block.len();
    let flat: Vec<f64> = params
        .lambda_block
        .iter()
        .flat_map(|row| row.iter().copied())
        .collect();
    let lambda = DenseMatrix::from_row_slice(kappa, kappa, &flat).map_err(core_err)?;
    let mut medians: Vec<(f64, f64)> = Vec::new();
    for (gi, &n) in params.n_grid.iter().enumerate() {
        let grid_point = format!("n={n}");
        // Balanced blocks; remainder vertices go to the last block.
        let mut block_sizes = vec![n / kappa; kappa];
        block_sizes[kappa - 1] += n - block_sizes.iter().sum::<usize>();
        let model =
            SbmModel::new(block_sizes, lambda.clone(), params.rho).map_err(core_err)?;
        let r = model.p_rank().map_err(core_err)?;
        let delta = model.max_expected_degree().map_err(core_err)?;
        for rep in 0..replicates {
            let mut stream = replicate_stream(base_seed, gi, rep);
            let pair = gen_rho_sbm_pair(&model, &mut stream).map_err(core_err)?;
            let inst = omnibus_instance(&pair, r).map_err(core_err)?;
            let (lhs_2inf, lhs_spec, rerr) = symmetric_frame_errors(&inst)?;
            let mut failed = 0;
            if rerr > RECON_TOL {
                failed += 1;
            }
            if lhs_2inf > lhs_spec * (1.0 + 1e-12) + 1e-12 {
                failed += 1;
            }
            report.violation_count += failed;
            let mut metrics = IndexMap::new();
            metrics.insert("lhs_two_to_inf".into(), lhs_2inf);
            metrics.insert("lhs_spectral".into(), lhs_spec);
            metrics.insert("max_expected_degree".into(), delta);
            metrics.insert("reconstruction_error".into(), rerr);
            push_row(&mut report, rep, &stream, grid_point.clone(), false, metrics);
        }
        let median = report
            .median_metric(&grid_point, "lhs_two_to_inf")
            .expect("rows exist");
        report
            .aggregates
            .insert(format!("median_lhs[{grid_point}]"), median);
        medians.push((delta, median));
    }
    if let Some(slope) = log_log_slope(&medians) {
        report.aggregates.insert("lhs_log_slope".into(), slope);
    }
    Ok(report)
}

pub fn run_entrywise(
    params: &EntrywiseParams,
    replicates: usize,
    base_seed: u64,
) -> Result<ExperimentReport, HarnessError> {
    let mut report = ExperimentReport::new("entrywise", base_seed, replicates);
    let r = params.lambdas.len();
    let lam_r = params.lambdas[r - 1].abs();
    let grid_point = format!("p={}", params.p);
    for rep in 0..replicates {
        let mut stream = replicate_stream(base_seed, 0, rep);
        let u = random_orthonormal(params.p, r, &mut stream).map_err(core_err)?;
        let mut scaled = u.as_dmatrix().clone();
        for j in 0..r {
            for i in 0..params.p {
                scaled[(i, j)] *= params.lambdas[j];
            }
        }
        let x = DenseMatrix::from_dmatrix(&scaled * u.as_dmatrix().transpose())
            .map_err(core_err)?;
        let raw = gen_gaussian_noise(params.p, params.p, &mut stream).map_err(core_err)?;
        let sym = (raw.as_dmatrix() + raw.as_dmatrix().transpose()) * 0.5;
        let e = if params.noise_ratio == 0.0 {
            DMatrix::zeros(params.p, params.p)
        } else {
            // The bound evaluator re-estimates lambda_r numerically, so at
            // the exact boundary the precondition would flicker on rounding;
            // back off by a relative margin larger than that estimation error.
            let target = params.noise_ratio * lam_r * (1.0 - 1e-12);
            let mut e = &sym * (target / matrix_norm(&sym, NormKind::Infinity));
            let got = matrix_norm(&e, NormKind::Infinity);
            if got > target {
                e *= target / got * (1.0 - 1e-14);
            }
            e
        };
        let e = DenseMatrix::from_dmatrix(e).map_err(core_err)?;
        let inst = PerturbationInstance::new(x, e, r).map_err(core_err)?;
        let bound = bound_entrywise_symmetric(&inst).map_err(core_err)?;
        let checked = bound.preconditions_met();
        let mut failed = 0;
        if checked && bound.slack < VIOLATION_TOL {
            failed += 1;
        }
        let terms = decompose(&inst, Variant::Symmetric4, Side::Left).map_err(core_err)?;
        let rerr = reconstruction_error(&terms);
        if rerr > RECON_TOL {
            failed += 1;
        }
        report.violation_count += failed;
        let mut metrics = IndexMap::new();
        metrics.insert("lhs".into(), bound.lhs);
        metrics.insert("rhs".into(), bound.rhs);
        metrics.insert("slack".into(), bound.slack);
        metrics.insert("reconstruction_error".into(), rerr);
        push_row(&mut report, rep, &stream, grid_point.clone(), !checked, metrics);
    }
    Ok(report)
}

/// Uniform draw in `[lo, hi]` from the stream.
fn draw_size(stream: &mut SeededStream, lo: usize, hi: usize) -> usize {
    lo + (stream.uniform() * ((hi - lo + 1) as f64)) as usize
}

pub fn run_decomposition_suite(
    params: &DecompositionSuiteParams,
    replicates: usize,
    base_seed: u64,
) -> Result<ExperimentReport, HarnessError> {
    let mut report = ExperimentReport::new("decomposition_suite", base_seed, replicates);
    let mut worst: f64 = 0.0;
    for rep in 0..replicates {
        let mut stream = replicate_stream(base_seed, 0, rep);
        let p1 = draw_size(&mut stream, 20, params.p_max);
        let p2 = draw_size(&mut stream, 15, params.p_max);
        let r = draw_size(&mut stream, 1, params.r_max.min(p1.min(p2) / 2));
        let sigmas: Vec<f64> = (0..r).map(|i| 10.0 + (r - 1 - i) as f64).collect();
        let (x, _, _) = gen_low_rank(p1, p2, r, &sigmas, &mut stream).map_err(core_err)?;
        let raw = gen_gaussian_noise(p1, p2, &mut stream).map_err(core_err)?;
        let e = DenseMatrix::from_dmatrix(
            raw.as_dmatrix() * (0.1 * sigmas[r - 1] / spectral_norm(raw.as_dmatrix())),
        )
        .map_err(core_err)?;
        let rect = PerturbationInstance::new(x, e, r).map_err(core_err)?;

        let p = draw_size(&mut stream, 20, params.p_max);
        let rs = draw_size(&mut stream, 1, params.r_max.min(p / 2));
        let u = random_orthonormal(p, rs, &mut stream).map_err(core_err)?;
        let mut scaled = u.as_dmatrix().clone();
        for j in 0..rs {
            let lam = if j % 2 == 0 {
                10.0 + (rs - 1 - j) as f64
            } else {
                -(9.0 + (rs - 1 - j) as f64)
            };
            for i in 0..p {
                scaled[(i, j)] *= lam;
            }
        }
        let xs = DenseMatrix::from_dmatrix(&scaled * u.as_dmatrix().transpose())
            .map_err(core_err)?;
        let raw = gen_gaussian_noise(p, p, &mut stream).map_err(core_err)?;
        let sym = (raw.as_dmatrix() + raw.as_dmatrix().transpose()) * 0.5;
        let es = DenseMatrix::from_dmatrix(&sym * (0.5 / spectral_norm(&sym))).map_err(core_err)?;
        let symmetric = PerturbationInstance::new(xs, es, rs).map_err(core_err)?;

        let mut metrics = IndexMap::new();
        let mut failed = 0;
        for variant in Variant::ALL {
            for side in [Side::Left, Side::Right] {
                let inst = if variant == Variant::Symmetric4 {
                    &symmetric
                } else {
                    &rect
                };
                let terms = decompose(inst, variant, side).map_err(core_err)?;
                let rerr = reconstruction_error(&terms);
                worst = worst.max(rerr);
                if rerr > RECON_TOL {
                    failed += 1;
                }
                metrics.insert(
                    format!("rerr_{}_{}", variant.label(), side.label()),
                    rerr,
                );
            }
        }
        report.violation_count += failed;
        push_row(&mut report, rep, &stream, "all_variants".into(), false, metrics);
    }
    report.aggregates.insert("worst_reconstruction_error".into(), worst);
    Ok(report)
}

pub fn run_norm_suite(
    params: &NormSuiteParams,
    replicates: usize,
    base_seed: u64,
) -> Result<ExperimentReport, HarnessError> {
    let mut report = ExperimentReport::new("norm_suite", base_seed, replicates);
    let mut total_violations = 0usize;
    for rep in 0..replicates {
        let mut stream = replicate_stream(base_seed, 0, rep);
        let p1 = draw_size(&mut stream, 1, params.max_dim);
        let p2 = draw_size(&mut stream, 1, params.max_dim);
        let p3 = draw_size(&mut stream, 1, params.max_dim);
        let q = draw_size(&mut stream, 1, params.max_dim);
        let a = gen_gaussian_noise(p1, p2, &mut stream).map_err(core_err)?;
        let b = gen_gaussian_noise(p2, p3, &mut stream).map_err(core_err)?;
        let c = gen_gaussian_noise(q, p1, &mut stream).map_err(core_err)?;
        let mut violated = relations::check_single(a.as_dmatrix());
        violated.extend(relations::check_products(
            a.as_dmatrix(),
            b.as_dmatrix(),
            c.as_dmatrix(),
        ));
        total_violations += violated.len();
        report.violation_count += violated.len();
        let mut metrics = IndexMap::new();
        metrics.insert("violated_relations".into(), violated.len() as f64);
        metrics.insert("p1".into(), p1 as f64);
        metrics.insert("p2".into(), p2 as f64);
        push_row(&mut report, rep, &stream, "assorted".into(), false, metrics);
    }
    report
        .aggregates
        .insert("total_relation_violations".into(), total_violations as f64);
    Ok(report)
}
