//! Per-realization resolvents `G(z) = (H − z)^{-1}`, exact Ward-identity
//! validation, T-variables, and the Monte Carlo ensemble engine.
//!
//! The engine hands each sample index its own seeded stream and reduces
//! per-sample results in fixed index order with pairwise summation, so a
//! run is bitwise reproducible for any worker count.

use crate::mfield::{KernelSet, SpectralPoint};
use crate::models::{assemble, HamiltonianSample, ModelSpec};
use crate::stats::EnsembleAccumulator;
use crate::{CMat, Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

/// One resolvent realization.
#[derive(Clone, Debug)]
pub struct ResolventSample {
    pub g: CMat,
    pub z: SpectralPoint,
    /// `‖(H−z)G − I‖_max`.
    pub residual: f64,
}

/// Dense solve of `(H − z) G = I`. Works at `η = 0` as well, where the
/// inverse exists almost surely; numerically singular draws surface as an
/// error (callers typically resample).
pub fn resolvent(h: &HamiltonianSample, zp: SpectralPoint) -> Result<ResolventSample> {
    let n = h.h.nrows();
    let mut a = h.h.clone();
    let z = zp.z();
    for i in 0..n {
        a[(i, i)] -= z;
    }
    let g = a
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::Singular("H − z"))?;
    let mut id = &a * &g;
    for i in 0..n {
        id[(i, i)] -= 1.0;
    }
    let residual = id.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let scale = g.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if !residual.is_finite() || residual > 1e-8 * (1.0 + scale) {
        return Err(Error::Singular("H − z (residual check)"));
    }
    Ok(ResolventSample { g, z: zp, residual })
}

/// Resolvent through a spectral decomposition `G = U diag(1/(λ_k − z)) U†`;
/// the cross-validation partner of the dense-solve path, and the cheaper
/// route when several spectral points share one realization.
pub fn resolvent_from_spectrum(evals: &[f64], evecs: &CMat, zp: SpectralPoint) -> CMat {
    let z = zp.z();
    let mut scaled = evecs.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        let f = 1.0 / (evals[k] - z);
        for v in col.iter_mut() {
            *v *= f;
        }
    }
    scaled * evecs.adjoint()
}

/// Max relative defect of the Ward identity at `z`:
/// `Σ_x conj(G_{xy'}) G_{xy} = (G_{y'y} − conj(G_{yy'}))/(2iη)` over all
/// `(y, y')`, which contains the diagonal form
/// `Σ_x |G_{xy}|² = Im G_yy / η`.
pub fn ward_check(g: &CMat, zp: SpectralPoint) -> f64 {
    assert!(zp.eta > 0.0, "Ward identity requires η > 0");
    let gram = g.adjoint() * g; // (G†G)_{y'y} = Σ_x conj(G_{xy'}) G_{xy}
    let two_i_eta = Complex64::new(0.0, 2.0 * zp.eta);
    let n = g.nrows();
    let mut worst = 0.0f64;
    for yp in 0..n {
        for y in 0..n {
            let rhs = (g[(yp, y)] - g[(y, yp)].conj()) / two_i_eta;
            let rel = (gram[(yp, y)] - rhs).norm() / (1.0 + rhs.norm());
            worst = worst.max(rel);
        }
    }
    worst
}

/// `T_{x,y₁y₂} = Σ_α S_{xα} G_{αy₁} conj(G_{αy₂})`.
pub fn t_variable(g: &CMat, s_full: &crate::RMat, x: usize, y1: usize, y2: usize) -> Complex64 {
    let n = g.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for alpha in 0..n {
        let w = s_full[(x, alpha)];
        if w != 0.0 {
            acc += w * g[(alpha, y1)] * g[(alpha, y2)].conj();
        }
    }
    acc
}

/// All `T_{x,y₁y₂}` for fixed `(y₁, y₂)` together with the
/// zero-mode-removed variant `T̊ = P⊥T` (the x-average subtracted).
pub fn t_profile(
    g: &CMat,
    s_full: &crate::RMat,
    y1: usize,
    y2: usize,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = g.nrows();
    let t: Vec<Complex64> = (0..n).map(|x| t_variable(g, s_full, x, y1, y2)).collect();
    let mean = t.iter().sum::<Complex64>() / n as f64;
    let ring = t.iter().map(|v| v - mean).collect();
    (t, ring)
}

/// Deterministic Monte Carlo over sample indices `0..n_samples`.
///
/// The observable must be a pure function of the realization; a failure
/// skips the sample and is counted. `workers = 0` uses all cores. The
/// result is independent of the worker count.
pub fn ensemble_run<F>(
    spec: &ModelSpec,
    zp: SpectralPoint,
    name: &str,
    width: usize,
    n_samples: u64,
    workers: usize,
    observable: F,
) -> Result<EnsembleAccumulator>
where
    F: Fn(&HamiltonianSample, &ResolventSample) -> Result<Vec<f64>> + Sync,
{
    let eval = |i: u64| -> Option<Vec<f64>> {
        let h = assemble(spec, i);
        let g = resolvent(&h, zp).ok()?;
        let v = observable(&h, &g).ok()?;
        debug_assert_eq!(v.len(), width);
        Some(v)
    };
    let samples: Vec<Option<Vec<f64>>> = if workers == 1 {
        (0..n_samples).map(eval).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| (0..n_samples).into_par_iter().map(eval).collect())
    };
    Ok(EnsembleAccumulator::from_samples(name, spec.seed, width, &samples))
}

/// Local-law diagnostics of one ensemble at one spectral point.
#[derive(Clone, Debug, Serialize)]
pub struct LocalLawReport {
    pub n_samples: u64,
    pub failures: u64,
    /// Mean, stderr, and max of the per-sample `max_xy |G − M|`.
    pub max_gm_mean: f64,
    pub max_gm_stderr: f64,
    pub max_gm_max: f64,
    /// Theoretical fluctuation scale `𝔥_λ^{1/2}`.
    pub h_lambda_sqrt: f64,
    /// Mean/stderr/max of `max_xy T_xy/(B_xy + (Nη)^{-1})`.
    pub t_ratio_mean: f64,
    pub t_ratio_stderr: f64,
    pub t_ratio_max: f64,
    /// Histogram of per-sample `max|G−M|` over 16 equal bins on `[0, hist_hi]`.
    pub hist_hi: f64,
    pub hist: Vec<u64>,
    /// Monte Carlo mean of `T_xy` by block distance, with the leading
    /// diffusive theory `|m|²ϑ` at the same distances.
    pub distances: Vec<i64>,
    pub t_profile_mean: Vec<f64>,
    pub t_profile_stderr: Vec<f64>,
    pub t_profile_theory: Vec<f64>,
}

/// Run the local-law observable suite per (W, n, λ, z).
pub fn local_law_stats(
    spec: &ModelSpec,
    zp: SpectralPoint,
    ks: &KernelSet,
    n_samples: u64,
    workers: usize,
) -> Result<LocalLawReport> {
    let lat = spec.lat;
    let n = lat.n_sites();
    let table = lat.site_block_table();
    let m_dense = ks.matrix_limit.to_dense();
    let s_full = crate::mfield::variance_matrix(spec).to_dense();
    let beta = crate::models::scale_params(spec)
        .map(|p| p.beta)
        .unwrap_or(f64::NAN);
    let h_sqrt = crate::models::scale_params(spec)
        .map(|p| p.h_lambda.sqrt())
        .unwrap_or(f64::NAN);
    let w = lat.block_side();
    let d = lat.dim();
    let inv_neta = 1.0 / (n as f64 * zp.eta);

    let mut distances: Vec<i64> = (0..lat.n_blocks()).map(|b| lat.block_index_norm(b)).collect();
    distances.sort_unstable();
    distances.dedup();
    let dist_of_disp: Vec<usize> = (0..lat.n_blocks())
        .map(|b| distances.binary_search(&lat.block_index_norm(b)).unwrap())
        .collect();
    let n_dist = distances.len();

    let width = 2 + n_dist;
    let acc = ensemble_run(spec, zp, "local_law", width, n_samples, workers, |_, gs| {
        let g = &gs.g;
        let mut max_gm = 0.0f64;
        for x in 0..n {
            for y in 0..n {
                max_gm = max_gm.max((g[(x, y)] - m_dense[(x, y)]).norm());
            }
        }
        let gsq = crate::RMat::from_fn(n, n, |a, b| g[(a, b)].norm_sqr());
        let t = &s_full * &gsq; // T_xy
        let mut t_ratio = 0.0f64;
        let mut prof = vec![0.0f64; n_dist];
        let mut cnt = vec![0u64; n_dist];
        for x in 0..n {
            for y in 0..n {
                let disp = lat.block_displacement(table[x], table[y]);
                let bxy = crate::mfield::b_profile_unchecked(
                    beta,
                    w,
                    d,
                    lat.bracket(lat.decode(x), lat.decode(y)),
                );
                let scale = if bxy.is_finite() { bxy + inv_neta } else { inv_neta };
                t_ratio = t_ratio.max(t[(x, y)] / scale);
                let k = dist_of_disp[disp];
                prof[k] += t[(x, y)];
                cnt[k] += 1;
            }
        }
        let mut out = vec![max_gm, t_ratio];
        for k in 0..n_dist {
            out.push(prof[k] / cnt[k] as f64);
        }
        Ok(out)
    })?;

    // second pass for extremes and the histogram (cheap at desk scale,
    // same deterministic sample streams)
    let raw: Vec<Option<Vec<f64>>> = (0..n_samples)
        .map(|i| {
            let h = assemble(spec, i);
            let g = resolvent(&h, zp).ok()?;
            let mut max_gm = 0.0f64;
            for x in 0..n {
                for y in 0..n {
                    max_gm = max_gm.max((g.g[(x, y)] - m_dense[(x, y)]).norm());
                }
            }
            Some(vec![max_gm])
        })
        .collect();
    let maxima: Vec<f64> = raw.iter().flatten().map(|v| v[0]).collect();
    let max_gm_max = maxima.iter().copied().fold(0.0, f64::max);
    let hist_hi = max_gm_max.max(1e-300);
    let mut hist = vec![0u64; 16];
    for &v in &maxima {
        let k = ((v / hist_hi) * 16.0).min(15.0) as usize;
        hist[k] += 1;
    }

    let stderr = acc.stderr();
    let m2 = ks.m.m.norm_sqr();
    let wd = lat.block_volume() as f64;
    let mut theory = vec![0.0; n_dist];
    let mut seen = vec![false; n_dist];
    for b in 0..lat.n_blocks() {
        let k = dist_of_disp[b];
        if !seen[k] {
            theory[k] = m2 * ks.theta_row[b] / wd;
            seen[k] = true;
        }
    }

    Ok(LocalLawReport {
        n_samples: acc.count,
        failures: acc.failures,
        max_gm_mean: acc.mean[0],
        max_gm_stderr: stderr[0],
        max_gm_max,
        h_lambda_sqrt: h_sqrt,
        t_ratio_mean: acc.mean[1],
        t_ratio_stderr: stderr[1],
        t_ratio_max: acc.mean[1] + 3.0 * stderr[1],
        hist_hi,
        hist,
        distances,
        t_profile_mean: acc.mean[2..].to_vec(),
        t_profile_stderr: stderr[2..].to_vec(),
        t_profile_theory: theory,
    })
}
