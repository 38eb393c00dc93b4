//! Eigen-decomposition and eigenvector statistics: delocalization
//! (sup-norms, participation ratios), flatness over box covers, the
//! deterministic trace bound behind eigenvector-mass concentration,
//! fractional-moment localization fits, and λ-sweep transition scans.

use crate::greens::resolvent_from_spectrum;
use crate::lattice::TorusLattice;
use crate::mfield::SpectralPoint;
use crate::models::{assemble, HamiltonianSample, ModelSpec};
use crate::stats::{weighted_line_fit, EnsembleAccumulator};
use crate::{CMat, Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

/// Full Hermitian eigen-decomposition with eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SpectrumSample {
    pub evals: Vec<f64>,
    /// Orthonormal eigenvectors, column `k` belonging to `evals[k]`.
    pub evecs: CMat,
    /// `max_k ‖H u_k − λ_k u_k‖₂`.
    pub residual: f64,
}

/// Diagonalize a Hermitian matrix, sort the spectrum, and record the
/// eigen-residual.
pub fn eigh(h: &CMat) -> Result<SpectrumSample> {
    let n = h.nrows();
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let evals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut evecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        evecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    let mut residual = 0.0f64;
    for k in 0..n {
        let u = evecs.column(k);
        let r = h * u - u * Complex64::new(evals[k], 0.0);
        residual = residual.max(r.norm());
    }
    if !residual.is_finite() || residual > 1e-8 * (1.0 + evals.iter().fold(0.0f64, |a, &b| a.max(b.abs()))) {
        return Err(Error::Singular("eigen-decomposition residual"));
    }
    Ok(SpectrumSample { evals, evecs, residual })
}

/// Indices of bulk eigenvalues: `{k : |λ_k| ≤ 2 − κ}`. Errors when the
/// window is empty.
pub fn bulk_indices(evals: &[f64], kappa: f64) -> Result<Vec<usize>> {
    if !(kappa > 0.0 && kappa < 2.0) {
        return Err(Error::InvalidParameter(format!("bulk window κ = {kappa} outside (0, 2)")));
    }
    let cut = 2.0 - kappa;
    let idx: Vec<usize> = evals
        .iter()
        .enumerate()
        .filter(|(_, &l)| l.abs() <= cut)
        .map(|(k, _)| k)
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyBulkWindow);
    }
    Ok(idx)
}

/// `‖u‖∞²` of one eigenvector column.
pub fn sup_norm_sq(evecs: &CMat, k: usize) -> f64 {
    evecs.column(k).iter().map(|c| c.norm_sqr()).fold(0.0, f64::max)
}

/// Participation ratio `1/Σ_x |u(x)|⁴` of a normalized vector; ranges from
/// 1 (one site) to N (flat).
pub fn participation_ratio(evecs: &CMat, k: usize) -> f64 {
    let p: f64 = evecs.column(k).iter().map(|c| c.norm_sqr().powi(2)).sum();
    1.0 / p
}

/// Sup-norm statistics over the bulk window.
#[derive(Clone, Debug, Serialize)]
pub struct SupNormStats {
    pub max: f64,
    pub mean: f64,
    pub per_k: Vec<(usize, f64)>,
    /// The comparison scale `η_*` of the run, when defined.
    pub eta_star: Option<f64>,
}

pub fn sup_norm_stats(
    spectrum: &SpectrumSample,
    kappa: f64,
    eta_star: Option<f64>,
) -> Result<SupNormStats> {
    let bulk = bulk_indices(&spectrum.evals, kappa)?;
    let per_k: Vec<(usize, f64)> = bulk
        .iter()
        .map(|&k| (k, sup_norm_sq(&spectrum.evecs, k)))
        .collect();
    let max = per_k.iter().map(|&(_, v)| v).fold(0.0, f64::max);
    let mean = per_k.iter().map(|&(_, v)| v).sum::<f64>() / per_k.len() as f64;
    Ok(SupNormStats { max, mean, per_k, eta_star })
}

/// The overlapping cover of the block torus by boxes of side `ell` with
/// centers spaced `ell/2` (rounding documented: a box centered at `c`
/// contains blocks `y` with `rep(y − c) ∈ [−⌊ell/2⌋, ell − ⌊ell/2⌋)`).
/// Each box is returned as the set of site indices it contains.
pub fn box_cover(lat: &TorusLattice, ell: i64) -> Result<Vec<Vec<usize>>> {
    let n = lat.blocks_per_side();
    if ell < 1 || ell > n {
        return Err(Error::BoxScaleTooLarge { ell: ell.max(0) as usize, n: n as usize });
    }
    let d = lat.dim();
    let stride = (ell as f64 / 2.0).max(1.0) as i64;
    let centers_per_dim: i64 = (n as f64 / stride as f64).ceil() as i64;
    let half_lo = ell / 2;
    let table = lat.site_block_table();

    let mut boxes = Vec::new();
    let total_centers = (centers_per_dim as usize).pow(d as u32);
    for ci in 0..total_centers {
        // decode center index to a center block coordinate
        let mut rem = ci;
        let mut center = [0i64; crate::lattice::MAX_DIM];
        for i in (0..d).rev() {
            center[i] = (rem % centers_per_dim as usize) as i64 * stride;
            rem /= centers_per_dim as usize;
        }
        // blocks in the box
        let mut members = vec![false; lat.n_blocks()];
        for b in 0..lat.n_blocks() {
            let p = lat.block_decode(b);
            let inside = (0..d).all(|i| {
                let r = crate::lattice::periodic_rep_scalar(p.coord(i) - center[i], n);
                r >= -half_lo && r < ell - half_lo
            });
            members[b] = inside;
        }
        let sites: Vec<usize> = (0..lat.n_sites()).filter(|&s| members[table[s]]).collect();
        boxes.push(sites);
    }
    Ok(boxes)
}

/// Per-eigenvector flatness score: the maximum over the box cover of
/// `|avg_{x∈I} (N|u(x)|² − 1)|`.
pub fn que_flatness(
    spectrum: &SpectrumSample,
    lat: &TorusLattice,
    ell: i64,
) -> Result<Vec<f64>> {
    let boxes = box_cover(lat, ell)?;
    let n = lat.n_sites() as f64;
    let mut scores = Vec::with_capacity(spectrum.evals.len());
    for k in 0..spectrum.evals.len() {
        let col = spectrum.evecs.column(k);
        let mut worst = 0.0f64;
        for b in &boxes {
            let mut acc = 0.0;
            for &x in b {
                acc += n * col[x].norm_sqr() - 1.0;
            }
            worst = worst.max((acc / b.len() as f64).abs());
        }
        scores.push(worst);
    }
    Ok(scores)
}

/// Fraction of bulk eigenvectors whose flatness score exceeds `eps`.
pub fn que_exceed_fraction(scores: &[f64], bulk: &[usize], eps: f64) -> f64 {
    if bulk.is_empty() {
        return 0.0;
    }
    bulk.iter().filter(|&&k| scores[k] >= eps).count() as f64 / bulk.len() as f64
}

/// Centered block-union indicator: `Π_xx = (N/|I_N|)·1(x∈I_N) − 1` for a
/// region `I_N` that is a union of blocks. `tr Π = 0`, and `Π` is constant
/// on blocks.
#[derive(Clone, Debug)]
pub struct FlatnessMask {
    pub diag: Vec<f64>,
    pub region_blocks: Vec<usize>,
}

impl FlatnessMask {
    pub fn from_blocks(lat: &TorusLattice, blocks: &[usize]) -> Result<Self> {
        let nb = lat.n_blocks();
        if blocks.iter().any(|&b| b >= nb) {
            return Err(Error::InvalidParameter("region block index out of range".into()));
        }
        let mut member = vec![false; nb];
        for &b in blocks {
            member[b] = true;
        }
        let n = lat.n_sites() as f64;
        let region_sites = blocks.len() * lat.block_volume();
        if region_sites == 0 {
            return Err(Error::InvalidParameter("empty flatness region".into()));
        }
        let table = lat.site_block_table();
        let boost = n / region_sites as f64;
        let diag = (0..lat.n_sites())
            .map(|x| if member[table[x]] { boost - 1.0 } else { -1.0 })
            .collect();
        Ok(FlatnessMask { diag, region_blocks: blocks.to_vec() })
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }
}

/// Outcome of the deterministic eigenvector-mass trace bound at one
/// realization.
#[derive(Clone, Debug, Serialize)]
pub struct TraceBoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    /// `lhs/rhs`, with `0/0` reported as zero slack.
    pub slack: f64,
}

/// Verify `Σ_{α,β in window} |⟨u_α, Π u_β⟩|² ≤ (4l⁴/η²)·tr[AΠAΠ]` with
/// `A = Im G` from the same realization; deterministic for every sample.
pub fn que_trace_bound_check(
    spectrum: &SpectrumSample,
    g: &CMat,
    mask: &FlatnessMask,
    e: f64,
    l: f64,
    eta: f64,
) -> TraceBoundCheck {
    assert!(l >= eta, "trace bound requires l ≥ η");
    let n = spectrum.evals.len();
    // P = U† Π U on the spectral window
    let window: Vec<usize> = (0..n).filter(|&k| (spectrum.evals[k] - e).abs() <= l).collect();
    let mut lhs = 0.0f64;
    for &a in &window {
        for &b in &window {
            let mut ov = Complex64::new(0.0, 0.0);
            for x in 0..n {
                ov += spectrum.evecs[(x, a)].conj() * mask.diag[x] * spectrum.evecs[(x, b)];
            }
            lhs += ov.norm_sqr();
        }
    }
    // A = (G − G†)/(2i)
    let a_im = (g - g.adjoint()).map(|c| c / Complex64::new(0.0, 2.0));
    let pi_a = CMat::from_fn(n, n, |i, j| a_im[(i, j)] * mask.diag[j]); // A·Π columns scaled
    let prod = &pi_a * &pi_a;
    let trace: f64 = (0..n).map(|i| prod[(i, i)].re).sum();
    let rhs = 4.0 * l.powi(4) / (eta * eta) * trace;
    let (pass, slack) = if lhs == 0.0 && rhs == 0.0 {
        (true, 0.0)
    } else {
        (lhs <= rhs * (1.0 + 1e-10) + 1e-12, lhs / rhs)
    };
    TraceBoundCheck { lhs, rhs, pass, slack }
}

/// Ensemble over eigen-decompositions; same determinism contract as the
/// resolvent engine.
pub fn spectrum_ensemble<F>(
    spec: &ModelSpec,
    n_samples: u64,
    workers: usize,
    observable: F,
) -> Result<Vec<Option<Vec<f64>>>>
where
    F: Fn(&HamiltonianSample, &SpectrumSample) -> Result<Vec<f64>> + Sync,
{
    let eval = |i: u64| -> Option<Vec<f64>> {
        let h = assemble(spec, i);
        let s = eigh(&h.h).ok()?;
        observable(&h, &s).ok()
    };
    if workers == 1 {
        Ok((0..n_samples).map(eval).collect())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        Ok(pool.install(|| (0..n_samples).into_par_iter().map(eval).collect()))
    }
}

/// Fractional-moment decay fit of `log E|G_xy|^s` against block distance
/// at a real bulk energy.
#[derive(Clone, Debug, Serialize)]
pub struct FracMomentReport {
    pub s: f64,
    pub e: f64,
    pub n_samples: u64,
    pub failures: u64,
    pub distances: Vec<i64>,
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Least-squares slope of `log mean` per block step over the fit
    /// range; `-inf` when the moments vanish identically (decoupled
    /// blocks).
    pub slope: f64,
    pub slope_stderr: f64,
    pub fit_distances: (i64, i64),
    pub low_confidence: bool,
}

/// Estimate `E|G_xy|^s` by block distance at `z = E` (real axis) and fit
/// the exponential decay rate. The fit window starts at block distance 2
/// where the contact terms have died off.
pub fn frac_moment_decay(
    spec: &ModelSpec,
    e: f64,
    s: f64,
    n_samples: u64,
    workers: usize,
) -> Result<FracMomentReport> {
    let lat = spec.lat;
    let n = lat.n_sites();
    let table = lat.site_block_table();
    let mut distances: Vec<i64> = (0..lat.n_blocks()).map(|b| lat.block_index_norm(b)).collect();
    distances.sort_unstable();
    distances.dedup();
    let dist_of_disp: Vec<usize> = (0..lat.n_blocks())
        .map(|b| distances.binary_search(&lat.block_index_norm(b)).unwrap())
        .collect();
    let n_dist = distances.len();
    let zp = SpectralPoint::new(e, 0.0)?;

    let raw = {
        let eval = |i: u64| -> Option<Vec<f64>> {
            let h = assemble(spec, i);
            let g = crate::greens::resolvent(&h, zp).ok()?;
            let mut acc = vec![0.0f64; n_dist];
            let mut cnt = vec![0u64; n_dist];
            for x in 0..n {
                for y in 0..n {
                    let k = dist_of_disp[lat.block_displacement(table[x], table[y])];
                    acc[k] += g.g[(x, y)].norm().powf(s);
                    cnt[k] += 1;
                }
            }
            for k in 0..n_dist {
                acc[k] /= cnt[k] as f64;
            }
            Some(acc)
        };
        if workers == 1 {
            (0..n_samples).map(eval).collect::<Vec<_>>()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|er| Error::InvalidParameter(format!("thread pool: {er}")))?;
            pool.install(|| (0..n_samples).into_par_iter().map(eval).collect())
        }
    };
    let acc = EnsembleAccumulator::from_samples("frac_moment", spec.seed, n_dist, &raw);
    let stderrs = acc.stderr();

    // decoupled blocks: moments vanish identically beyond distance 0
    let vanishing = distances
        .iter()
        .zip(&acc.mean)
        .all(|(&d, &m)| d == 0 || m == 0.0);
    if vanishing {
        return Ok(FracMomentReport {
            s,
            e,
            n_samples: acc.count,
            failures: acc.failures,
            distances,
            means: acc.mean,
            stderrs,
            slope: f64::NEG_INFINITY,
            slope_stderr: 0.0,
            fit_distances: (0, 0),
            low_confidence: false,
        });
    }

    // fit over distances ≥ 2 with positive means
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for (k, &d) in distances.iter().enumerate() {
        if d >= 2 && acc.mean[k] > 0.0 && acc.count > 1 {
            let rel = stderrs[k] / acc.mean[k];
            xs.push(d as f64);
            ys.push(acc.mean[k].ln());
            // delta method: var(log m̂) ≈ (se/m)²
            ws.push(1.0 / rel.max(1e-6).powi(2));
        }
    }
    let fit = weighted_line_fit(&xs, &ys, &ws);
    let (slope, slope_se, low_confidence) = match fit {
        Some((_, b, se)) => (b, se, xs.len() < 3),
        None => (f64::NAN, f64::NAN, true),
    };
    let fit_lo = xs.first().copied().unwrap_or(0.0) as i64;
    let fit_hi = xs.last().copied().unwrap_or(0.0) as i64;
    Ok(FracMomentReport {
        s,
        e,
        n_samples: acc.count,
        failures: acc.failures,
        distances,
        means: acc.mean,
        stderrs,
        slope,
        slope_stderr: slope_se,
        fit_distances: (fit_lo, fit_hi),
        low_confidence,
    })
}

/// One row of the λ-sweep transition table.
#[derive(Clone, Debug, Serialize)]
pub struct TransitionRow {
    pub lambda: f64,
    pub kappa: f64,
    pub sup_norm_mean: f64,
    pub sup_norm_mean_stderr: f64,
    pub sup_norm_max: f64,
    pub pr_mean: f64,
    pub pr_mean_stderr: f64,
    pub que_flat_mean: f64,
    pub que_flat_mean_stderr: f64,
    pub que_flat_max: f64,
    pub frac_slope: f64,
    pub frac_slope_stderr: f64,
    pub n_samples: u64,
    pub failures: u64,
}

/// Scan the coupling: for each λ run the full eigenvector diagnostic suite
/// plus a fractional-moment fit. Per-point failures are recorded and the
/// scan continues.
#[allow(clippy::too_many_arguments)]
pub fn transition_scan(
    base: &ModelSpec,
    lambdas: &[f64],
    e: f64,
    kappa: f64,
    ell: i64,
    s: f64,
    n_samples: u64,
    workers: usize,
) -> Vec<TransitionRow> {
    lambdas
        .iter()
        .map(|&lambda| {
            let spec = ModelSpec::new(base.kind, base.lat, lambda, base.seed)
                .expect("valid coupling");
            scan_point(&spec, e, kappa, ell, s, n_samples, workers).unwrap_or(TransitionRow {
                lambda,
                kappa,
                sup_norm_mean: f64::NAN,
                sup_norm_mean_stderr: f64::NAN,
                sup_norm_max: f64::NAN,
                pr_mean: f64::NAN,
                pr_mean_stderr: f64::NAN,
                que_flat_mean: f64::NAN,
                que_flat_mean_stderr: f64::NAN,
                que_flat_max: f64::NAN,
                frac_slope: f64::NAN,
                frac_slope_stderr: f64::NAN,
                n_samples: 0,
                failures: n_samples,
            })
        })
        .collect()
}

fn scan_point(
    spec: &ModelSpec,
    e: f64,
    kappa: f64,
    ell: i64,
    s: f64,
    n_samples: u64,
    workers: usize,
) -> Result<TransitionRow> {
    let lat = spec.lat;
    let raw = spectrum_ensemble(spec, n_samples, workers, |_, sp| {
        let bulk = bulk_indices(&sp.evals, kappa)?;
        let scores = que_flatness(sp, &lat, ell)?;
        let mut sup_mean = 0.0;
        let mut sup_max = 0.0f64;
        let mut pr_mean = 0.0;
        let mut que_mean = 0.0;
        let mut que_max = 0.0f64;
        for &k in &bulk {
            let sn = sup_norm_sq(&sp.evecs, k);
            sup_mean += sn;
            sup_max = sup_max.max(sn);
            pr_mean += participation_ratio(&sp.evecs, k);
            que_mean += scores[k];
            que_max = que_max.max(scores[k]);
        }
        let nb = bulk.len() as f64;
        Ok(vec![sup_mean / nb, sup_max, pr_mean / nb, que_mean / nb, que_max])
    })?;
    let acc = EnsembleAccumulator::from_samples("scan", spec.seed, 5, &raw);
    let se = acc.stderr();
    let sup_norm_max = raw
        .iter()
        .flatten()
        .map(|v| v[1])
        .fold(0.0, f64::max);
    let que_flat_max = raw
        .iter()
        .flatten()
        .map(|v| v[4])
        .fold(0.0, f64::max);
    let frac = frac_moment_decay(spec, e, s, n_samples, workers)?;
    Ok(TransitionRow {
        lambda: spec.lambda,
        kappa,
        sup_norm_mean: acc.mean[0],
        sup_norm_mean_stderr: se[0],
        sup_norm_max,
        pr_mean: acc.mean[2],
        pr_mean_stderr: se[2],
        que_flat_mean: acc.mean[3],
        que_flat_mean_stderr: se[3],
        que_flat_max,
        frac_slope: frac.slope,
        frac_slope_stderr: frac.slope_stderr,
        n_samples: acc.count,
        failures: acc.failures + frac.failures,
    })
}

/// CSV header matching [`write_transition_csv`].
pub const TRANSITION_CSV_HEADER: &str = "lambda,kappa,sup_norm_mean,sup_norm_mean_stderr,sup_norm_max,pr_mean,pr_mean_stderr,que_flat_mean,que_flat_mean_stderr,que_flat_max,frac_slope,frac_slope_stderr,n_samples,failures";

pub fn write_transition_csv<W: std::io::Write>(out: &mut W, rows: &[TransitionRow]) -> Result<()> {
    writeln!(out, "{TRANSITION_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.lambda,
            r.kappa,
            r.sup_norm_mean,
            r.sup_norm_mean_stderr,
            r.sup_norm_max,
            r.pr_mean,
            r.pr_mean_stderr,
            r.que_flat_mean,
            r.que_flat_mean_stderr,
            r.que_flat_max,
            r.frac_slope,
            r.frac_slope_stderr,
            r.n_samples,
            r.failures
        )?;
    }
    Ok(())
}

/// `G(E + i0)` from a spectrum (η = 0 resolvent via eigen-decomposition).
pub fn resolvent_at_real_energy(spectrum: &SpectrumSample, e: f64) -> CMat {
    resolvent_from_spectrum(&spectrum.evals, &spectrum.evecs, SpectralPoint { e, eta: 0.0 })
}
