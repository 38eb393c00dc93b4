//! Deterministic limit theory at a spectral point `z = E + iη`:
//! the self-consistent Stieltjes transform `m(z)`, the matrix limit
//! `M(z) = (λΨ − z − m)^{-1}`, the variance matrix `S`, the matrices
//! `S± = S(1 − M±S)^{-1}`, and the diffusive kernels
//! `ϑ = S(1 − M⁰S)^{-1}`, `ϑ̊ = P⊥ ϑ P⊥`.
//!
//! All kernels factor through the block torus: with `𝐄_ij = W^{-d}` they
//! take the form `K_n ⊗ 𝐄` for an `n^d × n^d` translation-invariant block
//! matrix `K_n`, which is what this module stores (one circulant row per
//! kernel). Two independent routes are provided for `ϑ̊`: dense projected
//! inversion and Fourier summation of the exact symbol; agreement between
//! them is a standing cross-check.

use crate::lattice::{fourier_grid, Pt, TorusLattice, MAX_DIM};
use crate::models::{ModelKind, ModelSpec};
use crate::{CMat, Error, RMat, Result};
use nalgebra::DVector;
use num_complex::Complex64;

const SOLVER_TOL: f64 = 1e-13;
const SOLVER_CAP: usize = 100_000;

/// A spectral parameter `z = E + iη` with `η ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralPoint {
    pub e: f64,
    pub eta: f64,
}

impl SpectralPoint {
    pub fn new(e: f64, eta: f64) -> Result<Self> {
        if !e.is_finite() || !eta.is_finite() || eta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "spectral point E = {e}, η = {eta}: need finite E and η ≥ 0"
            )));
        }
        Ok(SpectralPoint { e, eta })
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.e, self.eta)
    }
}

/// Stieltjes transform of the semicircle law, `m_sc(z) = (−z + √(z²−4))/2`
/// with the branch fixed by `Im m_sc > 0` on the upper half plane. At
/// `η = 0` the bulk boundary values (|E| < 2) are returned; outside the
/// bulk the branch is ambiguous and an error is raised.
pub fn msc(zp: SpectralPoint) -> Result<Complex64> {
    if zp.eta == 0.0 && zp.e.abs() >= 2.0 {
        return Err(Error::BranchAmbiguous);
    }
    Ok(msc_unchecked(zp.z()))
}

fn msc_unchecked(z: Complex64) -> Complex64 {
    let s = (z * z - 4.0).sqrt();
    let m = (-z + s) / 2.0;
    if m.im > 0.0 {
        m
    } else {
        (-z - s) / 2.0
    }
}

/// Solved self-consistent Stieltjes transform at one spectral point.
#[derive(Clone, Copy, Debug)]
pub struct StieltjesM {
    pub m: Complex64,
    pub z: SpectralPoint,
    /// Magnitude of the defect in the self-consistent equation.
    pub residual: f64,
    pub iterations: usize,
}

/// Adjacency symbol of the torus of side `l`: `Σ_{‖v‖=1} e^{ip·v}` over
/// canonical representatives. Equals `Σ_i 2 cos p_i` for `l ≥ 3`; on the
/// two-site torus ±e wrap to the same neighbor.
fn adjacency_symbol(l: i64, p: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &pi in p {
        if l >= 3 {
            acc += 2.0 * pi.cos();
        } else if l == 2 {
            acc += pi.cos();
        }
        // l == 1: no neighbors
    }
    acc
}

/// Eigenvalues of the free interaction `λΨ` for the deterministic models:
/// `λ·e(p)` over the site grid (block Anderson) or the block grid
/// (Anderson orbital; each value carries multiplicity `W^d`, immaterial
/// for normalized traces).
pub fn free_spectrum(spec: &ModelSpec) -> Vec<f64> {
    let lat = &spec.lat;
    match spec.kind {
        ModelKind::BlockAnderson => fourier_grid(lat.side(), lat.dim())
            .iter()
            .map(|p| spec.lambda * adjacency_symbol(lat.side(), p))
            .collect(),
        ModelKind::AndersonOrbital => fourier_grid(lat.blocks_per_side(), lat.dim())
            .iter()
            .map(|p| spec.lambda * adjacency_symbol(lat.blocks_per_side(), p))
            .collect(),
        ModelKind::WegnerOrbital | ModelKind::Gue => vec![],
    }
}

/// Solve the self-consistent equation for `m(z)`.
///
/// Wegner orbital / GUE use the closed form
/// `m(z) = (1+2dλ²)^{-1/2} m_sc(z/√(1+2dλ²))`; the block Anderson and
/// Anderson orbital models solve `avg_p (λe(p) − z − m)^{-1} = m` by a
/// damped fixed point started at `m_sc(z)`, polished by Newton.
pub fn solve_m(spec: &ModelSpec, zp: SpectralPoint) -> Result<StieltjesM> {
    let z = zp.z();
    match spec.kind {
        ModelKind::WegnerOrbital | ModelKind::Gue => {
            let s2 = spec.variance_row_sum();
            let root = s2.sqrt();
            if zp.eta == 0.0 && (zp.e / root).abs() >= 2.0 {
                return Err(Error::BranchAmbiguous);
            }
            let m = msc_unchecked(z / root) / root;
            // defining relation: m (z + s2 m) + 1 = 0
            let residual = (m * (z + s2 * m) + 1.0).norm();
            Ok(StieltjesM { m, z: zp, residual, iterations: 0 })
        }
        ModelKind::BlockAnderson | ModelKind::AndersonOrbital => {
            let ev = free_spectrum(spec);
            solve_m_fixed_point(&ev, zp)
        }
    }
}

fn mean_resolvent(ev: &[f64], z: Complex64, m: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &e in ev {
        acc += 1.0 / (e - z - m);
    }
    acc / ev.len() as f64
}

fn mean_resolvent_sq(ev: &[f64], z: Complex64, m: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &e in ev {
        let r = 1.0 / (e - z - m);
        acc += r * r;
    }
    acc / ev.len() as f64
}

fn solve_m_fixed_point(ev: &[f64], zp: SpectralPoint) -> Result<StieltjesM> {
    let z = zp.z();
    let mut m = msc_unchecked(if zp.eta == 0.0 {
        Complex64::new(zp.e, 1e-12)
    } else {
        z
    });
    let damping = 0.5;
    let mut iterations = 0;
    let mut update = f64::INFINITY;
    // damped Picard stage
    for _ in 0..SOLVER_CAP {
        iterations += 1;
        let f = mean_resolvent(ev, z, m);
        let next = (1.0 - damping) * m + damping * f;
        update = (next - m).norm();
        m = next;
        if update < 1e-8 {
            break;
        }
    }
    // Newton polish on g(m) = F(m) − m, with F'(m) = avg_p (λe(p)−z−m)^{-2}
    for _ in 0..64 {
        let g = mean_resolvent(ev, z, m) - m;
        if g.norm() < SOLVER_TOL {
            break;
        }
        let gp = mean_resolvent_sq(ev, z, m) - 1.0;
        let next = m - g / gp;
        iterations += 1;
        if !next.im.is_finite() || next.im <= 0.0 {
            // Newton left the upper half plane (spectral-edge
            // instability); fall back to a damped step
            m = (1.0 - damping) * m + damping * (g + m);
        } else {
            m = next;
        }
    }
    let residual = (mean_resolvent(ev, z, m) - m).norm();
    if residual > 1e-10 || !m.im.is_finite() || m.im <= 0.0 {
        return Err(Error::SolverDiverged { residual: residual.max(update), iterations });
    }
    Ok(StieltjesM { m, z: zp, residual, iterations })
}

/// How the matrix limit `M(z)` is stored.
#[derive(Clone, Debug)]
pub enum MatrixLimitForm {
    /// `M = m I` (Wegner orbital, GUE).
    Scalar,
    /// `M = M_n ⊗ I_W` with `M_n` circulant on the block torus (Anderson
    /// orbital); row indexed by block displacement index.
    BlockProfile(Vec<Complex64>),
    /// `M` circulant on the site torus (block Anderson); row indexed by
    /// site displacement index.
    SiteProfile(Vec<Complex64>),
}

/// The deterministic matrix limit `M(z) = (λΨ − z − m(z))^{-1}`.
#[derive(Clone, Debug)]
pub struct MatrixLimit {
    pub lat: TorusLattice,
    pub m: Complex64,
    pub form: MatrixLimitForm,
}

impl MatrixLimit {
    pub fn entry(&self, x: usize, y: usize) -> Complex64 {
        match &self.form {
            MatrixLimitForm::Scalar => {
                if x == y {
                    self.m
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            MatrixLimitForm::BlockProfile(row) => {
                let px = self.lat.decode(x);
                let py = self.lat.decode(y);
                if self.lat.block_offset(px) == self.lat.block_offset(py) {
                    let bx = self.lat.block_encode(self.lat.block_of(px));
                    let by = self.lat.block_encode(self.lat.block_of(py));
                    row[self.lat.block_displacement(bx, by)]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            MatrixLimitForm::SiteProfile(row) => {
                let px = self.lat.decode(x);
                let py = self.lat.decode(y);
                let mut v = [0i64; MAX_DIM];
                for i in 0..self.lat.dim() {
                    v[i] = px.coord(i) - py.coord(i);
                }
                row[self.lat.encode(Pt::new(&v[..self.lat.dim()]))]
            }
        }
    }

    pub fn to_dense(&self) -> CMat {
        let n = self.lat.n_sites();
        CMat::from_fn(n, n, |x, y| self.entry(x, y))
    }

    /// Row sum `t₀ = Σ_y |M_xy|²`.
    pub fn t0(&self) -> f64 {
        match &self.form {
            MatrixLimitForm::Scalar => self.m.norm_sqr(),
            MatrixLimitForm::BlockProfile(row) | MatrixLimitForm::SiteProfile(row) => {
                row.iter().map(|e| e.norm_sqr()).sum()
            }
        }
    }

    /// Row sum `t₊ = Σ_y (M_xy)²`.
    pub fn t_plus(&self) -> Complex64 {
        match &self.form {
            MatrixLimitForm::Scalar => self.m * self.m,
            MatrixLimitForm::BlockProfile(row) | MatrixLimitForm::SiteProfile(row) => {
                row.iter().map(|e| e * e).sum()
            }
        }
    }

    /// `u₊ = Σ_y (M²)_{xy} conj(M_{xy})` via the circular self-convolution
    /// of the kernel row.
    pub fn u_plus(&self) -> Complex64 {
        match &self.form {
            MatrixLimitForm::Scalar => self.m * self.m * self.m.conj(),
            MatrixLimitForm::BlockProfile(row) => {
                let conv = convolve_block(&self.lat, row);
                conv.iter().zip(row).map(|(c, r)| c * r.conj()).sum()
            }
            MatrixLimitForm::SiteProfile(row) => {
                let conv = convolve_site(&self.lat, row);
                conv.iter().zip(row).map(|(c, r)| c * r.conj()).sum()
            }
        }
    }

    /// Block compression `(M⁰)_{L→n}` of `M⁰_xy = |M_xy|²`, circulant row.
    pub fn m0_block_row(&self) -> Vec<f64> {
        self.compress_block(|e| Complex64::new(e.norm_sqr(), 0.0))
            .into_iter()
            .map(|c| c.re)
            .collect()
    }

    /// Block compression `(M⁺)_{L→n}` of `M⁺_xy = (M_xy)²`, circulant row.
    pub fn mplus_block_row(&self) -> Vec<Complex64> {
        self.compress_block(|e| e * e)
    }

    /// `W^{-d} Σ_{x∈[0], y∈[b]} f(M_{xy})` for every block displacement.
    fn compress_block(&self, f: impl Fn(Complex64) -> Complex64) -> Vec<Complex64> {
        let lat = &self.lat;
        let nb = lat.n_blocks();
        match &self.form {
            MatrixLimitForm::Scalar => {
                let mut row = vec![Complex64::new(0.0, 0.0); nb];
                row[lat.block_encode(Pt::zero(lat.dim()))] = f(self.m);
                row
            }
            MatrixLimitForm::BlockProfile(mrow) => mrow.iter().map(|&e| f(e)).collect(),
            MatrixLimitForm::SiteProfile(mrow) => {
                let d = lat.dim();
                let wd = lat.block_volume() as f64;
                let mut row = vec![Complex64::new(0.0, 0.0); nb];
                let table = lat.site_block_table();
                let zero_block = lat.block_encode(Pt::zero(d));
                for x in 0..lat.n_sites() {
                    if table[x] != zero_block {
                        continue;
                    }
                    let px = lat.decode(x);
                    for y in 0..lat.n_sites() {
                        let py = lat.decode(y);
                        let mut v = [0i64; MAX_DIM];
                        for i in 0..d {
                            v[i] = px.coord(i) - py.coord(i);
                        }
                        let val = f(mrow[lat.encode(Pt::new(&v[..d]))]);
                        row[lat.block_displacement(zero_block, table[y])] += val / wd;
                    }
                }
                row
            }
        }
    }
}

fn convolve_block(lat: &TorusLattice, row: &[Complex64]) -> Vec<Complex64> {
    let nb = lat.n_blocks();
    let mut out = vec![Complex64::new(0.0, 0.0); nb];
    for (j, o) in out.iter_mut().enumerate() {
        for w in 0..nb {
            // (M²)_{0j} = Σ_w M_{0w} M_{wj}
            *o += row[w] * row[lat.block_displacement(w, j)];
        }
    }
    out
}

fn convolve_site(lat: &TorusLattice, row: &[Complex64]) -> Vec<Complex64> {
    let n = lat.n_sites();
    let d = lat.dim();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (j, o) in out.iter_mut().enumerate() {
        let pj = lat.decode(j);
        for w in 0..n {
            let pw = lat.decode(w);
            let mut v = [0i64; MAX_DIM];
            for i in 0..d {
                v[i] = pw.coord(i) - pj.coord(i);
            }
            *o += row[w] * row[lat.encode(Pt::new(&v[..d]))];
        }
    }
    out
}

/// Build the matrix limit from a solved `m(z)` by exact Fourier
/// diagonalization of `λΨ − z − m`.
pub fn build_matrix_limit(
    spec: &ModelSpec,
    zp: SpectralPoint,
    m: Complex64,
) -> Result<MatrixLimit> {
    let lat = spec.lat;
    let z = zp.z();
    let resolvent_symbol = |side: i64, grid: &[Vec<f64>]| -> Result<Vec<Complex64>> {
        let mut vals = Vec::with_capacity(grid.len());
        for p in grid {
            let den = spec.lambda * adjacency_symbol(side, p) - z - m;
            if den.norm() < 1e-14 {
                return Err(Error::Singular("λΨ − z − m"));
            }
            vals.push(1.0 / den);
        }
        Ok(vals)
    };
    match spec.kind {
        ModelKind::WegnerOrbital | ModelKind::Gue => {
            Ok(MatrixLimit { lat, m, form: MatrixLimitForm::Scalar })
        }
        ModelKind::BlockAnderson => {
            let l = lat.side();
            let grid = fourier_grid(l, lat.dim());
            let vals = resolvent_symbol(l, &grid)?;
            let row = inverse_dft(&grid, &vals, lat.n_sites(), |idx| lat.decode(idx));
            Ok(MatrixLimit { lat, m, form: MatrixLimitForm::SiteProfile(row) })
        }
        ModelKind::AndersonOrbital => {
            let n = lat.blocks_per_side();
            let grid = fourier_grid(n, lat.dim());
            let vals = resolvent_symbol(n, &grid)?;
            let row = inverse_dft(&grid, &vals, lat.n_blocks(), |idx| lat.block_decode(idx));
            Ok(MatrixLimit { lat, m, form: MatrixLimitForm::BlockProfile(row) })
        }
    }
}

/// Inverse discrete Fourier transform of a symbol onto a circulant row:
/// `row[v] = |grid|^{-1} Σ_p f(p) e^{i p·v}`, grid points in
/// `fourier_grid` order.
fn inverse_dft(
    grid: &[Vec<f64>],
    vals: &[Complex64],
    count: usize,
    decode: impl Fn(usize) -> Pt,
) -> Vec<Complex64> {
    let mut row = vec![Complex64::new(0.0, 0.0); count];
    for (j, r) in row.iter_mut().enumerate() {
        let v = decode(j);
        let mut acc = Complex64::new(0.0, 0.0);
        for (p, &f) in grid.iter().zip(vals) {
            let phase: f64 = p
                .iter()
                .enumerate()
                .map(|(i, &pi)| pi * v.coord(i) as f64)
                .sum();
            acc += f * Complex64::from_polar(1.0, phase);
        }
        *r = acc / grid.len() as f64;
    }
    row
}

/// The variance matrix `S = S_n ⊗ 𝐄` as a circulant block row.
#[derive(Clone, Debug)]
pub struct VarianceMatrix {
    pub lat: TorusLattice,
    /// Circulant row of `S_n`, indexed by block displacement.
    pub row: Vec<f64>,
}

impl VarianceMatrix {
    /// Entry `S_xy = (S_n)_{[x][y]} W^{-d}` for sites with given blocks.
    pub fn entry_blocks(&self, bx: usize, by: usize) -> f64 {
        self.row[self.lat.block_displacement(bx, by)] / self.lat.block_volume() as f64
    }

    pub fn row_sum(&self) -> f64 {
        self.row.iter().sum()
    }

    pub fn block_dense(&self) -> RMat {
        circulant_dense_real(&self.lat, &self.row)
    }

    /// Full `N×N` materialization.
    pub fn to_dense(&self) -> RMat {
        let lat = &self.lat;
        let n = lat.n_sites();
        let table = lat.site_block_table();
        let wd = lat.block_volume() as f64;
        RMat::from_fn(n, n, |x, y| {
            self.row[lat.block_displacement(table[x], table[y])] / wd
        })
    }
}

/// `S(0) = I_n ⊗ 𝐄` for BA/AO/GUE; the Wegner orbital model adds
/// `λ²·(block adjacency) ⊗ 𝐄`.
pub fn variance_matrix(spec: &ModelSpec) -> VarianceMatrix {
    let lat = spec.lat;
    let nb = lat.n_blocks();
    let zero = lat.block_encode(Pt::zero(lat.dim()));
    let mut row = vec![0.0; nb];
    row[zero] = 1.0;
    if spec.kind == ModelKind::WegnerOrbital {
        // var(H_xy) = λ² W^{-d} for every adjacent block pair: one entry
        // per neighbor block, matching the sampler at every n
        let l2 = spec.lambda * spec.lambda;
        for (b, r) in row.iter_mut().enumerate() {
            if lat.block_index_norm(b) == 1 {
                *r += l2;
            }
        }
    }
    VarianceMatrix { lat, row }
}

fn circulant_dense_real(lat: &TorusLattice, row: &[f64]) -> RMat {
    let nb = lat.n_blocks();
    RMat::from_fn(nb, nb, |a, b| row[lat.block_displacement(a, b)])
}

fn circulant_dense_complex(lat: &TorusLattice, row: &[Complex64]) -> CMat {
    let nb = lat.n_blocks();
    CMat::from_fn(nb, nb, |a, b| row[lat.block_displacement(a, b)])
}

fn dense_to_row(lat: &TorusLattice, dense: &CMat) -> Vec<Complex64> {
    let zero = lat.block_encode(Pt::zero(lat.dim()));
    (0..lat.n_blocks()).map(|j| dense[(j, zero)]).collect()
}

/// Forward DFT of a circulant block row at every grid momentum:
/// `hat[g] = Σ_v row[v] e^{-i p_g·v}`.
pub fn block_row_dft(lat: &TorusLattice, row: &[Complex64]) -> Vec<Complex64> {
    let grid = fourier_grid(lat.blocks_per_side(), lat.dim());
    grid.iter()
        .map(|p| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &r) in row.iter().enumerate() {
                let v = lat.block_decode(j);
                let phase: f64 = p
                    .iter()
                    .enumerate()
                    .map(|(i, &pi)| pi * v.coord(i) as f64)
                    .sum();
                acc += r * Complex64::from_polar(1.0, -phase);
            }
            acc
        })
        .collect()
}

/// `Σ_{v: ‖v‖₁ = k} (1 − cos(p·v))` over canonical representatives of
/// `Z_n^d`: the k-th shell symbol of the momentum expansion.
pub fn shell_symbol(k: i64, p: &[f64], n: i64) -> f64 {
    let d = p.len();
    let count = (n as usize).pow(d as u32);
    let hi = (n - 1) / 2;
    let mut acc = 0.0;
    for idx in 0..count {
        let mut rem = idx;
        let mut norm = 0i64;
        let mut dot = 0.0;
        for i in (0..d).rev() {
            let u = (rem % n as usize) as i64;
            rem /= n as usize;
            let c = if u > hi { u - n } else { u };
            norm += c.abs();
            dot += p[i] * c as f64;
        }
        if norm == k {
            acc += 1.0 - dot.cos();
        }
    }
    acc
}

/// Deterministic kernels of one model at one spectral point.
#[derive(Clone, Debug)]
pub struct KernelSet {
    pub spec: ModelSpec,
    pub z: SpectralPoint,
    pub m: StieltjesM,
    pub matrix_limit: MatrixLimit,
    /// Circulant row of `S_n`.
    pub s_row: Vec<f64>,
    /// Circulant row of `(M⁰)_{L→n}`.
    pub m0_row: Vec<f64>,
    /// Circulant row of `(M⁺)_{L→n}`.
    pub mplus_row: Vec<Complex64>,
    /// Circulant row of `ϑ_n` (direct inversion path).
    pub theta_row: Vec<f64>,
    /// Circulant row of `ϑ̊_n` (direct projected inversion path).
    pub theta_ring_row: Vec<f64>,
    /// Circulant row of `S⁺_n`; `S⁻ = (S⁺)†`.
    pub splus_row: Vec<Complex64>,
}

impl KernelSet {
    /// Solve `m`, build `M`, and assemble every block kernel at `z`.
    /// Requires `η > 0` (the zero mode of `1 − M⁰S` diverges as η → 0).
    pub fn build(spec: &ModelSpec, zp: SpectralPoint) -> Result<KernelSet> {
        if zp.eta <= 0.0 {
            return Err(Error::ZeroMode);
        }
        let m = solve_m(spec, zp)?;
        let matrix_limit = build_matrix_limit(spec, zp, m.m)?;
        let lat = spec.lat;
        let s = variance_matrix(spec);
        let m0_row = matrix_limit.m0_block_row();
        let mplus_row = matrix_limit.mplus_block_row();

        let nb = lat.n_blocks();
        let s_n = circulant_dense_real(&lat, &s.row);
        let m0_n = circulant_dense_real(&lat, &m0_row);

        // ϑ_n = S_n (I − P⁰_n S_n)^{-1}, dense LU route
        let a = RMat::identity(nb, nb) - &m0_n * &s_n;
        let a_inv = a
            .lu()
            .try_inverse()
            .ok_or(Error::Singular("1 − M⁰S at block level"))?;
        let theta_n = &s_n * &a_inv;
        let zero = lat.block_encode(Pt::zero(lat.dim()));
        let theta_row: Vec<f64> = (0..nb).map(|j| theta_n[(j, zero)]).collect();

        // ϑ̊_n = P̃⊥ ϑ_n P̃⊥ with P̃⊥ = I − ẽẽᵀ
        let flat = DVector::from_element(nb, 1.0 / (nb as f64).sqrt());
        let proj = RMat::identity(nb, nb) - &flat * flat.transpose();
        let ring = &proj * &theta_n * &proj;
        let theta_ring_row: Vec<f64> = (0..nb).map(|j| ring[(j, zero)]).collect();

        // S⁺_n = S_n (I − P⁺_n S_n)^{-1}, complex dense
        let s_nc = CMat::from_fn(nb, nb, |i, j| Complex64::new(s_n[(i, j)], 0.0));
        let pplus = circulant_dense_complex(&lat, &mplus_row);
        let ac = CMat::identity(nb, nb) - &pplus * &s_nc;
        let ac_inv = ac
            .lu()
            .try_inverse()
            .ok_or(Error::Singular("1 − M⁺S at block level"))?;
        let splus_n = &s_nc * &ac_inv;
        let splus_row = dense_to_row(&lat, &splus_n);

        Ok(KernelSet {
            spec: *spec,
            z: zp,
            m,
            matrix_limit,
            s_row: s.row,
            m0_row,
            mplus_row,
            theta_row,
            theta_ring_row,
            splus_row,
        })
    }

    pub fn lat(&self) -> &TorusLattice {
        &self.spec.lat
    }

    /// `Σ_y S_xy`: exactly 1 (BA/AO/GUE) or `1+2dλ²` (WO).
    pub fn s_row_sum(&self) -> f64 {
        self.s_row.iter().sum()
    }

    /// `Σ_{[y]} (M⁰_{L→n})_{[x][y]}`, the Perron–Frobenius eigenvalue
    /// `Im m / (Im m + η)` for BA/AO.
    pub fn m0_row_sum(&self) -> f64 {
        self.m0_row.iter().sum()
    }

    /// Constant per-site entry of `ϑ − ϑ̊` (the zero mode).
    pub fn zero_mode_entry(&self) -> f64 {
        // ϑ circulant: ϑ − P⊥ϑP⊥ is flat with block entry rowsum/n^d
        let c: f64 = self.theta_row.iter().sum();
        c / (self.lat().n_blocks() as f64 * self.lat().block_volume() as f64)
    }

    /// Full-lattice entry of `ϑ`: `(ϑ_n)_{[x][y]} W^{-d}`.
    pub fn theta_entry(&self, x: usize, y: usize) -> f64 {
        let lat = self.lat();
        let bx = lat.block_encode(lat.block_of(lat.decode(x)));
        let by = lat.block_encode(lat.block_of(lat.decode(y)));
        self.theta_row[lat.block_displacement(bx, by)] / lat.block_volume() as f64
    }

    /// Full `N×N` dense `ϑ` (desk-scale sizes only).
    pub fn theta_full(&self) -> CMat {
        self.lift_row(&self.theta_row)
    }

    /// Full `N×N` dense `ϑ̊`.
    pub fn theta_ring_full(&self) -> CMat {
        self.lift_row(&self.theta_ring_row)
    }

    fn lift_row(&self, row: &[f64]) -> CMat {
        let lat = self.lat();
        let n = lat.n_sites();
        let table = lat.site_block_table();
        let wd = lat.block_volume() as f64;
        CMat::from_fn(n, n, |x, y| {
            Complex64::new(row[lat.block_displacement(table[x], table[y])] / wd, 0.0)
        })
    }

    /// `ϑ̊_n` recomputed through the Fourier symbol: exact DFTs of the
    /// stored `S_n` and `(M⁰)_{L→n}` rows give
    /// `f(p) = ŝ(p)/(1 − p̂⁰(p) ŝ(p))`, and the inverse DFT over `p ≠ 0`
    /// reproduces the projected inversion.
    pub fn theta_ring_fourier_row(&self) -> Result<Vec<f64>> {
        let lat = self.lat();
        let s_c: Vec<Complex64> = self.s_row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let m0_c: Vec<Complex64> = self.m0_row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let shat = block_row_dft(lat, &s_c);
        let m0hat = block_row_dft(lat, &m0_c);
        let mut f = vec![Complex64::new(0.0, 0.0); shat.len()];
        let zero = lat.block_encode(Pt::zero(lat.dim()));
        for (g, fv) in f.iter_mut().enumerate() {
            if g == zero {
                continue; // P⊥ removes the zero mode
            }
            let den = Complex64::new(1.0, 0.0) - m0hat[g] * shat[g];
            if den.norm() < 1e-14 {
                return Err(Error::ZeroMode);
            }
            *fv = shat[g] / den;
        }
        let grid = fourier_grid(lat.blocks_per_side(), lat.dim());
        let row = inverse_dft(&grid, &f, lat.n_blocks(), |idx| lat.block_decode(idx));
        Ok(row.into_iter().map(|c| c.re).collect())
    }

    /// Renormalized diffusive kernel `(1 − ϑ̊ℰ)^{-1} ϑ̊` for a
    /// block-translation-invariant `ℰ` given as a circulant row. Errors
    /// when the spectral radius of `ϑ̊ℰ` reaches 1.
    pub fn theta_renormalized(&self, e_row: &[Complex64]) -> Result<Vec<Complex64>> {
        let lat = self.lat();
        let nb = lat.n_blocks();
        assert_eq!(e_row.len(), nb);
        // exact spectral radius via symbols: both factors are circulant
        let ring_c: Vec<Complex64> = self
            .theta_ring_row
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        let that = block_row_dft(lat, &ring_c);
        let ehat = block_row_dft(lat, e_row);
        let rho = that
            .iter()
            .zip(&ehat)
            .map(|(t, e)| (t * e).norm())
            .fold(0.0, f64::max);
        if rho >= 1.0 {
            return Err(Error::SpectralRadius { rho });
        }
        let ring = circulant_dense_complex(lat, &ring_c);
        let e_n = circulant_dense_complex(lat, e_row);
        let a = CMat::identity(nb, nb) - &ring * &e_n;
        let inv = a.lu().try_inverse().ok_or(Error::Singular("1 − ϑ̊ℰ"))?;
        let out = inv * ring;
        Ok(dense_to_row(lat, &out))
    }

    /// Export a block kernel row as CSV: one line per block displacement,
    /// columns `v1, …, vd, re, im`.
    pub fn write_kernel_csv<W: std::io::Write>(
        &self,
        out: &mut W,
        row: &[Complex64],
    ) -> Result<()> {
        let lat = self.lat();
        let d = lat.dim();
        for i in 0..d {
            write!(out, "v{},", i + 1)?;
        }
        writeln!(out, "re,im")?;
        for (j, v) in row.iter().enumerate() {
            let p = lat.block_decode(j);
            for i in 0..d {
                write!(out, "{},", p.coord(i))?;
            }
            writeln!(out, "{:.17e},{:.17e}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// Asymptotic diffusive profile `B_xy = β(λ)/(W² ⟨x−y⟩^{d−2})`, meaningful
/// for `d ≥ 3`; lower dimensions must use the exact kernel.
pub fn b_profile(beta: f64, w: i64, d: usize, bracket: i64) -> Result<f64> {
    if d < 3 {
        return Err(Error::UseExactKernel(d));
    }
    Ok(b_profile_unchecked(beta, w, d, bracket))
}

/// The same power-law expression without the dimension gate; used only as
/// a reporting scale in low-dimension diagnostics.
pub fn b_profile_unchecked(beta: f64, w: i64, d: usize, bracket: i64) -> f64 {
    beta / ((w * w) as f64 * (bracket as f64).powi(d as i32 - 2))
}
